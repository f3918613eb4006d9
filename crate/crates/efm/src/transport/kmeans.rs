use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EfmError, Result};

/// Result of Lloyd iterations: assignment per point, centers, and the
/// objective (mean squared distance to the assigned center) per iteration.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    pub assignments: Vec<usize>,
    pub centers: Array2<f64>,
    pub objective_trace: Vec<f64>,
}

impl ClusterSet {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }

    /// Point indices of cluster `c`.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == c).then_some(i))
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means++ followed by Lloyd iterations. Ties in assignment go to
/// the lowest center index; empty clusters are repaired by stealing the point
/// farthest from its current center.
pub fn kmeans(points: ArrayView2<f64>, k: usize, iters: usize, seed: u64) -> Result<ClusterSet> {
    let n = points.nrows();
    let dim = points.ncols();
    if k == 0 {
        return Err(EfmError::Input("kmeans: k must be at least 1".into()));
    }
    if n < k {
        return Err(EfmError::Input(format!("kmeans: {} points for k = {}", n, k)));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(EfmError::Input("kmeans: non-finite coordinate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).to_vec()).collect();

    // k-means++ seeding.
    let mut center_idx: Vec<usize> = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &pts[center_idx[0]])).collect();
    while center_idx.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen_range(0.0..1.0) * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All remaining distances zero (duplicate-heavy input): pick the
            // first point not already a center.
            (0..n)
                .find(|i| !center_idx.contains(i))
                .expect("n >= k guarantees a free point")
        };
        center_idx.push(next);
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &pts[next]));
        }
    }
    let mut centers: Vec<Vec<f64>> = center_idx.iter().map(|&i| pts[i].clone()).collect();

    let mut assignments = vec![0usize; n];
    let mut objective_trace = Vec::new();
    for _ in 0..iters.max(1) {
        // Assign.
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, ctr) in centers.iter().enumerate() {
                let d = sq_dist(p, ctr);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        // Update with empty-cluster repair.
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0f64; dim]; k];
        for (i, p) in pts.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &v) in sums[assignments[i]].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Steal the point farthest from its assigned center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&pts[a], &centers[assignments[a]]);
                        let db = sq_dist(&pts[b], &centers[assignments[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                let old = assignments[far];
                counts[old] -= 1;
                for (s, &v) in sums[old].iter_mut().zip(&pts[far]) {
                    *s -= v;
                }
                assignments[far] = c;
                counts[c] = 1;
                sums[c] = pts[far].clone();
                changed = true;
            }
        }
        for c in 0..k {
            for ax in 0..dim {
                centers[c][ax] = sums[c][ax] / counts[c] as f64;
            }
        }
        let objective = pts
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| sq_dist(p, &centers[a]))
            .sum::<f64>()
            / n as f64;
        objective_trace.push(objective);
        if !changed {
            break;
        }
    }

    let mut center_arr = Array2::<f64>::zeros((k, dim));
    for c in 0..k {
        for ax in 0..dim {
            center_arr[[c, ax]] = centers[c][ax];
        }
    }
    Ok(ClusterSet { assignments, centers: center_arr, objective_trace })
}
