//! Sampling from the convex hull of a finite point set.
//!
//! Two samplers live here. `dirichlet_weights` backs the training-time probe
//! draw: uniform weights on the simplex applied to the points, which is
//! uniform on the hull exactly when the points are affinely independent.
//! `HullSampler` is the quadrature sampler and is exactly uniform on the hull
//! for 1- and 2-dimensional conditions (interval / triangulated polygon); in
//! higher dimensions it falls back to the simplex-weight scheme.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{EfmError, Result};

/// Uniform draw from the standard simplex: normalized Exp(1) coordinates.
pub fn dirichlet_weights<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    assert!(m > 0, "dirichlet_weights needs at least one coordinate");
    let mut w = Vec::with_capacity(m);
    let mut total = 0.0;
    for _ in 0..m {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let e = -u.ln();
        w.push(e);
        total += e;
    }
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Convex combination of the rows of `points` with the given weights.
pub fn convex_combination(points: &ArrayView2<f64>, weights: &[f64]) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(points.ncols());
    for (row, &w) in points.rows().into_iter().zip(weights) {
        for (o, &p) in out.iter_mut().zip(row.iter()) {
            *o += w * p;
        }
    }
    out
}

enum HullMode {
    /// Single point (covers k = 0 too, where the hull is a point in R^0).
    Point,
    Interval {
        lo: f64,
        hi: f64,
    },
    /// Segment between two extreme points in R^k.
    Segment {
        a: Array1<f64>,
        b: Array1<f64>,
    },
    /// Fan triangulation of the 2D hull; `cum_area` is the cumulative area table.
    Polygon {
        tris: Vec<[Array1<f64>; 3]>,
        cum_area: Vec<f64>,
    },
    /// k >= 3: Dirichlet weights over the points.
    SimplexWeights,
}

pub struct HullSampler {
    points: Array2<f64>,
    mode: HullMode,
}

impl HullSampler {
    pub fn new(points: ArrayView2<f64>) -> Result<Self> {
        let m = points.nrows();
        let k = points.ncols();
        if m == 0 {
            return Err(EfmError::Input("hull sampler needs at least one point".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(EfmError::Input("hull sampler: non-finite coordinate".into()));
        }
        let mode = if k == 0 || all_rows_equal(&points) {
            HullMode::Point
        } else if k == 1 {
            let lo = points.column(0).iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = points.column(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            HullMode::Interval { lo, hi }
        } else if k == 2 {
            planar_mode(&points)
        } else {
            HullMode::SimplexWeights
        };
        Ok(HullSampler { points: points.to_owned(), mode })
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        match &self.mode {
            HullMode::Point => self.points.row(0).to_owned(),
            HullMode::Interval { lo, hi } => {
                Array1::from_elem(1, rng.gen_range(0.0..1.0) * (hi - lo) + lo)
            }
            HullMode::Segment { a, b } => {
                let t: f64 = rng.gen_range(0.0..1.0);
                a * (1.0 - t) + &(b * t)
            }
            HullMode::Polygon { tris, cum_area } => {
                let total = *cum_area.last().unwrap();
                let target = rng.gen_range(0.0..1.0) * total;
                let idx = cum_area.partition_point(|&c| c < target).min(tris.len() - 1);
                let [a, b, c] = &tris[idx];
                // Uniform barycentric coordinates on a triangle.
                let r1: f64 = rng.gen_range(0.0..1.0);
                let r2: f64 = rng.gen_range(0.0..1.0);
                let s = r1.sqrt();
                let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
                a * wa + &(b * wb) + &(c * wc)
            }
            HullMode::SimplexWeights => {
                let w = dirichlet_weights(self.points.nrows(), rng);
                convex_combination(&self.points.view(), &w)
            }
        }
    }
}

fn all_rows_equal(points: &ArrayView2<f64>) -> bool {
    let first = points.row(0);
    points.rows().into_iter().all(|r| r.iter().zip(first.iter()).all(|(a, b)| a == b))
}

fn planar_mode(points: &ArrayView2<f64>) -> HullMode {
    let hull = convex_hull_2d(points);
    if hull.len() <= 1 {
        return HullMode::Point;
    }
    if hull.len() == 2 {
        return HullMode::Segment {
            a: Array1::from(vec![hull[0].0, hull[0].1]),
            b: Array1::from(vec![hull[1].0, hull[1].1]),
        };
    }
    let mut tris = Vec::new();
    let mut cum_area = Vec::new();
    let mut acc = 0.0;
    let origin = hull[0];
    for w in hull[1..].windows(2) {
        let (b, c) = (w[0], w[1]);
        let area = 0.5 * cross(origin, b, c).abs();
        if area > 0.0 {
            tris.push([
                Array1::from(vec![origin.0, origin.1]),
                Array1::from(vec![b.0, b.1]),
                Array1::from(vec![c.0, c.1]),
            ]);
            acc += area;
            cum_area.push(acc);
        }
    }
    if tris.is_empty() {
        // Numerically flat: treat as a segment between extremes.
        let a = *hull.first().unwrap();
        let b = hull[hull.len() / 2];
        return HullMode::Segment {
            a: Array1::from(vec![a.0, a.1]),
            b: Array1::from(vec![b.0, b.1]),
        };
    }
    HullMode::Polygon { tris, cum_area }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone chain; returns hull vertices in counter-clockwise order, no repeats.
fn convex_hull_2d(points: &ArrayView2<f64>) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> =
        points.rows().into_iter().map(|r| (r[0], r[1])).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 2 {
        // All collinear: monotone chain with <= filter collapses the chain;
        // report the two extremes instead.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    lower
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_sum_to_one_and_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 1..6 {
            let w = dirichlet_weights(m, &mut rng);
            assert_eq!(w.len(), m);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn square_corner_sampler_is_uniform_on_the_square() {
        // Quadrant counts of a uniform draw on [0,1]^2 are multinomial(1/4).
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let sampler = HullSampler::new(pts.view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let c = sampler.sample(&mut rng);
            assert!((0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]));
            let q = (c[0] >= 0.5) as usize + 2 * ((c[1] >= 0.5) as usize);
            counts[q] += 1;
        }
        let expect = n as f64 / 4.0;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - expect).abs() < 4.0 * sigma,
                "quadrant count {} too far from {}",
                c,
                expect
            );
        }
    }

    #[test]
    fn collinear_points_sample_on_the_segment() {
        let pts = array![[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]];
        let sampler = HullSampler::new(pts.view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let c = sampler.sample(&mut rng);
            assert!((c[0] - c[1]).abs() < 1e-12);
            assert!((-1e-12..=1.0 + 1e-12).contains(&c[0]));
        }
    }

    #[test]
    fn interval_sampler_covers_the_range() {
        let pts = array![[2.0], [5.0], [3.0]];
        let sampler = HullSampler::new(pts.view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for _ in 0..2000 {
            let c = sampler.sample(&mut rng)[0];
            assert!((2.0..=5.0).contains(&c));
            lo = lo.min(c);
            hi = hi.max(c);
        }
        assert!(lo < 2.1 && hi > 4.9);
    }

    #[test]
    fn triangle_sampler_matches_area_fractions() {
        // Right triangle; the sub-triangle x+y>1 has zero area, while the
        // half-plane x>0.5 cuts off exactly 1/4 of the area.
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let sampler = HullSampler::new(pts.view()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let mut beyond = 0usize;
        for _ in 0..n {
            let c = sampler.sample(&mut rng);
            assert!(c[0] + c[1] <= 1.0 + 1e-9);
            if c[0] > 0.5 {
                beyond += 1;
            }
        }
        let frac = beyond as f64 / n as f64;
        assert!((frac - 0.25).abs() < 0.01, "fraction {}", frac);
    }
}
