//! Couplings across per-condition batches: generalized geodesic coupling
//! through a Gaussian base, the cluster-factorized multi-marginal plan, and
//! the hull-averaged gradient cost that scores candidate tuples.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{EfmError, Result};
use crate::hull::HullSampler;
use crate::interpolant::{fit_regressor, grad_regressor, KernelSpec};
use crate::transport::assignment::min_cost_assignment;
use crate::transport::kmeans::kmeans;
use crate::transport::plan::CouplingPlan;
use crate::transport::sinkhorn::{
    extract_deterministic, mmot_sinkhorn, scale_free_epsilon, CostTensor,
};

/// Expected squared norm of the condition gradient of the tuple's fitted
/// regressor, averaged over `quad_nodes` uniform draws from the anchors'
/// convex hull. Identical tuple points fit an exactly flat map under the
/// linear kernel, giving zero.
pub fn mmot_dirichlet_cost(
    points: &[ArrayView1<f64>],
    conditions: ArrayView2<f64>,
    kernel: &KernelSpec,
    quad_nodes: usize,
    seed: u64,
) -> Result<f64> {
    let m = points.len();
    if m == 0 || conditions.nrows() != m {
        return Err(EfmError::Input(format!(
            "mmot_dirichlet_cost: {} points vs {} conditions",
            m,
            conditions.nrows()
        )));
    }
    if quad_nodes == 0 {
        return Err(EfmError::Input("mmot_dirichlet_cost: quad_nodes must be >= 1".into()));
    }
    let d = points[0].len();
    let mut targets = Array2::<f64>::zeros((m, d));
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(EfmError::Input("mmot_dirichlet_cost: ragged tuple".into()));
        }
        targets.row_mut(i).assign(p);
    }
    let basis = fit_regressor(conditions, targets.view(), kernel)?;
    let sampler = HullSampler::new(conditions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..quad_nodes {
        let c = sampler.sample(&mut rng);
        let g = grad_regressor(&basis, c.view());
        acc += g.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(acc / quad_nodes as f64)
}

/// Generalized geodesic coupling: each batch is matched to the common `base`
/// by exact OT, and tuple j collects the points the maps send base row j to.
/// All batches must have exactly `base.nrows()` rows.
pub fn ggc_couple(batches: &[ArrayView2<f64>], base: ArrayView2<f64>) -> Result<Vec<Vec<usize>>> {
    if batches.is_empty() {
        return Err(EfmError::Input("ggc_couple: no batches".into()));
    }
    let n = base.nrows();
    let d = base.ncols();
    if n == 0 {
        return Err(EfmError::Input("ggc_couple: empty base".into()));
    }
    let mut maps = Vec::with_capacity(batches.len());
    for (bi, batch) in batches.iter().enumerate() {
        if batch.nrows() != n || batch.ncols() != d {
            return Err(EfmError::Input(format!(
                "ggc_couple: batch {} is {}x{}, base is {}x{}",
                bi,
                batch.nrows(),
                batch.ncols(),
                n,
                d
            )));
        }
        let mut cost = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                cost[[i, j]] = base
                    .row(i)
                    .iter()
                    .zip(batch.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
        }
        let (assign, _) = min_cost_assignment(&cost.view())?;
        maps.push(assign);
    }
    Ok((0..n).map(|j| maps.iter().map(|m| m[j]).collect()).collect())
}

/// Knobs for the cluster-factorized plan; defaults follow the training
/// defaults elsewhere.
#[derive(Debug, Clone)]
pub struct MmotParams {
    /// Entropic scale; None resolves to `epsilon_frac` x the cost spread.
    pub epsilon: Option<f64>,
    pub epsilon_frac: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Stddev of the Gaussian base used by the geodesic coupling.
    pub base_sigma: f64,
    pub kmeans_iters: usize,
}

impl Default for MmotParams {
    fn default() -> Self {
        MmotParams {
            epsilon: None,
            epsilon_frac: 0.02,
            max_iters: 2000,
            tol: 1e-6,
            base_sigma: 1.0,
            kmeans_iters: 100,
        }
    }
}

/// Joint sampler over index tuples produced by the cluster-factorized
/// multi-marginal plan: a deterministic coupling of cluster centers, refined
/// inside each matched cluster tuple by a generalized geodesic coupling.
#[derive(Debug, Clone)]
pub struct ClusterMmotSampler {
    arity: usize,
    /// Deterministic center coupling over the K^m tensor.
    pub center_plan: CouplingPlan,
    pub sinkhorn_converged: bool,
    pub sinkhorn_residual: f64,
    /// groups[g] lists the point-index tuples of center tuple g.
    groups: Vec<Vec<Vec<usize>>>,
}

impl ClusterMmotSampler {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn groups(&self) -> &[Vec<Vec<usize>>] {
        &self.groups
    }

    /// Uniform center group, then a uniform tuple within it.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let g = rng.gen_range(0..self.groups.len());
        let t = rng.gen_range(0..self.groups[g].len());
        self.groups[g][t].clone()
    }

    /// Plan view of the sampler's tuple distribution (group-uniform mass).
    pub fn as_plan(&self, sizes: Vec<usize>) -> CouplingPlan {
        let mut support = Vec::new();
        let mut weights = Vec::new();
        let gmass = 1.0 / self.groups.len() as f64;
        for g in &self.groups {
            let w = gmass / g.len() as f64;
            for t in g {
                support.push(t.clone());
                weights.push(w);
            }
        }
        CouplingPlan { arity: self.arity, sizes, support, weights, deterministic: false }
    }
}

/// Builds the cluster-factorized plan: k-means each batch, solve entropic
/// MMOT over the K^m center tensor with `tuple_cost`, collapse by argmax, and
/// couple the matched sub-batches through a Gaussian base. Sub-batches of
/// unequal size are truncated to the common minimum by seeded subsampling.
pub fn cluster_mmot_plan(
    batches: &[ArrayView2<f64>],
    k: usize,
    mut tuple_cost: impl FnMut(&[ArrayView1<f64>]) -> Result<f64>,
    params: &MmotParams,
    seed: u64,
) -> Result<ClusterMmotSampler> {
    let m = batches.len();
    if m == 0 {
        return Err(EfmError::Input("cluster_mmot_plan: no batches".into()));
    }
    let d = batches[0].ncols();
    for (i, b) in batches.iter().enumerate() {
        if b.ncols() != d {
            return Err(EfmError::Input(format!("cluster_mmot_plan: batch {} dimension mismatch", i)));
        }
        if b.nrows() < k {
            return Err(EfmError::Input(format!(
                "cluster_mmot_plan: batch {} has {} rows for K = {}",
                i,
                b.nrows(),
                k
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut clusterings = Vec::with_capacity(m);
    for b in batches {
        let ks: u64 = rng.gen();
        clusterings.push(kmeans(*b, k, params.kmeans_iters, ks)?);
    }

    let shape = vec![k; m];
    let cost = CostTensor::from_fn(&shape, |idx| {
        let rows: Vec<ArrayView1<f64>> = idx
            .iter()
            .enumerate()
            .map(|(b, &c)| clusterings[b].centers.row(c))
            .collect();
        tuple_cost(&rows)
    })?;
    let epsilon = params
        .epsilon
        .unwrap_or_else(|| scale_free_epsilon(&cost, params.epsilon_frac));
    let sk = mmot_sinkhorn(&cost, epsilon, params.max_iters, params.tol)?;
    let center_plan = extract_deterministic(&sk.plan)?;

    let mut groups = Vec::with_capacity(k);
    for tuple in &center_plan.support {
        // Matched sub-batches, truncated to a common size.
        let mut members: Vec<Vec<usize>> = tuple
            .iter()
            .enumerate()
            .map(|(b, &c)| clusterings[b].members(c))
            .collect();
        let s = members.iter().map(|m| m.len()).min().unwrap();
        for list in &mut members {
            let total = list.len();
            for i in 0..s {
                let j = rng.gen_range(i..total);
                list.swap(i, j);
            }
            list.truncate(s);
        }
        // Gaussian base centered at the pooled sub-batch mean.
        let mut mean = Array1::<f64>::zeros(d);
        let mut count = 0.0;
        for (b, list) in members.iter().enumerate() {
            for &i in list {
                mean += &batches[b].row(i);
                count += 1.0;
            }
        }
        mean /= count;
        let mut base = Array2::<f64>::zeros((s, d));
        for r in 0..s {
            for ax in 0..d {
                let g: f64 = StandardNormal.sample(&mut rng);
                base[[r, ax]] = mean[ax] + params.base_sigma * g;
            }
        }
        let sub_batches: Vec<Array2<f64>> = members
            .iter()
            .enumerate()
            .map(|(b, list)| {
                let mut sub = Array2::<f64>::zeros((s, d));
                for (r, &i) in list.iter().enumerate() {
                    sub.row_mut(r).assign(&batches[b].row(i));
                }
                sub
            })
            .collect();
        let views: Vec<ArrayView2<f64>> = sub_batches.iter().map(|b| b.view()).collect();
        let local = ggc_couple(&views, base.view())?;
        let tuples: Vec<Vec<usize>> = local
            .into_iter()
            .map(|t| t.iter().enumerate().map(|(b, &r)| members[b][r]).collect())
            .collect();
        groups.push(tuples);
    }

    Ok(ClusterMmotSampler {
        arity: m,
        center_plan,
        sinkhorn_converged: sk.converged,
        sinkhorn_residual: sk.residual,
        groups,
    })
}

/// The tuple distributions training can draw from.
pub enum TupleSampler {
    Cluster(ClusterMmotSampler),
    /// A fixed list of tuples sampled uniformly (geodesic coupling).
    Fixed(Vec<Vec<usize>>),
    /// Product of uniform marginals.
    Independent(Vec<usize>),
}

impl TupleSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        match self {
            TupleSampler::Cluster(s) => s.sample(rng),
            TupleSampler::Fixed(tuples) => tuples[rng.gen_range(0..tuples.len())].clone(),
            TupleSampler::Independent(sizes) => {
                sizes.iter().map(|&n| rng.gen_range(0..n)).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::assignment::exact_ot_plan;
    use ndarray::array;

    #[test]
    fn equal_tuple_costs_zero_under_the_linear_kernel() {
        // Three affinely independent anchors: the most the rank-(k+1) affine
        // kernel supports at lambda = 0. The unique affine fit through equal
        // targets is constant, so the hull-averaged gradient cost vanishes.
        let conds = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let p = array![2.5, -1.0];
        let points = vec![p.view(), p.view(), p.view()];
        let cost = mmot_dirichlet_cost(
            &points,
            conds.view(),
            &KernelSpec::linear().with_ridge(0.0),
            64,
            3,
        )
        .unwrap();
        assert!(cost.abs() < 1e-18, "cost {}", cost);
    }

    #[test]
    fn equal_tuples_never_cost_more_than_mixed_ones_under_rbf() {
        let conds = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let a = array![1.0, 1.0];
        let b = array![4.0, 3.0];
        let equal = vec![a.view(), a.view(), a.view(), a.view()];
        let mixed = vec![a.view(), b.view(), a.view(), b.view()];
        let spec = KernelSpec::rbf();
        let ce = mmot_dirichlet_cost(&equal, conds.view(), &spec, 256, 5).unwrap();
        let cm = mmot_dirichlet_cost(&mixed, conds.view(), &spec, 256, 5).unwrap();
        assert!(ce < cm, "equal {} vs mixed {}", ce, cm);
    }

    #[test]
    fn linear_kernel_cost_is_the_squared_slope() {
        // Anchors 0, 1 with targets 0, v: psihat(c) = c v, gradient v.
        let conds = array![[0.0], [1.0]];
        let p0 = array![0.0, 0.0];
        let p1 = array![3.0, -4.0];
        let cost = mmot_dirichlet_cost(
            &[p0.view(), p1.view()],
            conds.view(),
            &KernelSpec::linear().with_ridge(0.0),
            32,
            0,
        )
        .unwrap();
        assert!((cost - 25.0).abs() < 1e-9, "cost {}", cost);
    }

    #[test]
    fn monte_carlo_cost_matches_grid_quadrature() {
        let conds = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let pts = [
            array![0.0, 0.0],
            array![1.0, 0.5],
            array![-0.5, 1.0],
            array![2.0, 2.0],
        ];
        let views: Vec<ArrayView1<f64>> = pts.iter().map(|p| p.view()).collect();
        let spec = KernelSpec::rbf();
        let mc = mmot_dirichlet_cost(&views, conds.view(), &spec, 40_000, 9).unwrap();

        // Dense grid oracle over the unit square.
        let targets = array![[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0], [2.0, 2.0]];
        let basis = fit_regressor(conds.view(), targets.view(), &spec).unwrap();
        let n = 200;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = array![(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                let g = grad_regressor(&basis, c.view());
                acc += g.iter().map(|v| v * v).sum::<f64>();
            }
        }
        let grid = acc / (n * n) as f64;
        assert!(
            (mc - grid).abs() < 0.02 * grid,
            "monte carlo {} vs grid {}",
            mc,
            grid
        );
    }

    #[test]
    fn ggc_preserves_rank_order_in_1d() {
        let base = array![[0.0], [1.0], [2.0], [3.0]];
        let b0 = array![[10.0], [13.0], [11.0], [12.0]];
        let b1 = array![[-5.0], [-8.0], [-6.0], [-7.0]];
        let tuples = ggc_couple(&[b0.view(), b1.view()], base.view()).unwrap();
        // Base is sorted; the maps must pair equal ranks.
        let rank0 = [0usize, 2, 3, 1]; // sorted order of b0
        let rank1 = [1usize, 3, 2, 0]; // sorted order of b1
        for (j, t) in tuples.iter().enumerate() {
            assert_eq!(t[0], rank0[j]);
            assert_eq!(t[1], rank1[j]);
        }
    }

    fn gaussian_blob(center: [f64; 2], n: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut x = Array2::<f64>::zeros((n, 2));
        for r in 0..n {
            for ax in 0..2 {
                let g: f64 = StandardNormal.sample(rng);
                x[[r, ax]] = center[ax] + sigma * g;
            }
        }
        x
    }

    #[test]
    fn cluster_plan_aligns_clusters_across_batches() {
        // Two batches, two widely separated clusters each. With a squared
        // euclidean tuple cost the plan must couple near clusters together.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut b0 = gaussian_blob([0.0, 0.0], 20, 0.2, &mut rng);
        let b0b = gaussian_blob([10.0, 0.0], 20, 0.2, &mut rng);
        let mut b1 = gaussian_blob([0.5, 0.0], 20, 0.2, &mut rng);
        let b1b = gaussian_blob([10.5, 0.0], 20, 0.2, &mut rng);
        b0 = ndarray::concatenate(ndarray::Axis(0), &[b0.view(), b0b.view()]).unwrap();
        b1 = ndarray::concatenate(ndarray::Axis(0), &[b1.view(), b1b.view()]).unwrap();
        let sampler = cluster_mmot_plan(
            &[b0.view(), b1.view()],
            2,
            |rows| {
                Ok(rows[0]
                    .iter()
                    .zip(rows[1].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum())
            },
            &MmotParams::default(),
            5,
        )
        .unwrap();
        assert!(sampler.sinkhorn_converged);
        let mut draws_rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let t = sampler.sample(&mut draws_rng);
            let x = b0.row(t[0]);
            let y = b1.row(t[1]);
            // Both points on the same side.
            assert_eq!(x[0] > 5.0, y[0] > 5.0, "coupled across clusters: {:?}", t);
        }
    }

    #[test]
    fn singleton_clusters_reduce_to_pairwise_ot() {
        // K = n with distinct points: each cluster is one point, so the plan
        // couples points directly; its cost must approach exact OT.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = gaussian_blob([0.0, 0.0], 8, 1.0, &mut rng);
        let b = gaussian_blob([1.0, 1.0], 8, 1.0, &mut rng);
        let sq = |rows: &[ArrayView1<f64>]| -> Result<f64> {
            Ok(rows[0]
                .iter()
                .zip(rows[1].iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum())
        };
        // Median cost over the 8x8 tensor scaled way down for near-exactness.
        let params = MmotParams { epsilon_frac: 0.01, max_iters: 60_000, ..Default::default() };
        let sampler = cluster_mmot_plan(&[a.view(), b.view()], 8, sq, &params, 2).unwrap();
        let mut plan_cost = 0.0;
        for g in sampler.groups() {
            for t in g {
                let d2: f64 = a
                    .row(t[0])
                    .iter()
                    .zip(b.row(t[1]).iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                plan_cost += d2 / (sampler.groups().len() * g.len()) as f64;
            }
        }
        let exact = exact_ot_plan(a.view(), b.view()).unwrap();
        let exact_cost = exact.expected_cost(|t| {
            a.row(t[0])
                .iter()
                .zip(b.row(t[1]).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        });
        assert!(
            plan_cost <= exact_cost * 1.05 + 1e-9,
            "plan {} vs exact {}",
            plan_cost,
            exact_cost
        );
        assert!(plan_cost >= exact_cost - 1e-9);
    }

    #[test]
    fn sampler_frequencies_match_the_center_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut b0 = gaussian_blob([0.0, 0.0], 30, 0.3, &mut rng);
        let b0b = gaussian_blob([8.0, 0.0], 30, 0.3, &mut rng);
        let mut b1 = gaussian_blob([0.0, 0.5], 30, 0.3, &mut rng);
        let b1b = gaussian_blob([8.0, 0.5], 30, 0.3, &mut rng);
        b0 = ndarray::concatenate(ndarray::Axis(0), &[b0.view(), b0b.view()]).unwrap();
        b1 = ndarray::concatenate(ndarray::Axis(0), &[b1.view(), b1b.view()]).unwrap();
        let sampler = cluster_mmot_plan(
            &[b0.view(), b1.view()],
            2,
            |rows| {
                Ok(rows[0]
                    .iter()
                    .zip(rows[1].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum())
            },
            &MmotParams::default(),
            77,
        )
        .unwrap();

        // Map each drawn tuple back to its center group via membership.
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = vec![0usize; sampler.groups().len()];
        'outer: for _ in 0..n {
            let t = sampler.sample(&mut rng);
            for (g, tuples) in sampler.groups().iter().enumerate() {
                if tuples.contains(&t) {
                    counts[g] += 1;
                    continue 'outer;
                }
            }
            panic!("drawn tuple not in any group");
        }
        let p = 1.0 / counts.len() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - n as f64 * p).abs() <= 3.0 * sigma,
                "count {} vs expected {}",
                c,
                n as f64 * p
            );
        }
    }

    #[test]
    fn independent_sampler_covers_the_product_space() {
        let s = TupleSampler::Independent(vec![3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let t = s.sample(&mut rng);
            assert!(t[0] < 3 && t[1] < 2);
            seen.insert(t);
        }
        assert_eq!(seen.len(), 6);
    }
}
