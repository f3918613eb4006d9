//! Evaluation: empirical Wasserstein distances, the field's Dirichlet-energy
//! estimate, and the cluster-preservation score for style transfer.

use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{subsample_rows, ConditionedDataset, SourceRegressor};
use crate::error::{EfmError, Result};
use crate::inference::{generate, Integrator};
use crate::model::MatrixFieldModel;
use crate::transport::{min_cost_assignment, uniform_transport_cost};

fn pairwise_cost(a: ArrayView2<f64>, b: ArrayView2<f64>, squared: bool) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(EfmError::Input(format!(
            "wasserstein: dimension mismatch {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(EfmError::Input("wasserstein: empty point set".into()));
    }
    let mut cost = Array2::<f64>::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            let d2: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            cost[[i, j]] = if squared { d2 } else { d2.sqrt() };
        }
    }
    Ok(cost)
}

/// Exact W1 between uniform empirical measures: min-cost assignment when the
/// sides match, min-cost flow otherwise. Ground cost is Euclidean.
pub fn wasserstein1(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let cost = pairwise_cost(a, b, false)?;
    if a.nrows() == b.nrows() {
        let (_, total) = min_cost_assignment(&cost.view())?;
        Ok(total / a.nrows() as f64)
    } else {
        uniform_transport_cost(&cost.view())
    }
}

/// W2 variant (root mean squared transport cost) for debugging against
/// quadratic transport plans.
pub fn wasserstein2(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let cost = pairwise_cost(a, b, true)?;
    let mean = if a.nrows() == b.nrows() {
        let (_, total) = min_cost_assignment(&cost.view())?;
        total / a.nrows() as f64
    } else {
        uniform_transport_cost(&cost.view())?
    };
    Ok(mean.sqrt())
}

#[derive(Debug, Clone, Copy)]
pub struct DirichletEstimate {
    /// (1/2) mean ||u||_F^2 over the drawn probes.
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Monte Carlo Dirichlet energy of the field under a caller-supplied probe
/// distribution: the sampler draws (t, c, x) with x distributed per the
/// model's pushforward at (t, c).
pub fn dirichlet_estimate<F>(
    model: &MatrixFieldModel,
    mut sampler: F,
    n_mc: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DirichletEstimate>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<(f64, Array1<f64>, Array1<f64>)>,
{
    if n_mc == 0 {
        return Err(EfmError::Input("dirichlet_estimate: n_mc must be >= 1".into()));
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..n_mc {
        let (t, c, x) = sampler(rng)?;
        let u = model.forward(t, c.view(), x.view())?;
        let val = 0.5 * u.iter().map(|v| v * v).sum::<f64>();
        sum += val;
        sum_sq += val * val;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let std_error = if n_mc > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(DirichletEstimate { mean, std_error, n: n_mc })
}

/// Fraction of transferred points whose nearest target center carries their
/// source label. `centers` row l is the target center for label l.
pub fn cluster_preservation(
    after: ArrayView2<f64>,
    labels: &[usize],
    centers: ArrayView2<f64>,
) -> Result<f64> {
    if after.nrows() != labels.len() {
        return Err(EfmError::Input(format!(
            "cluster_preservation: {} points vs {} labels",
            after.nrows(),
            labels.len()
        )));
    }
    if after.nrows() == 0 {
        return Err(EfmError::Input("cluster_preservation: no points".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= centers.nrows()) {
        return Err(EfmError::Input(format!(
            "cluster_preservation: label {} has no center (have {})",
            bad,
            centers.nrows()
        )));
    }
    let mut hits = 0usize;
    for (row, &label) in after.rows().into_iter().zip(labels.iter()) {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (l, center) in centers.rows().into_iter().enumerate() {
            let d2: f64 = row.iter().zip(center.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d {
                best_d = d2;
                best = l;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// One evaluated condition in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEntry {
    pub condition: Vec<f64>,
    pub w1: f64,
    pub n: usize,
    pub seed: u64,
}

/// Generates per condition and scores W1 against an equal-size subsample of
/// that condition's data.
pub fn evaluate_generation(
    model: &MatrixFieldModel,
    source: &SourceRegressor,
    dataset: &ConditionedDataset,
    n_per_side: usize,
    steps: usize,
    method: Integrator,
    seed: u64,
) -> Result<Vec<EvalEntry>> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dataset.n_conditions());
    for i in 0..dataset.n_conditions() {
        let gt_all = dataset.samples(i);
        let n = n_per_side.min(gt_all.nrows());
        let gt = subsample_rows(gt_all, n, &mut rng);
        let traj = generate(model, source, dataset.condition(i), n, steps, method, &mut rng)?;
        let w1 = wasserstein1(traj.terminal().view(), gt.view())?;
        out.push(EvalEntry {
            condition: dataset.condition(i).to_vec(),
            w1,
            n,
            seed,
        });
    }
    Ok(out)
}

pub fn report_to_json(entries: &[EvalEntry]) -> Result<String> {
    Ok(serde_json::to_string_pretty(entries)?)
}
