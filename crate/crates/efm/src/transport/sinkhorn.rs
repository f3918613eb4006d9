//! Entropic multi-marginal OT: log-domain Sinkhorn over a dense cost tensor
//! with uniform marginals, plus argmax extraction of a deterministic plan.

use crate::error::{EfmError, Result};
use crate::transport::plan::CouplingPlan;

/// Hard bound on tensor side lengths; K^m tensors get out of hand fast.
pub const SIDE_CAP: usize = 12;
/// Bound on total tensor entries.
pub const ENTRY_CAP: usize = 4_000_000;

/// Dense row-major cost tensor over m marginals.
#[derive(Debug, Clone)]
pub struct CostTensor {
    shape: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<f64>,
}

impl CostTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(EfmError::Input("cost tensor needs at least one marginal".into()));
        }
        let mut total = 1usize;
        for &s in &shape {
            if s == 0 {
                return Err(EfmError::Input("cost tensor: zero-length marginal".into()));
            }
            if s > SIDE_CAP {
                return Err(EfmError::Input(format!(
                    "cost tensor: side {} exceeds cap {}",
                    s, SIDE_CAP
                )));
            }
            total = total
                .checked_mul(s)
                .filter(|&t| t <= ENTRY_CAP)
                .ok_or_else(|| EfmError::Input("cost tensor too large".into()))?;
        }
        if data.len() != total {
            return Err(EfmError::Input(format!(
                "cost tensor: {} entries for shape {:?} (need {})",
                data.len(),
                shape,
                total
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EfmError::Input("cost tensor: non-finite entry".into()));
        }
        let strides = strides_for(&shape);
        Ok(CostTensor { shape, strides, data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> Result<f64>) -> Result<Self> {
        let total: usize = shape.iter().product();
        let strides = strides_for(shape);
        let mut data = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        for flat in 0..total {
            decode(flat, &strides, &shape_checked(shape), &mut idx);
            data.push(f(&idx)?);
        }
        CostTensor::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn arity(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let flat: usize = idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
        self.data[flat]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }
}

fn shape_checked(shape: &[usize]) -> Vec<usize> {
    shape.to_vec()
}

fn strides_for(shape: &[usize]) -> Vec<usize> {
    let m = shape.len();
    let mut strides = vec![1usize; m];
    for j in (0..m.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * shape[j + 1];
    }
    strides
}

#[inline]
fn decode(flat: usize, strides: &[usize], shape: &[usize], out: &mut [usize]) {
    for j in 0..shape.len() {
        out[j] = (flat / strides[j]) % shape[j];
    }
}

/// Suggested entropic scale: `frac` times the interdecile spread of the cost
/// entries. The plan is invariant to adding a constant to every entry, so the
/// scale must follow the entry spread, not the entry magnitude; a
/// median-of-entries rule goes mushy whenever costs share a large offset.
/// Falls back to the median |entry|, then 1.0, when the spread vanishes.
pub fn scale_free_epsilon(cost: &CostTensor, frac: f64) -> f64 {
    let mut vals: Vec<f64> = cost.entries().to_vec();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let spread = vals[vals.len() * 9 / 10] - vals[vals.len() / 10];
    if spread > 0.0 {
        return frac * spread;
    }
    let mut abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = abs[abs.len() / 2];
    if median > 0.0 {
        frac * median
    } else {
        frac
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub plan: CouplingPlan,
    pub converged: bool,
    /// Final worst marginal deviation from uniform.
    pub residual: f64,
    pub sweeps: usize,
    /// Residual after each full sweep.
    pub residual_trace: Vec<f64>,
}

/// Log-domain cyclic Bregman projections for uniform marginals.
/// Returns a flagged (not failed) result when `max_iters` sweeps do not reach
/// `tol`; callers decide whether a loose plan is usable.
pub fn mmot_sinkhorn(
    cost: &CostTensor,
    epsilon: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(EfmError::Input("sinkhorn: epsilon must be positive".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(EfmError::Input("sinkhorn: tol must be positive".into()));
    }
    if max_iters == 0 {
        return Err(EfmError::Input("sinkhorn: max_iters must be positive".into()));
    }
    let m = cost.arity();
    let shape = cost.shape().to_vec();
    let strides = strides_for(&shape);
    let total = cost.len();

    let logk: Vec<f64> = cost.entries().iter().map(|&c| -c / epsilon).collect();
    let mut g: Vec<Vec<f64>> = shape.iter().map(|&s| vec![0.0f64; s]).collect();
    let log_uniform: Vec<f64> = shape.iter().map(|&s| -(s as f64).ln()).collect();

    let mut idx = vec![0usize; m];
    let mut residual_trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0usize;
    let mut residual = f64::INFINITY;

    while sweeps < max_iters {
        for j in 0..m {
            // Log-marginal over axis j of exp(logk + sum_{l != j} g_l),
            // streamed in two passes (max, then sum of shifted exps).
            let nj = shape[j];
            let mut mx = vec![f64::NEG_INFINITY; nj];
            for flat in 0..total {
                decode(flat, &strides, &shape, &mut idx);
                let mut val = logk[flat];
                for l in 0..m {
                    if l != j {
                        val += g[l][idx[l]];
                    }
                }
                if val > mx[idx[j]] {
                    mx[idx[j]] = val;
                }
            }
            let mut sums = vec![0.0f64; nj];
            for flat in 0..total {
                decode(flat, &strides, &shape, &mut idx);
                let mut val = logk[flat];
                for l in 0..m {
                    if l != j {
                        val += g[l][idx[l]];
                    }
                }
                sums[idx[j]] += (val - mx[idx[j]]).exp();
            }
            for i in 0..nj {
                let lse = mx[i] + sums[i].ln();
                g[j][i] = log_uniform[j] - lse;
            }
        }
        sweeps += 1;

        // Worst marginal deviation of the current plan.
        let mut mass: Vec<Vec<f64>> = shape.iter().map(|&s| vec![0.0f64; s]).collect();
        for flat in 0..total {
            decode(flat, &strides, &shape, &mut idx);
            let mut val = logk[flat];
            for l in 0..m {
                val += g[l][idx[l]];
            }
            let w = val.exp();
            for l in 0..m {
                mass[l][idx[l]] += w;
            }
        }
        residual = 0.0;
        for j in 0..m {
            let target = 1.0 / shape[j] as f64;
            for &v in &mass[j] {
                residual = residual.max((v - target).abs());
            }
        }
        residual_trace.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }
    }

    // Materialize the plan; renormalize so weights sum to exactly 1.
    let mut weights = Vec::with_capacity(total);
    let mut support = Vec::with_capacity(total);
    let mut sum = 0.0f64;
    for flat in 0..total {
        decode(flat, &strides, &shape, &mut idx);
        let mut val = logk[flat];
        for l in 0..m {
            val += g[l][idx[l]];
        }
        let w = val.exp();
        sum += w;
        weights.push(w);
        support.push(idx.clone());
    }
    if !(sum.is_finite() && sum > 0.0) {
        return Err(EfmError::Numerical(format!("sinkhorn: degenerate plan mass {}", sum)));
    }
    for w in &mut weights {
        *w /= sum;
    }
    let plan = CouplingPlan {
        arity: m,
        sizes: shape.clone(),
        support,
        weights,
        deterministic: false,
    };
    Ok(SinkhornResult { plan, converged, residual, sweeps, residual_trace })
}

/// Collapses a soft plan to a map off the first marginal: for each index of
/// marginal 0, keep the heaviest tuple (lexicographically smallest on exact
/// ties). Result carries uniform weights 1/n_0.
pub fn extract_deterministic(plan: &CouplingPlan) -> Result<CouplingPlan> {
    let n0 = plan.sizes[0];
    let mut best: Vec<Option<(f64, &Vec<usize>)>> = vec![None; n0];
    for (tuple, &w) in plan.support.iter().zip(&plan.weights) {
        let slot = &mut best[tuple[0]];
        match slot {
            None => *slot = Some((w, tuple)),
            Some((bw, bt)) => {
                if w > *bw || (w == *bw && tuple.as_slice() < bt.as_slice()) {
                    *slot = Some((w, tuple));
                }
            }
        }
    }
    let mut support = Vec::with_capacity(n0);
    for (i, slot) in best.iter().enumerate() {
        match slot {
            Some((_, t)) => support.push((*t).clone()),
            None => {
                return Err(EfmError::Input(format!(
                    "extract_deterministic: marginal-0 index {} missing from support",
                    i
                )))
            }
        }
    }
    Ok(CouplingPlan {
        arity: plan.arity,
        sizes: plan.sizes.clone(),
        support,
        weights: vec![1.0 / n0 as f64; n0],
        deterministic: true,
    })
}
