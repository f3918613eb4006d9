//! Training loops: the matrix-field objective over coupled condition tuples,
//! and a per-condition OT flow-matching baseline hosted in the same model
//! container (condition columns supervised to zero) so inference is shared.
//!
//! Every random draw flows through one ChaCha stream in a fixed order, and
//! that stream is serialized into checkpoints, so a resumed run replays the
//! exact tail of an uninterrupted one.

use std::path::Path;

use clap::ValueEnum;
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    fit_source_regressor, sample_source_shared, subsample_rows, ConditionedDataset, SourceData,
    SourceRegressor,
};
use crate::error::{EfmError, Result};
use crate::hull::dirichlet_weights;
use crate::interpolant::{
    fit_regressor, spacetime_psi, spacetime_psi_with_drift, InterpolantBasis, KernelSpec,
};
use crate::model::{
    init_model, loss_and_grads, optimizer_step, Activation, MatrixFieldModel, ModelData,
    OptimizerData, OptimizerState, SupervisionItem,
};
use crate::transport::{
    cluster_mmot_plan, exact_ot_plan, ggc_couple, mmot_dirichlet_cost, MmotParams, TupleSampler,
    ENTRY_CAP, SIDE_CAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingKind {
    /// Cluster-factorized multi-marginal plan with interpolant-energy costs.
    MmotCluster,
    /// Generalized geodesic coupling through a Gaussian base.
    Ggc,
    /// Independent per-batch indices (ablation).
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMethod {
    /// Matrix-field training over coupled condition tuples.
    Efm,
    /// Per-condition OT flow matching; condition columns pinned to zero.
    Otcfm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Tuples (and source points) per iteration.
    pub batch_size: usize,
    /// |C_0|: conditions drawn per iteration (anchor + nearest neighbors).
    pub conditions_per_step: usize,
    /// Probe counts per iteration: t draws and hull draws, shared across
    /// tuples.
    pub time_samples: usize,
    pub condition_probes: usize,
    pub coupling: CouplingKind,
    /// Clusters per batch for the factorized multi-marginal plan.
    pub kmeans_k: usize,
    /// Entropic scale; null means 0.02 x the tuple-cost spread.
    pub epsilon: Option<f64>,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    /// Monte Carlo nodes for the hull-averaged tuple cost.
    pub quad_nodes: usize,
    pub kernel: KernelSpec,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub seed: u64,
    /// Source noise stddev around R(c).
    pub source_sigma: f64,
    /// Gaussian base stddev for the geodesic coupling.
    pub base_sigma: f64,
    /// Add the source map's condition drift (1-t) W_R to supervision.
    pub source_drift: bool,
    /// Periodic checkpoint interval in iterations; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20_000,
            batch_size: 64,
            conditions_per_step: 4,
            time_samples: 1,
            condition_probes: 1,
            coupling: CouplingKind::MmotCluster,
            kmeans_k: 4,
            epsilon: None,
            sinkhorn_max_iters: 2000,
            sinkhorn_tol: 1e-4,
            quad_nodes: 32,
            // Wide RBF (5x the median anchor distance). Narrow RBF ridge does
            // not reproduce constants: between anchors the weight sum k'G^{-1}1
            // reaches ~1.2 at the median bandwidth, systematically inflating
            // interior supervision targets. The affine kernel has no such bias
            // but its tuple cost cannot see the cross-condition interaction
            // contrast at all, so the coupling degenerates. Near the RBF flat
            // limit the interpolant approaches polynomial interpolation: the
            // weight sum stays within ~1% of 1 while the interaction term still
            // carries a strictly positive cost.
            kernel: KernelSpec::rbf_median_scaled(5.0),
            hidden: vec![128, 128],
            activation: Activation::Tanh,
            lr: 1e-3,
            seed: 0,
            source_sigma: 1.0,
            base_sigma: 1.0,
            source_drift: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Collects every violated field into one message.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.batch_size == 0 {
            errs.push("batch_size: must be >= 1".to_string());
        }
        if self.conditions_per_step == 0 {
            errs.push("conditions_per_step: must be >= 1".to_string());
        }
        if self.time_samples == 0 {
            errs.push("time_samples: must be >= 1".to_string());
        }
        if self.condition_probes == 0 {
            errs.push("condition_probes: must be >= 1".to_string());
        }
        if self.kmeans_k == 0 {
            errs.push("kmeans_k: must be >= 1".to_string());
        } else if self.kmeans_k > SIDE_CAP {
            errs.push(format!("kmeans_k: must be <= {}", SIDE_CAP));
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e > 0.0) {
                errs.push("epsilon: must be finite and > 0 when set".to_string());
            }
        }
        if self.sinkhorn_max_iters == 0 {
            errs.push("sinkhorn_max_iters: must be >= 1".to_string());
        }
        if !(self.sinkhorn_tol.is_finite() && self.sinkhorn_tol > 0.0) {
            errs.push("sinkhorn_tol: must be finite and > 0".to_string());
        }
        if self.quad_nodes == 0 {
            errs.push("quad_nodes: must be >= 1".to_string());
        }
        if let Err(e) = self.kernel.validate() {
            errs.push(format!("kernel: {}", e));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            errs.push("hidden: zero-width layer".to_string());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            errs.push("lr: must be finite and > 0".to_string());
        }
        if !(self.source_sigma.is_finite() && self.source_sigma >= 0.0) {
            errs.push("source_sigma: must be finite and >= 0".to_string());
        }
        if !(self.base_sigma.is_finite() && self.base_sigma > 0.0) {
            errs.push("base_sigma: must be finite and > 0".to_string());
        }
        if self.coupling == CouplingKind::MmotCluster {
            let entries = (self.kmeans_k as u128).checked_pow(self.conditions_per_step as u32);
            match entries {
                Some(e) if e <= ENTRY_CAP as u128 => {}
                _ => errs.push(format!(
                    "kmeans_k/conditions_per_step: cost tensor would exceed {} entries",
                    ENTRY_CAP
                )),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EfmError::Config(errs.join("\n")))
        }
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_slice(bytes)
            .map_err(|e| EfmError::Config(format!("config JSON: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Uniform anchor plus its n_c - 1 nearest conditions (Euclidean, ties by
/// index). The anchor is element 0 of the result.
pub fn select_condition_subset(
    conditions: ArrayView2<f64>,
    n_c: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let m = conditions.nrows();
    if n_c == 0 || n_c > m {
        return Err(EfmError::Input(format!(
            "select_condition_subset: n_c {} out of range 1..={}",
            n_c, m
        )));
    }
    let anchor = rng.gen_range(0..m);
    let mut order: Vec<usize> = (0..m).collect();
    let dist2 = |i: usize| -> f64 {
        conditions
            .row(anchor)
            .iter()
            .zip(conditions.row(i).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    order.sort_by(|&a, &b| dist2(a).partial_cmp(&dist2(b)).unwrap().then(a.cmp(&b)));
    Ok(order.into_iter().take(n_c).collect())
}

/// Dirichlet(1,..,1) convex combination of the rows of c0: uniform on the
/// weight simplex.
pub fn sample_convhull(c0: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let w = dirichlet_weights(c0.nrows(), rng);
    let mut out = Array1::<f64>::zeros(c0.ncols());
    for (wi, row) in w.iter().zip(c0.rows()) {
        out.scaled_add(*wi, &row);
    }
    out
}

/// One iteration's supervision, kept open for inspection: the condition
/// subset, the coupled tuples, the fitted interpolants, and the flattened
/// probe items fed to the model.
pub struct SupervisionBatch {
    /// Dataset indices of C_0 (anchor first).
    pub c0_indices: Vec<usize>,
    /// n_c x k condition matrix in the same order.
    pub c0: Array2<f64>,
    /// Per tuple: the n_c coupled target rows (row i from condition
    /// c0_indices[i]'s batch).
    pub tuples: Vec<Array2<f64>>,
    /// Per tuple: its coupled source point at the anchor condition.
    pub sources: Vec<Array1<f64>>,
    /// Per tuple: interpolant through (c0, tuple rows).
    pub bases: Vec<InterpolantBasis>,
    pub probes_t: Vec<f64>,
    pub probes_c: Vec<Array1<f64>>,
    pub items: Vec<SupervisionItem>,
    /// items[i] came from tuples[item_tuple[i]].
    pub item_tuple: Vec<usize>,
}

/// Outcome of one training iteration.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Loss(f64),
    /// Coupling or regression failed; iteration consumed, no update.
    Skipped(String),
}

pub struct Trainer {
    dataset: ConditionedDataset,
    config: TrainConfig,
    method: TrainMethod,
    model: MatrixFieldModel,
    opt: OptimizerState,
    rng: ChaCha8Rng,
    source: SourceRegressor,
    iteration: u64,
    skipped: u64,
    max_skips: u64,
}

impl Trainer {
    pub fn new(dataset: ConditionedDataset, config: TrainConfig, method: TrainMethod) -> Result<Self> {
        config.validate()?;
        if config.conditions_per_step > dataset.n_conditions() {
            return Err(EfmError::Config(format!(
                "conditions_per_step: {} exceeds the dataset's {} conditions",
                config.conditions_per_step,
                dataset.n_conditions()
            )));
        }
        let min_rows = (0..dataset.n_conditions())
            .map(|i| dataset.samples(i).nrows())
            .min()
            .unwrap_or(0);
        if config.batch_size > min_rows {
            return Err(EfmError::Config(format!(
                "batch_size: {} exceeds the smallest condition's {} samples",
                config.batch_size, min_rows
            )));
        }
        if config.kmeans_k > config.batch_size {
            return Err(EfmError::Config(format!(
                "kmeans_k: {} exceeds batch_size {}",
                config.kmeans_k, config.batch_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model_seed = rng.gen::<u64>();
        let model = init_model(
            dataset.d(),
            dataset.k(),
            &config.hidden,
            config.activation,
            model_seed,
        )?;
        let opt = OptimizerState::new(&model, config.lr);
        let source = fit_source_regressor(&dataset, config.source_sigma)?;
        let max_skips = (config.iterations / 100).max(1);
        Ok(Trainer {
            dataset,
            config,
            method,
            model,
            opt,
            rng,
            source,
            iteration: 0,
            skipped: 0,
            max_skips,
        })
    }

    /// Like `new` but with a caller-supplied source measure instead of the
    /// least-squares fit; `config.source_sigma` is ignored.
    pub fn with_source(
        dataset: ConditionedDataset,
        config: TrainConfig,
        method: TrainMethod,
        source: SourceRegressor,
    ) -> Result<Self> {
        if source.d() != dataset.d() || source.k() != dataset.k() {
            return Err(EfmError::Input(format!(
                "source regressor is d={} k={}, dataset is d={} k={}",
                source.d(),
                source.k(),
                dataset.d(),
                dataset.k()
            )));
        }
        let mut trainer = Trainer::new(dataset, config, method)?;
        trainer.source = source;
        Ok(trainer)
    }

    /// Restores a trainer mid-run; the dataset must match the checkpoint's
    /// dimensions.
    pub fn from_checkpoint(dataset: ConditionedDataset, ckpt: &Checkpoint) -> Result<Self> {
        ckpt.config.validate()?;
        let model = MatrixFieldModel::from_data(&ckpt.model)?;
        if model.d() != dataset.d() || model.k() != dataset.k() {
            return Err(EfmError::Input(format!(
                "checkpoint model is d={} k={}, dataset is d={} k={}",
                model.d(),
                model.k(),
                dataset.d(),
                dataset.k()
            )));
        }
        let opt = OptimizerState::from_data(&ckpt.optimizer, &model)?;
        let source = SourceRegressor::from_data(&ckpt.source)?;
        let max_skips = (ckpt.config.iterations / 100).max(1);
        Ok(Trainer {
            dataset,
            config: ckpt.config.clone(),
            method: ckpt.method,
            model,
            opt,
            rng: ckpt.rng.clone(),
            source,
            iteration: ckpt.iteration,
            skipped: ckpt.skipped,
            max_skips,
        })
    }

    pub fn model(&self) -> &MatrixFieldModel {
        &self.model
    }

    pub fn source(&self) -> &SourceRegressor {
        &self.source
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn method(&self) -> TrainMethod {
        self.method
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            method: self.method,
            iteration: self.iteration,
            skipped: self.skipped,
            config: self.config.clone(),
            model: self.model.to_data(),
            optimizer: self.opt.to_data(),
            rng: self.rng.clone(),
            source: self.source.to_data(),
            omega_min: self.dataset.omega_min().to_vec(),
            omega_max: self.dataset.omega_max().to_vec(),
        }
    }

    /// Runs one iteration. Coupling or regression failures consume the
    /// iteration without an update, up to a budget of 1% of the configured
    /// iterations; past that the run aborts.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let built = match self.method {
            TrainMethod::Efm => self.build_batch(),
            TrainMethod::Otcfm => self.build_otcfm_batch(),
        };
        self.iteration += 1;
        let items = match built {
            Ok(b) => b,
            Err(e @ (EfmError::IllPosed(_) | EfmError::Numerical(_))) => {
                self.skipped += 1;
                if self.skipped > self.max_skips {
                    return Err(EfmError::Numerical(format!(
                        "skip budget exhausted ({} of {} iterations): last failure: {}",
                        self.skipped, self.config.iterations, e
                    )));
                }
                return Ok(StepOutcome::Skipped(e.to_string()));
            }
            Err(e) => return Err(e),
        };
        let (loss, grads) = loss_and_grads(&self.model, &items)?;
        optimizer_step(&mut self.model, &mut self.opt, &grads);
        Ok(StepOutcome::Loss(loss))
    }

    /// Runs to the configured iteration count, returning (iteration, loss)
    /// rows for every non-skipped step.
    pub fn run(&mut self) -> Result<Vec<(u64, f64)>> {
        let mut trace = Vec::new();
        while self.iteration < self.config.iterations {
            match self.step()? {
                StepOutcome::Loss(l) => trace.push((self.iteration, l)),
                StepOutcome::Skipped(_) => {}
            }
        }
        Ok(trace)
    }

    fn build_batch(&mut self) -> Result<Vec<SupervisionItem>> {
        Ok(self.build_supervision()?.items)
    }

    /// The full per-iteration pipeline, exposed for invariant checks.
    pub fn build_supervision(&mut self) -> Result<SupervisionBatch> {
        let n = self.config.batch_size;
        let n_c = self.config.conditions_per_step;
        let k = self.dataset.k();

        // Step 1: condition subset and per-condition batches.
        let c0_indices =
            select_condition_subset(self.dataset.conditions_matrix().view(), n_c, &mut self.rng)?;
        let mut c0 = Array2::<f64>::zeros((n_c, k));
        for (r, &ci) in c0_indices.iter().enumerate() {
            c0.row_mut(r).assign(&self.dataset.condition(ci));
        }
        let target_batches: Vec<Array2<f64>> = c0_indices
            .iter()
            .map(|&ci| subsample_rows(self.dataset.samples(ci), n, &mut self.rng))
            .collect();
        let source_draw = sample_source_shared(&self.source, &c0.view(), n, &mut self.rng)?;

        // Step 2: tuple sampler over the target batches.
        let batch_views: Vec<ArrayView2<f64>> = target_batches.iter().map(|b| b.view()).collect();
        let sampler = match self.config.coupling {
            CouplingKind::MmotCluster => {
                let params = MmotParams {
                    epsilon: self.config.epsilon,
                    epsilon_frac: 0.02,
                    max_iters: self.config.sinkhorn_max_iters,
                    tol: self.config.sinkhorn_tol,
                    base_sigma: self.config.base_sigma,
                    kmeans_iters: 100,
                };
                let plan_seed = self.rng.gen::<u64>();
                let cost_seed = self.rng.gen::<u64>();
                let kernel = self.config.kernel;
                let quad = self.config.quad_nodes;
                let c0v = c0.view();
                let sampler = cluster_mmot_plan(
                    &batch_views,
                    self.config.kmeans_k,
                    |pts| mmot_dirichlet_cost(pts, c0v, &kernel, quad, cost_seed),
                    &params,
                    plan_seed,
                )?;
                TupleSampler::Cluster(sampler)
            }
            CouplingKind::Ggc => {
                // Gaussian base at the pooled batch mean.
                let d = self.dataset.d();
                let mut mean = Array1::<f64>::zeros(d);
                for b in &target_batches {
                    for row in b.rows() {
                        mean += &row;
                    }
                }
                mean /= (n_c * n) as f64;
                let mut base = Array2::<f64>::zeros((n, d));
                for mut row in base.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let g: f64 = StandardNormal.sample(&mut self.rng);
                        *v = mean[j] + self.config.base_sigma * g;
                    }
                }
                TupleSampler::Fixed(ggc_couple(&batch_views, base.view())?)
            }
            CouplingKind::Independent => {
                TupleSampler::Independent(batch_views.iter().map(|b| b.nrows()).collect())
            }
        };

        // Draw n tuples, then couple the anchor source batch to their anchor
        // components by exact OT.
        let tuple_idx: Vec<Vec<usize>> = (0..n).map(|_| sampler.sample(&mut self.rng)).collect();
        let d = self.dataset.d();
        let mut firsts = Array2::<f64>::zeros((n, d));
        for (j, t) in tuple_idx.iter().enumerate() {
            firsts.row_mut(j).assign(&target_batches[0].row(t[0]));
        }
        let plan = exact_ot_plan(source_draw.batches[0].view(), firsts.view())?;

        let mut tuples = Vec::with_capacity(n);
        let mut sources = Vec::with_capacity(n);
        let mut bases = Vec::with_capacity(n);
        for pair in plan.support.iter() {
            let (src_row, tup) = (pair[0], pair[1]);
            let mut rows = Array2::<f64>::zeros((n_c, d));
            for (i, &ti) in tuple_idx[tup].iter().enumerate() {
                rows.row_mut(i).assign(&target_batches[i].row(ti));
            }
            let basis = fit_regressor(c0.view(), rows.view(), &self.config.kernel)?;
            tuples.push(rows);
            sources.push(source_draw.batches[0].row(src_row).to_owned());
            bases.push(basis);
        }

        // Shared probes for this iteration.
        let probes_t: Vec<f64> =
            (0..self.config.time_samples).map(|_| self.rng.gen_range(0.0..1.0)).collect();
        let probes_c: Vec<Array1<f64>> = (0..self.config.condition_probes)
            .map(|_| sample_convhull(c0.view(), &mut self.rng))
            .collect();

        // The source sample at probe c is the shared-noise draw there: the
        // stored anchor draw shifted by R(c) - R(c_anchor). Supervising with
        // the anchor draw at every probe would put all small-t supervision in
        // the anchor's source ball and make the time column's target carry a
        // spurious slope of psihat in c; the shifted draw keeps ODE starts at
        // every condition inside supervised territory and the time target
        // close to condition-free.
        let anchor_base = self.source.eval(c0.row(0));
        let probe_shifts: Vec<Array1<f64>> =
            probes_c.iter().map(|c| &self.source.eval(c.view()) - &anchor_base).collect();

        let mut items = Vec::with_capacity(tuples.len() * probes_t.len() * probes_c.len());
        let mut item_tuple = Vec::with_capacity(items.capacity());
        for (j, basis) in bases.iter().enumerate() {
            for &t in &probes_t {
                for (c, shift) in probes_c.iter().zip(&probe_shifts) {
                    let x0 = &sources[j] + shift;
                    let (value, jac) = if self.config.source_drift {
                        spacetime_psi_with_drift(
                            x0.view(),
                            basis,
                            t,
                            c.view(),
                            self.source.weight.view(),
                        )?
                    } else {
                        spacetime_psi(x0.view(), basis, t, c.view())?
                    };
                    items.push(SupervisionItem { t, c: c.clone(), x: value, target: jac });
                    item_tuple.push(j);
                }
            }
        }
        Ok(SupervisionBatch {
            c0_indices,
            c0,
            tuples,
            sources,
            bases,
            probes_t,
            probes_c,
            items,
            item_tuple,
        })
    }

    /// OT flow matching on one uniformly drawn condition: straight-line time
    /// supervision, zero condition columns.
    fn build_otcfm_batch(&mut self) -> Result<Vec<SupervisionItem>> {
        let n = self.config.batch_size;
        let ci = self.rng.gen_range(0..self.dataset.n_conditions());
        let cond = self.dataset.condition(ci).to_owned();
        let targets = subsample_rows(self.dataset.samples(ci), n, &mut self.rng);
        let d = self.dataset.d();
        let k = self.dataset.k();
        let base = self.source.eval(cond.view());
        let mut x0 = Array2::<f64>::zeros((n, d));
        for mut row in x0.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let g: f64 = StandardNormal.sample(&mut self.rng);
                *v = base[j] + self.config.source_sigma * g;
            }
        }
        let plan = exact_ot_plan(x0.view(), targets.view())?;
        let mut items = Vec::with_capacity(n);
        for pair in plan.support.iter() {
            let (i, j) = (pair[0], pair[1]);
            let t = self.rng.gen_range(0.0..1.0);
            let mut x = Array1::<f64>::zeros(d);
            let mut target = Array2::<f64>::zeros((d, 1 + k));
            for r in 0..d {
                let (a, b) = (x0[[i, r]], targets[[j, r]]);
                x[r] = (1.0 - t) * a + t * b;
                target[[r, 0]] = b - a;
            }
            items.push(SupervisionItem { t, c: cond.clone(), x, target });
        }
        Ok(items)
    }
}

/// Trains a matrix-field model from scratch; returns the trainer (holding the
/// model and source map) and the loss trace.
pub fn train_efm(dataset: ConditionedDataset, config: TrainConfig) -> Result<(Trainer, Vec<(u64, f64)>)> {
    let mut t = Trainer::new(dataset, config, TrainMethod::Efm)?;
    let trace = t.run()?;
    Ok((t, trace))
}

pub fn train_otcfm_baseline(
    dataset: ConditionedDataset,
    config: TrainConfig,
) -> Result<(Trainer, Vec<(u64, f64)>)> {
    let mut t = Trainer::new(dataset, config, TrainMethod::Otcfm)?;
    let trace = t.run()?;
    Ok((t, trace))
}

// ---------------------------------------------------------------------------
// Checkpoints and traces

pub const CHECKPOINT_FORMAT: &str = "efm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub method: TrainMethod,
    pub iteration: u64,
    pub skipped: u64,
    pub config: TrainConfig,
    pub model: ModelData,
    pub optimizer: OptimizerData,
    /// Full RNG state; restoring it replays the run's remaining draws.
    pub rng: ChaCha8Rng,
    pub source: SourceData,
    /// Declared condition box, carried along so inference commands can warn
    /// about extrapolation without the dataset at hand.
    pub omega_min: Vec<f64>,
    pub omega_max: Vec<f64>,
}

impl Checkpoint {
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| EfmError::Input(format!("checkpoint JSON: {}", e)))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(EfmError::Input(format!(
                "checkpoint format \"{}\", expected \"{}\"",
                ckpt.format, CHECKPOINT_FORMAT
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(EfmError::Input(format!(
                "checkpoint version {}, expected {}",
                ckpt.version, CHECKPOINT_VERSION
            )));
        }
        // Shape-check eagerly so corrupt files fail here, not mid-training.
        let model = MatrixFieldModel::from_data(&ckpt.model)?;
        OptimizerState::from_data(&ckpt.optimizer, &model)?;
        SourceRegressor::from_data(&ckpt.source)?;
        ckpt.config.validate()?;
        Ok(ckpt)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Checkpoint::from_json_bytes(&bytes)
        .map_err(|e| EfmError::parse(path.display().to_string(), e.to_string()))
}

/// Appends (or starts) a loss trace CSV with header `iteration,loss`.
pub fn write_loss_trace(path: &Path, rows: &[(u64, f64)], append: bool) -> Result<()> {
    let exists = path.exists();
    let mut out = String::new();
    if !(append && exists) {
        out.push_str("iteration,loss\n");
    }
    for (it, loss) in rows {
        out.push_str(&format!("{},{}\n", it, loss));
    }
    if append && exists {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
        f.write_all(out.as_bytes())?;
    } else {
        std::fs::write(path, out)?;
    }
    Ok(())
}
