//! Kernel ridge regression over condition anchors and the spacetime
//! interpolant built on it: psi(t, c) = (1-t) x0 + t psihat(c), with the
//! analytic d x (1+k) Jacobian in (t, c) that training supervises against.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{EfmError, Result};
use crate::linalg::cholesky_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Rbf,
    Linear,
}

/// Bandwidth is either pinned or resolved from the anchors at fit time
/// (median pairwise distance, optionally scaled by a fixed factor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    MedianHeuristic,
    /// Median pairwise distance times the factor. Large factors push the RBF
    /// interpolant toward its flat limit (polynomial interpolation on the
    /// anchors), whose weights stay near a partition of unity between anchors
    /// instead of inflating like narrow-bandwidth RBF weights do.
    MedianScaled(f64),
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Num(f64),
    Name(String),
    Scaled {
        #[serde(rename = "median-scaled")]
        median_scaled: f64,
    },
}

impl From<Bandwidth> for BandwidthRepr {
    fn from(b: Bandwidth) -> Self {
        match b {
            Bandwidth::MedianHeuristic => BandwidthRepr::Name("median-heuristic".into()),
            Bandwidth::MedianScaled(f) => BandwidthRepr::Scaled { median_scaled: f },
            Bandwidth::Fixed(h) => BandwidthRepr::Num(h),
        }
    }
}

impl TryFrom<BandwidthRepr> for Bandwidth {
    type Error = String;

    fn try_from(r: BandwidthRepr) -> std::result::Result<Self, String> {
        match r {
            BandwidthRepr::Num(h) => Ok(Bandwidth::Fixed(h)),
            BandwidthRepr::Name(s) if s == "median-heuristic" => Ok(Bandwidth::MedianHeuristic),
            BandwidthRepr::Name(s) => Err(format!(
                "bandwidth must be a number, \"median-heuristic\", or {{\"median-scaled\": factor}}, got \"{}\"",
                s
            )),
            BandwidthRepr::Scaled { median_scaled } => Ok(Bandwidth::MedianScaled(median_scaled)),
        }
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BandwidthRepr::from(*self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = BandwidthRepr::deserialize(d)?;
        Bandwidth::try_from(repr).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: Bandwidth,
    #[serde(default = "default_ridge")]
    pub ridge_lambda: f64,
}

fn default_bandwidth() -> Bandwidth {
    Bandwidth::MedianHeuristic
}

fn default_ridge() -> f64 {
    1e-8
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kind: KernelKind::Rbf,
            bandwidth: default_bandwidth(),
            ridge_lambda: default_ridge(),
        }
    }
}

impl KernelSpec {
    pub fn rbf() -> Self {
        Self::default()
    }

    pub fn linear() -> Self {
        KernelSpec { kind: KernelKind::Linear, ..Self::default() }
    }

    pub fn rbf_median_scaled(factor: f64) -> Self {
        KernelSpec { bandwidth: Bandwidth::MedianScaled(factor), ..Self::default() }
    }

    pub fn with_ridge(mut self, lambda: f64) -> Self {
        self.ridge_lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(EfmError::Config("ridge_lambda must be finite and >= 0".into()));
        }
        match self.bandwidth {
            Bandwidth::Fixed(h) if !(h.is_finite() && h > 0.0) => {
                return Err(EfmError::Config("bandwidth must be finite and > 0".into()));
            }
            Bandwidth::MedianScaled(f) if !(f.is_finite() && f > 0.0) => {
                return Err(EfmError::Config("bandwidth factor must be finite and > 0".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Bandwidth actually used for a given anchor set.
    pub fn resolve_bandwidth(&self, anchors: &ArrayView2<f64>) -> f64 {
        match self.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::MedianHeuristic => median_pairwise(anchors),
            Bandwidth::MedianScaled(f) => f * median_pairwise(anchors),
        }
    }
}

/// Median pairwise anchor distance; 1.0 when there are no distinct pairs.
fn median_pairwise(anchors: &ArrayView2<f64>) -> f64 {
    let m = anchors.nrows();
    let mut dists = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let d2: f64 = anchors
                .row(i)
                .iter()
                .zip(anchors.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    match dists.get(dists.len() / 2) {
        Some(&med) if med > 0.0 => med,
        _ => 1.0,
    }
}

fn kernel_eval(kind: KernelKind, h: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match kind {
        KernelKind::Rbf => {
            let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            (-d2 / (2.0 * h * h)).exp()
        }
        // Affine form: carries constants, so equal targets fit exactly flat.
        KernelKind::Linear => a.dot(&b) + 1.0,
    }
}

fn kernel_grad_a(kind: KernelKind, h: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    match kind {
        KernelKind::Rbf => {
            let k = kernel_eval(kind, h, a, b);
            let mut g = Array1::<f64>::zeros(a.len());
            for i in 0..a.len() {
                g[i] = k * (b[i] - a[i]) / (h * h);
            }
            g
        }
        KernelKind::Linear => b.to_owned(),
    }
}

/// Fitted kernel regressor c -> R^d over m anchors.
#[derive(Debug, Clone)]
pub struct InterpolantBasis {
    anchors: Array2<f64>,
    /// m x d coefficient matrix A: psihat(c) = sum_j A_j k(c, c_j).
    coeffs: Array2<f64>,
    kind: KernelKind,
    bandwidth: f64,
}

impl InterpolantBasis {
    pub fn anchors(&self) -> ArrayView2<'_, f64> {
        self.anchors.view()
    }

    pub fn out_dim(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn cond_dim(&self) -> usize {
        self.anchors.ncols()
    }
}

/// Solves (G + lambda I) A = targets. Duplicate anchors (or a rank-deficient
/// linear-kernel Gram) at lambda = 0 surface as an ill-posed error suggesting
/// ridge_lambda > 0.
pub fn fit_regressor(
    anchors: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    spec: &KernelSpec,
) -> Result<InterpolantBasis> {
    spec.validate()?;
    let m = anchors.nrows();
    if m == 0 {
        return Err(EfmError::Input("fit_regressor: no anchors".into()));
    }
    if targets.nrows() != m {
        return Err(EfmError::Input(format!(
            "fit_regressor: {} anchors vs {} targets",
            m,
            targets.nrows()
        )));
    }
    if anchors.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(EfmError::Input("fit_regressor: non-finite input".into()));
    }
    let h = spec.resolve_bandwidth(&anchors);
    let mut gram = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            gram[[i, j]] = kernel_eval(spec.kind, h, anchors.row(i), anchors.row(j));
        }
        gram[[i, i]] += spec.ridge_lambda;
    }
    let coeffs = cholesky_solve(&gram.view(), &targets).map_err(|e| {
        EfmError::IllPosed(format!(
            "kernel system unsolvable ({}); duplicate or rank-deficient anchors -- set ridge_lambda > 0",
            e
        ))
    })?;
    Ok(InterpolantBasis { anchors: anchors.to_owned(), coeffs, kind: spec.kind, bandwidth: h })
}

/// psihat(c) = sum_j A_j k(c, c_j).
pub fn eval_regressor(basis: &InterpolantBasis, c: ArrayView1<f64>) -> Array1<f64> {
    let d = basis.out_dim();
    let mut out = Array1::<f64>::zeros(d);
    for (j, anchor) in basis.anchors.rows().into_iter().enumerate() {
        let k = kernel_eval(basis.kind, basis.bandwidth, c, anchor);
        for r in 0..d {
            out[r] += basis.coeffs[[j, r]] * k;
        }
    }
    out
}

/// Analytic Jacobian d psihat / d c, d x k.
pub fn grad_regressor(basis: &InterpolantBasis, c: ArrayView1<f64>) -> Array2<f64> {
    let d = basis.out_dim();
    let k = basis.cond_dim();
    let mut out = Array2::<f64>::zeros((d, k));
    for (j, anchor) in basis.anchors.rows().into_iter().enumerate() {
        let g = kernel_grad_a(basis.kind, basis.bandwidth, c, anchor);
        for r in 0..d {
            for q in 0..k {
                out[[r, q]] += basis.coeffs[[j, r]] * g[q];
            }
        }
    }
    out
}

/// Spacetime interpolant value and its d x (1+k) Jacobian at (t, c), with the
/// source point held fixed: column 0 is psihat(c) - x0, columns 1..k are
/// t * d psihat / d c.
pub fn spacetime_psi(
    x0: ArrayView1<f64>,
    basis: &InterpolantBasis,
    t: f64,
    c: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let d = basis.out_dim();
    if x0.len() != d {
        return Err(EfmError::Input(format!(
            "spacetime_psi: x0 has {} entries, regressor outputs {}",
            x0.len(),
            d
        )));
    }
    if c.len() != basis.cond_dim() {
        return Err(EfmError::Input("spacetime_psi: condition dimension mismatch".into()));
    }
    if !t.is_finite() || c.iter().any(|v| !v.is_finite()) || x0.iter().any(|v| !v.is_finite()) {
        return Err(EfmError::Input("spacetime_psi: non-finite input".into()));
    }
    let psihat = eval_regressor(basis, c);
    let grad = grad_regressor(basis, c);
    let k = basis.cond_dim();
    let mut value = Array1::<f64>::zeros(d);
    let mut jac = Array2::<f64>::zeros((d, 1 + k));
    for r in 0..d {
        value[r] = (1.0 - t) * x0[r] + t * psihat[r];
        jac[[r, 0]] = psihat[r] - x0[r];
        for q in 0..k {
            jac[[r, 1 + q]] = t * grad[[r, q]];
        }
    }
    Ok((value, jac))
}

/// Variant where the source drifts with c through the source map's weight
/// W_R: condition columns gain (1-t) W_R.
pub fn spacetime_psi_with_drift(
    x0: ArrayView1<f64>,
    basis: &InterpolantBasis,
    t: f64,
    c: ArrayView1<f64>,
    source_weight: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let (value, mut jac) = spacetime_psi(x0, basis, t, c)?;
    let d = basis.out_dim();
    let k = basis.cond_dim();
    if source_weight.nrows() != d || source_weight.ncols() != k {
        return Err(EfmError::Input("spacetime_psi: source weight shape mismatch".into()));
    }
    for r in 0..d {
        for q in 0..k {
            jac[[r, 1 + q]] += (1.0 - t) * source_weight[[r, q]];
        }
    }
    Ok((value, jac))
}
