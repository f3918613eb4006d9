//! Conditioned datasets: sample sets indexed by a condition vector in a box
//! Omega, plus the linear source model that anchors generation.
//!
//! File format is a CSV with header `c1..ck,x1..xd[,cluster]` and a JSON
//! sidecar (same stem, `.json`) carrying `{k, d, omega_min, omega_max}`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EfmError, Result};
use crate::linalg::least_squares;

/// Upper bound on k and d accepted from files; keeps hostile inputs from
/// requesting absurd allocations.
pub const MAX_FILE_DIM: usize = 64;

/// Samples grouped by condition. `entries[i]` pairs a condition in R^k with
/// an n_i x d sample matrix; optional per-row cluster labels ride along.
#[derive(Debug, Clone)]
pub struct ConditionedDataset {
    d: usize,
    k: usize,
    entries: Vec<(Array1<f64>, Array2<f64>)>,
    omega_min: Array1<f64>,
    omega_max: Array1<f64>,
    labels: Option<Vec<Vec<usize>>>,
}

impl ConditionedDataset {
    pub fn new(
        entries: Vec<(Array1<f64>, Array2<f64>)>,
        omega_min: Array1<f64>,
        omega_max: Array1<f64>,
        labels: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(EfmError::Input("dataset needs at least one condition".into()));
        }
        let k = omega_min.len();
        if omega_max.len() != k {
            return Err(EfmError::Input(format!(
                "omega bounds disagree: min has {} axes, max has {}",
                k,
                omega_max.len()
            )));
        }
        for i in 0..k {
            if !(omega_min[i].is_finite() && omega_max[i].is_finite()) || omega_min[i] > omega_max[i] {
                return Err(EfmError::Input(format!("invalid omega bounds on axis {}", i + 1)));
            }
        }
        let d = entries[0].1.ncols();
        if d == 0 {
            return Err(EfmError::Input("data dimension d must be at least 1".into()));
        }
        for (idx, (c, x)) in entries.iter().enumerate() {
            if c.len() != k {
                return Err(EfmError::Input(format!(
                    "condition {} has {} coordinates, expected {}",
                    idx,
                    c.len(),
                    k
                )));
            }
            if x.ncols() != d || x.nrows() == 0 {
                return Err(EfmError::Input(format!(
                    "sample block {} is {}x{}, expected nonempty with {} columns",
                    idx,
                    x.nrows(),
                    x.ncols(),
                    d
                )));
            }
            if c.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
                return Err(EfmError::Input(format!("non-finite value in entry {}", idx)));
            }
            for ax in 0..k {
                if c[ax] < omega_min[ax] || c[ax] > omega_max[ax] {
                    return Err(EfmError::Input(format!(
                        "condition {} leaves omega on axis {}",
                        idx,
                        ax + 1
                    )));
                }
            }
        }
        if let Some(ls) = &labels {
            if ls.len() != entries.len() {
                return Err(EfmError::Input("label blocks do not match condition count".into()));
            }
            for (i, l) in ls.iter().enumerate() {
                if l.len() != entries[i].1.nrows() {
                    return Err(EfmError::Input(format!(
                        "label block {} has {} labels for {} rows",
                        i,
                        l.len(),
                        entries[i].1.nrows()
                    )));
                }
            }
        }
        Ok(ConditionedDataset { d, k, entries, omega_min, omega_max, labels })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_conditions(&self) -> usize {
        self.entries.len()
    }

    pub fn condition(&self, i: usize) -> ArrayView1<'_, f64> {
        self.entries[i].0.view()
    }

    pub fn samples(&self, i: usize) -> ArrayView2<'_, f64> {
        self.entries[i].1.view()
    }

    pub fn labels(&self, i: usize) -> Option<&[usize]> {
        self.labels.as_ref().map(|ls| ls[i].as_slice())
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn omega_min(&self) -> ArrayView1<'_, f64> {
        self.omega_min.view()
    }

    pub fn omega_max(&self) -> ArrayView1<'_, f64> {
        self.omega_max.view()
    }

    /// Conditions stacked into an n_cond x k matrix.
    pub fn conditions_matrix(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.entries.len(), self.k));
        for (i, (c, _)) in self.entries.iter().enumerate() {
            m.row_mut(i).assign(c);
        }
        m
    }

    /// Index of the entry matching `c` within `tol` per coordinate.
    pub fn find_condition(&self, c: ArrayView1<f64>, tol: f64) -> Option<usize> {
        self.entries
            .iter()
            .position(|(cc, _)| cc.iter().zip(c.iter()).all(|(a, b)| (a - b).abs() <= tol))
    }

    pub fn contains_condition(&self, c: ArrayView1<f64>) -> bool {
        c.len() == self.k
            && (0..self.k).all(|ax| c[ax] >= self.omega_min[ax] && c[ax] <= self.omega_max[ax])
    }

    pub fn total_samples(&self) -> usize {
        self.entries.iter().map(|(_, x)| x.nrows()).sum()
    }

    /// Mean of each condition's sample block, stacked n_cond x d.
    pub fn condition_means(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.entries.len(), self.d));
        for (i, (_, x)) in self.entries.iter().enumerate() {
            m.row_mut(i).assign(&x.mean_axis(Axis(0)).unwrap());
        }
        m
    }
}

// ---------------------------------------------------------------------------
// File I/O

/// Sidecar metadata; `deny_unknown_fields` keeps typos loud.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub k: usize,
    pub d: usize,
    pub omega_min: Vec<f64>,
    pub omega_max: Vec<f64>,
}

pub fn parse_sidecar(bytes: &[u8], origin: &str) -> Result<DatasetMeta> {
    let meta: DatasetMeta = serde_json::from_slice(bytes)
        .map_err(|e| EfmError::parse(origin, format!("sidecar: {}", e)))?;
    if meta.k == 0 || meta.k > MAX_FILE_DIM {
        return Err(EfmError::parse(origin, format!("sidecar: k = {} out of range 1..={}", meta.k, MAX_FILE_DIM)));
    }
    if meta.d == 0 || meta.d > MAX_FILE_DIM {
        return Err(EfmError::parse(origin, format!("sidecar: d = {} out of range 1..={}", meta.d, MAX_FILE_DIM)));
    }
    if meta.omega_min.len() != meta.k || meta.omega_max.len() != meta.k {
        return Err(EfmError::parse(origin, "sidecar: omega bounds must have k entries".to_string()));
    }
    for i in 0..meta.k {
        let (lo, hi) = (meta.omega_min[i], meta.omega_max[i]);
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(EfmError::parse(
                origin,
                format!("sidecar: invalid omega bounds on axis {}", i + 1),
            ));
        }
    }
    Ok(meta)
}

pub fn parse_dataset_csv(bytes: &[u8], meta: &DatasetMeta, origin: &str) -> Result<ConditionedDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);

    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(r)) => r,
        Some(Err(e)) => return Err(EfmError::parse(origin, format!("line 1: {}", e))),
        None => return Err(EfmError::parse(origin, "empty file".to_string())),
    };
    let mut expected: Vec<String> = Vec::new();
    for i in 1..=meta.k {
        expected.push(format!("c{}", i));
    }
    for i in 1..=meta.d {
        expected.push(format!("x{}", i));
    }
    let got: Vec<&str> = header.iter().map(|f| f.trim()).collect();
    let with_cluster = got.len() == expected.len() + 1 && got.last() == Some(&"cluster");
    if !with_cluster {
        if got.len() != expected.len() || got.iter().zip(&expected).any(|(g, e)| g != e) {
            return Err(EfmError::parse(
                origin,
                format!(
                    "line 1: header must be {}[,cluster], found '{}'",
                    expected.join(","),
                    got.join(",")
                ),
            ));
        }
    } else if got[..expected.len()].iter().zip(&expected).any(|(g, e)| g != e) {
        return Err(EfmError::parse(
            origin,
            format!("line 1: header must be {},cluster", expected.join(",")),
        ));
    }
    let n_fields = expected.len() + usize::from(with_cluster);
    let field_name = |idx: usize| -> String {
        if idx < meta.k {
            format!("c{}", idx + 1)
        } else if idx < meta.k + meta.d {
            format!("x{}", idx - meta.k + 1)
        } else {
            "cluster".to_string()
        }
    };

    // Insertion-ordered grouping keyed on exact bit patterns.
    let mut order: Vec<(Array1<f64>, Vec<f64>, Vec<usize>)> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut n_rows = 0usize;

    for rec in records {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line().to_string())
                    .unwrap_or_else(|| "?".to_string());
                return Err(EfmError::parse(origin, format!("line {}: {}", line, e)));
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue; // blank line
        }
        if rec.len() != n_fields {
            return Err(EfmError::parse(
                origin,
                format!("line {}: expected {} fields, found {}", line, n_fields, rec.len()),
            ));
        }
        let mut values = Vec::with_capacity(meta.k + meta.d);
        for (idx, raw) in rec.iter().take(meta.k + meta.d).enumerate() {
            let v: f64 = raw.trim().parse().map_err(|_| {
                EfmError::parse(
                    origin,
                    format!("line {}, field {}: invalid float '{}'", line, field_name(idx), raw),
                )
            })?;
            if !v.is_finite() {
                return Err(EfmError::parse(
                    origin,
                    format!("line {}, field {}: non-finite value", line, field_name(idx)),
                ));
            }
            values.push(v);
        }
        for ax in 0..meta.k {
            if values[ax] < meta.omega_min[ax] || values[ax] > meta.omega_max[ax] {
                return Err(EfmError::parse(
                    origin,
                    format!(
                        "line {}, field c{}: condition {} outside omega [{}, {}]",
                        line,
                        ax + 1,
                        values[ax],
                        meta.omega_min[ax],
                        meta.omega_max[ax]
                    ),
                ));
            }
        }
        let label = if with_cluster {
            let raw = rec[n_fields - 1].trim();
            Some(raw.parse::<usize>().map_err(|_| {
                EfmError::parse(
                    origin,
                    format!("line {}, field cluster: invalid label '{}'", line, raw),
                )
            })?)
        } else {
            None
        };

        let key: Vec<u64> = values[..meta.k].iter().map(|v| v.to_bits()).collect();
        let slot = match index.get(&key) {
            Some(&s) => s,
            None => {
                let cond = Array1::from(values[..meta.k].to_vec());
                order.push((cond, Vec::new(), Vec::new()));
                index.insert(key, order.len() - 1);
                order.len() - 1
            }
        };
        order[slot].1.extend_from_slice(&values[meta.k..]);
        if let Some(l) = label {
            order[slot].2.push(l);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(EfmError::parse(origin, "no data rows".to_string()));
    }

    let mut entries = Vec::with_capacity(order.len());
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(order.len());
    for (cond, flat, ls) in order {
        let n = flat.len() / meta.d;
        let x = Array2::from_shape_vec((n, meta.d), flat)
            .map_err(|e| EfmError::parse(origin, format!("internal shape error: {}", e)))?;
        entries.push((cond, x));
        labels.push(ls);
    }
    let labels = if with_cluster { Some(labels) } else { None };
    ConditionedDataset::new(
        entries,
        Array1::from(meta.omega_min.clone()),
        Array1::from(meta.omega_max.clone()),
        labels,
    )
    .map_err(|e| EfmError::parse(origin, e.to_string()))
}

/// Loads `<path>` (CSV) together with its `.json` sidecar.
pub fn load_dataset(path: &Path) -> Result<ConditionedDataset> {
    let sidecar = path.with_extension("json");
    let meta_bytes = std::fs::read(&sidecar)?;
    let meta = parse_sidecar(&meta_bytes, &sidecar.display().to_string())?;
    let csv_bytes = std::fs::read(path)?;
    parse_dataset_csv(&csv_bytes, &meta, &path.display().to_string())
}

/// Writes `<path>` (CSV) and its `.json` sidecar.
pub fn save_dataset(ds: &ConditionedDataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let meta = DatasetMeta {
        k: ds.k(),
        d: ds.d(),
        omega_min: ds.omega_min().to_vec(),
        omega_max: ds.omega_max().to_vec(),
    };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&meta)?)?;

    let mut out = String::new();
    for i in 1..=ds.k() {
        let _ = write!(out, "c{},", i);
    }
    for i in 1..=ds.d() {
        let _ = write!(out, "x{}", i);
        if i < ds.d() {
            out.push(',');
        }
    }
    if ds.has_labels() {
        out.push_str(",cluster");
    }
    out.push('\n');
    for i in 0..ds.n_conditions() {
        let c = ds.condition(i);
        let x = ds.samples(i);
        for r in 0..x.nrows() {
            for v in c.iter() {
                let _ = write!(out, "{},", v);
            }
            for (j, v) in x.row(r).iter().enumerate() {
                let _ = write!(out, "{}", v);
                if j + 1 < ds.d() {
                    out.push(',');
                }
            }
            if let Some(ls) = ds.labels(i) {
                let _ = write!(out, ",{}", ls[r]);
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Plain point batch CSV with header `x1..xd`; the sample format that
/// generation and transfer read and write.
pub fn parse_points_csv(bytes: &[u8], origin: &str) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(r)) => r,
        Some(Err(e)) => return Err(EfmError::parse(origin, format!("line 1: {}", e))),
        None => return Err(EfmError::parse(origin, "empty file".to_string())),
    };
    let d = header.len();
    if d == 0 || d > MAX_FILE_DIM {
        return Err(EfmError::parse(origin, format!("{} columns, expected 1..={}", d, MAX_FILE_DIM)));
    }
    for (i, f) in header.iter().enumerate() {
        let want = format!("x{}", i + 1);
        if f.trim() != want {
            return Err(EfmError::parse(
                origin,
                format!("line 1: header field {} is '{}', expected '{}'", i + 1, f.trim(), want),
            ));
        }
    }
    let mut flat = Vec::new();
    let mut rows = 0usize;
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line().to_string()).unwrap_or_else(|| "?".into());
            EfmError::parse(origin, format!("line {}: {}", line, e))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != d {
            return Err(EfmError::parse(
                origin,
                format!("line {}: expected {} fields, found {}", line, d, rec.len()),
            ));
        }
        for (i, raw) in rec.iter().enumerate() {
            let v: f64 = raw.trim().parse().map_err(|_| {
                EfmError::parse(origin, format!("line {}, field x{}: invalid float '{}'", line, i + 1, raw))
            })?;
            if !v.is_finite() {
                return Err(EfmError::parse(
                    origin,
                    format!("line {}, field x{}: non-finite value", line, i + 1),
                ));
            }
            flat.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(EfmError::parse(origin, "no data rows".to_string()));
    }
    Array2::from_shape_vec((rows, d), flat)
        .map_err(|e| EfmError::parse(origin, format!("internal shape error: {}", e)))
}

pub fn points_to_csv(points: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for j in 1..=points.ncols() {
        let _ = write!(out, "x{}", j);
        if j < points.ncols() {
            out.push(',');
        }
    }
    out.push('\n');
    for row in points.rows() {
        for (j, v) in row.iter().enumerate() {
            let _ = write!(out, "{}", v);
            if j + 1 < points.ncols() {
                out.push(',');
            }
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Synthetic benchmark data

/// Cluster centers used by the 2D synthetic task at condition `c`.
///
/// The condition box [0,1]^2 maps to data space by `anchor = 4c + (1,1)`.
/// Defined pointwise so ground truth is available at held-out conditions too.
/// Both clusters sit on a shared offset axis from the condition's anchor
/// (an affine image of c). A shared axis keeps the inner-to-outer offset
/// identical across conditions, so matching inner with inner minimizes the
/// interpolation energy strictly: crossing clusters adds 2 * |offset gap|^2
/// to any pair's summed squared displacement. A condition-dependent axis can
/// make parallel and crossed matchings cost the same (orthogonal axes) or
/// even favor crossing, leaving no signal for a joint coupling to preserve.
pub fn synthetic_cluster_centers(
    c: [f64; 2],
    inner_radius: f64,
    outer_radius: f64,
) -> ([f64; 2], [f64; 2]) {
    let anchor = [4.0 * c[0] + 1.0, 4.0 * c[1] + 1.0];
    let u = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
    (
        [anchor[0] + inner_radius * u[0], anchor[1] + inner_radius * u[1]],
        [anchor[0] + outer_radius * u[0], anchor[1] + outer_radius * u[1]],
    )
}

/// Two labeled Gaussian clusters per condition. `spread` is the radial RMS:
/// noise is N(0, (spread^2/2) I2), so E||x - center||^2 = spread^2.
pub fn make_synthetic_2d_at(
    conditions: &[[f64; 2]],
    n_per_cluster: usize,
    inner_radius: f64,
    outer_radius: f64,
    spread: f64,
    seed: u64,
) -> Result<ConditionedDataset> {
    if conditions.is_empty() {
        return Err(EfmError::Input("synthetic dataset needs at least one condition".into()));
    }
    if n_per_cluster == 0 {
        return Err(EfmError::Input("n_per_cluster must be positive".into()));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(EfmError::Input("spread must be nonnegative".into()));
    }
    for c in conditions {
        if !(0.0..=1.0).contains(&c[0]) || !(0.0..=1.0).contains(&c[1]) {
            return Err(EfmError::Input(format!(
                "condition ({}, {}) outside omega [0,1]^2",
                c[0], c[1]
            )));
        }
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis_sigma = spread / std::f64::consts::SQRT_2;
    let mut entries = Vec::new();
    let mut labels = Vec::new();
    for &c in conditions {
        let (inner, outer) = synthetic_cluster_centers(c, inner_radius, outer_radius);
        let mut x = Array2::<f64>::zeros((2 * n_per_cluster, 2));
        let mut ls = Vec::with_capacity(2 * n_per_cluster);
        for (li, center) in [inner, outer].iter().enumerate() {
            for i in 0..n_per_cluster {
                let row = li * n_per_cluster + i;
                for ax in 0..2 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    x[[row, ax]] = center[ax] + axis_sigma * g;
                }
                ls.push(li);
            }
        }
        entries.push((Array1::from(vec![c[0], c[1]]), x));
        labels.push(ls);
    }
    ConditionedDataset::new(
        entries,
        Array1::from(vec![0.0, 0.0]),
        Array1::from(vec![1.0, 1.0]),
        Some(labels),
    )
}

/// The four-corner benchmark: conditions (0,0), (1,0), (0,1), (1,1).
pub fn make_synthetic_2d(
    n_per_cluster: usize,
    inner_radius: f64,
    outer_radius: f64,
    spread: f64,
    seed: u64,
) -> Result<ConditionedDataset> {
    make_synthetic_2d_at(
        &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        n_per_cluster,
        inner_radius,
        outer_radius,
        spread,
        seed,
    )
}

// ---------------------------------------------------------------------------
// Source model

/// Affine source map R(c) = W c + b with isotropic noise. Source samples are
/// R(c) + z with z ~ N(0, sigma^2 I_d) shared across conditions.
#[derive(Debug, Clone)]
pub struct SourceRegressor {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub noise_sigma: f64,
    /// Set when the condition design was rank deficient and the fit fell back
    /// to the zero-weight mean regressor.
    pub degenerate: bool,
}

impl SourceRegressor {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>, noise_sigma: f64) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(EfmError::Input(format!(
                "source regressor: weight is {}x{} but bias has {} entries",
                weight.nrows(),
                weight.ncols(),
                bias.len()
            )));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(EfmError::Input("noise_sigma must be finite and nonnegative".into()));
        }
        Ok(SourceRegressor { weight, bias, noise_sigma, degenerate: false })
    }

    pub fn d(&self) -> usize {
        self.bias.len()
    }

    pub fn k(&self) -> usize {
        self.weight.ncols()
    }

    pub fn eval(&self, c: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&c) + &self.bias
    }
}

/// Fits R by least squares of per-condition means on the conditions.
/// Collinear conditions make the design rank deficient; the fit then falls
/// back to weight = 0, bias = mean of means, and sets `degenerate`.
pub fn fit_source_regressor(ds: &ConditionedDataset, noise_sigma: f64) -> Result<SourceRegressor> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(EfmError::Input("noise_sigma must be finite and nonnegative".into()));
    }
    let n = ds.n_conditions();
    let k = ds.k();
    let d = ds.d();
    let means = ds.condition_means();
    let mut design = Array2::<f64>::zeros((n, k + 1));
    for i in 0..n {
        for j in 0..k {
            design[[i, j]] = ds.condition(i)[j];
        }
        design[[i, k]] = 1.0;
    }
    match least_squares(&design.view(), &means.view()) {
        Ok(beta) => {
            let mut weight = Array2::<f64>::zeros((d, k));
            for j in 0..k {
                for r in 0..d {
                    weight[[r, j]] = beta[[j, r]];
                }
            }
            let bias = beta.row(k).to_owned();
            Ok(SourceRegressor { weight, bias, noise_sigma, degenerate: false })
        }
        Err(_) => {
            let bias = means.mean_axis(Axis(0)).unwrap();
            Ok(SourceRegressor {
                weight: Array2::zeros((d, k)),
                bias,
                noise_sigma,
                degenerate: true,
            })
        }
    }
}

/// Serialized form of a fitted source map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceData {
    /// Row-major d x k weight.
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub noise_sigma: f64,
    pub degenerate: bool,
}

impl SourceRegressor {
    pub fn to_data(&self) -> SourceData {
        SourceData {
            weight: self.weight.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: self.bias.to_vec(),
            noise_sigma: self.noise_sigma,
            degenerate: self.degenerate,
        }
    }

    pub fn from_data(data: &SourceData) -> Result<Self> {
        let d = data.bias.len();
        if data.weight.len() != d {
            return Err(EfmError::Input(format!(
                "source data: {} weight rows vs {} biases",
                data.weight.len(),
                d
            )));
        }
        let k = data.weight.first().map_or(0, |r| r.len());
        let mut weight = Array2::<f64>::zeros((d, k));
        for (r, row) in data.weight.iter().enumerate() {
            if row.len() != k {
                return Err(EfmError::Input("source data: ragged weight rows".into()));
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(EfmError::Input("source data: non-finite weight".into()));
                }
                weight[[r, c]] = v;
            }
        }
        if data.bias.iter().any(|v| !v.is_finite()) {
            return Err(EfmError::Input("source data: non-finite bias".into()));
        }
        if !(data.noise_sigma.is_finite() && data.noise_sigma >= 0.0) {
            return Err(EfmError::Input("source data: bad noise_sigma".into()));
        }
        Ok(SourceRegressor {
            weight,
            bias: Array1::from(data.bias.clone()),
            noise_sigma: data.noise_sigma,
            degenerate: data.degenerate,
        })
    }
}

/// One shared-noise source draw: `z` is n x d, and `batches[i]` is
/// `R(conditions[i]) + z` row by row, so corresponding rows across conditions
/// differ by exactly `R(c_a) - R(c_b)`.
pub struct SharedSourceDraw {
    pub z: Array2<f64>,
    pub batches: Vec<Array2<f64>>,
}

pub fn sample_source_shared(
    reg: &SourceRegressor,
    conditions: &ArrayView2<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SharedSourceDraw> {
    if conditions.ncols() != reg.k() {
        return Err(EfmError::Input(format!(
            "conditions have {} coordinates, regressor expects {}",
            conditions.ncols(),
            reg.k()
        )));
    }
    if n == 0 {
        return Err(EfmError::Input("source draw needs n >= 1".into()));
    }
    let d = reg.d();
    let mut z = Array2::<f64>::zeros((n, d));
    for r in 0..n {
        for c in 0..d {
            let g: f64 = StandardNormal.sample(rng);
            z[[r, c]] = reg.noise_sigma * g;
        }
    }
    let batches = conditions
        .rows()
        .into_iter()
        .map(|cond| {
            let base = reg.eval(cond);
            let mut b = z.clone();
            for mut row in b.rows_mut() {
                row += &base;
            }
            b
        })
        .collect();
    Ok(SharedSourceDraw { z, batches })
}

/// Draws `n` rows from `points` without replacement (all rows, shuffled, when
/// n >= rows).
pub fn subsample_rows(points: ArrayView2<f64>, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let total = points.nrows();
    let take = n.min(total);
    let mut idx: Vec<usize> = (0..total).collect();
    // Partial Fisher-Yates: the first `take` slots are a uniform sample.
    for i in 0..take {
        let j = rng.gen_range(i..total);
        idx.swap(i, j);
    }
    let mut out = Array2::<f64>::zeros((take, points.ncols()));
    for (r, &i) in idx[..take].iter().enumerate() {
        out.row_mut(r).assign(&points.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn four_corner_ds() -> ConditionedDataset {
        make_synthetic_2d(50, 0.5, 2.0, 0.1, 42).unwrap()
    }

    #[test]
    fn synthetic_shape_and_labels() {
        let ds = four_corner_ds();
        assert_eq!(ds.k(), 2);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.n_conditions(), 4);
        for i in 0..4 {
            assert_eq!(ds.samples(i).nrows(), 100);
            let ls = ds.labels(i).unwrap();
            assert_eq!(ls.iter().filter(|&&l| l == 0).count(), 50);
            assert_eq!(ls.iter().filter(|&&l| l == 1).count(), 50);
        }
    }

    #[test]
    fn synthetic_points_stay_within_four_spreads() {
        // Radial noise is chi with E r^2 = spread^2; P(r > 4 spread) = e^-16,
        // so 800 points exceed the bound with probability ~1e-4.
        let spread = 0.1;
        let ds = make_synthetic_2d(100, 0.5, 2.0, spread, 7).unwrap();
        for i in 0..ds.n_conditions() {
            let c = ds.condition(i);
            let (inner, outer) = synthetic_cluster_centers([c[0], c[1]], 0.5, 2.0);
            let x = ds.samples(i);
            let ls = ds.labels(i).unwrap();
            for r in 0..x.nrows() {
                let ctr = if ls[r] == 0 { inner } else { outer };
                let dist =
                    ((x[[r, 0]] - ctr[0]).powi(2) + (x[[r, 1]] - ctr[1]).powi(2)).sqrt();
                assert!(dist <= 4.0 * spread, "point {} strays {} from its center", r, dist);
            }
        }
    }

    #[test]
    fn synthetic_cluster_means_match_centers() {
        let ds = make_synthetic_2d(400, 0.5, 2.0, 0.1, 3).unwrap();
        // Per-axis SE = (spread/sqrt(2)) / 20; allow 5 SEs.
        let tol = 5.0 * (0.1 / std::f64::consts::SQRT_2) / 20.0;
        for i in 0..4 {
            let c = ds.condition(i);
            let (inner, outer) = synthetic_cluster_centers([c[0], c[1]], 0.5, 2.0);
            let x = ds.samples(i);
            let ls = ds.labels(i).unwrap();
            for (label, ctr) in [(0usize, inner), (1usize, outer)] {
                let mut mean = [0.0f64; 2];
                let mut n = 0.0;
                for r in 0..x.nrows() {
                    if ls[r] == label {
                        mean[0] += x[[r, 0]];
                        mean[1] += x[[r, 1]];
                        n += 1.0;
                    }
                }
                mean[0] /= n;
                mean[1] /= n;
                assert!((mean[0] - ctr[0]).abs() < tol);
                assert!((mean[1] - ctr[1]).abs() < tol);
            }
        }
    }

    #[test]
    fn roundtrip_through_files_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = four_corner_ds();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.n_conditions(), ds.n_conditions());
        for i in 0..ds.n_conditions() {
            assert_eq!(back.condition(i), ds.condition(i));
            assert_eq!(back.samples(i), ds.samples(i));
            assert_eq!(back.labels(i), ds.labels(i));
        }
        assert_eq!(back.omega_min(), ds.omega_min());
    }

    #[test]
    fn parse_errors_name_line_and_field() {
        let meta = DatasetMeta {
            k: 1,
            d: 2,
            omega_min: vec![0.0],
            omega_max: vec![1.0],
        };
        let bad_float = b"c1,x1,x2\n0.0,1.0,2.0\n0.5,oops,3.0\n";
        let err = parse_dataset_csv(bad_float, &meta, "t.csv").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{}", err);
        assert!(err.contains("field x1"), "{}", err);

        let bad_width = b"c1,x1,x2\n0.0,1.0\n";
        let err = parse_dataset_csv(bad_width, &meta, "t.csv").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{}", err);
        assert!(err.contains("expected 3 fields"), "{}", err);

        let out_of_omega = b"c1,x1,x2\n2.0,1.0,2.0\n";
        let err = parse_dataset_csv(out_of_omega, &meta, "t.csv").unwrap_err().to_string();
        assert!(err.contains("field c1"), "{}", err);
        assert!(err.contains("outside omega"), "{}", err);

        let bad_header = b"c1,y1,x2\n0.0,1.0,2.0\n";
        let err = parse_dataset_csv(bad_header, &meta, "t.csv").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{}", err);
    }

    #[test]
    fn grouping_preserves_first_appearance_order() {
        let meta = DatasetMeta {
            k: 1,
            d: 1,
            omega_min: vec![0.0],
            omega_max: vec![1.0],
        };
        let csv = b"c1,x1\n0.5,1.0\n0.0,2.0\n0.5,3.0\n";
        let ds = parse_dataset_csv(csv, &meta, "t.csv").unwrap();
        assert_eq!(ds.n_conditions(), 2);
        assert_eq!(ds.condition(0)[0], 0.5);
        assert_eq!(ds.samples(0).nrows(), 2);
        assert_eq!(ds.samples(0)[[1, 0]], 3.0);
    }

    #[test]
    fn source_regressor_recovers_affine_mean_map() {
        // Means are exactly affine in c for spread = 0 data built from a
        // linear anchor; check R(c) reproduces them.
        let ds = make_synthetic_2d(20, 0.5, 2.0, 0.0, 1).unwrap();
        let reg = fit_source_regressor(&ds, 1.0).unwrap();
        assert!(!reg.degenerate);
        for i in 0..4 {
            let c = ds.condition(i);
            let mean = ds.samples(i).mean_axis(Axis(0)).unwrap();
            let pred = reg.eval(c);
            for ax in 0..2 {
                assert!((pred[ax] - mean[ax]).abs() < 1e-9, "axis {}: {} vs {}", ax, pred[ax], mean[ax]);
            }
        }
    }

    #[test]
    fn degenerate_conditions_fall_back_to_mean() {
        // One condition: the (k+1)-column design is rank 2 < 3.
        let entries = vec![(
            Array1::from(vec![0.3, 0.3]),
            Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )];
        let ds = ConditionedDataset::new(
            entries,
            Array1::from(vec![0.0, 0.0]),
            Array1::from(vec![1.0, 1.0]),
            None,
        )
        .unwrap();
        let reg = fit_source_regressor(&ds, 0.5).unwrap();
        assert!(reg.degenerate);
        assert!(reg.weight.iter().all(|&w| w == 0.0));
        assert!((reg.bias[0] - 2.0).abs() < 1e-12);
        assert!((reg.bias[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn shared_noise_differs_by_exact_source_shift() {
        let ds = four_corner_ds();
        let reg = fit_source_regressor(&ds, 0.7).unwrap();
        let conds = ds.conditions_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draw = sample_source_shared(&reg, &conds.view(), 16, &mut rng).unwrap();
        let shift = reg.eval(ds.condition(0)) - reg.eval(ds.condition(2));
        for j in 0..16 {
            for ax in 0..2 {
                // Exact in the reals; each sum rounds once in f64, so allow ulps.
                let got = draw.batches[0][[j, ax]] - draw.batches[2][[j, ax]];
                assert!((got - shift[ax]).abs() <= 1e-12, "row {} axis {}", j, ax);
            }
        }
        // The shared component itself is bitwise identical across batches.
        for j in 0..16 {
            for ax in 0..2 {
                let za = draw.batches[0][[j, ax]] - reg.eval(ds.condition(0))[ax];
                let zb = draw.batches[2][[j, ax]] - reg.eval(ds.condition(2))[ax];
                assert!((za - draw.z[[j, ax]]).abs() <= 1e-12);
                assert!((zb - draw.z[[j, ax]]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_source_is_deterministic() {
        let ds = four_corner_ds();
        let reg = fit_source_regressor(&ds, 0.0).unwrap();
        let conds = ds.conditions_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = sample_source_shared(&reg, &conds.view(), 4, &mut rng).unwrap();
        for (i, b) in draw.batches.iter().enumerate() {
            let expect = reg.eval(ds.condition(i));
            for r in 0..4 {
                for ax in 0..2 {
                    assert_eq!(b[[r, ax]], expect[ax]);
                }
            }
        }
    }

    #[test]
    fn points_csv_roundtrips_exactly() {
        let pts = ndarray::array![[0.1, -2.5e-3], [f64::MIN_POSITIVE, 1.0 / 3.0]];
        let text = points_to_csv(pts.view());
        let back = parse_points_csv(text.as_bytes(), "mem").unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn points_csv_rejects_bad_headers_and_fields() {
        let err = parse_points_csv(b"x1,y2\n1,2\n", "mem").unwrap_err().to_string();
        assert!(err.contains("expected 'x2'"), "{}", err);
        let err = parse_points_csv(b"x1,x2\n1,zap\n", "mem").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("x2"), "{}", err);
        let err = parse_points_csv(b"x1\n", "mem").unwrap_err().to_string();
        assert!(err.contains("no data rows"), "{}", err);
        assert!(parse_points_csv(b"x1,x2\n1\n", "mem").is_err());
        assert!(parse_points_csv(b"x1,x2\n1,inf\n", "mem").is_err());
    }

    #[test]
    fn source_data_roundtrip_and_validation() {
        let ds = four_corner_ds();
        let reg = fit_source_regressor(&ds, 0.7).unwrap();
        let json = serde_json::to_string(&reg.to_data()).unwrap();
        let back = SourceRegressor::from_data(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.weight, reg.weight);
        assert_eq!(back.bias, reg.bias);
        assert_eq!(back.noise_sigma, reg.noise_sigma);
        let mut bad = reg.to_data();
        bad.weight[0].push(3.0);
        assert!(SourceRegressor::from_data(&bad).is_err());
        let mut bad = reg.to_data();
        bad.noise_sigma = f64::NAN;
        assert!(SourceRegressor::from_data(&bad).is_err());
    }
}
