//! The matrix field u(t, c, x) in R^{d x (1+k)}: a dense MLP on the
//! concatenated input [t, c, x] with manual reverse-mode gradients and Adam.
//! Column 0 of the output is the time response, columns 1..k the condition
//! responses; rows index data dimensions.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EfmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    SmoothRelu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            // softplus, computed stably.
            Activation::SmoothRelu => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::SmoothRelu => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer { w: Array2::zeros(self.w.dim()), b: Array1::zeros(self.b.len()) }
    }
}

#[derive(Debug, Clone)]
pub struct MatrixFieldModel {
    d: usize,
    k: usize,
    hidden: Vec<usize>,
    activation: Activation,
    pub layers: Vec<Layer>,
}

/// Variance-scaled (Glorot) normal init, seeded.
pub fn init_model(
    d: usize,
    k: usize,
    hidden: &[usize],
    activation: Activation,
    seed: u64,
) -> Result<MatrixFieldModel> {
    if d == 0 {
        return Err(EfmError::Input("model: d must be >= 1".into()));
    }
    if hidden.iter().any(|&h| h == 0) {
        return Err(EfmError::Input("model: zero-width hidden layer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![1 + k + d];
    dims.extend_from_slice(hidden);
    dims.push(d * (1 + k));
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for win in dims.windows(2) {
        let (fan_in, fan_out) = (win[0], win[1]);
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Array2::<f64>::zeros((fan_out, fan_in));
        for v in w.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v = std * g;
        }
        layers.push(Layer { w, b: Array1::zeros(fan_out) });
    }
    Ok(MatrixFieldModel { d, k, hidden: hidden.to_vec(), activation, layers })
}

impl MatrixFieldModel {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        1 + self.k + self.d
    }

    pub fn out_dim(&self) -> usize {
        self.d * (1 + self.k)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn assemble_input(&self, t: f64, c: ArrayView1<f64>, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if c.len() != self.k || x.len() != self.d {
            return Err(EfmError::Input(format!(
                "model input shapes: c has {} (want {}), x has {} (want {})",
                c.len(),
                self.k,
                x.len(),
                self.d
            )));
        }
        if !t.is_finite() || c.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(EfmError::Numerical("model input contains NaN/Inf".into()));
        }
        let mut input = Array1::<f64>::zeros(self.in_dim());
        input[0] = t;
        for (i, v) in c.iter().enumerate() {
            input[1 + i] = *v;
        }
        for (i, v) in x.iter().enumerate() {
            input[1 + self.k + i] = *v;
        }
        Ok(input)
    }

    /// Hidden activations (post-nonlinearity) and the linear output, cached
    /// for backprop.
    fn forward_cached(&self, input: &Array1<f64>) -> (Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let n_layers = self.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = Vec::with_capacity(n_layers + 1);
        act.push(input.clone());
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.w.dot(act.last().unwrap()) + &layer.b;
            if li + 1 == n_layers {
                pre.push(z.clone());
                act.push(z);
            } else {
                let a = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
                act.push(a);
            }
        }
        (pre, act)
    }

    /// u(t, c, x) as a d x (1+k) matrix (row-major reshape of the network
    /// output: row = data dimension, column 0 = time, columns 1.. = c axes).
    pub fn forward(&self, t: f64, c: ArrayView1<f64>, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        let input = self.assemble_input(t, c, x)?;
        let (_, act) = self.forward_cached(&input);
        let flat = act.last().unwrap();
        let cols = 1 + self.k;
        let mut out = Array2::<f64>::zeros((self.d, cols));
        for r in 0..self.d {
            for col in 0..cols {
                out[[r, col]] = flat[r * cols + col];
            }
        }
        Ok(out)
    }
}

/// One supervised probe: the field at (t, c, x) should match `target`.
#[derive(Debug, Clone)]
pub struct SupervisionItem {
    pub t: f64,
    pub c: Array1<f64>,
    pub x: Array1<f64>,
    /// d x (1+k) Jacobian target.
    pub target: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub layers: Vec<Layer>,
}

/// Mean squared Frobenius error over the batch and its parameter gradient.
pub fn loss_and_grads(model: &MatrixFieldModel, batch: &[SupervisionItem]) -> Result<(f64, ModelGrads)> {
    if batch.is_empty() {
        return Err(EfmError::Input("loss_and_grads: empty batch".into()));
    }
    let cols = 1 + model.k;
    let mut grads = ModelGrads { layers: model.layers.iter().map(Layer::zeros_like).collect() };
    let mut loss = 0.0f64;
    let inv_n = 1.0 / batch.len() as f64;
    for item in batch {
        if item.target.nrows() != model.d || item.target.ncols() != cols {
            return Err(EfmError::Input(format!(
                "loss_and_grads: target is {}x{}, want {}x{}",
                item.target.nrows(),
                item.target.ncols(),
                model.d,
                cols
            )));
        }
        if item.target.iter().any(|v| !v.is_finite()) {
            return Err(EfmError::Numerical("loss_and_grads: NaN/Inf in target".into()));
        }
        let input = model.assemble_input(item.t, item.c.view(), item.x.view())?;
        let (pre, act) = model.forward_cached(&input);
        let out = act.last().unwrap();

        // dLoss/dout for the squared Frobenius error, averaged over items.
        let mut delta = Array1::<f64>::zeros(model.out_dim());
        for r in 0..model.d {
            for col in 0..cols {
                let diff = out[r * cols + col] - item.target[[r, col]];
                loss += diff * diff * inv_n;
                delta[r * cols + col] = 2.0 * diff * inv_n;
            }
        }

        for li in (0..model.layers.len()).rev() {
            let a_prev = &act[li];
            {
                let g = &mut grads.layers[li];
                for r in 0..delta.len() {
                    let dr = delta[r];
                    if dr != 0.0 {
                        for c in 0..a_prev.len() {
                            g.w[[r, c]] += dr * a_prev[c];
                        }
                    }
                    g.b[r] += dr;
                }
            }
            if li > 0 {
                let w = &model.layers[li].w;
                let mut next = Array1::<f64>::zeros(a_prev.len());
                for r in 0..delta.len() {
                    let dr = delta[r];
                    if dr != 0.0 {
                        for c in 0..a_prev.len() {
                            next[c] += w[[r, c]] * dr;
                        }
                    }
                }
                let z_prev = &pre[li - 1];
                for c in 0..next.len() {
                    next[c] *= model.activation.derivative(z_prev[c], a_prev[c]);
                }
                delta = next;
            }
        }
    }
    if !loss.is_finite() {
        return Err(EfmError::Numerical("loss_and_grads: non-finite loss".into()));
    }
    Ok((loss, grads))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
}

impl OptimizerState {
    pub fn new(model: &MatrixFieldModel, lr: f64) -> Self {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: model.layers.iter().map(Layer::zeros_like).collect(),
            v: model.layers.iter().map(Layer::zeros_like).collect(),
        }
    }
}

pub fn optimizer_step(model: &mut MatrixFieldModel, opt: &mut OptimizerState, grads: &ModelGrads) {
    opt.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.step as i32);
    for li in 0..model.layers.len() {
        let (lw, gw) = (&mut model.layers[li].w, &grads.layers[li].w);
        let (mw, vw) = (&mut opt.m[li].w, &mut opt.v[li].w);
        for (((p, &g), m), v) in lw.iter_mut().zip(gw.iter()).zip(mw.iter_mut()).zip(vw.iter_mut()) {
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= opt.lr * mhat / (vhat.sqrt() + opt.eps);
        }
        let (lb, gb) = (&mut model.layers[li].b, &grads.layers[li].b);
        let (mb, vb) = (&mut opt.m[li].b, &mut opt.v[li].b);
        for (((p, &g), m), v) in lb.iter_mut().zip(gb.iter()).zip(mb.iter_mut()).zip(vb.iter_mut()) {
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= opt.lr * mhat / (vhat.sqrt() + opt.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization (checkpoints)

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerData {
    /// Row-major weight matrix.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelData {
    pub d: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<LayerData>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerData {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<LayerData>,
    pub v: Vec<LayerData>,
}

fn layer_to_data(l: &Layer) -> LayerData {
    LayerData {
        w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
        b: l.b.to_vec(),
    }
}

fn layer_from_data(data: &LayerData, fan_out: usize, fan_in: usize) -> Result<Layer> {
    if data.w.len() != fan_out || data.b.len() != fan_out {
        return Err(EfmError::Input(format!(
            "layer data: {} weight rows / {} biases, expected {}",
            data.w.len(),
            data.b.len(),
            fan_out
        )));
    }
    let mut w = Array2::<f64>::zeros((fan_out, fan_in));
    for (r, row) in data.w.iter().enumerate() {
        if row.len() != fan_in {
            return Err(EfmError::Input(format!(
                "layer data: row {} has {} entries, expected {}",
                r,
                row.len(),
                fan_in
            )));
        }
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(EfmError::Input("layer data: non-finite weight".into()));
            }
            w[[r, c]] = v;
        }
    }
    if data.b.iter().any(|v| !v.is_finite()) {
        return Err(EfmError::Input("layer data: non-finite bias".into()));
    }
    Ok(Layer { w, b: Array1::from(data.b.clone()) })
}

fn expected_dims(d: usize, k: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = vec![1 + k + d];
    dims.extend_from_slice(hidden);
    dims.push(d * (1 + k));
    dims
}

impl MatrixFieldModel {
    pub fn to_data(&self) -> ModelData {
        ModelData {
            d: self.d,
            k: self.k,
            hidden: self.hidden.clone(),
            activation: self.activation,
            layers: self.layers.iter().map(layer_to_data).collect(),
        }
    }

    pub fn from_data(data: &ModelData) -> Result<Self> {
        if data.d == 0 {
            return Err(EfmError::Input("model data: d must be >= 1".into()));
        }
        if data.d > 4096 || data.k > 4096 || data.hidden.iter().any(|&h| h == 0 || h > 65_536) {
            return Err(EfmError::Input("model data: implausible layer sizes".into()));
        }
        let dims = expected_dims(data.d, data.k, &data.hidden);
        if data.layers.len() + 1 != dims.len() {
            return Err(EfmError::Input(format!(
                "model data: {} layers, expected {}",
                data.layers.len(),
                dims.len() - 1
            )));
        }
        let mut layers = Vec::with_capacity(data.layers.len());
        for (i, ld) in data.layers.iter().enumerate() {
            layers.push(layer_from_data(ld, dims[i + 1], dims[i])?);
        }
        Ok(MatrixFieldModel {
            d: data.d,
            k: data.k,
            hidden: data.hidden.clone(),
            activation: data.activation,
            layers,
        })
    }
}

impl OptimizerState {
    pub fn to_data(&self) -> OptimizerData {
        OptimizerData {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            step: self.step,
            m: self.m.iter().map(layer_to_data).collect(),
            v: self.v.iter().map(layer_to_data).collect(),
        }
    }

    pub fn from_data(data: &OptimizerData, model: &MatrixFieldModel) -> Result<Self> {
        let dims = expected_dims(model.d, model.k, &model.hidden);
        if data.m.len() + 1 != dims.len() || data.v.len() + 1 != dims.len() {
            return Err(EfmError::Input("optimizer data: moment count mismatch".into()));
        }
        if !(data.lr.is_finite() && data.lr > 0.0) {
            return Err(EfmError::Input("optimizer data: bad learning rate".into()));
        }
        let mut m = Vec::new();
        let mut v = Vec::new();
        for i in 0..data.m.len() {
            m.push(layer_from_data(&data.m[i], dims[i + 1], dims[i])?);
            v.push(layer_from_data(&data.v[i], dims[i + 1], dims[i])?);
        }
        Ok(OptimizerState {
            lr: data.lr,
            beta1: data.beta1,
            beta2: data.beta2,
            eps: data.eps,
            step: data.step,
            m,
            v,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn probe_item(model: &MatrixFieldModel, rng: &mut ChaCha8Rng) -> SupervisionItem {
        let c = Array1::from((0..model.k()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let x = Array1::from((0..model.d()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let mut target = Array2::<f64>::zeros((model.d(), 1 + model.k()));
        for v in target.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        SupervisionItem { t: rng.gen_range(0.0..1.0), c, x, target }
    }

    #[test]
    fn param_count_follows_the_layer_formula() {
        let model = init_model(2, 2, &[64, 64], Activation::Tanh, 0).unwrap();
        assert_eq!(model.param_count(), (5 * 64 + 64) + (64 * 64 + 64) + (64 * 6 + 6));
    }

    #[test]
    fn output_reshape_is_row_major() {
        // Zero-weight, bias-only model: flat bias index r*(1+k)+col must land
        // at matrix entry [r, col].
        let mut model = init_model(2, 2, &[], Activation::Tanh, 0).unwrap();
        let last = model.layers.last_mut().unwrap();
        last.w.fill(0.0);
        for (i, b) in last.b.iter_mut().enumerate() {
            *b = i as f64;
        }
        let out = model
            .forward(0.3, array![0.1, 0.2].view(), array![0.5, -0.5].view())
            .unwrap();
        for r in 0..2 {
            for col in 0..3 {
                assert_eq!(out[[r, col]], (r * 3 + col) as f64);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &activation in &[Activation::Tanh, Activation::SmoothRelu] {
            let mut model = init_model(2, 1, &[8, 6], activation, 11).unwrap();
            let batch: Vec<SupervisionItem> = (0..4).map(|_| probe_item(&model, &mut rng)).collect();
            let (_, grads) = loss_and_grads(&model, &batch).unwrap();
            let h = 1e-6;
            for li in 0..model.layers.len() {
                for idx in [(0usize, 0usize), (1, 2)] {
                    let orig = model.layers[li].w[idx];
                    model.layers[li].w[idx] = orig + h;
                    let (lp, _) = loss_and_grads(&model, &batch).unwrap();
                    model.layers[li].w[idx] = orig - h;
                    let (lm, _) = loss_and_grads(&model, &batch).unwrap();
                    model.layers[li].w[idx] = orig;
                    let fd = (lp - lm) / (2.0 * h);
                    let an = grads.layers[li].w[idx];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-12);
                    assert!(rel < 1e-5, "layer {} {:?}: fd {} vs {}", li, idx, fd, an);
                }
            }
        }
    }

    #[test]
    fn zero_residual_means_zero_loss_and_grads() {
        let model = init_model(1, 1, &[4], Activation::Tanh, 5).unwrap();
        let c = array![0.3];
        let x = array![0.7];
        let target = model.forward(0.5, c.view(), x.view()).unwrap();
        let item = SupervisionItem { t: 0.5, c, x, target };
        let (loss, grads) = loss_and_grads(&model, &[item]).unwrap();
        assert_eq!(loss, 0.0);
        for l in &grads.layers {
            assert!(l.w.iter().all(|&g| g == 0.0));
            assert!(l.b.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn nan_input_is_an_error() {
        let model = init_model(1, 1, &[4], Activation::Tanh, 5).unwrap();
        let item = SupervisionItem {
            t: f64::NAN,
            c: array![0.0],
            x: array![0.0],
            target: Array2::zeros((1, 2)),
        };
        assert!(loss_and_grads(&model, &[item]).is_err());
        let item = SupervisionItem {
            t: 0.5,
            c: array![0.0],
            x: array![0.0],
            target: array![[f64::NAN, 0.0]],
        };
        assert!(loss_and_grads(&model, &[item]).is_err());
    }

    #[test]
    fn adam_recursion_matches_a_scripted_reference() {
        // Single tracked weight minimizing (p - 3)^2 with everything else
        // zero-gradient; the library trajectory must equal the textbook
        // recursion step for step, and converge to 3 within 1e-2.
        let mut model = init_model(1, 0, &[], Activation::Tanh, 9).unwrap();
        model.layers[0].w.fill(0.0);
        model.layers[0].b.fill(0.0);
        let mut opt = OptimizerState::new(&model, 0.1);

        let (mut rm, mut rv, mut rp) = (0.0f64, 0.0f64, 0.0f64);
        for step in 1..=200 {
            let g = 2.0 * (model.layers[0].w[[0, 0]] - 3.0);
            let mut grads = ModelGrads {
                layers: model.layers.iter().map(Layer::zeros_like).collect(),
            };
            grads.layers[0].w[[0, 0]] = g;
            optimizer_step(&mut model, &mut opt, &grads);

            let rg = 2.0 * (rp - 3.0);
            rm = 0.9 * rm + 0.1 * rg;
            rv = 0.999 * rv + 0.001 * rg * rg;
            let mhat = rm / (1.0 - 0.9f64.powi(step));
            let vhat = rv / (1.0 - 0.999f64.powi(step));
            rp -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
            assert!(
                (model.layers[0].w[[0, 0]] - rp).abs() < 1e-12,
                "diverged from reference at step {}",
                step
            );
        }
        assert!((model.layers[0].w[[0, 0]] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn realizable_target_trains_below_1e_minus_3() {
        // Teacher = frozen shallow net, student has more capacity; Adam at
        // lr 1e-3 must fit the realizable field within 5k steps.
        let teacher = init_model(2, 1, &[8], Activation::Tanh, 77).unwrap();
        let mut student = init_model(2, 1, &[32, 32], Activation::Tanh, 78).unwrap();
        let mut opt = OptimizerState::new(&student, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let mut last = f64::INFINITY;
        for step in 0..5000 {
            let batch: Vec<SupervisionItem> = (0..16)
                .map(|_| {
                    let mut it = probe_item(&teacher, &mut rng);
                    it.target = teacher.forward(it.t, it.c.view(), it.x.view()).unwrap();
                    it
                })
                .collect();
            let (loss, grads) = loss_and_grads(&student, &batch).unwrap();
            optimizer_step(&mut student, &mut opt, &grads);
            last = loss;
            if loss < 1e-3 && step > 100 {
                return;
            }
        }
        panic!("loss stuck at {}", last);
    }

    #[test]
    fn forward_is_reproducible_and_batch_independent() {
        let model = init_model(3, 2, &[16, 16], Activation::Tanh, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let items: Vec<SupervisionItem> = (0..5).map(|_| probe_item(&model, &mut rng)).collect();
        let single: Vec<Array2<f64>> = items
            .iter()
            .map(|it| model.forward(it.t, it.c.view(), it.x.view()).unwrap())
            .collect();
        // Evaluating in a different order or interleaved changes nothing.
        for (i, it) in items.iter().enumerate().rev() {
            let again = model.forward(it.t, it.c.view(), it.x.view()).unwrap();
            assert_eq!(again, single[i]);
        }
    }

    #[test]
    fn model_data_roundtrip_preserves_outputs() {
        let model = init_model(2, 2, &[10], Activation::SmoothRelu, 4).unwrap();
        let json = serde_json::to_string(&model.to_data()).unwrap();
        let back = MatrixFieldModel::from_data(&serde_json::from_str(&json).unwrap()).unwrap();
        let c = array![0.4, -0.2];
        let x = array![1.0, 2.0];
        assert_eq!(
            model.forward(0.7, c.view(), x.view()).unwrap(),
            back.forward(0.7, c.view(), x.view()).unwrap()
        );
    }

    #[test]
    fn malformed_model_data_is_rejected() {
        let model = init_model(2, 1, &[4], Activation::Tanh, 0).unwrap();
        let mut data = model.to_data();
        data.layers[0].w[0].push(1.0);
        assert!(MatrixFieldModel::from_data(&data).is_err());
        let mut data = model.to_data();
        data.layers.pop();
        assert!(MatrixFieldModel::from_data(&data).is_err());
        let mut data = model.to_data();
        data.layers[0].b[0] = f64::INFINITY;
        assert!(MatrixFieldModel::from_data(&data).is_err());
    }
}
