//! Paths through (t, c), the velocities they induce by contracting the
//! matrix field, and fixed-step ODE integration for generation and transfer.

use clap::ValueEnum;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::SourceRegressor;
use crate::error::{EfmError, Result};
use crate::model::MatrixFieldModel;

/// Affine path s -> (t, c) on [0, 1], stored by its endpoints and evaluated
/// in convex form so the endpoints are reproduced exactly.
#[derive(Debug, Clone)]
pub struct SpaceTimePath {
    pub t0: f64,
    pub c0: Array1<f64>,
    pub t1: f64,
    pub c1: Array1<f64>,
}

impl SpaceTimePath {
    /// Generation at a fixed condition: gamma(s) = (s, c_star).
    pub fn generation(c_star: ArrayView1<f64>) -> Self {
        SpaceTimePath { t0: 0.0, c0: c_star.to_owned(), t1: 1.0, c1: c_star.to_owned() }
    }

    /// Transfer at t = 1 along the condition segment:
    /// gamma(s) = (1, (1-s) c_from + s c_to).
    pub fn transfer(c_from: ArrayView1<f64>, c_to: ArrayView1<f64>) -> Self {
        SpaceTimePath { t0: 1.0, c0: c_from.to_owned(), t1: 1.0, c1: c_to.to_owned() }
    }

    pub fn eval(&self, s: f64) -> (f64, Array1<f64>) {
        let t = (1.0 - s) * self.t0 + s * self.t1;
        let mut c = Array1::<f64>::zeros(self.c0.len());
        for (i, v) in c.iter_mut().enumerate() {
            *v = (1.0 - s) * self.c0[i] + s * self.c1[i];
        }
        (t, c)
    }

    /// Constant derivative (t1 - t0, c1 - c0).
    pub fn derivative(&self) -> (f64, Array1<f64>) {
        (self.t1 - self.t0, &self.c1 - &self.c0)
    }
}

/// v = u(gamma(s), x) . gamma_dot(s): time column scaled by t_dot plus
/// condition columns contracted with c_dot.
pub fn induced_velocity(
    model: &MatrixFieldModel,
    path: &SpaceTimePath,
    s: f64,
    x: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let (t, c) = path.eval(s);
    let u = model.forward(t, c.view(), x)?;
    let (t_dot, c_dot) = path.derivative();
    let d = u.nrows();
    let k = c_dot.len();
    let mut v = Array1::<f64>::zeros(d);
    for r in 0..d {
        let mut acc = u[[r, 0]] * t_dot;
        for q in 0..k {
            acc += u[[r, 1 + q]] * c_dot[q];
        }
        v[r] = acc;
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Euler,
    Rk4,
}

/// Dense record of a batch integration: states[i] is the n x d batch at
/// s_nodes[i]; node count is steps + 1.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub s_nodes: Vec<f64>,
    pub states: Vec<Array2<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Array2<f64> {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

fn batch_velocity(
    model: &MatrixFieldModel,
    path: &SpaceTimePath,
    s: f64,
    x: &Array2<f64>,
) -> Result<Array2<f64>> {
    let mut v = Array2::<f64>::zeros(x.dim());
    for (i, row) in x.rows().into_iter().enumerate() {
        v.row_mut(i).assign(&induced_velocity(model, path, s, row)?);
    }
    Ok(v)
}

/// Fixed-step integration of x_dot = v(s, x) over s in [0, 1]; every
/// intermediate state is recorded. A non-finite state aborts with the step
/// index.
pub fn ode_solve(
    model: &MatrixFieldModel,
    path: &SpaceTimePath,
    x0_batch: ArrayView2<f64>,
    steps: usize,
    method: Integrator,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(EfmError::Input("ode_solve: steps must be >= 1".into()));
    }
    let mut state = x0_batch.to_owned();
    if state.iter().any(|v| !v.is_finite()) {
        return Err(EfmError::Numerical("ode_solve: non-finite initial state".into()));
    }
    let mut s_nodes = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    s_nodes.push(0.0);
    states.push(state.clone());
    for i in 0..steps {
        let s = i as f64 / steps as f64;
        let s_next = (i + 1) as f64 / steps as f64;
        let h = s_next - s;
        match method {
            Integrator::Euler => {
                let v = batch_velocity(model, path, s, &state)?;
                state.scaled_add(h, &v);
            }
            Integrator::Rk4 => {
                let k1 = batch_velocity(model, path, s, &state)?;
                let mut mid = state.clone();
                mid.scaled_add(h / 2.0, &k1);
                let k2 = batch_velocity(model, path, s + h / 2.0, &mid)?;
                let mut mid = state.clone();
                mid.scaled_add(h / 2.0, &k2);
                let k3 = batch_velocity(model, path, s + h / 2.0, &mid)?;
                let mut end = state.clone();
                end.scaled_add(h, &k3);
                let k4 = batch_velocity(model, path, s_next, &end)?;
                let mut incr = k1;
                incr.scaled_add(2.0, &k2);
                incr.scaled_add(2.0, &k3);
                incr += &k4;
                incr *= h / 6.0;
                state += &incr;
            }
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(EfmError::Numerical(format!(
                "ode_solve: non-finite state after step {} (s = {})",
                i, s_next
            )));
        }
        s_nodes.push(s_next);
        states.push(state.clone());
    }
    Ok(Trajectory { s_nodes, states })
}

/// Draws x0 = R(c_star) + z with z ~ N(0, sigma^2 I) and integrates the
/// generation path. The terminal state is the sample batch.
pub fn generate(
    model: &MatrixFieldModel,
    source: &SourceRegressor,
    c_star: ArrayView1<f64>,
    n: usize,
    steps: usize,
    method: Integrator,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let d = source.d();
    let base = source.eval(c_star);
    let mut x0 = Array2::<f64>::zeros((n, d));
    for mut row in x0.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            let g: f64 = StandardNormal.sample(rng);
            *v = base[j] + source.noise_sigma * g;
        }
    }
    let path = SpaceTimePath::generation(c_star);
    ode_solve(model, &path, x0.view(), steps, method)
}

/// Moves existing samples from condition c1 to c2 along the transfer path.
pub fn transfer(
    model: &MatrixFieldModel,
    x_batch: ArrayView2<f64>,
    c1: ArrayView1<f64>,
    c2: ArrayView1<f64>,
    steps: usize,
    method: Integrator,
) -> Result<Trajectory> {
    let path = SpaceTimePath::transfer(c1, c2);
    ode_solve(model, &path, x_batch, steps, method)
}

/// CSV export: header `s,particle,x1..xd`, one row per node per particle.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let d = traj.states.first().map_or(0, |s| s.ncols());
    let mut out = String::from("s,particle");
    for j in 0..d {
        out.push_str(&format!(",x{}", j + 1));
    }
    out.push('\n');
    for (s, state) in traj.s_nodes.iter().zip(traj.states.iter()) {
        for (pid, row) in state.rows().into_iter().enumerate() {
            out.push_str(&format!("{},{}", s, pid));
            for v in row.iter() {
                out.push_str(&format!(",{}", v));
            }
            out.push('\n');
        }
    }
    out
}
