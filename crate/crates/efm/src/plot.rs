//! Minimal SVG scatter rendering: ground truth in red, predictions in blue,
//! integration trajectories as yellow polylines. First two data dimensions
//! only.

use ndarray::ArrayView2;

use crate::error::{EfmError, Result};
use crate::inference::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const PAD_FRAC: f64 = 0.08;
/// Trajectory fan cap; more polylines than this just smear the plot.
pub const MAX_TRAJECTORIES: usize = 60;

const GT_COLOR: &str = "#d62728";
const PRED_COLOR: &str = "#1f77b4";
const TRAJ_COLOR: &str = "#ffcc00";

struct Mapper {
    x_min: f64,
    y_min: f64,
    x_scale: f64,
    y_scale: f64,
}

impl Mapper {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        // SVG y grows downward.
        (
            (x - self.x_min) * self.x_scale,
            HEIGHT - (y - self.y_min) * self.y_scale,
        )
    }
}

fn fit_bounds(layers: &[ArrayView2<f64>]) -> Result<Mapper> {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for layer in layers {
        if layer.ncols() < 2 {
            return Err(EfmError::Input("plot: need at least 2 data dimensions".into()));
        }
        for row in layer.rows() {
            x_min = x_min.min(row[0]);
            x_max = x_max.max(row[0]);
            y_min = y_min.min(row[1]);
            y_max = y_max.max(row[1]);
        }
    }
    if !x_min.is_finite() {
        return Err(EfmError::Input("plot: no points".into()));
    }
    let x_pad = ((x_max - x_min) * PAD_FRAC).max(1e-6);
    let y_pad = ((y_max - y_min) * PAD_FRAC).max(1e-6);
    x_min -= x_pad;
    x_max += x_pad;
    y_min -= y_pad;
    y_max += y_pad;
    Ok(Mapper {
        x_min,
        y_min,
        x_scale: WIDTH / (x_max - x_min),
        y_scale: HEIGHT / (y_max - y_min),
    })
}

fn circles(out: &mut String, mapper: &Mapper, pts: ArrayView2<f64>, color: &str) {
    for row in pts.rows() {
        let (cx, cy) = mapper.map(row[0], row[1]);
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
            cx, cy, color
        ));
    }
}

/// Renders prediction vs ground truth with an optional trajectory fan
/// (subsampled to at most MAX_TRAJECTORIES particles).
pub fn scatter_svg<'a>(
    predicted: ArrayView2<'a, f64>,
    ground_truth: Option<ArrayView2<'a, f64>>,
    trajectories: Option<&'a Trajectory>,
) -> Result<String> {
    let mut layers = vec![predicted];
    if let Some(gt) = ground_truth {
        layers.push(gt);
    }
    let traj_states: Vec<ArrayView2<f64>> = trajectories
        .map(|t| t.states.iter().map(|s| s.view()).collect())
        .unwrap_or_default();
    layers.extend(traj_states.iter().cloned());
    let mapper = fit_bounds(&layers)?;

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        WIDTH, HEIGHT, WIDTH, HEIGHT
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    if let Some(traj) = trajectories {
        if let Some(first) = traj.states.first() {
            let n = first.nrows();
            let take = n.min(MAX_TRAJECTORIES);
            // Evenly spaced particle subset keeps the fan representative.
            let stride = if take == 0 { 1 } else { n.div_ceil(take).max(1) };
            for pid in (0..n).step_by(stride) {
                let mut points = String::new();
                for state in &traj.states {
                    let (px, py) = mapper.map(state[[pid, 0]], state[[pid, 1]]);
                    points.push_str(&format!("{:.2},{:.2} ", px, py));
                }
                out.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1\" stroke-opacity=\"0.6\"/>\n",
                    points.trim_end(),
                    TRAJ_COLOR
                ));
            }
        }
    }
    if let Some(gt) = ground_truth {
        circles(&mut out, &mapper, gt, GT_COLOR);
    }
    circles(&mut out, &mapper, predicted, PRED_COLOR);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn count(hay: &str, needle: &str) -> usize {
        hay.matches(needle).count()
    }

    #[test]
    fn renders_layers_with_their_colors() {
        let pred = array![[0.0, 0.0], [1.0, 1.0]];
        let gt = array![[0.5, 0.5], [2.0, 2.0], [3.0, 3.0]];
        let svg = scatter_svg(pred.view(), Some(gt.view()), None).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(count(&svg, PRED_COLOR), 2);
        assert_eq!(count(&svg, GT_COLOR), 3);
        assert_eq!(count(&svg, "<polyline"), 0);
    }

    #[test]
    fn trajectory_fan_is_capped() {
        let n = 200;
        let mut x0 = Array2::<f64>::zeros((n, 2));
        let mut x1 = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            x0[[i, 0]] = i as f64;
            x1[[i, 0]] = i as f64;
            x1[[i, 1]] = 1.0;
        }
        let traj = Trajectory { s_nodes: vec![0.0, 1.0], states: vec![x0, x1.clone()] };
        let svg = scatter_svg(x1.view(), None, Some(&traj)).unwrap();
        let fans = count(&svg, "<polyline");
        assert!(fans > 0 && fans <= MAX_TRAJECTORIES, "{} polylines", fans);
    }

    #[test]
    fn degenerate_inputs_error() {
        let one_dim = array![[1.0]];
        assert!(scatter_svg(one_dim.view(), None, None).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(scatter_svg(empty.view(), None, None).is_err());
    }

    #[test]
    fn identical_points_still_produce_finite_coordinates() {
        let pts = array![[1.0, 1.0], [1.0, 1.0]];
        let svg = scatter_svg(pts.view(), None, None).unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
