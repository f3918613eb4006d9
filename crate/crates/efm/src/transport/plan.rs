use rand::Rng;

use crate::error::{EfmError, Result};

/// Discrete coupling over `arity` marginals. `support[t]` is an index tuple,
/// one index per marginal; `weights[t]` is its mass. Marginals are uniform.
#[derive(Debug, Clone)]
pub struct CouplingPlan {
    pub arity: usize,
    /// Size of each marginal's ground set.
    pub sizes: Vec<usize>,
    pub support: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    /// True when the plan is a map off the first marginal: every index of
    /// marginal 0 appears in exactly one tuple.
    pub deterministic: bool,
}

impl CouplingPlan {
    /// Largest deviation of any one-dimensional marginal from uniform.
    pub fn marginal_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.arity {
            let n = self.sizes[j];
            let mut mass = vec![0.0f64; n];
            for (tuple, &w) in self.support.iter().zip(&self.weights) {
                mass[tuple[j]] += w;
            }
            let target = 1.0 / n as f64;
            for m in mass {
                worst = worst.max((m - target).abs());
            }
        }
        worst
    }

    /// Checks the structural invariants; used by tests and after construction.
    pub fn validate(&self) -> Result<()> {
        if self.arity == 0 || self.sizes.len() != self.arity {
            return Err(EfmError::Input("coupling plan: arity/sizes mismatch".into()));
        }
        if self.support.len() != self.weights.len() || self.support.is_empty() {
            return Err(EfmError::Input("coupling plan: support/weights mismatch".into()));
        }
        for tuple in &self.support {
            if tuple.len() != self.arity {
                return Err(EfmError::Input("coupling plan: tuple arity mismatch".into()));
            }
            for (j, &i) in tuple.iter().enumerate() {
                if i >= self.sizes[j] {
                    return Err(EfmError::Input(format!(
                        "coupling plan: index {} out of range for marginal {}",
                        i, j
                    )));
                }
            }
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(EfmError::Input("coupling plan: weights must be finite and >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EfmError::Input(format!(
                "coupling plan: weights sum to {} (must be 1 +- 1e-9)",
                total
            )));
        }
        let residual = self.marginal_residual();
        if residual > 1e-6 {
            return Err(EfmError::Input(format!(
                "coupling plan: marginal residual {:.3e} exceeds 1e-6",
                residual
            )));
        }
        if self.deterministic {
            let mut seen = vec![false; self.sizes[0]];
            for tuple in &self.support {
                if seen[tuple[0]] {
                    return Err(EfmError::Input(format!(
                        "deterministic plan repeats first-marginal index {}",
                        tuple[0]
                    )));
                }
                seen[tuple[0]] = true;
            }
            if !seen.iter().all(|&s| s) {
                return Err(EfmError::Input(
                    "deterministic plan misses a first-marginal index".into(),
                ));
            }
        }
        Ok(())
    }

    /// Expected cost under the plan.
    pub fn expected_cost(&self, mut cost: impl FnMut(&[usize]) -> f64) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(t, &w)| w * cost(t))
            .sum()
    }

    /// O(log n) weighted tuple draws over the support.
    pub fn sampler(&self) -> PlanSampler<'_> {
        let mut cum = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cum.push(acc);
        }
        PlanSampler { plan: self, cum }
    }
}

pub struct PlanSampler<'a> {
    plan: &'a CouplingPlan,
    cum: Vec<f64>,
}

impl<'a> PlanSampler<'a> {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> &'a [usize] {
        let total = *self.cum.last().unwrap();
        let target = rng.gen_range(0.0..1.0) * total;
        let idx = self.cum.partition_point(|&c| c <= target).min(self.cum.len() - 1);
        &self.plan.support[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_plan(n: usize) -> CouplingPlan {
        CouplingPlan {
            arity: 2,
            sizes: vec![n, n],
            support: (0..n).map(|i| vec![i, i]).collect(),
            weights: vec![1.0 / n as f64; n],
            deterministic: true,
        }
    }

    #[test]
    fn identity_plan_validates() {
        identity_plan(5).validate().unwrap();
    }

    #[test]
    fn bad_weight_sum_is_rejected() {
        let mut p = identity_plan(4);
        p.weights[0] += 1e-3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn repeated_first_index_breaks_determinism() {
        let mut p = identity_plan(3);
        p.support[1][0] = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn skewed_marginal_is_rejected() {
        let p = CouplingPlan {
            arity: 2,
            sizes: vec![2, 2],
            support: vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            weights: vec![0.4, 0.2, 0.2, 0.2],
            deterministic: false,
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn sampler_reproduces_weights() {
        use rand::SeedableRng;
        let p = CouplingPlan {
            arity: 1,
            sizes: vec![2],
            support: vec![vec![0], vec![1]],
            weights: vec![0.5, 0.5],
            deterministic: false,
        };
        let s = p.sampler();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut zero = 0;
        let n = 20_000;
        for _ in 0..n {
            if s.sample(&mut rng)[0] == 0 {
                zero += 1;
            }
        }
        let frac = zero as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.02);
    }
}
