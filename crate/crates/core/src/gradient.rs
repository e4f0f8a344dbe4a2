//! Exact k-step policy gradient with simplex weights as parameters.
//!
//! The gradient is kept in free coordinates: entry `i` is the partial of
//! `J^{w,k}(mu)` in `w_i` with the other weights held fixed. Only its inner
//! products with feasible directions `w' - w` are meaningful on the simplex,
//! and those are valid on the boundary as well.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kstep::{same_class, KStepEvaluation, KStepModel};
use crate::mdp::TabularMdp;
use crate::policy_class::CorrelatedPolicy;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientVector {
    pub k: usize,
    pub weights: Vec<f64>,
    pub partials: Vec<f64>,
}

impl GradientVector {
    /// `(target - w) . grad`.
    pub fn directional(&self, target: &[f64]) -> Result<f64> {
        if target.len() != self.partials.len() {
            return Err(Error::Dimension {
                what: "direction",
                expected: self.partials.len(),
                found: target.len(),
            });
        }
        Ok(target
            .iter()
            .zip(&self.weights)
            .zip(&self.partials)
            .map(|((t, w), g)| (t - w) * g)
            .sum())
    }

    pub fn sup_norm(&self) -> f64 {
        self.partials.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn len(&self) -> usize {
        self.partials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partials.is_empty()
    }
}

impl KStepModel {
    /// `grad_i = E_{s~d^{w,k}}[Q(s, pi_i)] / (1 - gamma^k)`.
    pub fn gradient_from(&self, eval: &KStepEvaluation) -> GradientVector {
        let scale = 1.0 / (1.0 - self.discount());
        GradientVector {
            k: self.k(),
            weights: eval.weights().to_vec(),
            partials: self.weighted_q(eval).into_iter().map(|q| q * scale).collect(),
        }
    }

    pub fn gradient(&self, weights: &[f64]) -> Result<GradientVector> {
        Ok(self.gradient_from(&self.evaluate(weights)?))
    }

    /// `E_{s~d}[Q(s, w') - J(s)] / (1 - gamma^k)`, computed without the
    /// gradient vector.
    pub fn directional_closed_form(&self, eval: &KStepEvaluation, target: &[f64]) -> Result<f64> {
        if target.len() != self.n_policies() {
            return Err(Error::Dimension {
                what: "target weights",
                expected: self.n_policies(),
                found: target.len(),
            });
        }
        let mut q = nalgebra::DVector::zeros(self.mdp().n_states());
        for (i, &w) in target.iter().enumerate() {
            if w != 0.0 {
                q += self.q_member(i, eval.values()) * w;
            }
        }
        let adv = q - eval.values();
        Ok(eval.occupancy().dot(&adv) / (1.0 - self.discount()))
    }

    /// Slack in the approximate gradient-dominance inequality: RHS - LHS of
    /// `dJ[w' - w] <= (J(w') - J(w)) / (1 - gamma^k) + 6 gamma^k g_max / ((1 - gamma^k)(1 - gamma))`.
    pub fn gradient_dominance_residual(&self, weights: &[f64], target: &[f64]) -> Result<f64> {
        let eval = self.evaluate(weights)?;
        let lhs = self.gradient_from(&eval).directional(target)?;
        let j_target = self.value_at_mu(target)?;
        let gk = self.discount();
        let gamma = self.mdp().gamma();
        let rhs = (j_target - eval.value_at_mu()) / (1.0 - gk)
            + 6.0 * gk * self.mdp().g_max() / ((1.0 - gk) * (1.0 - gamma));
        Ok(rhs - lhs)
    }
}

pub fn kstep_gradient(mdp: &TabularMdp, pi: &CorrelatedPolicy, k: usize) -> Result<GradientVector> {
    KStepModel::new(mdp, Arc::clone(pi.class()), k)?.gradient(pi.weights())
}

/// `(w' - w) . grad J^{w,k}(mu)`.
pub fn directional_derivative(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    target: &CorrelatedPolicy,
    k: usize,
) -> Result<f64> {
    same_class(pi, target)?;
    kstep_gradient(mdp, pi, k)?.directional(target.weights())
}

/// The same derivative through the occupancy-weighted advantage.
pub fn directional_derivative_closed_form(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    target: &CorrelatedPolicy,
    k: usize,
) -> Result<f64> {
    same_class(pi, target)?;
    let model = KStepModel::new(mdp, Arc::clone(pi.class()), k)?;
    let eval = model.evaluate(pi.weights())?;
    model.directional_closed_form(&eval, target.weights())
}

pub fn gradient_dominance_residual(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    target: &CorrelatedPolicy,
    k: usize,
) -> Result<f64> {
    same_class(pi, target)?;
    KStepModel::new(mdp, Arc::clone(pi.class()), k)?
        .gradient_dominance_residual(pi.weights(), target.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::builders;
    use crate::kstep::OccupancyWeighting;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matches_central_differences() {
        let ex = builders::two_state().unwrap();
        let model = KStepModel::new(&ex.mdp, ex.class.clone(), 3).unwrap();
        let w = [0.7, 0.3];
        let grad = model.gradient(&w).unwrap();
        let h = 1e-5;
        // direction (e_1 - e_0) / sqrt 2 stays in the tangent plane
        let u = std::f64::consts::FRAC_1_SQRT_2;
        let plus = model.value_at_mu(&[w[0] - h * u, w[1] + h * u]).unwrap();
        let minus = model.value_at_mu(&[w[0] + h * u, w[1] - h * u]).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let analytic = u * (grad.partials[1] - grad.partials[0]);
        assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0), "{fd} vs {analytic}");
    }

    #[test]
    fn closed_form_agrees_with_dot_product() {
        let ex = builders::button_press().unwrap();
        let model = KStepModel::new(&ex.mdp, ex.class.clone(), 4).unwrap();
        let m = ex.class.len();
        let w: Vec<f64> = (0..m).map(|i| (1 + i % 7) as f64).collect();
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|x| x / total).collect();
        let eval = model.evaluate(&w).unwrap();
        let grad = model.gradient_from(&eval);
        for target in [0, ex.star_index(), m - 1] {
            let mut t = vec![0.0; m];
            t[target] = 1.0;
            let a = grad.directional(&t).unwrap();
            let b = model.directional_closed_form(&eval, &t).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_cost_gives_zero_gradient() {
        let ex = builders::two_state().unwrap();
        let mdp = TabularMdp::deterministic(
            &[vec![0, 1], vec![0, 1]],
            vec![vec![0.0; 2]; 2],
            0.8,
            vec![0.6, 0.4],
            None,
        )
        .unwrap();
        let pi = CorrelatedPolicy::uniform(ex.class.clone());
        let grad = kstep_gradient(&mdp, &pi, 2).unwrap();
        assert!(grad.partials.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn vertex_derivatives_are_scaled_weighted_advantages() {
        let ex = builders::number_matching().unwrap();
        let base = CorrelatedPolicy::dirac(ex.class.clone(), ex.crit_index()).unwrap();
        let table = crate::kstep::kstep_advantage_table(&ex.mdp, &base, 1, OccupancyWeighting::KStep)
            .unwrap();
        for i in 0..ex.class.len() {
            let target = CorrelatedPolicy::dirac(ex.class.clone(), i).unwrap();
            let dd = directional_derivative(&ex.mdp, &base, &target, 1).unwrap();
            assert_abs_diff_eq!(dd, table.weighted[i] / 0.1, epsilon = 1e-9);
            assert!(dd >= -1e-9);
        }
    }

    #[test]
    fn moat_escape_direction_sign() {
        let ex = builders::moat_cross().unwrap();
        let base = CorrelatedPolicy::dirac(ex.class.clone(), ex.crit_index()).unwrap();
        let star = CorrelatedPolicy::dirac(ex.class.clone(), ex.star_index()).unwrap();
        assert!(directional_derivative(&ex.mdp, &base, &star, 6).unwrap() < 0.0);
        assert!(directional_derivative(&ex.mdp, &base, &star, 2).unwrap() > 0.0);
    }

    #[test]
    fn gradient_bound() {
        let ex = builders::moat_cross().unwrap();
        let pi = CorrelatedPolicy::uniform(ex.class.clone());
        for k in [1, 3, 6] {
            let grad = kstep_gradient(&ex.mdp, &pi, k).unwrap();
            let gk = 0.9f64.powi(k as i32);
            assert!(grad.sup_norm() <= 20.0 / ((1.0 - gk) * 0.1) + 1e-9);
        }
    }

    #[test]
    fn residual_for_zero_direction() {
        let ex = builders::two_state().unwrap();
        let pi = CorrelatedPolicy::two_point(ex.class.clone(), 0, 1, 0.4).unwrap();
        let r = gradient_dominance_residual(&ex.mdp, &pi, &pi, 2).unwrap();
        let gk = 0.64;
        assert_abs_diff_eq!(r, 6.0 * gk * 2.0 / ((1.0 - gk) * 0.2), epsilon = 1e-9);
        let base = CorrelatedPolicy::dirac(ex.class.clone(), 0).unwrap();
        let right = CorrelatedPolicy::dirac(ex.class.clone(), 1).unwrap();
        let r = gradient_dominance_residual(&ex.mdp, &base, &right, 1).unwrap();
        assert!(r.is_finite() && r >= 0.0);
    }

    #[test]
    fn classes_must_match() {
        let a = builders::two_state().unwrap();
        let b = builders::number_matching().unwrap();
        let pa = CorrelatedPolicy::uniform(a.class.clone());
        let pb = CorrelatedPolicy::uniform(b.class.clone());
        assert!(directional_derivative(&a.mdp, &pa, &pb, 1).is_err());
    }
}
