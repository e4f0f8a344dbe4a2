//! Critical points, escape thresholds, one-parameter sweeps, and the
//! chained-policy control.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kstep::{fmt_num, KStepModel, OccupancyWeighting};
use crate::linalg;
use crate::mdp::{DeterministicPolicy, TabularMdp};
use crate::optim::best_of;
use crate::policy_class::{CorrelatedPolicy, PolicyClass};

/// Tolerance on weighted advantages below which a direction counts as
/// improving.
pub const CRITICALITY_TOL: f64 = 1e-9;

/// `argmin_i J^{pi_i}(mu)`, ties to the smallest index.
pub fn best_deterministic(mdp: &TabularMdp, class: &PolicyClass) -> Result<(usize, f64)> {
    let values = class
        .policies()
        .par_iter()
        .map(|pi| mdp.policy_value(pi))
        .collect::<Result<Vec<_>>>()?;
    Ok(best_of(&values))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalityReport {
    /// Index of the base policy when the weights are a vertex.
    pub base_index: Option<usize>,
    pub k: usize,
    pub weighting: OccupancyWeighting,
    /// Weighted advantage toward every class member.
    pub weighted: Vec<f64>,
    pub certified: bool,
    pub worst_index: usize,
    pub worst_value: f64,
    pub tolerance: f64,
}

pub fn certify_critical_model(
    model: &KStepModel,
    weights: &[f64],
    tol: f64,
    weighting: OccupancyWeighting,
) -> Result<CriticalityReport> {
    let table = model.advantage_table(weights, weighting)?;
    let (worst_index, worst_value) = table.worst();
    let base_index = CorrelatedPolicy::new(Arc::clone(model.class()), weights.to_vec())?.dirac_index();
    Ok(CriticalityReport {
        base_index,
        k: model.k(),
        weighting,
        weighted: table.weighted,
        certified: worst_value >= -tol,
        worst_index,
        worst_value,
        tolerance: tol,
    })
}

/// Checks every vertex direction from `weights`. At a vertex these span all
/// feasible directions, so a certified report means no first-order descent
/// direction exists.
pub fn certify_critical(
    mdp: &TabularMdp,
    class: &Arc<PolicyClass>,
    weights: &[f64],
    k: usize,
    tol: f64,
    weighting: OccupancyWeighting,
) -> Result<CriticalityReport> {
    certify_critical_model(&KStepModel::new(mdp, Arc::clone(class), k)?, weights, tol, weighting)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EscapeMode {
    /// The direction toward the best deterministic policy turns negative.
    #[default]
    TowardBest,
    /// Any vertex direction turns negative.
    AnyDirection,
}

/// Smallest `k <= k_max` at which the base point stops being critical in
/// the chosen sense. `target` overrides the best policy in
/// [`EscapeMode::TowardBest`]; optimal policies can tie, and the
/// smallest-index one need not be the intended one.
pub fn find_k_esc(
    mdp: &TabularMdp,
    class: &Arc<PolicyClass>,
    weights: &[f64],
    k_max: usize,
    mode: EscapeMode,
    weighting: OccupancyWeighting,
    target: Option<usize>,
) -> Result<Option<usize>> {
    let best = match target {
        Some(i) if i < class.len() => i,
        Some(i) => return Err(Error::IndexOutOfRange { index: i, len: class.len() }),
        None => best_deterministic(mdp, class)?.0,
    };
    for k in 1..=k_max {
        let model = KStepModel::new(mdp, Arc::clone(class), k)?;
        let table = model.advantage_table(weights, weighting)?;
        let value = match mode {
            EscapeMode::TowardBest => table.weighted[best],
            EscapeMode::AnyDirection => table.worst().1,
        };
        if value < -CRITICALITY_TOL {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// `J^{w_theta,k}(mu)` along `w_theta = (1 - theta) e_a + theta e_b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCurve {
    pub k: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SweepCurve {
    /// Grid indices that are no larger than their neighbours (endpoints
    /// compare against their single neighbour).
    pub fn local_minima(&self) -> Vec<usize> {
        self.extrema(|v, n| v <= n)
    }

    pub fn local_maxima(&self) -> Vec<usize> {
        self.extrema(|v, n| v >= n)
    }

    fn extrema(&self, keep: impl Fn(f64, f64) -> bool) -> Vec<usize> {
        let v = &self.values;
        (0..v.len())
            .filter(|&i| {
                let left = i == 0 || keep(v[i], v[i - 1]);
                let right = i + 1 == v.len() || keep(v[i], v[i + 1]);
                left && right
            })
            .collect()
    }

    /// Interior grid points that are a local minimum or maximum.
    pub fn interior_stationary(&self) -> Vec<usize> {
        let last = self.values.len().saturating_sub(1);
        let mut idx: Vec<usize> = self
            .local_minima()
            .into_iter()
            .chain(self.local_maxima())
            .filter(|&i| i > 0 && i < last)
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    pub fn argmax(&self) -> usize {
        (0..self.values.len())
            .fold(0, |b, i| if self.values[i] > self.values[b] { i } else { b })
    }

    /// `values[1] - values[0]`.
    pub fn forward_difference_at_start(&self) -> f64 {
        self.values[1] - self.values[0]
    }

    /// Largest distance to the straight line between the endpoint values.
    pub fn chord_deviation(&self) -> f64 {
        let (a, b) = (self.values[0], *self.values.last().expect("nonempty sweep"));
        let (t0, t1) = (self.grid[0], *self.grid.last().expect("nonempty sweep"));
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(t, v)| {
                let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                (v - (a + s * (b - a))).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "value"])?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            w.write_record([format!("{t:.6}"), fmt_num(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// `0, step, 2 step, ..., 1`.
pub fn uniform_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

pub fn theta_sweep(
    mdp: &TabularMdp,
    class: &Arc<PolicyClass>,
    a: usize,
    b: usize,
    k: usize,
    grid: &[f64],
) -> Result<SweepCurve> {
    if grid.is_empty() || grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidConfig("sweep grid must be a nonempty subset of [0,1]".into()));
    }
    for idx in [a, b] {
        if idx >= class.len() {
            return Err(Error::IndexOutOfRange { index: idx, len: class.len() });
        }
    }
    let model = KStepModel::new(mdp, Arc::clone(class), k)?;
    let values = grid
        .par_iter()
        .map(|&theta| {
            let w = CorrelatedPolicy::two_point(Arc::clone(class), a, b, theta)?;
            model.value_at_mu(w.weights())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve {
        k,
        grid: grid.to_vec(),
        values,
    })
}

/// Value of cycling through per-step stochastic policies: at time `t` the
/// action is drawn afresh from `(1 - theta_j) pi_a(s) + theta_j pi_b(s)`
/// with `j = t mod len(thetas)`.
pub fn chained_policy_value(
    mdp: &TabularMdp,
    a: &DeterministicPolicy,
    b: &DeterministicPolicy,
    thetas: &[f64],
) -> Result<f64> {
    if thetas.is_empty() {
        return Err(Error::ZeroHorizon);
    }
    a.check(mdp)?;
    b.check(mdp)?;
    let n = mdp.n_states();
    let k = thetas.len();
    let (pa, pb) = (mdp.policy_kernel(a), mdp.policy_kernel(b));
    let (ga, gb) = (mdp.policy_cost(a), mdp.policy_cost(b));
    // augmented state (phase j, s) at index j * n + s
    let mut p = DMatrix::zeros(n * k, n * k);
    let mut g = DVector::zeros(n * k);
    for (j, &theta) in thetas.iter().enumerate() {
        let next = (j + 1) % k;
        let kernel = &pa * (1.0 - theta) + &pb * theta;
        let cost = &ga * (1.0 - theta) + &gb * theta;
        for s in 0..n {
            g[j * n + s] = cost[s];
            for s2 in 0..n {
                p[(j * n + s, next * n + s2)] = kernel[(s, s2)];
            }
        }
    }
    let v = linalg::solve_fixed_point(&p, &g, mdp.gamma(), "chained policy value")?;
    Ok((0..n).map(|s| mdp.mu()[s] * v[s]).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainedControl {
    pub k: usize,
    pub step: f64,
    pub base_value: f64,
    /// `J(step e_i) - J(0)` per slot.
    pub forward_differences: Vec<f64>,
    /// `J(theta, ..., theta)` on the grid.
    pub diagonal: SweepCurve,
    /// `J(theta e_i)` on the grid, one curve per slot.
    pub slices: Vec<SweepCurve>,
}

impl ChainedControl {
    /// True when no single slot improves on the all-zeros point.
    pub fn zero_point_persists(&self) -> bool {
        self.forward_differences.iter().all(|&d| d >= 0.0)
    }
}

/// Probes the all-zeros point of the chained scheme along each coordinate
/// and along the diagonal.
pub fn chained_policy_control(
    mdp: &TabularMdp,
    a: &DeterministicPolicy,
    b: &DeterministicPolicy,
    k: usize,
    grid: &[f64],
) -> Result<ChainedControl> {
    if k == 0 {
        return Err(Error::ZeroHorizon);
    }
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::InvalidConfig("control grid must start at 0 and have two points".into()));
    }
    let step = grid[1];
    let base_value = chained_policy_value(mdp, a, b, &vec![0.0; k])?;
    let slice = |slot: Option<usize>| -> Result<SweepCurve> {
        let values = grid
            .par_iter()
            .map(|&t| {
                let thetas: Vec<f64> = (0..k)
                    .map(|j| match slot {
                        Some(i) if i != j => 0.0,
                        _ => t,
                    })
                    .collect();
                chained_policy_value(mdp, a, b, &thetas)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepCurve { k, grid: grid.to_vec(), values })
    };
    let slices = (0..k).map(|i| slice(Some(i))).collect::<Result<Vec<_>>>()?;
    let forward_differences = slices.iter().map(|c| c.values[1] - base_value).collect();
    Ok(ChainedControl {
        k,
        step,
        base_value,
        forward_differences,
        diagonal: slice(None)?,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::builders;
    use approx::assert_abs_diff_eq;

    #[test]
    fn best_policies() {
        let ex = builders::number_matching().unwrap();
        let (i, v) = best_deterministic(&ex.mdp, &ex.class).unwrap();
        assert_eq!(ex.class.label(i), "(a1,a1)");
        assert_abs_diff_eq!(v, -95.8, epsilon = 1e-9);
        let single = PolicyClass::new(vec![ex.class.policy(3).clone()], None).unwrap();
        assert_eq!(best_deterministic(&ex.mdp, &single).unwrap().0, 0);
    }

    #[test]
    fn number_matching_criticality() {
        let ex = builders::number_matching().unwrap();
        let w = CorrelatedPolicy::dirac(ex.class.clone(), ex.crit_index()).unwrap();
        let r1 = certify_critical(&ex.mdp, &ex.class, w.weights(), 1, CRITICALITY_TOL, OccupancyWeighting::OneStep)
            .unwrap();
        assert!(r1.certified);
        assert_eq!(r1.base_index, Some(ex.crit_index()));
        let r3 = certify_critical(&ex.mdp, &ex.class, w.weights(), 3, CRITICALITY_TOL, OccupancyWeighting::OneStep)
            .unwrap();
        assert!(!r3.certified);
        assert_eq!(r3.worst_index, ex.star_index());
        assert_abs_diff_eq!(r3.worst_value, -2.84, epsilon = 1e-3);
    }

    #[test]
    fn optimum_is_always_critical() {
        let ex = builders::moat_cross().unwrap();
        let w = CorrelatedPolicy::dirac(ex.class.clone(), ex.star_index()).unwrap();
        for k in [1, 4, 9] {
            for weighting in [OccupancyWeighting::OneStep, OccupancyWeighting::KStep] {
                let r = certify_critical(&ex.mdp, &ex.class, w.weights(), k, CRITICALITY_TOL, weighting)
                    .unwrap();
                assert!(r.certified);
            }
        }
    }

    #[test]
    fn escape_thresholds_with_one_step_weighting() {
        for (ex, expected) in [
            (builders::number_matching().unwrap(), 3),
            (builders::moat_cross().unwrap(), 6),
            (builders::two_path().unwrap(), 4),
            (builders::two_state().unwrap(), 3),
        ] {
            let w = CorrelatedPolicy::dirac(ex.class.clone(), ex.crit_index()).unwrap();
            let star = Some(ex.star_index());
            let k = find_k_esc(&ex.mdp, &ex.class, w.weights(), 20, EscapeMode::TowardBest, OccupancyWeighting::OneStep, star)
                .unwrap();
            assert_eq!(k, Some(expected), "{}", ex.name);
        }
    }

    #[test]
    fn any_direction_never_later_than_toward_best() {
        let ex = builders::moat_cross().unwrap();
        let w = CorrelatedPolicy::dirac(ex.class.clone(), ex.crit_index()).unwrap();
        let find = |mode| {
            find_k_esc(&ex.mdp, &ex.class, w.weights(), 12, mode, OccupancyWeighting::KStep, Some(ex.star_index()))
                .unwrap()
                .unwrap()
        };
        assert!(find(EscapeMode::AnyDirection) <= find(EscapeMode::TowardBest));
    }

    #[test]
    fn two_state_sweep_shapes() {
        let ex = builders::two_state().unwrap();
        let grid = uniform_grid(0.001).unwrap();
        let k1 = theta_sweep(&ex.mdp, &ex.class, 0, 1, 1, &grid).unwrap();
        let minima = k1.local_minima();
        assert!(minima.contains(&0) && minima.contains(&(grid.len() - 1)));
        assert!((grid[k1.argmax()] - 0.32).abs() <= 0.02);
        let k3 = theta_sweep(&ex.mdp, &ex.class, 0, 1, 3, &grid).unwrap();
        assert!(k3.interior_stationary().is_empty());
        assert!(k3.forward_difference_at_start() < 0.0);
        let k100 = theta_sweep(&ex.mdp, &ex.class, 0, 1, 100, &grid).unwrap();
        assert!(k100.chord_deviation() <= 2.0 * 0.8f64.powi(100) * 2.0 / 0.2);
        for c in [&k1, &k3, &k100] {
            assert_abs_diff_eq!(c.values[0], 5.4, epsilon = 1e-9);
            assert_abs_diff_eq!(*c.values.last().unwrap(), 1.2, epsilon = 1e-9);
        }
    }

    #[test]
    fn one_step_slope_coefficients() {
        // slope at theta = 0 weights per-state advantages by d(s) / (1 - gamma)
        let ex = builders::two_state().unwrap();
        let d = ex.mdp.occupancy(ex.class.policy(0)).unwrap() / 0.2;
        assert_abs_diff_eq!(d[0], 4.6, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(uniform_grid(0.0).is_err());
        assert_eq!(uniform_grid(0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let ex = builders::two_state().unwrap();
        assert!(theta_sweep(&ex.mdp, &ex.class, 0, 1, 1, &[1.5]).is_err());
    }

    #[test]
    fn chained_control_single_slot_is_the_one_step_sweep() {
        let ex = builders::two_state().unwrap();
        let grid = uniform_grid(0.01).unwrap();
        let sweep = theta_sweep(&ex.mdp, &ex.class, 0, 1, 1, &grid).unwrap();
        let ctl = chained_policy_control(&ex.mdp, ex.class.policy(0), ex.class.policy(1), 1, &grid).unwrap();
        for (a, b) in sweep.values.iter().zip(&ctl.diagonal.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn chained_control_keeps_zero_point() {
        let ex = builders::two_state().unwrap();
        let grid = uniform_grid(0.001).unwrap();
        for k in [3, 10] {
            let ctl =
                chained_policy_control(&ex.mdp, ex.class.policy(0), ex.class.policy(1), k, &grid[..3]).unwrap();
            assert!(ctl.zero_point_persists(), "{:?}", ctl.forward_differences);
            assert_abs_diff_eq!(ctl.base_value, 5.4, epsilon = 1e-9);
        }
    }

    #[test]
    fn sweep_csv() {
        let ex = builders::two_state().unwrap();
        let c = theta_sweep(&ex.mdp, &ex.class, 0, 1, 1, &[0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "theta,value\n0.000000,5.400000\n1.000000,1.200000\n"
        );
    }
}
