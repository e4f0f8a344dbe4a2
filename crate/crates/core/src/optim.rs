//! Projected gradient descent and entropy mirror descent on the simplex of
//! class weights, driven by exact k-step gradients.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::GradientVector;
use crate::kstep::{fmt_num, KStepModel};
use crate::mdp::TabularMdp;
use crate::policy_class::{check_weights, PolicyClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Euclidean projection after a plain gradient step.
    #[serde(alias = "pgd")]
    ProjectedGd,
    /// Multiplicative weights (negative-entropy mirror map).
    #[serde(alias = "mirror")]
    MirrorEntropy,
}

impl Method {
    pub fn geometry(self) -> Geometry {
        match self {
            Method::ProjectedGd => Geometry::Euclidean,
            Method::MirrorEntropy => Geometry::Entropy,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Method::ProjectedGd => "pgd",
            Method::MirrorEntropy => "mirror",
        }
    }
}

/// Distance-generating function of a descent method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// `1/2 |x|_2^2`, 1-strongly convex in l2.
    Euclidean,
    /// `sum x ln x`, 1-strongly convex in l1 on the simplex.
    Entropy,
}

impl Geometry {
    pub fn bregman(self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean => 0.5 * x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            Geometry::Entropy => x
                .iter()
                .zip(y)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, b)| if *b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
                .sum(),
        }
    }

    /// Norm in which the mirror map is 1-strongly convex.
    pub fn primal_norm(self, d: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Geometry::Entropy => d.iter().map(|x| x.abs()).sum(),
        }
    }

    /// Dual norm of a gradient difference restricted to the tangent plane of
    /// the simplex (shifts by a constant vector carry no information there).
    pub fn dual_norm(self, g: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean => {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                g.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt()
            }
            Geometry::Entropy => {
                let (lo, hi) = g
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                0.5 * (hi - lo)
            }
        }
    }
}

/// How the step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSize {
    /// Fixed learning rate.
    Eta(f64),
    /// Smoothness constant; the rate is `1 / beta` (both geometries have
    /// strong-convexity constant 1).
    Beta(f64),
    /// Estimate beta from sampled gradient pairs, then double it until the
    /// trace is monotone.
    Certified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub k: usize,
    pub step: StepSize,
    pub max_iters: usize,
    /// Lower bound on every weight during mirror descent.
    pub floor: f64,
    /// Stop once the step is below this (l1 change for projected GD, largest
    /// log-weight change for mirror descent). Zero disables early stopping.
    pub stop_tol: f64,
    /// Gradient pairs sampled when certifying smoothness.
    pub probes: usize,
    pub seed: u64,
    /// Keep weights and gradients of every iterate in the trace.
    pub keep_vectors: bool,
    /// Class index used as `pi*` in the trace. Defaults to the best member
    /// (smallest index on ties).
    pub target: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::ProjectedGd,
            k: 1,
            step: StepSize::Certified,
            max_iters: 1000,
            floor: 1e-12,
            stop_tol: 1e-12,
            probes: 64,
            seed: 0,
            keep_vectors: true,
            target: None,
        }
    }
}

impl OptimizerConfig {
    pub fn new(method: Method, k: usize) -> Self {
        OptimizerConfig {
            method,
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_policies: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return Err(Error::ZeroHorizon);
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        match self.step {
            StepSize::Eta(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return bad(format!("step size must be positive, got {eta}"))
            }
            StepSize::Beta(beta) if !(beta > 0.0 && beta.is_finite()) => {
                return bad(format!("smoothness must be positive, got {beta}"))
            }
            _ => {}
        }
        if self.method == Method::MirrorEntropy
            && !(self.floor > 0.0 && self.floor < 1.0 / n_policies as f64)
        {
            return bad(format!(
                "floor must lie in (0, 1/{n_policies}), got {}",
                self.floor
            ));
        }
        if let Some(t) = self.target {
            if t >= n_policies {
                return Err(Error::IndexOutOfRange { index: t, len: n_policies });
            }
        }
        if !(self.stop_tol >= 0.0) {
            return bad("stop_tol must be nonnegative".into());
        }
        if self.probes < 2 && self.step == StepSize::Certified {
            return bad("certification needs at least 2 probes".into());
        }
        Ok(())
    }
}

/// One iterate of a descent run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `J^{w_t,k}(mu)`.
    pub j_k: f64,
    /// `E_{pi~w_t}[J^pi(mu)]`.
    pub e_j1: f64,
    /// `e_j1 - J^{pi*}(mu)`.
    pub gap: f64,
    /// `(e_* - w_t) . grad_t`.
    pub dirderiv_to_star: f64,
    /// `|w_t - w_{t-1}|_1`, zero for the initial point.
    pub step_norm: f64,
    /// `D(e_*, w_t)` in the method's geometry.
    pub bregman_to_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DescentTrace {
    pub method: Method,
    pub k: usize,
    pub eta: f64,
    pub beta: Option<f64>,
    pub best_index: usize,
    pub best_value: f64,
    pub records: Vec<TraceRecord>,
    pub final_weights: Vec<f64>,
    /// Iteration at which the stop tolerance was met, if it was.
    pub stopped_at: Option<usize>,
}

pub const TRACE_HEADER: [&str; 6] = ["iter", "J_k", "E_J1", "gap", "dirderiv_to_star", "step_norm"];

impl DescentTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace holds the initial point")
    }

    /// Iterations whose k-step value rose by more than `tol`.
    pub fn monotone_violations(&self, tol: f64) -> usize {
        self.records
            .windows(2)
            .filter(|w| w[1].j_k > w[0].j_k + tol)
            .count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                fmt_num(r.j_k),
                fmt_num(r.e_j1),
                fmt_num(r.gap),
                fmt_num(r.dirderiv_to_star),
                format!("{:.6e}", r.step_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - tau).max(0.0)).collect();
    // rounding can leave the sum a few ulps off one
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Raises every weight to at least `floor` and renormalises.
pub fn floor_weights(w: &[f64], floor: f64) -> Vec<f64> {
    let raised: Vec<f64> = w.iter().map(|x| x.max(floor)).collect();
    let total: f64 = raised.iter().sum();
    raised.iter().map(|x| x / total).collect()
}

/// `w_i exp(-eta g_i)`, renormalised, floored, renormalised.
pub fn mirror_step(w: &[f64], grad: &[f64], eta: f64, floor: f64) -> Vec<f64> {
    let g_min = grad.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = w
        .iter()
        .zip(grad)
        .map(|(wi, gi)| wi * (-eta * (gi - g_min)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let normalised: Vec<f64> = raw.iter().map(|x| x / total).collect();
    floor_weights(&normalised, floor)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn max_log_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.ln() - y.ln()).abs())
        .fold(0.0, f64::max)
}

/// Gap of a weight vector against the best deterministic class member.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRecord {
    pub expected_one_step: f64,
    pub kstep_value: f64,
    pub best_value: f64,
    /// `E_{pi~w}[J^pi(mu)] - J^{pi*}(mu)`.
    pub one_step_gap: f64,
    /// `J^{w,k}(mu) - J^{pi*}(mu)`.
    pub kstep_gap: f64,
    /// `8 gamma^k g_max / (1 - gamma)`.
    pub bound: f64,
}

/// `8 gamma^k g_max / (1 - gamma)`.
pub fn near_optimality_bound(mdp: &TabularMdp, k: usize) -> f64 {
    8.0 * mdp.gamma().powi(k as i32) * mdp.g_max() / (1.0 - mdp.gamma())
}

/// Index and value of the best class member, ties to the smallest index.
pub fn best_of(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
}

pub fn performance_gap_model(model: &KStepModel, weights: &[f64]) -> Result<GapRecord> {
    let (_, best_value) = best_of(model.deterministic_values()?);
    let expected_one_step = model.expected_one_step_value(weights)?;
    let kstep_value = model.value_at_mu(weights)?;
    Ok(GapRecord {
        expected_one_step,
        kstep_value,
        best_value,
        one_step_gap: expected_one_step - best_value,
        kstep_gap: kstep_value - best_value,
        bound: near_optimality_bound(model.mdp(), model.k()),
    })
}

pub fn performance_gap(
    mdp: &TabularMdp,
    class: &Arc<PolicyClass>,
    weights: &[f64],
    k: usize,
) -> Result<GapRecord> {
    performance_gap_model(&KStepModel::new(mdp, Arc::clone(class), k)?, weights)
}

/// Uniform point on the simplex.
fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Safety factor applied to the sampled smoothness ratio.
pub const SMOOTHNESS_SAFETY: f64 = 2.0;
/// Smallest smoothness estimate returned.
pub const SMOOTHNESS_FLOOR: f64 = 1e-6;

/// Largest sampled `|grad(w) - grad(w')|_* / |w - w'|` times the safety
/// factor. Half the pairs are far apart, half are close, so both global and
/// local curvature are probed.
pub fn certify_smoothness(
    model: &KStepModel,
    geometry: Geometry,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes < 2 {
        return Err(Error::InvalidConfig("certification needs at least 2 probes".into()));
    }
    let m = model.n_policies();
    if m < 2 {
        return Ok(SMOOTHNESS_FLOOR);
    }
    let ratios = (0..probes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let a = random_simplex(&mut rng, m);
            let far = random_simplex(&mut rng, m);
            let b: Vec<f64> = if i % 2 == 0 {
                far
            } else {
                a.iter().zip(&far).map(|(x, y)| 0.999 * x + 0.001 * y).collect()
            };
            let ga = model.gradient(&a)?;
            let gb = model.gradient(&b)?;
            let dg: Vec<f64> = ga.partials.iter().zip(&gb.partials).map(|(x, y)| x - y).collect();
            let dw: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let denom = geometry.primal_norm(&dw);
            Ok(if denom > 0.0 { geometry.dual_norm(&dg) / denom } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = ratios.into_iter().fold(0.0, f64::max);
    Ok((SMOOTHNESS_SAFETY * worst).max(SMOOTHNESS_FLOOR))
}

struct Tracker<'a> {
    model: &'a KStepModel,
    geometry: Geometry,
    best_index: usize,
    best_value: f64,
    det_values: &'a [f64],
    keep_vectors: bool,
    records: Vec<TraceRecord>,
}

impl Tracker<'_> {
    /// Records iterate `w` and returns its gradient.
    fn record(&mut self, w: &[f64], step_norm: f64) -> Result<GradientVector> {
        let eval = self.model.evaluate(w)?;
        let grad = self.model.gradient_from(&eval);
        let e_j1: f64 = w.iter().zip(self.det_values).map(|(a, b)| a * b).sum();
        let mut star = vec![0.0; w.len()];
        star[self.best_index] = 1.0;
        self.records.push(TraceRecord {
            iter: self.records.len(),
            j_k: eval.value_at_mu(),
            e_j1,
            gap: e_j1 - self.best_value,
            dirderiv_to_star: grad.directional(&star)?,
            step_norm,
            bregman_to_star: self.geometry.bregman(&star, w),
            weights: self.keep_vectors.then(|| w.to_vec()),
            gradient: self.keep_vectors.then(|| grad.partials.clone()),
        });
        Ok(grad)
    }
}

fn resolve_eta(model: &KStepModel, config: &OptimizerConfig) -> Result<(f64, Option<f64>)> {
    Ok(match config.step {
        StepSize::Eta(eta) => (eta, None),
        StepSize::Beta(beta) => (1.0 / beta, Some(beta)),
        StepSize::Certified => {
            let beta = certify_smoothness(model, config.method.geometry(), config.probes, config.seed)?;
            (1.0 / beta, Some(beta))
        }
    })
}

fn run(model: &KStepModel, w0: &[f64], config: &OptimizerConfig, eta: f64, beta: Option<f64>) -> Result<DescentTrace> {
    config.validate(model.n_policies())?;
    if config.k != model.k() {
        return Err(Error::InvalidConfig(format!(
            "config asks for k = {} but the model was built for k = {}",
            config.k,
            model.k()
        )));
    }
    check_weights(w0, model.n_policies())?;
    let det_values = model.deterministic_values()?;
    let (mut best_index, best_value) = best_of(det_values);
    if let Some(t) = config.target {
        best_index = t;
    }
    let geometry = config.method.geometry();
    let mut tracker = Tracker {
        model,
        geometry,
        best_index,
        best_value,
        det_values,
        keep_vectors: config.keep_vectors,
        records: Vec::with_capacity(config.max_iters + 1),
    };
    let mut w = match config.method {
        Method::ProjectedGd => w0.to_vec(),
        Method::MirrorEntropy => floor_weights(w0, config.floor),
    };
    let mut grad = tracker.record(&w, 0.0)?;
    let mut stopped_at = None;
    for t in 1..=config.max_iters {
        let next = match config.method {
            Method::ProjectedGd => {
                let step: Vec<f64> = w.iter().zip(&grad.partials).map(|(x, g)| x - eta * g).collect();
                project_to_simplex(&step)
            }
            Method::MirrorEntropy => mirror_step(&w, &grad.partials, eta, config.floor),
        };
        let step_norm = l1_distance(&next, &w);
        let change = match config.method {
            Method::ProjectedGd => step_norm,
            Method::MirrorEntropy => max_log_change(&next, &w),
        };
        w = next;
        grad = tracker.record(&w, step_norm)?;
        if change < config.stop_tol {
            stopped_at = Some(t);
            break;
        }
    }
    Ok(DescentTrace {
        method: config.method,
        k: model.k(),
        eta,
        beta,
        best_index,
        best_value,
        records: tracker.records,
        final_weights: w,
        stopped_at,
    })
}

/// `w_{t+1} = proj(w_t - eta grad_t)`.
pub fn projected_gd_run(model: &KStepModel, w0: &[f64], config: &OptimizerConfig) -> Result<DescentTrace> {
    let config = OptimizerConfig {
        method: Method::ProjectedGd,
        ..config.clone()
    };
    let (eta, beta) = resolve_eta(model, &config)?;
    run(model, w0, &config, eta, beta)
}

/// Multiplicative-weights mirror descent with a weight floor. A start on
/// the boundary is floored into the interior first.
pub fn mirror_descent_run(model: &KStepModel, w0: &[f64], config: &OptimizerConfig) -> Result<DescentTrace> {
    let config = OptimizerConfig {
        method: Method::MirrorEntropy,
        ..config.clone()
    };
    let (eta, beta) = resolve_eta(model, &config)?;
    run(model, w0, &config, eta, beta)
}

/// Runs the configured method. With [`StepSize::Certified`] the estimated
/// beta is doubled until the k-step value never rises by more than `1e-10`.
pub fn descent_run(model: &KStepModel, w0: &[f64], config: &OptimizerConfig) -> Result<DescentTrace> {
    if config.step != StepSize::Certified {
        return match config.method {
            Method::ProjectedGd => projected_gd_run(model, w0, config),
            Method::MirrorEntropy => mirror_descent_run(model, w0, config),
        };
    }
    config.validate(model.n_policies())?;
    let mut beta = certify_smoothness(model, config.method.geometry(), config.probes, config.seed)?;
    const MAX_DOUBLINGS: usize = 60;
    for _ in 0..MAX_DOUBLINGS {
        let trace = run(model, w0, config, 1.0 / beta, Some(beta))?;
        if trace.monotone_violations(MONOTONE_TOL) == 0 {
            return Ok(trace);
        }
        beta *= 2.0;
    }
    Err(Error::InvalidConfig(format!(
        "no monotone step size found after {MAX_DOUBLINGS} doublings"
    )))
}

/// Slack allowed when checking that a trace never goes up.
pub const MONOTONE_TOL: f64 = 1e-10;

/// Convenience wrapper that builds the k-step model from the config.
pub fn descent(
    mdp: &TabularMdp,
    class: &Arc<PolicyClass>,
    w0: &[f64],
    config: &OptimizerConfig,
) -> Result<DescentTrace> {
    let model = KStepModel::new(mdp, Arc::clone(class), config.k)?;
    descent_run(&model, w0, config)
}
