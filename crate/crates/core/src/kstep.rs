//! k-step evaluation: a correlated policy resamples its deterministic policy
//! only at times 0, k, 2k, ..., and runs the sampled policy in between.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{DeterministicPolicy, TabularMdp};
use crate::policy_class::{check_weights, CorrelatedPolicy, PolicyClass};

/// `(P^pi)^k` and the cost collected over the first k steps.
#[derive(Clone, Debug)]
pub struct KStepOperator {
    k: usize,
    p: DMatrix<f64>,
    c: DVector<f64>,
}

impl KStepOperator {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn cost(&self) -> &DVector<f64> {
        &self.c
    }

    /// `c_k + gamma^k P_k j`.
    pub fn backup(&self, j: &DVector<f64>, discount: f64) -> DVector<f64> {
        &self.c + (&self.p * j) * discount
    }
}

pub fn kstep_operator(mdp: &TabularMdp, pi: &DeterministicPolicy, k: usize) -> Result<KStepOperator> {
    if k == 0 {
        return Err(Error::ZeroHorizon);
    }
    pi.check(mdp)?;
    let p1 = mdp.policy_kernel(pi);
    let g = mdp.policy_cost(pi);
    let gamma = mdp.gamma();
    let mut p = p1.clone();
    let mut c = g.clone();
    // invariant: p = (P^pi)^t, c = sum_{u<t} gamma^u (P^pi)^u g
    let mut scale = 1.0;
    for _ in 1..k {
        scale *= gamma;
        c += (&p * &g) * scale;
        p = &p * &p1;
    }
    Ok(KStepOperator { k, p, c })
}

/// Which occupancy weights the per-state advantages in a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyWeighting {
    /// Ordinary discounted occupancy of the base policy (resampling every step).
    #[default]
    OneStep,
    /// Occupancy at the resampling times 0, k, 2k, ...
    KStep,
}

/// Per-policy k-step operators for a whole class, built once and shared.
#[derive(Clone, Debug)]
pub struct KStepModel {
    mdp: TabularMdp,
    class: Arc<PolicyClass>,
    k: usize,
    discount: f64,
    ops: Vec<KStepOperator>,
    det_values: OnceLock<Vec<f64>>,
}

impl KStepModel {
    pub fn new(mdp: &TabularMdp, class: Arc<PolicyClass>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroHorizon);
        }
        class.check(mdp)?;
        let ops = class
            .policies()
            .par_iter()
            .map(|pi| kstep_operator(mdp, pi, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(KStepModel {
            mdp: mdp.clone(),
            class,
            k,
            discount: mdp.gamma().powi(k as i32),
            ops,
            det_values: OnceLock::new(),
        })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn class(&self) -> &Arc<PolicyClass> {
        &self.class
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `gamma^k`.
    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn operator(&self, index: usize) -> &KStepOperator {
        &self.ops[index]
    }

    pub fn n_policies(&self) -> usize {
        self.ops.len()
    }

    /// `(sum_i w_i P_k^i, sum_i w_i c_k^i)`.
    pub fn mixed(&self, weights: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        check_weights(weights, self.ops.len())?;
        let n = self.mdp.n_states();
        let mut p = DMatrix::zeros(n, n);
        let mut c = DVector::zeros(n);
        for (op, &w) in self.ops.iter().zip(weights) {
            if w != 0.0 {
                p += &op.p * w;
                c += &op.c * w;
            }
        }
        Ok((p, c))
    }

    pub fn evaluate(&self, weights: &[f64]) -> Result<KStepEvaluation> {
        let (p_bar, c_bar) = self.mixed(weights)?;
        let values = linalg::solve_fixed_point(&p_bar, &c_bar, self.discount, "k-step value")?;
        let occupancy =
            linalg::discounted_occupancy(&p_bar, self.mdp.mu(), self.discount, "k-step occupancy")?;
        let value_at_mu = self.mdp.mu().dot(&values);
        Ok(KStepEvaluation {
            k: self.k,
            discount: self.discount,
            weights: weights.to_vec(),
            p_bar,
            c_bar,
            values,
            value_at_mu,
            occupancy,
        })
    }

    /// `J^{w,k}(mu)` without computing the occupancy.
    pub fn value_at_mu(&self, weights: &[f64]) -> Result<f64> {
        let (p_bar, c_bar) = self.mixed(weights)?;
        let j = linalg::solve_fixed_point(&p_bar, &c_bar, self.discount, "k-step value")?;
        Ok(self.mdp.mu().dot(&j))
    }

    /// `Q(., pi_i)` for a class member given the base value vector.
    pub fn q_member(&self, index: usize, values: &DVector<f64>) -> DVector<f64> {
        self.ops[index].backup(values, self.discount)
    }

    /// `E_{s~d}[Q(s, pi_i)]` for every member, the core of the gradient.
    pub fn weighted_q(&self, eval: &KStepEvaluation) -> Vec<f64> {
        self.ops
            .iter()
            .map(|op| {
                let pj = &op.p * &eval.values;
                eval.occupancy.dot(&op.c) + self.discount * eval.occupancy.dot(&pj)
            })
            .collect()
    }

    /// `J^pi(mu)` of every class member, computed once.
    pub fn deterministic_values(&self) -> Result<&[f64]> {
        if let Some(v) = self.det_values.get() {
            return Ok(v);
        }
        let values = self
            .class
            .policies()
            .par_iter()
            .map(|pi| self.mdp.policy_value(pi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.det_values.get_or_init(|| values))
    }

    /// `E_{pi~w}[J^pi(mu)]`, the value of deploying one sampled policy forever.
    pub fn expected_one_step_value(&self, weights: &[f64]) -> Result<f64> {
        check_weights(weights, self.ops.len())?;
        let values = self.deterministic_values()?;
        Ok(weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    pub fn advantage_table(
        &self,
        weights: &[f64],
        weighting: OccupancyWeighting,
    ) -> Result<AdvantageTable> {
        let eval = self.evaluate(weights)?;
        let occupancy = match weighting {
            OccupancyWeighting::KStep => eval.occupancy.clone(),
            OccupancyWeighting::OneStep if self.k == 1 => eval.occupancy.clone(),
            OccupancyWeighting::OneStep => {
                KStepModel::new(&self.mdp, Arc::clone(&self.class), 1)?
                    .evaluate(weights)?
                    .occupancy
            }
        };
        let n = self.mdp.n_states();
        let m = self.ops.len();
        let mut advantages = DMatrix::zeros(m, n);
        let mut weighted = Vec::with_capacity(m);
        for i in 0..m {
            let adv = self.q_member(i, &eval.values) - &eval.values;
            weighted.push(occupancy.dot(&adv));
            advantages.set_row(i, &adv.transpose());
        }
        Ok(AdvantageTable {
            k: self.k,
            weighting,
            state_labels: (0..n).map(|s| self.mdp.state_label(s)).collect(),
            policy_labels: self.class.labels().to_vec(),
            values: eval.values,
            occupancy,
            advantages,
            weighted,
        })
    }
}

/// Exact k-step quantities for one correlated policy.
#[derive(Clone, Debug)]
pub struct KStepEvaluation {
    k: usize,
    discount: f64,
    weights: Vec<f64>,
    p_bar: DMatrix<f64>,
    c_bar: DVector<f64>,
    values: DVector<f64>,
    value_at_mu: f64,
    occupancy: DVector<f64>,
}

impl KStepEvaluation {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mixed_transition(&self) -> &DMatrix<f64> {
        &self.p_bar
    }

    pub fn mixed_cost(&self) -> &DVector<f64> {
        &self.c_bar
    }

    /// `J^{w,k}` per state.
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn value_at_mu(&self) -> f64 {
        self.value_at_mu
    }

    /// `d_mu^{w,k}`.
    pub fn occupancy(&self) -> &DVector<f64> {
        &self.occupancy
    }

    /// `max_s |J - c_bar - gamma^k P_bar J|`.
    pub fn bellman_residual(&self) -> f64 {
        let rhs = &self.c_bar + (&self.p_bar * &self.values) * self.discount;
        (&self.values - rhs).amax()
    }
}

/// `A^k[policy][state]` with the occupancy-weighted column.
#[derive(Clone, Debug, Serialize)]
pub struct AdvantageTable {
    pub k: usize,
    pub weighting: OccupancyWeighting,
    pub state_labels: Vec<String>,
    pub policy_labels: Vec<String>,
    #[serde(serialize_with = "ser_vector")]
    pub values: DVector<f64>,
    #[serde(serialize_with = "ser_vector")]
    pub occupancy: DVector<f64>,
    #[serde(serialize_with = "ser_rows")]
    pub advantages: DMatrix<f64>,
    pub weighted: Vec<f64>,
}

fn ser_vector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

fn ser_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()))
}

impl AdvantageTable {
    pub fn weighted_for(&self, label: &str) -> Result<f64> {
        let i = self.row_of(label)?;
        Ok(self.weighted[i])
    }

    pub fn row_of(&self, label: &str) -> Result<usize> {
        self.policy_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownPolicy(label.to_string()))
    }

    pub fn advantage(&self, label: &str, state: usize) -> Result<f64> {
        Ok(self.advantages[(self.row_of(label)?, state)])
    }

    /// Index and value of the most negative weighted advantage.
    pub fn worst(&self) -> (usize, f64) {
        self.weighted
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["policy".to_string()];
        header.extend(self.state_labels.iter().cloned());
        header.push("weighted".into());
        w.write_record(&header)?;
        for (i, label) in self.policy_labels.iter().enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend(self.advantages.row(i).iter().map(|&v| fmt_num(v)));
            rec.push(fmt_num(self.weighted[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Fixed six-decimal formatting with negative zero folded to zero.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn kstep_value(mdp: &TabularMdp, pi: &CorrelatedPolicy, k: usize) -> Result<DVector<f64>> {
    Ok(KStepModel::new(mdp, Arc::clone(pi.class()), k)?
        .evaluate(pi.weights())?
        .values)
}

/// `Q^{pi,k}(., pi_prime) = c_k^{pi'} + gamma^k P_k^{pi'} J^{pi,k}`.
pub fn kstep_q(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    k: usize,
    pi_prime: &DeterministicPolicy,
) -> Result<DVector<f64>> {
    let j = kstep_value(mdp, pi, k)?;
    let op = kstep_operator(mdp, pi_prime, k)?;
    Ok(op.backup(&j, mdp.gamma().powi(k as i32)))
}

/// `Q^{pi,k}(., target) = sum_i w'_i Q^{pi,k}(., pi_i)`.
pub fn kstep_q_correlated(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    k: usize,
    target: &CorrelatedPolicy,
) -> Result<DVector<f64>> {
    same_class(pi, target)?;
    let model = KStepModel::new(mdp, Arc::clone(pi.class()), k)?;
    let j = model.evaluate(pi.weights())?.values;
    let mut q = DVector::zeros(mdp.n_states());
    for (i, &w) in target.weights().iter().enumerate() {
        if w != 0.0 {
            q += model.q_member(i, &j) * w;
        }
    }
    Ok(q)
}

pub fn kstep_occupancy(mdp: &TabularMdp, pi: &CorrelatedPolicy, k: usize) -> Result<DVector<f64>> {
    Ok(KStepModel::new(mdp, Arc::clone(pi.class()), k)?
        .evaluate(pi.weights())?
        .occupancy)
}

pub fn kstep_advantage_table(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    k: usize,
    weighting: OccupancyWeighting,
) -> Result<AdvantageTable> {
    KStepModel::new(mdp, Arc::clone(pi.class()), k)?.advantage_table(pi.weights(), weighting)
}

pub(crate) fn same_class(a: &CorrelatedPolicy, b: &CorrelatedPolicy) -> Result<()> {
    if Arc::ptr_eq(a.class(), b.class()) || a.class() == b.class() {
        Ok(())
    } else {
        Err(Error::InvalidWeights("policies belong to different classes".into()))
    }
}

/// What a Monte-Carlo rollout estimates.
#[derive(Clone, Debug, PartialEq)]
pub enum McMode {
    /// `J^{pi,k}(mu)`.
    Value,
    /// `E_{s~mu} Q^{pi,k}(s, pi_prime)`.
    Q(DeterministicPolicy),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_rollouts: usize,
    /// Explicit truncation horizon; derived from `eps_trunc` when absent.
    pub horizon: Option<usize>,
    pub eps_trunc: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_rollouts: 10_000,
            horizon: None,
            eps_trunc: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
    pub horizon: usize,
}

/// Smallest `H` with `gamma^H g_max / (1 - gamma) < eps`.
pub fn truncation_horizon(gamma: f64, g_max: f64, eps: f64) -> usize {
    if g_max <= 0.0 {
        return 1;
    }
    let h = ((eps * (1.0 - gamma) / g_max).ln() / gamma.ln()).floor() + 1.0;
    h.max(1.0) as usize
}

/// Plain Monte-Carlo estimate under k-step rollout semantics. Rollout `i`
/// uses its own ChaCha stream `i` of the root seed, so results do not depend
/// on the thread count.
pub fn mc_estimate(
    mdp: &TabularMdp,
    pi: &CorrelatedPolicy,
    k: usize,
    mode: &McMode,
    config: &McConfig,
) -> Result<McEstimate> {
    if k == 0 {
        return Err(Error::ZeroHorizon);
    }
    if config.n_rollouts == 0 {
        return Err(Error::InvalidConfig("n_rollouts must be at least 1".into()));
    }
    if let McMode::Q(p) = mode {
        p.check(mdp)?;
    }
    let horizon = config
        .horizon
        .unwrap_or_else(|| truncation_horizon(mdp.gamma(), mdp.g_max(), config.eps_trunc));
    let chooser = WeightedIndex::new(pi.weights())
        .map_err(|e| Error::InvalidWeights(e.to_string()))?;
    let start = WeightedIndex::new(mdp.mu().iter().copied())
        .map_err(|e| Error::InitialDistribution(e.to_string()))?;
    let returns: Vec<f64> = (0..config.n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            rollout(mdp, pi.class(), &chooser, &start, k, mode, horizon, &mut rng)
        })
        .collect();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_rollouts: config.n_rollouts,
        horizon,
    })
}

#[allow(clippy::too_many_arguments)]
fn rollout<R: Rng>(
    mdp: &TabularMdp,
    class: &PolicyClass,
    chooser: &WeightedIndex<f64>,
    start: &WeightedIndex<f64>,
    k: usize,
    mode: &McMode,
    horizon: usize,
    rng: &mut R,
) -> f64 {
    let gamma = mdp.gamma();
    let mut s = start.sample(rng);
    let mut total = 0.0;
    let mut scale = 1.0;
    let mut current: &DeterministicPolicy = class.policy(0);
    for t in 0..horizon {
        if t % k == 0 {
            current = match (t, mode) {
                (0, McMode::Q(p)) => p,
                _ => class.policy(chooser.sample(rng)),
            };
        }
        let a = current.action(s);
        total += scale * mdp.cost(s, a);
        scale *= gamma;
        s = next_state(mdp, s, a, rng);
    }
    total
}

fn next_state<R: Rng>(mdp: &TabularMdp, s: usize, a: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let kernel = mdp.action_kernel(a);
    let n = mdp.n_states();
    let mut acc = 0.0;
    for s2 in 0..n {
        acc += kernel[(s, s2)];
        if u < acc {
            return s2;
        }
    }
    // rounding left a sliver of mass at the top; take the last reachable state
    (0..n).rev().find(|&s2| kernel[(s, s2)] > 0.0).unwrap_or(n - 1)
}
