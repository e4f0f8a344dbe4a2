//! Finite MDPs and exact evaluation of deterministic policies.
//!
//! Costs are indexed by `(state, action)` and collected at every step,
//! including `t = 0`, with weight `gamma^t`. The objective is minimised.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const PROB_TOL: f64 = 1e-12;

/// A deterministic policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        DeterministicPolicy(actions)
    }

    /// The policy taking `action` in every one of `n_states` states.
    pub fn constant(n_states: usize, action: usize) -> Self {
        DeterministicPolicy(vec![action; n_states])
    }

    #[inline]
    pub fn action(&self, state: usize) -> usize {
        self.0[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks the policy is total over the MDP's states and uses valid actions.
    pub fn check(&self, mdp: &TabularMdp) -> Result<()> {
        if self.0.len() != mdp.n_states() {
            return Err(Error::Dimension {
                what: "policy length",
                expected: mdp.n_states(),
                found: self.0.len(),
            });
        }
        if let Some((s, &a)) = self.0.iter().enumerate().find(|(_, &a)| a >= mdp.n_actions()) {
            return Err(Error::InvalidPolicy(format!(
                "action {a} at state {s} out of range (n_actions = {})",
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for DeterministicPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "]")
    }
}

/// JSON layout of an MDP file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<f64>>,
    pub gamma: f64,
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<String>>,
}

/// Finite discounted MDP with a uniform action set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// One `n_states x n_states` row-stochastic matrix per action.
    transition: Vec<DMatrix<f64>>,
    /// `n_states x n_actions`
    cost: DMatrix<f64>,
    gamma: f64,
    mu: DVector<f64>,
    g_max: f64,
    state_labels: Option<Vec<String>>,
    action_labels: Option<Vec<String>>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let (n, m) = (doc.n_states, doc.n_actions);
        if n == 0 || m == 0 {
            return Err(Error::Dimension {
                what: "state/action count",
                expected: 1,
                found: 0,
            });
        }
        expect_len("transition", n, doc.transition.len())?;
        let mut transition = vec![DMatrix::zeros(n, n); m];
        for (s, per_action) in doc.transition.iter().enumerate() {
            expect_len("transition[s]", m, per_action.len())?;
            for (a, row) in per_action.iter().enumerate() {
                expect_len("transition[s][a]", n, row.len())?;
                for (s2, &p) in row.iter().enumerate() {
                    transition[a][(s, s2)] = p;
                }
            }
        }
        expect_len("cost", n, doc.cost.len())?;
        let mut cost = DMatrix::zeros(n, m);
        for (s, row) in doc.cost.iter().enumerate() {
            expect_len("cost[s]", m, row.len())?;
            for (a, &c) in row.iter().enumerate() {
                cost[(s, a)] = c;
            }
        }
        expect_len("mu", n, doc.mu.len())?;
        if let Some(labels) = &doc.state_labels {
            expect_len("state_labels", n, labels.len())?;
        }
        if let Some(labels) = &doc.action_labels {
            expect_len("action_labels", m, labels.len())?;
        }
        let g_max = doc
            .g_max
            .unwrap_or_else(|| cost.iter().fold(0.0_f64, |acc, c| acc.max(c.abs())));
        let mdp = TabularMdp {
            n_states: n,
            n_actions: m,
            transition,
            cost,
            gamma: doc.gamma,
            mu: DVector::from_vec(doc.mu),
            g_max,
            state_labels: doc.state_labels,
            action_labels: doc.action_labels,
        };
        mdp.validate()?;
        Ok(mdp)
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(mdp: TabularMdp) -> Self {
        let (n, m) = (mdp.n_states, mdp.n_actions);
        MdpDocument {
            n_states: n,
            n_actions: m,
            transition: (0..n)
                .map(|s| {
                    (0..m)
                        .map(|a| (0..n).map(|s2| mdp.transition[a][(s, s2)]).collect())
                        .collect()
                })
                .collect(),
            cost: (0..n).map(|s| (0..m).map(|a| mdp.cost[(s, a)]).collect()).collect(),
            gamma: mdp.gamma,
            mu: mdp.mu.iter().copied().collect(),
            g_max: Some(mdp.g_max),
            state_labels: mdp.state_labels,
            action_labels: mdp.action_labels,
        }
    }
}

fn expect_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, found })
    }
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition[s][a][s']`, `cost[s][a]`.
    /// When `g_max` is `None` it defaults to `max |g|`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        cost: Vec<Vec<f64>>,
        gamma: f64,
        mu: Vec<f64>,
        g_max: Option<f64>,
    ) -> Result<Self> {
        let n = transition.len();
        let m = transition.first().map_or(0, Vec::len);
        MdpDocument {
            n_states: n,
            n_actions: m,
            transition,
            cost,
            gamma,
            mu,
            g_max,
            state_labels: None,
            action_labels: None,
        }
        .try_into()
    }

    /// Builds an MDP with deterministic dynamics `next[s][a]`.
    pub fn deterministic(
        next: &[Vec<usize>],
        cost: Vec<Vec<f64>>,
        gamma: f64,
        mu: Vec<f64>,
        g_max: Option<f64>,
    ) -> Result<Self> {
        let n = next.len();
        let mut transition = Vec::with_capacity(n);
        for (s, row) in next.iter().enumerate() {
            let mut per_action = Vec::with_capacity(row.len());
            for (a, &s2) in row.iter().enumerate() {
                if s2 >= n {
                    return Err(Error::InvalidPolicy(format!(
                        "successor {s2} of (s={s},a={a}) out of range (n_states = {n})"
                    )));
                }
                let mut p = vec![0.0; n];
                p[s2] = 1.0;
                per_action.push(p);
            }
            transition.push(per_action);
        }
        Self::new(transition, cost, gamma, mu, g_max)
    }

    pub fn with_state_labels(mut self, labels: Vec<String>) -> Result<Self> {
        expect_len("state_labels", self.n_states, labels.len())?;
        self.state_labels = Some(labels);
        Ok(self)
    }

    pub fn with_action_labels(mut self, labels: Vec<String>) -> Result<Self> {
        expect_len("action_labels", self.n_actions, labels.len())?;
        self.action_labels = Some(labels);
        Ok(self)
    }

    /// Same dynamics and costs with a different initial distribution.
    pub fn with_mu(&self, mu: Vec<f64>) -> Result<Self> {
        expect_len("mu", self.n_states, mu.len())?;
        let mut out = self.clone();
        out.mu = DVector::from_vec(mu);
        out.validate()?;
        Ok(out)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Gamma(self.gamma));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition[a].row(s);
                let mut sum = 0.0;
                for (s2, &p) in row.iter().enumerate() {
                    if !p.is_finite() {
                        return Err(Error::NonFinite("transition"));
                    }
                    if p < 0.0 {
                        return Err(Error::NegativeProbability {
                            state: s,
                            action: a,
                            next: s2,
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(Error::TransitionRow { state: s, action: a, sum });
                }
            }
        }
        if self.mu.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("mu"));
        }
        if let Some((s, p)) = self.mu.iter().enumerate().find(|(_, &p)| p < 0.0) {
            return Err(Error::InitialDistribution(format!("mu[{s}] = {p} is negative")));
        }
        let total: f64 = self.mu.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InitialDistribution(format!("mu sums to {total}")));
        }
        if !self.g_max.is_finite() || self.g_max < 0.0 {
            return Err(Error::NonFinite("g_max"));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let c = self.cost[(s, a)];
                if !c.is_finite() {
                    return Err(Error::NonFinite("cost"));
                }
                if c.abs() > self.g_max {
                    return Err(Error::CostBound {
                        state: s,
                        action: a,
                        cost: c,
                        g_max: self.g_max,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    #[inline]
    pub fn cost(&self, state: usize, action: usize) -> f64 {
        self.cost[(state, action)]
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition[action][(state, next)]
    }

    /// Transition matrix of a single action.
    pub fn action_kernel(&self, action: usize) -> &DMatrix<f64> {
        &self.transition[action]
    }

    pub fn state_labels(&self) -> Option<&[String]> {
        self.state_labels.as_deref()
    }

    pub fn action_labels(&self) -> Option<&[String]> {
        self.action_labels.as_deref()
    }

    /// Label of a state, falling back to its index.
    pub fn state_label(&self, state: usize) -> String {
        self.state_labels
            .as_ref()
            .map_or_else(|| state.to_string(), |l| l[state].clone())
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        match &self.state_labels {
            Some(labels) => labels.iter().position(|l| l == label),
            None => label.parse().ok().filter(|&s| s < self.n_states),
        }
    }

    /// State transition matrix `P^pi`.
    pub fn policy_kernel(&self, pi: &DeterministicPolicy) -> DMatrix<f64> {
        let n = self.n_states;
        DMatrix::from_fn(n, n, |s, s2| self.transition[pi.action(s)][(s, s2)])
    }

    /// Cost vector `g^pi`.
    pub fn policy_cost(&self, pi: &DeterministicPolicy) -> DVector<f64> {
        DVector::from_fn(self.n_states, |s, _| self.cost[(s, pi.action(s))])
    }

    /// Exact value vector `J^pi` from `(I - gamma P^pi) J = g^pi`.
    pub fn evaluate_policy(&self, pi: &DeterministicPolicy) -> Result<DVector<f64>> {
        pi.check(self)?;
        linalg::solve_fixed_point(
            &self.policy_kernel(pi),
            &self.policy_cost(pi),
            self.gamma,
            "policy evaluation",
        )
    }

    /// `J^pi(mu)`.
    pub fn policy_value(&self, pi: &DeterministicPolicy) -> Result<f64> {
        Ok(self.mu.dot(&self.evaluate_policy(pi)?))
    }

    /// One-step Q-values `Q^pi[s][a] = g(s,a) + gamma sum_s' P(s'|s,a) J^pi(s')`.
    pub fn q_values(&self, pi: &DeterministicPolicy) -> Result<DMatrix<f64>> {
        let j = self.evaluate_policy(pi)?;
        Ok(self.q_from_values(&j))
    }

    /// One-step lookahead on an arbitrary value vector.
    pub fn q_from_values(&self, j: &DVector<f64>) -> DMatrix<f64> {
        let mut q = self.cost.clone();
        for a in 0..self.n_actions {
            let next = &self.transition[a] * j;
            for s in 0..self.n_states {
                q[(s, a)] += self.gamma * next[s];
            }
        }
        q
    }

    /// Normalised discounted state occupancy `d_mu^pi`.
    pub fn occupancy(&self, pi: &DeterministicPolicy) -> Result<DVector<f64>> {
        pi.check(self)?;
        linalg::discounted_occupancy(&self.policy_kernel(pi), &self.mu, self.gamma, "occupancy")
    }

    /// Random MDP with dense Dirichlet-like rows and costs uniform in `[-g_max, g_max]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        g_max: f64,
    ) -> Result<Self> {
        let simplex = |rng: &mut R, n: usize| -> Vec<f64> {
            // exponential spacings give a uniform point on the simplex
            let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let total: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // absorb rounding into the largest entry
            let err = 1.0 - p.iter().sum::<f64>();
            let imax = (0..n).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap_or(0);
            p[imax] += err;
            p
        };
        let transition = (0..n_states)
            .map(|_| (0..n_actions).map(|_| simplex(rng, n_states)).collect())
            .collect();
        let cost = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| g_max * (2.0 * rng.random::<f64>() - 1.0))
                    .collect()
            })
            .collect();
        let mu = simplex(rng, n_states);
        Self::new(transition, cost, gamma, mu, Some(g_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state() -> TabularMdp {
        // s_L = 0, s_R = 1; action L = 0, R = 1
        TabularMdp::deterministic(
            &[vec![0, 1], vec![0, 1]],
            vec![vec![1.0, 2.0], vec![2.0, 0.0]],
            0.8,
            vec![0.6, 0.4],
            None,
        )
        .unwrap()
    }

    #[test]
    fn two_state_is_valid() {
        let mdp = two_state();
        assert!(mdp.validate().is_ok());
        assert_eq!(mdp.g_max(), 2.0);
    }

    #[test]
    fn short_row_is_rejected() {
        let err = TabularMdp::new(
            vec![vec![vec![1.0, 0.0], vec![0.9, 0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            0.9,
            vec![1.0, 0.0],
            None,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "row (s=0,a=1) sums to 0.9");
    }

    #[test]
    fn gamma_one_is_rejected() {
        let err = TabularMdp::deterministic(
            &[vec![0]],
            vec![vec![1.0]],
            1.0,
            vec![1.0],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("gamma out of (0,1)"));
    }

    #[test]
    fn cost_above_bound_is_rejected() {
        let err = TabularMdp::deterministic(&[vec![0]], vec![vec![3.0]], 0.5, vec![1.0], Some(2.0))
            .unwrap_err();
        assert!(matches!(err, Error::CostBound { .. }));
    }

    #[test]
    fn bad_mu_is_rejected() {
        let err = TabularMdp::deterministic(&[vec![0]], vec![vec![3.0]], 0.5, vec![0.5], None)
            .unwrap_err();
        assert!(matches!(err, Error::InitialDistribution(_)));
    }

    #[test]
    fn two_state_pi_r_values() {
        let mdp = two_state();
        let j = mdp.evaluate_policy(&DeterministicPolicy::constant(2, 1)).unwrap();
        assert_abs_diff_eq!(j[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mdp.policy_value(&DeterministicPolicy::constant(2, 0)).unwrap(), 5.4, epsilon = 1e-12);
    }

    #[test]
    fn zero_cost_gives_zero_value() {
        let mdp = TabularMdp::deterministic(
            &[vec![1, 0], vec![0, 1]],
            vec![vec![0.0; 2]; 2],
            0.95,
            vec![0.5, 0.5],
            None,
        )
        .unwrap();
        let j = mdp.evaluate_policy(&DeterministicPolicy::new(vec![0, 1])).unwrap();
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_on_policy_matches_value() {
        let mut rng = rand::rng();
        let mdp = TabularMdp::random(&mut rng, 5, 3, 0.9, 4.0).unwrap();
        let pi = DeterministicPolicy::new(vec![0, 2, 1, 1, 0]);
        let j = mdp.evaluate_policy(&pi).unwrap();
        let q = mdp.q_values(&pi).unwrap();
        for s in 0..5 {
            assert_abs_diff_eq!(q[(s, pi.action(s))], j[s], epsilon = 1e-10);
        }
    }

    #[test]
    fn absorbing_start_has_dirac_occupancy() {
        let mdp = TabularMdp::deterministic(
            &[vec![0, 0], vec![0, 1]],
            vec![vec![1.0, 1.0], vec![0.0, 0.0]],
            0.7,
            vec![1.0, 0.0],
            None,
        )
        .unwrap();
        let d = mdp.occupancy(&DeterministicPolicy::new(vec![1, 1])).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wrong_length_policy_is_rejected() {
        let mdp = two_state();
        assert!(mdp.evaluate_policy(&DeterministicPolicy::new(vec![0])).is_err());
        assert!(mdp.evaluate_policy(&DeterministicPolicy::new(vec![0, 2])).is_err());
    }

    #[test]
    fn json_round_trip_and_default_g_max() {
        let text = r#"{"n_states":2,"n_actions":2,
            "transition":[[[1,0],[0,1]],[[1,0],[0,1]]],
            "cost":[[1,2],[2,0]],"gamma":0.8,"mu":[0.6,0.4],
            "state_labels":["sL","sR"]}"#;
        let mdp = TabularMdp::from_json_str(text).unwrap();
        assert_eq!(mdp.g_max(), 2.0);
        assert_eq!(mdp.state_index("sR"), Some(1));
        let back = TabularMdp::from_json_str(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(back.cost(1, 0), 2.0);
        assert_eq!(back.state_labels().unwrap()[0], "sL");
    }

    #[test]
    fn json_with_bad_gamma_fails_to_load() {
        let text = r#"{"n_states":1,"n_actions":1,"transition":[[[1]]],
            "cost":[[0]],"gamma":1.0,"mu":[1]}"#;
        assert!(TabularMdp::from_json_str(text).is_err());
    }
}
