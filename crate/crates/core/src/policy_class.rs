//! Enumerated restricted classes of deterministic policies and correlated
//! policies (distributions over a class).
//!
//! Every constructor enumerates its class in a fixed lexicographic order:
//! the class is a product of independent *components* (one per observation,
//! per agent, or per group view), the first component is the most
//! significant digit, and each component lists its admissible actions in
//! increasing index order. Duplicate action vectors are dropped, keeping the
//! first occurrence.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{DeterministicPolicy, TabularMdp};

/// Default bound on the number of enumerated policies.
pub const DEFAULT_CLASS_CAP: usize = 1_000_000;

const WEIGHT_TOL: f64 = 1e-10;

/// Maps each state to an observation id; ids are contiguous from 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ObservationMap {
    obs_of: Vec<usize>,
    n_obs: usize,
}

impl TryFrom<Vec<usize>> for ObservationMap {
    type Error = Error;

    fn try_from(obs_of: Vec<usize>) -> Result<Self> {
        ObservationMap::new(obs_of)
    }
}

impl From<ObservationMap> for Vec<usize> {
    fn from(map: ObservationMap) -> Self {
        map.obs_of
    }
}

impl ObservationMap {
    pub fn new(obs_of: Vec<usize>) -> Result<Self> {
        if obs_of.is_empty() {
            return Err(Error::InvalidObservationMap("empty map".into()));
        }
        let n_obs = obs_of.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_obs];
        for &o in &obs_of {
            seen[o] = true;
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::InvalidObservationMap(format!(
                "observation ids must be contiguous from 0; id {missing} is unused"
            )));
        }
        Ok(ObservationMap { obs_of, n_obs })
    }

    /// Every state observes itself.
    pub fn identity(n_states: usize) -> Self {
        ObservationMap {
            obs_of: (0..n_states).collect(),
            n_obs: n_states,
        }
    }

    /// Every state produces the same observation.
    pub fn constant(n_states: usize) -> Self {
        ObservationMap {
            obs_of: vec![0; n_states],
            n_obs: 1,
        }
    }

    #[inline]
    pub fn obs(&self, state: usize) -> usize {
        self.obs_of[state]
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_states(&self) -> usize {
        self.obs_of.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.obs_of
    }
}

/// Product structure `S = S_1 x ... x S_n`, `A = A_1 x ... x A_n` with a
/// row-major bijection (agent 0 is the most significant digit).
///
/// Agents may optionally restrict which local actions are admissible in each
/// local state; this is how boundary positions with fewer distinct moves are
/// expressed while keeping a uniform joint action set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactoredSpace {
    state_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    admissible: Option<Vec<Vec<Vec<usize>>>>,
}

impl FactoredSpace {
    pub fn new(state_sizes: Vec<usize>, action_sizes: Vec<usize>) -> Result<Self> {
        if state_sizes.is_empty() || state_sizes.len() != action_sizes.len() {
            return Err(Error::InvalidFactorization(format!(
                "need one state and one action size per agent, got {} and {}",
                state_sizes.len(),
                action_sizes.len()
            )));
        }
        if state_sizes.iter().chain(&action_sizes).any(|&n| n == 0) {
            return Err(Error::InvalidFactorization("factor sizes must be positive".into()));
        }
        Ok(FactoredSpace {
            state_sizes,
            action_sizes,
            admissible: None,
        })
    }

    /// `admissible[agent][local_state]` lists the local actions the agent may
    /// choose in that local state.
    pub fn with_admissible_actions(mut self, admissible: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if admissible.len() != self.n_agents() {
            return Err(Error::InvalidFactorization(format!(
                "admissible actions given for {} agents, expected {}",
                admissible.len(),
                self.n_agents()
            )));
        }
        for (i, per_state) in admissible.iter().enumerate() {
            if per_state.len() != self.state_sizes[i] {
                return Err(Error::InvalidFactorization(format!(
                    "agent {i}: admissible actions for {} local states, expected {}",
                    per_state.len(),
                    self.state_sizes[i]
                )));
            }
            for (x, acts) in per_state.iter().enumerate() {
                if acts.is_empty() {
                    return Err(Error::InvalidFactorization(format!(
                        "agent {i} has no admissible action in local state {x}"
                    )));
                }
                if acts.iter().any(|&a| a >= self.action_sizes[i]) {
                    return Err(Error::InvalidFactorization(format!(
                        "agent {i} local state {x}: admissible action out of range"
                    )));
                }
            }
        }
        self.admissible = Some(
            admissible
                .into_iter()
                .map(|per_state| {
                    per_state
                        .into_iter()
                        .map(|mut acts| {
                            acts.sort_unstable();
                            acts.dedup();
                            acts
                        })
                        .collect()
                })
                .collect(),
        );
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.state_sizes.len()
    }

    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    pub fn action_sizes(&self) -> &[usize] {
        &self.action_sizes
    }

    pub fn n_joint_states(&self) -> usize {
        self.state_sizes.iter().product()
    }

    pub fn n_joint_actions(&self) -> usize {
        self.action_sizes.iter().product()
    }

    pub fn state_tuple(&self, index: usize) -> Vec<usize> {
        unrank(index, &self.state_sizes)
    }

    pub fn state_index(&self, tuple: &[usize]) -> usize {
        rank(tuple, &self.state_sizes)
    }

    pub fn action_tuple(&self, index: usize) -> Vec<usize> {
        unrank(index, &self.action_sizes)
    }

    pub fn action_index(&self, tuple: &[usize]) -> usize {
        rank(tuple, &self.action_sizes)
    }

    /// Admissible local actions of `agent` in `local_state`.
    pub fn admissible(&self, agent: usize, local_state: usize) -> Vec<usize> {
        match &self.admissible {
            Some(adm) => adm[agent][local_state].clone(),
            None => (0..self.action_sizes[agent]).collect(),
        }
    }

    fn check(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_joint_states() != mdp.n_states() {
            return Err(Error::InvalidFactorization(format!(
                "product of state factors is {}, MDP has {} states",
                self.n_joint_states(),
                mdp.n_states()
            )));
        }
        if self.n_joint_actions() != mdp.n_actions() {
            return Err(Error::InvalidFactorization(format!(
                "product of action factors is {}, MDP has {} actions",
                self.n_joint_actions(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

fn unrank(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, &n) in out.iter_mut().zip(sizes).rev() {
        *slot = index % n;
        index /= n;
    }
    out
}

fn rank(tuple: &[usize], sizes: &[usize]) -> usize {
    tuple.iter().zip(sizes).fold(0, |acc, (&x, &n)| acc * n + x)
}

/// For each joint state, a partition of the agents into groups that share
/// their local states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingFunction {
    partitions: Vec<Vec<Vec<usize>>>,
}

impl GroupingFunction {
    pub fn new(partitions: Vec<Vec<Vec<usize>>>, n_agents: usize) -> Result<Self> {
        let mut normalised = Vec::with_capacity(partitions.len());
        for (s, partition) in partitions.into_iter().enumerate() {
            let mut seen = vec![false; n_agents];
            let mut groups = Vec::with_capacity(partition.len());
            for mut group in partition {
                if group.is_empty() {
                    return Err(Error::InvalidGrouping(format!("empty group at state {s}")));
                }
                group.sort_unstable();
                for &i in &group {
                    if i >= n_agents {
                        return Err(Error::InvalidGrouping(format!(
                            "agent {i} out of range at state {s}"
                        )));
                    }
                    if seen[i] {
                        return Err(Error::InvalidGrouping(format!(
                            "agent {i} appears twice at state {s}"
                        )));
                    }
                    seen[i] = true;
                }
                groups.push(group);
            }
            if let Some(i) = seen.iter().position(|&b| !b) {
                return Err(Error::InvalidGrouping(format!("agent {i} not covered at state {s}")));
            }
            groups.sort();
            normalised.push(groups);
        }
        Ok(GroupingFunction {
            partitions: normalised,
        })
    }

    /// The same partition at every state.
    pub fn uniform(partition: Vec<Vec<usize>>, n_states: usize, n_agents: usize) -> Result<Self> {
        Self::new(vec![partition; n_states], n_agents)
    }

    pub fn groups(&self, state: usize) -> &[Vec<usize>] {
        &self.partitions[state]
    }

    pub fn n_states(&self) -> usize {
        self.partitions.len()
    }
}

/// An explicitly enumerated, duplicate-free, nonempty set of deterministic
/// policies with one label per policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyClass {
    policies: Vec<DeterministicPolicy>,
    labels: Vec<String>,
}

impl PolicyClass {
    /// Builds a class from explicit policies. Missing labels default to the
    /// action vector. Duplicates are rejected.
    pub fn new(policies: Vec<DeterministicPolicy>, labels: Option<Vec<String>>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::EmptyClass);
        }
        let n = policies[0].len();
        if let Some(p) = policies.iter().find(|p| p.len() != n) {
            return Err(Error::Dimension {
                what: "policy length",
                expected: n,
                found: p.len(),
            });
        }
        let mut seen = HashSet::with_capacity(policies.len());
        for p in &policies {
            if !seen.insert(p) {
                return Err(Error::InvalidPolicy(format!("duplicate policy {p} in class")));
            }
        }
        let labels = match labels {
            Some(labels) => {
                if labels.len() != policies.len() {
                    return Err(Error::Dimension {
                        what: "policy labels",
                        expected: policies.len(),
                        found: labels.len(),
                    });
                }
                labels
            }
            None => policies.iter().map(ToString::to_string).collect(),
        };
        Ok(PolicyClass { policies, labels })
    }

    fn from_enumeration(policies: Vec<DeterministicPolicy>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(policies.len());
        let unique: Vec<_> = policies.into_iter().filter(|p| seen.insert(p.clone())).collect();
        Self::new(unique, None)
    }

    /// All `|A|^|S|` deterministic policies.
    pub fn unrestricted(mdp: &TabularMdp, cap: usize) -> Result<Self> {
        build_state_aggregation_class(mdp, &ObservationMap::identity(mdp.n_states()), cap)
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.policies[0].len()
    }

    pub fn policies(&self) -> &[DeterministicPolicy] {
        &self.policies
    }

    pub fn policy(&self, index: usize) -> &DeterministicPolicy {
        &self.policies[index]
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of_label(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownPolicy(label.to_string()))
    }

    pub fn index_of(&self, policy: &DeterministicPolicy) -> Option<usize> {
        self.policies.iter().position(|p| p == policy)
    }

    /// Replaces every label. Labels must be unique.
    pub fn relabel(mut self, f: impl Fn(usize, &DeterministicPolicy) -> String) -> Result<Self> {
        let labels: Vec<String> = self.policies.iter().enumerate().map(|(i, p)| f(i, p)).collect();
        let unique: HashSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidPolicy("policy labels must be unique".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Checks every policy against the MDP.
    pub fn check(&self, mdp: &TabularMdp) -> Result<()> {
        self.policies.iter().try_for_each(|p| p.check(mdp))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            policies: Vec<DeterministicPolicy>,
            labels: Option<Vec<String>>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        Self::new(doc.policies, doc.labels)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Enumerates `prod radices` choice vectors in lexicographic order (first
/// digit most significant) and maps each to a policy.
fn enumerate_product(
    radices: &[usize],
    cap: usize,
    mut build: impl FnMut(&[usize]) -> DeterministicPolicy,
) -> Result<Vec<DeterministicPolicy>> {
    let size = radices
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
        .unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::ClassTooLarge { size, cap });
    }
    if size == 0 {
        return Err(Error::EmptyClass);
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut digits = vec![0usize; radices.len()];
    loop {
        out.push(build(&digits));
        // increment, least significant digit last
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < radices[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Policies that depend on the state only through `obs`:
/// `pi(s) = pi_plus(obs(s))` for every `pi_plus: O -> A`.
pub fn build_state_aggregation_class(
    mdp: &TabularMdp,
    obs: &ObservationMap,
    cap: usize,
) -> Result<PolicyClass> {
    if obs.n_states() != mdp.n_states() {
        return Err(Error::InvalidObservationMap(format!(
            "map covers {} states, MDP has {}",
            obs.n_states(),
            mdp.n_states()
        )));
    }
    let radices = vec![mdp.n_actions(); obs.n_obs()];
    let policies = enumerate_product(&radices, cap, |digits| {
        DeterministicPolicy::new((0..mdp.n_states()).map(|s| digits[obs.obs(s)]).collect())
    })?;
    PolicyClass::from_enumeration(policies)
}

/// Each agent acts on its own local state only:
/// `pi(s) = (pi_i(s_i))_i`.
pub fn build_independent_agents_class(
    mdp: &TabularMdp,
    factored: &FactoredSpace,
    cap: usize,
) -> Result<PolicyClass> {
    factored.check(mdp)?;
    let obs_maps: Vec<ObservationMap> = (0..factored.n_agents())
        .map(|i| {
            ObservationMap::new(
                (0..mdp.n_states())
                    .map(|s| factored.state_tuple(s)[i])
                    .collect(),
            )
        })
        .collect::<Result<_>>()?;
    build_decentralized_class(mdp, factored, &obs_maps, cap)
}

/// Each agent acts on its own observation of the joint state:
/// `pi(s) = (pi_i(O_i(s)))_i`.
///
/// An action is admissible for agent `i` at observation `o` when it is
/// admissible in every local state the agent can be in while observing `o`.
pub fn build_decentralized_class(
    mdp: &TabularMdp,
    factored: &FactoredSpace,
    obs_maps: &[ObservationMap],
    cap: usize,
) -> Result<PolicyClass> {
    factored.check(mdp)?;
    if obs_maps.len() != factored.n_agents() {
        return Err(Error::InvalidObservationMap(format!(
            "{} observation maps for {} agents",
            obs_maps.len(),
            factored.n_agents()
        )));
    }
    let n = mdp.n_states();
    // options[i][o] = admissible local actions of agent i at observation o
    let mut options: Vec<Vec<Vec<usize>>> = Vec::with_capacity(obs_maps.len());
    for (i, obs) in obs_maps.iter().enumerate() {
        if obs.n_states() != n {
            return Err(Error::InvalidObservationMap(format!(
                "agent {i}: map covers {} states, MDP has {n}",
                obs.n_states()
            )));
        }
        let mut per_obs: Vec<Option<Vec<usize>>> = vec![None; obs.n_obs()];
        for s in 0..n {
            let local = factored.state_tuple(s)[i];
            let allowed = factored.admissible(i, local);
            let slot = &mut per_obs[obs.obs(s)];
            *slot = Some(match slot.take() {
                None => allowed,
                Some(prev) => prev.into_iter().filter(|a| allowed.contains(a)).collect(),
            });
        }
        let per_obs: Vec<Vec<usize>> = per_obs.into_iter().map(Option::unwrap_or_default).collect();
        if let Some(o) = per_obs.iter().position(Vec::is_empty) {
            return Err(Error::InvalidFactorization(format!(
                "agent {i} has no action admissible in every state of observation {o}"
            )));
        }
        options.push(per_obs);
    }
    // digit layout: agent-major, observation-minor
    let mut offsets = Vec::with_capacity(options.len());
    let mut radices = Vec::new();
    for per_obs in &options {
        offsets.push(radices.len());
        radices.extend(per_obs.iter().map(Vec::len));
    }
    let policies = enumerate_product(&radices, cap, |digits| {
        let actions = (0..n)
            .map(|s| {
                let locals: Vec<usize> = options
                    .iter()
                    .enumerate()
                    .map(|(i, per_obs)| {
                        let o = obs_maps[i].obs(s);
                        per_obs[o][digits[offsets[i] + o]]
                    })
                    .collect();
                factored.action_index(&locals)
            })
            .collect();
        DeterministicPolicy::new(actions)
    })?;
    PolicyClass::from_enumeration(policies)
}

/// Agents in the same group share their local states and act jointly on
/// them: `pi(s) = (pi_g(s_g))_{g in G(s)}`.
///
/// One component exists per distinct `(group, s_g)` view; components are
/// ordered by group (as a sorted agent list) and then by `s_g`.
pub fn build_group_decentralized_class(
    mdp: &TabularMdp,
    factored: &FactoredSpace,
    grouping: &GroupingFunction,
    cap: usize,
) -> Result<PolicyClass> {
    factored.check(mdp)?;
    let n = mdp.n_states();
    if grouping.n_states() != n {
        return Err(Error::InvalidGrouping(format!(
            "grouping covers {} states, MDP has {n}",
            grouping.n_states()
        )));
    }
    let tuples: Vec<Vec<usize>> = (0..n).map(|s| factored.state_tuple(s)).collect();
    let mut views: BTreeMap<(Vec<usize>, Vec<usize>), usize> = BTreeMap::new();
    for s in 0..n {
        for group in grouping.groups(s) {
            let sg: Vec<usize> = group.iter().map(|&i| tuples[s][i]).collect();
            views.insert((group.clone(), sg), 0);
        }
    }
    // joint admissible actions of each view, lexicographic in member order
    let mut view_actions: Vec<Vec<Vec<usize>>> = Vec::with_capacity(views.len());
    for (slot, ((group, sg), index)) in views.iter_mut().enumerate() {
        *index = slot;
        let member_options: Vec<Vec<usize>> = group
            .iter()
            .zip(sg)
            .map(|(&i, &x)| factored.admissible(i, x))
            .collect();
        let radices: Vec<usize> = member_options.iter().map(Vec::len).collect();
        let count: usize = radices.iter().product();
        let joint = (0..count)
            .map(|c| {
                unrank(c, &radices)
                    .iter()
                    .zip(&member_options)
                    .map(|(&d, opts)| opts[d])
                    .collect()
            })
            .collect();
        view_actions.push(joint);
    }
    let radices: Vec<usize> = view_actions.iter().map(Vec::len).collect();
    let state_views: Vec<Vec<(usize, &Vec<usize>)>> = (0..n)
        .map(|s| {
            grouping
                .groups(s)
                .iter()
                .map(|group| {
                    let sg: Vec<usize> = group.iter().map(|&i| tuples[s][i]).collect();
                    (views[&(group.clone(), sg)], group)
                })
                .collect()
        })
        .collect();
    let policies = enumerate_product(&radices, cap, |digits| {
        let actions = (0..n)
            .map(|s| {
                let mut locals = vec![0; factored.n_agents()];
                for &(view, group) in &state_views[s] {
                    let joint = &view_actions[view][digits[view]];
                    for (&i, &a) in group.iter().zip(joint) {
                        locals[i] = a;
                    }
                }
                factored.action_index(&locals)
            })
            .collect();
        DeterministicPolicy::new(actions)
    })?;
    PolicyClass::from_enumeration(policies)
}

/// A distribution over the policies of a class.
#[derive(Clone, Debug)]
pub struct CorrelatedPolicy {
    class: Arc<PolicyClass>,
    weights: Vec<f64>,
}

impl CorrelatedPolicy {
    pub fn new(class: Arc<PolicyClass>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, class.len())?;
        Ok(CorrelatedPolicy { class, weights })
    }

    pub fn uniform(class: Arc<PolicyClass>) -> Self {
        let n = class.len();
        CorrelatedPolicy {
            class,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// All weight on one policy.
    pub fn dirac(class: Arc<PolicyClass>, index: usize) -> Result<Self> {
        if index >= class.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: class.len(),
            });
        }
        let mut weights = vec![0.0; class.len()];
        weights[index] = 1.0;
        Ok(CorrelatedPolicy { class, weights })
    }

    /// `(1 - theta) * delta(a) + theta * delta(b)`.
    pub fn two_point(class: Arc<PolicyClass>, a: usize, b: usize, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidWeights(format!("theta {theta} outside [0,1]")));
        }
        if b >= class.len() {
            return Err(Error::IndexOutOfRange {
                index: b,
                len: class.len(),
            });
        }
        let mut p = Self::dirac(class, a)?;
        p.weights[a] -= theta;
        p.weights[b] += theta;
        Ok(p)
    }

    pub fn class(&self) -> &Arc<PolicyClass> {
        &self.class
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Replaces the weights, keeping the class.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.class), weights)
    }

    /// Index of the policy carrying all the mass, if any.
    pub fn dirac_index(&self) -> Option<usize> {
        let i = self.weights.iter().position(|&w| w == 1.0)?;
        self.weights
            .iter()
            .enumerate()
            .all(|(j, &w)| j == i || w == 0.0)
            .then_some(i)
    }

    /// Draws one deterministic policy index with probability `w_i`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        // weights were validated at construction, so the distribution exists
        WeightedIndex::new(&self.weights)
            .expect("validated weights")
            .sample(rng)
    }

    /// Deterministic sample for a given seed.
    pub fn sample_seeded(&self, seed: u64) -> &DeterministicPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.class.policy(self.sample(&mut rng))
    }

    /// `E_{pi ~ w}[J^pi(mu)]`, the value of deploying one sampled policy.
    pub fn expected_value(&self, mdp: &TabularMdp) -> Result<f64> {
        let mut total = 0.0;
        for (p, &w) in self.class.policies().iter().zip(&self.weights) {
            if w > 0.0 {
                total += w * mdp.policy_value(p)?;
            }
        }
        Ok(total)
    }
}

/// Nonnegative, finite, correct length, summing to one within `1e-10`.
pub fn check_weights(weights: &[f64], len: usize) -> Result<()> {
    if weights.len() != len {
        return Err(Error::Dimension {
            what: "weights",
            expected: len,
            found: weights.len(),
        });
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeights(format!("w[{i}] = {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    // two agents, two local states, two local actions; next state = action
    fn joint_copy_mdp() -> (TabularMdp, FactoredSpace) {
        let f = FactoredSpace::new(vec![2, 2], vec![2, 2]).unwrap();
        let next: Vec<Vec<usize>> = (0..4).map(|_| (0..4).collect()).collect();
        let cost = vec![vec![0.0; 4]; 4];
        let mdp = TabularMdp::deterministic(&next, cost, 0.9, vec![0.25; 4], None).unwrap();
        (mdp, f)
    }

    #[test]
    fn row_major_bijection() {
        let f = FactoredSpace::new(vec![3, 3], vec![3, 3]).unwrap();
        assert_eq!(f.state_tuple(5), vec![1, 2]);
        assert_eq!(f.state_index(&[2, 0]), 6);
        for i in 0..9 {
            assert_eq!(f.action_index(&f.action_tuple(i)), i);
        }
    }

    #[test]
    fn unrestricted_counts_and_order() {
        let (mdp, _) = joint_copy_mdp();
        let class = PolicyClass::unrestricted(&mdp, DEFAULT_CLASS_CAP).unwrap();
        assert_eq!(class.len(), 256);
        assert_eq!(class.policy(0).actions(), &[0, 0, 0, 0]);
        assert_eq!(class.policy(1).actions(), &[0, 0, 0, 1]);
        assert_eq!(class.policy(255).actions(), &[3, 3, 3, 3]);
    }

    #[test]
    fn constant_aggregation_gives_one_policy_per_action() {
        let (mdp, _) = joint_copy_mdp();
        let class = build_state_aggregation_class(&mdp, &ObservationMap::constant(4), 100).unwrap();
        assert_eq!(class.len(), 4);
        for (i, p) in class.policies().iter().enumerate() {
            assert_eq!(p, &DeterministicPolicy::constant(4, i));
        }
    }

    #[test]
    fn independent_agents_count() {
        let (mdp, f) = joint_copy_mdp();
        let class = build_independent_agents_class(&mdp, &f, 100).unwrap();
        // 2^2 local policies per agent
        assert_eq!(class.len(), 16);
        // every policy factorises
        for p in class.policies() {
            for s in 0..4 {
                let xs = f.state_tuple(s);
                let a = f.action_tuple(p.action(s));
                for t in 0..4 {
                    let ys = f.state_tuple(t);
                    let b = f.action_tuple(p.action(t));
                    for i in 0..2 {
                        if xs[i] == ys[i] {
                            assert_eq!(a[i], b[i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn group_decentralized_limits() {
        let (mdp, f) = joint_copy_mdp();
        let singletons = GroupingFunction::uniform(vec![vec![0], vec![1]], 4, 2).unwrap();
        let g = build_group_decentralized_class(&mdp, &f, &singletons, 1000).unwrap();
        let ind = build_independent_agents_class(&mdp, &f, 1000).unwrap();
        let mut a = g.policies().to_vec();
        let mut b = ind.policies().to_vec();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        let full = GroupingFunction::uniform(vec![vec![0, 1]], 4, 2).unwrap();
        let g = build_group_decentralized_class(&mdp, &f, &full, 1000).unwrap();
        assert_eq!(g.len(), 256);
    }

    #[test]
    fn admissible_masks_restrict_choices() {
        let (mdp, f) = joint_copy_mdp();
        let f = f
            .with_admissible_actions(vec![vec![vec![0], vec![0, 1]], vec![vec![0, 1], vec![1]]])
            .unwrap();
        let class = build_independent_agents_class(&mdp, &f, 100).unwrap();
        assert_eq!(class.len(), 4);
    }

    #[test]
    fn cap_is_enforced() {
        let (mdp, _) = joint_copy_mdp();
        match PolicyClass::unrestricted(&mdp, 100) {
            Err(Error::ClassTooLarge { size, cap }) => {
                assert_eq!(size, 256);
                assert_eq!(cap, 100);
            }
            other => panic!("expected ClassTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_rejected_on_explicit_class() {
        let p = DeterministicPolicy::new(vec![0, 1]);
        assert!(PolicyClass::new(vec![p.clone(), p], None).is_err());
        assert!(matches!(PolicyClass::new(vec![], None), Err(Error::EmptyClass)));
    }

    #[test]
    fn bad_groupings() {
        assert!(GroupingFunction::new(vec![vec![vec![0]]], 2).is_err());
        assert!(GroupingFunction::new(vec![vec![vec![0, 1], vec![1]]], 2).is_err());
        assert!(ObservationMap::new(vec![0, 2]).is_err());
    }

    #[test]
    fn class_json_round_trip() {
        let class = PolicyClass::new(
            vec![DeterministicPolicy::new(vec![0, 1]), DeterministicPolicy::new(vec![1, 1])],
            Some(vec!["a".into(), "b".into()]),
        )
        .unwrap();
        let back = PolicyClass::from_json_str(&class.to_json().unwrap()).unwrap();
        assert_eq!(back, class);
        assert_eq!(back.index_of_label("b").unwrap(), 1);
    }

    #[test]
    fn weights_validation() {
        let class = Arc::new(
            PolicyClass::new(
                vec![DeterministicPolicy::new(vec![0]), DeterministicPolicy::new(vec![1])],
                None,
            )
            .unwrap(),
        );
        assert!(CorrelatedPolicy::new(class.clone(), vec![0.5, 0.6]).is_err());
        assert!(CorrelatedPolicy::new(class.clone(), vec![-0.1, 1.1]).is_err());
        assert!(CorrelatedPolicy::new(class.clone(), vec![1.0]).is_err());
        let p = CorrelatedPolicy::two_point(class.clone(), 0, 1, 0.25).unwrap();
        assert_eq!(p.weights(), &[0.75, 0.25]);
        assert_eq!(CorrelatedPolicy::dirac(class, 1).unwrap().dirac_index(), Some(1));
    }

    #[test]
    fn sampling_frequencies() {
        let class = Arc::new(
            PolicyClass::new(
                vec![DeterministicPolicy::new(vec![0]), DeterministicPolicy::new(vec![1])],
                None,
            )
            .unwrap(),
        );
        let p = CorrelatedPolicy::new(class, vec![0.3, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hits = (0..20_000).filter(|_| p.sample(&mut rng) == 1).count();
        let freq = hits as f64 / 20_000.0;
        assert!((freq - 0.7).abs() < 0.02, "{freq}");
        assert_eq!(p.sample_seeded(3), p.sample_seeded(3));
    }
}
