//! Random small instances shared by the property and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use kstep_pg::{DeterministicPolicy, PolicyClass, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub mdp: TabularMdp,
    pub class: Arc<PolicyClass>,
    pub w: Vec<f64>,
    pub w2: Vec<f64>,
    pub k: usize,
}

/// Uniform point on the simplex; with probability 1/3 some coordinates are
/// zeroed so boundary points get exercised too.
pub fn random_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    if n > 1 && rng.random::<f64>() < 1.0 / 3.0 {
        let keep = rng.random_range(0..n);
        for (i, x) in raw.iter_mut().enumerate() {
            if i != keep && rng.random::<bool>() {
                *x = 0.0;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Strictly interior point of the simplex.
pub fn interior_weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Up to `max_policies` distinct random deterministic policies.
pub fn random_class<R: Rng>(rng: &mut R, mdp: &TabularMdp, min_policies: usize, max_policies: usize) -> Arc<PolicyClass> {
    let target = rng.random_range(min_policies..=max_policies);
    let mut seen = BTreeSet::new();
    for _ in 0..4 * target {
        let p: Vec<usize> = (0..mdp.n_states()).map(|_| rng.random_range(0..mdp.n_actions())).collect();
        seen.insert(p);
        if seen.len() == target {
            break;
        }
    }
    let policies = seen.into_iter().map(DeterministicPolicy::new).collect();
    Arc::new(PolicyClass::new(policies, None).unwrap())
}

pub fn random_instance(seed: u64, max_states: usize) -> Instance {
    build_instance(seed, max_states, 1)
}

/// Like [`random_instance`] but with at least two actions and, almost
/// always, at least two class members.
pub fn random_instance_with_choice(seed: u64, max_states: usize) -> Instance {
    build_instance(seed, max_states, 2)
}

fn build_instance(seed: u64, max_states: usize, min_choice: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_states);
    let a = rng.random_range(min_choice..=3);
    let gamma = rng.random_range(0.5..0.99);
    let mdp = TabularMdp::random(&mut rng, n, a, gamma, 1.0).unwrap();
    let class = random_class(&mut rng, &mdp, min_choice, 8);
    let m = class.len();
    let w = random_weights(&mut rng, m);
    let w2 = random_weights(&mut rng, m);
    let k = rng.random_range(1..=20);
    Instance { mdp, class, w, w2, k }
}
