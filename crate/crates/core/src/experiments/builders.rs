//! MDPs and policy classes of the five built-in examples.

use std::sync::Arc;

use crate::error::Result;
use crate::mdp::{DeterministicPolicy, TabularMdp};
use crate::policy_class::{
    build_decentralized_class, build_group_decentralized_class, build_independent_agents_class,
    build_state_aggregation_class, FactoredSpace, GroupingFunction, ObservationMap, PolicyClass,
    DEFAULT_CLASS_CAP,
};

/// An MDP, its restricted class, and the designated critical and optimal
/// policies (by label).
#[derive(Clone, Debug)]
pub struct Example {
    pub name: &'static str,
    pub mdp: TabularMdp,
    pub class: Arc<PolicyClass>,
    pub pi_crit: String,
    pub pi_star: String,
}

impl Example {
    pub fn crit_index(&self) -> usize {
        self.class.index_of_label(&self.pi_crit).expect("designated policy exists")
    }

    pub fn star_index(&self) -> usize {
        self.class.index_of_label(&self.pi_star).expect("designated policy exists")
    }
}

const MOVE_SYMBOLS: [char; 3] = ['-', '0', '+'];

fn clamp_move(x: usize, lo: usize, hi: usize, a: usize) -> usize {
    (x + a).saturating_sub(1).clamp(lo, hi)
}

/// Two states, "go left" / "go right"; the class is the two constant policies.
pub fn two_state() -> Result<Example> {
    let mdp = TabularMdp::deterministic(
        &[vec![0, 1], vec![0, 1]],
        vec![vec![1.0, 2.0], vec![2.0, 0.0]],
        0.8,
        vec![0.6, 0.4],
        None,
    )?
    .with_state_labels(vec!["s_L".into(), "s_R".into()])?
    .with_action_labels(vec!["L".into(), "R".into()])?;
    let class = PolicyClass::new(
        vec![DeterministicPolicy::constant(2, 0), DeterministicPolicy::constant(2, 1)],
        Some(vec!["pi_L".into(), "pi_R".into()]),
    )?;
    Ok(Example {
        name: "two_state",
        mdp,
        class: Arc::new(class),
        pi_crit: "pi_L".into(),
        pi_star: "pi_R".into(),
    })
}

/// Two agents each pick a bit; the next state is the joint choice. Matching
/// on 0 pays 3, matching on 1 pays 10, and every agent that changes its bit
/// pays 5.
pub fn number_matching() -> Result<Example> {
    let f = FactoredSpace::new(vec![2, 2], vec![2, 2])?;
    let next: Vec<Vec<usize>> = (0..4).map(|_| (0..4).collect()).collect();
    let cost = (0..4)
        .map(|s| {
            let xs = f.state_tuple(s);
            (0..4)
                .map(|a| {
                    let acts = f.action_tuple(a);
                    let base = match (acts[0], acts[1]) {
                        (0, 0) => -3.0,
                        (1, 1) => -10.0,
                        _ => 0.0,
                    };
                    let switches = xs.iter().zip(&acts).filter(|(x, a)| x != a).count();
                    base + 5.0 * switches as f64
                })
                .collect()
        })
        .collect();
    let pairs = ["(0,0)", "(0,1)", "(1,0)", "(1,1)"];
    let mdp = TabularMdp::deterministic(&next, cost, 0.9, vec![0.05, 0.37, 0.37, 0.21], Some(10.0))?
        .with_state_labels(pairs.iter().map(|s| s.to_string()).collect())?
        .with_action_labels(pairs.iter().map(|s| s.to_string()).collect())?;
    let class = build_independent_agents_class(&mdp, &f, DEFAULT_CLASS_CAP)?;
    // local policy names: always 0, stay, flip, always 1
    let local_name = |acts: [usize; 2]| match acts {
        [0, 0] => "a0",
        [0, 1] => "st",
        [1, 0] => "fl",
        _ => "a1",
    };
    let class = class.relabel(|_, p| {
        let agent = |i: usize| {
            let at = |x: usize| {
                let s = (0..4).find(|&s| f.state_tuple(s)[i] == x).expect("state exists");
                f.action_tuple(p.action(s))[i]
            };
            local_name([at(0), at(1)])
        };
        format!("({},{})", agent(0), agent(1))
    })?;
    Ok(Example {
        name: "number_matching",
        mdp,
        class: Arc::new(class),
        pi_crit: "(a0,a0)".into(),
        pi_star: "(a1,a1)".into(),
    })
}

const BUTTON_LEFT: [usize; 3] = [1, 2, 3];
const BUTTON_RIGHT: [usize; 3] = [5, 6, 7];

fn button_space() -> Result<FactoredSpace> {
    // local moves: 0 = -1, 1 = stay, 2 = +1; no move that is a no-op at a wall
    let edge_low = vec![1, 2];
    let edge_high = vec![0, 1];
    let inner = vec![0, 1, 2];
    FactoredSpace::new(vec![3, 3], vec![3, 3])?.with_admissible_actions(vec![
        vec![edge_low.clone(), inner.clone(), edge_high.clone()],
        vec![edge_low, inner, edge_high],
    ])
}

fn button_mdp(f: &FactoredSpace) -> Result<TabularMdp> {
    let centre = f.state_index(&[2, 0]);
    let corner = f.state_index(&[0, 2]);
    let mut next = Vec::with_capacity(9);
    let mut cost = Vec::with_capacity(9);
    for s in 0..9 {
        let x = f.state_tuple(s);
        let mut row_next = Vec::with_capacity(9);
        let mut row_cost = Vec::with_capacity(9);
        for a in 0..9 {
            let m = f.action_tuple(a);
            let s2 = f.state_index(&[clamp_move(x[0], 0, 2, m[0]), clamp_move(x[1], 0, 2, m[1])]);
            let g = if s == centre {
                if s2 == centre { -5.0 } else { 25.0 }
            } else if s == corner {
                if s2 == corner { -18.0 } else { 12.0 }
            } else {
                0.0
            };
            row_next.push(s2);
            row_cost.push(g);
        }
        next.push(row_next);
        cost.push(row_cost);
    }
    let labels = (0..9)
        .map(|s| {
            let x = f.state_tuple(s);
            format!("({},{})", BUTTON_LEFT[x[0]], BUTTON_RIGHT[x[1]])
        })
        .collect();
    let actions = (0..9)
        .map(|a| {
            let m = f.action_tuple(a);
            format!("({},{})", MOVE_SYMBOLS[m[0]], MOVE_SYMBOLS[m[1]])
        })
        .collect();
    TabularMdp::deterministic(&next, cost, 0.9, vec![1.0 / 9.0; 9], Some(25.0))?
        .with_state_labels(labels)?
        .with_action_labels(actions)
}

/// Per-agent observations: own position, except that standing next to the
/// centre button also reveals whether the partner is there.
fn button_observations(f: &FactoredSpace) -> Result<Vec<ObservationMap>> {
    let centre = f.state_index(&[2, 0]);
    let left = (0..9)
        .map(|s| if s == centre { 3 } else { f.state_tuple(s)[0] })
        .collect();
    let right = (0..9)
        .map(|s| if s == centre { 3 } else { f.state_tuple(s)[1] })
        .collect();
    Ok(vec![ObservationMap::new(left)?, ObservationMap::new(right)?])
}

fn button_label(f: &FactoredSpace, obs: &[ObservationMap], p: &DeterministicPolicy) -> String {
    let agent = |i: usize| -> String {
        (0..obs[i].n_obs())
            .map(|o| {
                let s = (0..9).find(|&s| obs[i].obs(s) == o).expect("observation occurs");
                MOVE_SYMBOLS[f.action_tuple(p.action(s))[i]]
            })
            .collect()
    };
    format!("L:{}|R:{}", agent(0), agent(1))
}

/// Two agents on parallel 3-cell tracks. Both holding the centre pair
/// (3,5) earns a small reward each step; the far pair (1,7) earns a larger
/// one. Leaving either pair costs.
pub fn button_press() -> Result<Example> {
    let f = button_space()?;
    let mdp = button_mdp(&f)?;
    let obs = button_observations(&f)?;
    let class = build_decentralized_class(&mdp, &f, &obs, DEFAULT_CLASS_CAP)?
        .relabel(|_, p| button_label(&f, &obs, p))?;
    Ok(Example {
        name: "button_press",
        mdp,
        class: Arc::new(class),
        // left walks right and parks, right walks left and parks
        pi_crit: "L:++00|R:0--0".into(),
        pi_star: "L:0---|R:++0+".into(),
    })
}

/// The same class built as a group-decentralized one: the agents form one
/// group at the centre pair and act alone elsewhere.
pub fn button_press_grouped_class() -> Result<PolicyClass> {
    let f = button_space()?;
    let mdp = button_mdp(&f)?;
    let obs = button_observations(&f)?;
    let centre = f.state_index(&[2, 0]);
    let partitions = (0..9)
        .map(|s| if s == centre { vec![vec![0, 1]] } else { vec![vec![0], vec![1]] })
        .collect();
    let grouping = GroupingFunction::new(partitions, 2)?;
    build_group_decentralized_class(&mdp, &f, &grouping, DEFAULT_CLASS_CAP)?
        .relabel(|_, p| button_label(&f, &obs, p))
}

fn move_label(p: &DeterministicPolicy, obs: &ObservationMap) -> String {
    (0..obs.n_obs())
        .map(|o| {
            let s = (0..obs.n_states()).find(|&s| obs.obs(s) == o).expect("observation occurs");
            MOVE_SYMBOLS[p.action(s)]
        })
        .collect()
}

/// A 7-cell corridor starting in the middle: a small reward at the left
/// end, a large one at the right end behind two costly cells.
pub fn moat_cross() -> Result<Example> {
    let state_cost = [-1.0, 0.0, 0.0, 0.0, 3.0, 3.0, -20.0];
    let next = (0..7)
        .map(|s| (0..3).map(|a| clamp_move(s, 0, 6, a)).collect())
        .collect::<Vec<Vec<usize>>>();
    let cost = state_cost.iter().map(|&g| vec![g; 3]).collect();
    let mut mu = vec![0.0; 7];
    mu[3] = 1.0;
    let mdp = TabularMdp::deterministic(&next, cost, 0.9, mu, Some(20.0))?
        .with_state_labels((1..=7).map(|s| s.to_string()).collect())?
        .with_action_labels(vec!["-1".into(), "0".into(), "+1".into()])?;
    let identity = ObservationMap::identity(7);
    let class = PolicyClass::unrestricted(&mdp, DEFAULT_CLASS_CAP)?
        .relabel(|_, p| move_label(p, &identity))?;
    Ok(Example {
        name: "moat_cross",
        mdp,
        class: Arc::new(class),
        pi_crit: "-------".into(),
        pi_star: "+++++++".into(),
    })
}

/// Index of cell `(x, y)`, `x` in 1..=3 (column), `y` in 1..=5 (row).
pub fn two_path_index(x: usize, y: usize) -> usize {
    (x - 1) * 5 + (y - 1)
}

/// A 3x5 grid climbed one row per step; the action picks the column. The
/// middle column is expensive; the left column leads to a small reward, the
/// right one to a large reward behind a small toll.
///
/// The class lets the action depend on the column only, which keeps the
/// class enumerable and still contains both designated policies.
pub fn two_path() -> Result<Example> {
    let cell_cost = |x: usize, y: usize| -> f64 {
        match (x, y) {
            (2, y) if y >= 2 => 10.0,
            (1, 3) => -2.0,
            (1, 5) => -5.0,
            (3, 2) => 1.0,
            (3, 3) => -15.0,
            (3, 5) => -20.0,
            _ => 0.0,
        }
    };
    let mut next = vec![Vec::new(); 15];
    let mut cost = vec![Vec::new(); 15];
    let mut labels = vec![String::new(); 15];
    for x in 1..=3 {
        for y in 1..=5 {
            let s = two_path_index(x, y);
            labels[s] = format!("({x},{y})");
            for a in 0..3 {
                let x2 = clamp_move(x - 1, 0, 2, a) + 1;
                next[s].push(two_path_index(x2, (y + 1).min(5)));
                cost[s].push(cell_cost(x, y));
            }
        }
    }
    let mut mu = vec![0.0; 15];
    mu[two_path_index(2, 1)] = 1.0;
    let mdp = TabularMdp::deterministic(&next, cost, 0.9, mu, Some(20.0))?
        .with_state_labels(labels)?
        .with_action_labels(vec!["-1".into(), "0".into(), "+1".into()])?;
    let columns = ObservationMap::new((0..15).map(|s| s / 5).collect())?;
    let class = build_state_aggregation_class(&mdp, &columns, DEFAULT_CLASS_CAP)?
        .relabel(|_, p| move_label(p, &columns))?;
    Ok(Example {
        name: "two_path",
        mdp,
        class: Arc::new(class),
        pi_crit: "---".into(),
        pi_star: "+++".into(),
    })
}

pub const EXAMPLE_NAMES: [&str; 5] = [
    "two_state",
    "number_matching",
    "button_press",
    "moat_cross",
    "two_path",
];

pub fn build_example(name: &str) -> Result<Example> {
    match name {
        "two_state" => two_state(),
        "number_matching" => number_matching(),
        "button_press" => button_press(),
        "moat_cross" => moat_cross(),
        "two_path" => two_path(),
        other => Err(crate::Error::UnknownExperiment(other.to_string())),
    }
}
