//! Reference numbers for the built-in examples and cell-level checks
//! against them.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::builders::Example;
use crate::error::{Error, Result};
use crate::kstep::{KStepModel, OccupancyWeighting};
use crate::landscape::{find_k_esc, theta_sweep, uniform_grid, EscapeMode};
use crate::policy_class::CorrelatedPolicy;

/// Absolute tolerance for printed table cells.
pub const GOLDEN_TOL: f64 = 1e-3;
/// Values printed with two decimals carry up to half a unit of rounding.
pub const TWO_DECIMAL_TOL: f64 = 5e-3 + 1e-9;
/// Slack on sign checks of exact quantities.
pub const SIGN_TOL: f64 = 1e-9;

/// Advantages of one class member against the critical policy.
pub struct PolicyRow {
    pub policy: &'static str,
    pub advantages: &'static [f64],
    pub weighted: f64,
}

/// Advantages of the optimal member at one lookahead.
pub struct KRow {
    pub k: usize,
    pub advantages: &'static [f64],
    pub weighted: f64,
}

/// `J(s)` and `Q(s, a)` of the critical policy, actions in index order.
pub struct QRow {
    pub state: &'static str,
    pub value: f64,
    pub q: &'static [f64],
}

/// Expected shape of the value along the segment between the two members.
#[derive(Clone, Copy)]
pub struct SweepShape {
    pub grid_step: f64,
    pub argmax_theta: f64,
    pub argmax_tol: f64,
    /// Lookahead at which the curve has no interior stationary point.
    pub sloped_k: usize,
    /// Lookahead at which the curve is compared with its chord.
    pub affine_k: usize,
}

#[derive(Clone, Copy)]
pub struct Golden {
    pub name: &'static str,
    /// `J^{crit}(mu)`, `J^{star}(mu)` and their tolerance.
    pub values: Option<(f64, f64, f64)>,
    /// One-step occupancy of the critical policy by state label; the
    /// remaining states must carry no mass.
    pub occupancy: &'static [(&'static str, f64)],
    pub crit_state_values: &'static [(&'static str, f64, f64)],
    pub q_rows: &'static [QRow],
    /// Column labels of `one_step_rows` and `star_rows`.
    pub table_states: &'static [&'static str],
    pub one_step_rows: &'static [PolicyRow],
    pub star_rows: &'static [KRow],
    pub k_esc: Option<usize>,
    /// Every weighted one-step advantage at the critical policy is >= 0.
    pub one_step_nonnegative: bool,
    /// Per-state slope coefficients `d(s) / (1 - gamma)` at the critical policy.
    pub slope_coefficients: &'static [(&'static str, f64)],
    pub sweep: Option<SweepShape>,
}

pub static GOLDENS: [Golden; 5] = [TWO_STATE, NUMBER_MATCHING, BUTTON_PRESS, MOAT_CROSS, TWO_PATH];

pub fn golden(name: &str) -> Option<&'static Golden> {
    GOLDENS.iter().find(|g| g.name == name)
}

const TWO_STATE: Golden = Golden {
    name: "two_state",
    values: None,
    occupancy: &[],
    crit_state_values: &[],
    q_rows: &[],
    table_states: &[],
    one_step_rows: &[],
    star_rows: &[],
    k_esc: Some(3),
    one_step_nonnegative: true,
    slope_coefficients: &[("s_L", 4.6), ("s_R", 0.4)],
    sweep: Some(SweepShape {
        grid_step: 0.001,
        argmax_theta: 0.32,
        argmax_tol: 0.02,
        sloped_k: 3,
        affine_k: 100,
    }),
};

const NM_STATES: [&str; 4] = ["(0,0)", "(0,1)", "(1,0)", "(1,1)"];

const NUMBER_MATCHING: Golden = Golden {
    name: "number_matching",
    values: Some((-24.2, -95.8, GOLDEN_TOL)),
    occupancy: &[("(0,0)", 0.905), ("(0,1)", 0.037), ("(1,0)", 0.037), ("(1,1)", 0.021)],
    crit_state_values: &[
        ("(0,0)", -30.0, GOLDEN_TOL),
        ("(0,1)", -25.0, GOLDEN_TOL),
        ("(1,0)", -25.0, GOLDEN_TOL),
        ("(1,1)", -20.0, GOLDEN_TOL),
    ],
    q_rows: &[],
    table_states: &NM_STATES,
    one_step_rows: &[
        PolicyRow { policy: "(a0,a0)", advantages: &[0.0, 0.0, 0.0, 0.0], weighted: 0.0 },
        PolicyRow { policy: "(a0,a1)", advantages: &[12.5, 2.5, 12.5, 2.5], weighted: 11.92 },
        PolicyRow { policy: "(a0,fl)", advantages: &[12.5, 0.0, 12.5, 0.0], weighted: 11.775 },
        PolicyRow { policy: "(a0,st)", advantages: &[0.0, 2.5, 0.0, 2.5], weighted: 0.145 },
        PolicyRow { policy: "(a1,a0)", advantages: &[12.5, 12.5, 2.5, 2.5], weighted: 11.92 },
        PolicyRow { policy: "(a1,a1)", advantages: &[12.0, 2.0, 2.0, -8.0], weighted: 10.84 },
        PolicyRow { policy: "(a1,fl)", advantages: &[12.0, 12.5, 2.0, 2.5], weighted: 11.449 },
        PolicyRow { policy: "(a1,st)", advantages: &[12.5, 2.0, 2.5, -8.0], weighted: 11.311 },
        PolicyRow { policy: "(fl,a0)", advantages: &[12.5, 12.5, 0.0, 0.0], weighted: 11.775 },
        PolicyRow { policy: "(fl,a1)", advantages: &[12.0, 2.0, 12.5, 2.5], weighted: 11.449 },
        PolicyRow { policy: "(fl,fl)", advantages: &[12.0, 12.5, 12.5, 0.0], weighted: 11.785 },
        PolicyRow { policy: "(fl,st)", advantages: &[12.5, 2.0, 0.0, 2.5], weighted: 11.439 },
        PolicyRow { policy: "(st,a0)", advantages: &[0.0, 0.0, 2.5, 2.5], weighted: 0.145 },
        PolicyRow { policy: "(st,a1)", advantages: &[12.5, 2.5, 2.0, -8.0], weighted: 11.311 },
        PolicyRow { policy: "(st,fl)", advantages: &[12.5, 0.0, 2.0, 2.5], weighted: 11.439 },
        PolicyRow { policy: "(st,st)", advantages: &[0.0, 2.5, 2.5, -8.0], weighted: 0.017 },
    ],
    star_rows: &[
        KRow { k: 1, advantages: &[12.0, 2.0, 2.0, -8.0], weighted: 10.84 },
        KRow { k: 2, advantages: &[4.8, -5.2, -5.2, -15.2], weighted: 3.64 },
        KRow { k: 3, advantages: &[-1.68, -11.68, -11.68, -21.68], weighted: -2.84 },
        KRow { k: 4, advantages: &[-7.512, -17.512, -17.512, -27.512], weighted: -8.672 },
        KRow { k: 5, advantages: &[-12.7608, -22.7608, -22.7608, -32.7608], weighted: -13.9208 },
        KRow { k: 10, advantages: &[-32.1057, -42.1057, -42.1057, -52.1057], weighted: -33.2657 },
        KRow { k: 25, advantages: &[-54.2568, -64.2568, -64.2568, -74.2568], weighted: -55.4168 },
    ],
    k_esc: Some(3),
    one_step_nonnegative: true,
    slope_coefficients: &[],
    sweep: None,
};

const BP_STATES: [&str; 9] = ["(1,5)", "(1,6)", "(1,7)", "(2,5)", "(2,6)", "(2,7)", "(3,5)", "(3,6)", "(3,7)"];

const BUTTON_PRESS: Golden = Golden {
    name: "button_press",
    values: Some((-41.72, -152.22, TWO_DECIMAL_TOL)),
    occupancy: &[
        ("(1,5)", 0.011),
        ("(1,6)", 0.011),
        ("(1,7)", 0.011),
        ("(2,5)", 0.031),
        ("(2,6)", 0.021),
        ("(2,7)", 0.011),
        ("(3,5)", 0.861),
        ("(3,6)", 0.031),
        ("(3,7)", 0.011),
    ],
    crit_state_values: &[],
    q_rows: &[],
    table_states: &BP_STATES,
    one_step_rows: &[],
    star_rows: &[
        KRow {
            k: 1,
            advantages: &[4.05, 14.85, -15.15, 8.55, 19.35, 14.85, 34.5, 8.55, 4.05],
            weighted: 30.9005,
        },
        KRow {
            k: 2,
            advantages: &[17.415, 1.215, -28.785, 21.915, 5.715, 1.215, 51.915, 21.915, 17.415],
            weighted: 46.283,
        },
        KRow {
            k: 3,
            advantages: &[5.143, -11.057, -41.057, 9.643, -6.557, -11.057, 39.643, 9.643, 5.143],
            weighted: 34.0115,
        },
        KRow {
            k: 4,
            advantages: &[-5.901, -22.101, -52.101, -1.401, -17.601, -22.101, 28.599, -1.401, -5.901],
            weighted: 22.9672,
        },
        KRow {
            k: 5,
            advantages: &[-15.841, -32.041, -62.041, -11.341, -27.541, -32.041, 18.659, -11.341, -15.841],
            weighted: 13.0272,
        },
        KRow {
            k: 6,
            advantages: &[-24.787, -40.987, -70.987, -20.287, -36.487, -40.987, 9.713, -20.287, -24.787],
            weighted: 4.0813,
        },
        KRow {
            k: 7,
            advantages: &[-32.838, -49.038, -79.038, -28.338, -44.538, -49.038, 1.662, -28.338, -32.838],
            weighted: -3.97,
        },
        KRow {
            k: 8,
            advantages: &[-40.084, -56.284, -86.284, -35.584, -51.784, -56.284, -5.584, -35.584, -40.084],
            weighted: -11.2162,
        },
    ],
    k_esc: Some(7),
    one_step_nonnegative: true,
    slope_coefficients: &[],
    sweep: None,
};

const MOAT_CROSS: Golden = Golden {
    name: "moat_cross",
    values: Some((-7.29, -140.67, TWO_DECIMAL_TOL)),
    occupancy: &[("1", 0.729), ("2", 0.081), ("3", 0.090), ("4", 0.100)],
    crit_state_values: &[("5", -3.56, TWO_DECIMAL_TOL)],
    q_rows: &[
        QRow { state: "1", value: -10.0, q: &[-10.0, -10.0, -9.1] },
        QRow { state: "2", value: -9.0, q: &[-9.0, -8.1, -7.29] },
        QRow { state: "3", value: -8.1, q: &[-8.1, -7.29, -6.561] },
        QRow { state: "4", value: -7.29, q: &[-7.29, -6.561, -3.205] },
    ],
    table_states: &["1", "2", "3", "4"],
    one_step_rows: &[],
    star_rows: &[
        KRow { k: 1, advantages: &[0.9, 1.71, 1.539, 4.085], weighted: 1.342 },
        KRow { k: 2, advantages: &[2.439, 3.095, 5.216, 9.824], weighted: 3.481 },
        KRow { k: 3, advantages: &[3.686, 6.404, 10.381, -2.294], weighted: 3.910 },
        KRow { k: 4, advantages: &[6.664, 11.053, -0.526, -15.403], weighted: 4.165 },
        KRow { k: 5, advantages: &[10.847, 1.237, -12.324, -27.201], weighted: 4.179 },
        KRow { k: 6, advantages: &[2.013, -9.381, -22.942, -37.819], weighted: -5.139 },
        KRow { k: 7, advantages: &[-7.543, -18.937, -32.498, -47.375], weighted: -14.695 },
        KRow { k: 10, advantages: &[-30.851, -42.245, -55.805, -70.682], weighted: -38.003 },
    ],
    k_esc: Some(6),
    one_step_nonnegative: true,
    slope_coefficients: &[],
    sweep: None,
};

const TWO_PATH: Golden = Golden {
    name: "two_path",
    values: Some((-34.43, -142.47, TWO_DECIMAL_TOL)),
    occupancy: &[("(2,1)", 0.100), ("(1,2)", 0.090), ("(1,3)", 0.081), ("(1,4)", 0.073), ("(1,5)", 0.656)],
    crit_state_values: &[],
    q_rows: &[
        QRow { state: "(2,1)", value: -34.425, q: &[-34.425, -25.425, -23.805] },
        QRow { state: "(1,2)", value: -38.25, q: &[-38.25, -38.25, -27.45] },
        QRow { state: "(1,3)", value: -42.5, q: &[-42.5, -42.5, -33.5] },
        QRow { state: "(1,4)", value: -45.0, q: &[-45.0, -45.0, -31.5] },
        QRow { state: "(1,5)", value: -50.0, q: &[-50.0, -50.0, -36.5] },
    ],
    table_states: &["(1,2)", "(1,3)", "(1,4)", "(1,5)", "(2,1)"],
    one_step_rows: &[],
    star_rows: &[
        KRow { k: 1, advantages: &[10.8, 9.0, 13.5, 13.5, 10.62], weighted: 12.605 },
        KRow { k: 2, advantages: &[21.735, 7.785, 12.285, 12.285, -2.34], weighted: 11.309 },
        KRow { k: 3, advantages: &[9.706, -4.244, 0.256, 0.256, 0.212], weighted: 0.738 },
        KRow { k: 4, advantages: &[-1.119, -15.069, -10.569, -10.569, -10.614], weighted: -10.088 },
        KRow { k: 5, advantages: &[-10.862, -24.812, -20.312, -20.312, -20.357], weighted: -19.831 },
        KRow { k: 10, advantages: &[-46.771, -60.721, -56.221, -56.221, -56.266], weighted: -55.74 },
    ],
    k_esc: Some(4),
    one_step_nonnegative: true,
    slope_coefficients: &[],
    sweep: None,
};

/// How an actual value is judged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Near { expected: f64, tol: f64 },
    AtLeast(f64),
    AtMost(f64),
    Below(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellDiff {
    pub cell: String,
    pub actual: f64,
    pub expect: Expect,
}

impl CellDiff {
    pub fn near(cell: impl Into<String>, actual: f64, expected: f64, tol: f64) -> Self {
        CellDiff {
            cell: cell.into(),
            actual,
            expect: Expect::Near { expected, tol },
        }
    }

    pub fn ok(&self) -> bool {
        match self.expect {
            Expect::Near { expected, tol } => (self.actual - expected).abs() <= tol,
            Expect::AtLeast(b) => self.actual >= b,
            Expect::AtMost(b) => self.actual <= b,
            Expect::Below(b) => self.actual < b,
        }
    }
}

impl fmt::Display for CellDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expect {
            Expect::Near { expected, tol } => write!(
                f,
                "{}: expected {expected} got {:.6} (diff {:.2e}, tol {tol:.0e})",
                self.cell,
                self.actual,
                (self.actual - expected).abs()
            ),
            Expect::AtLeast(b) => write!(f, "{}: expected >= {b} got {:.6e}", self.cell, self.actual),
            Expect::AtMost(b) => write!(f, "{}: expected <= {b:.6e} got {:.6e}", self.cell, self.actual),
            Expect::Below(b) => write!(f, "{}: expected < {b} got {:.6e}", self.cell, self.actual),
        }
    }
}

/// One golden table compared cell by cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableCheck {
    pub experiment: String,
    pub table: String,
    pub passed: bool,
    pub cells: Vec<CellDiff>,
}

impl TableCheck {
    fn new(experiment: &str, table: impl Into<String>, cells: Vec<CellDiff>) -> Self {
        TableCheck {
            experiment: experiment.to_string(),
            table: table.into(),
            passed: !cells.is_empty() && cells.iter().all(CellDiff::ok),
            cells,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellDiff> {
        self.cells.iter().filter(|c| !c.ok())
    }
}

fn state(ex: &Example, label: &str) -> Result<usize> {
    ex.mdp
        .state_index(label)
        .ok_or_else(|| Error::InvalidConfig(format!("{}: no state labelled {label}", ex.name)))
}

/// Compares every golden number of `golden` with a fresh computation on `ex`.
/// Tables come back in a fixed order.
pub fn check_golden(ex: &Example, golden: &Golden) -> Result<Vec<TableCheck>> {
    let name = ex.name;
    let crit = ex.crit_index();
    let star = ex.star_index();
    let crit_pi = ex.class.policy(crit);
    let base = CorrelatedPolicy::dirac(Arc::clone(&ex.class), crit)?;
    let mut out = Vec::new();

    if let Some((j_crit, j_star, tol)) = golden.values {
        out.push(TableCheck::new(
            name,
            "values",
            vec![
                CellDiff::near("J_crit(mu)", ex.mdp.policy_value(crit_pi)?, j_crit, tol),
                CellDiff::near("J_star(mu)", ex.mdp.policy_value(ex.class.policy(star))?, j_star, tol),
            ],
        ));
    }

    if !golden.occupancy.is_empty() {
        let d = ex.mdp.occupancy(crit_pi)?;
        let mut cells = Vec::new();
        let mut listed = 0.0;
        for &(label, value) in golden.occupancy {
            let s = state(ex, label)?;
            listed += d[s];
            cells.push(CellDiff::near(format!("d{label}"), d[s], value, GOLDEN_TOL));
        }
        cells.push(CellDiff::near("unlisted mass", 1.0 - listed, 0.0, SIGN_TOL));
        out.push(TableCheck::new(name, "occupancy", cells));
    }

    if !golden.crit_state_values.is_empty() || !golden.q_rows.is_empty() {
        let j = ex.mdp.evaluate_policy(crit_pi)?;
        let q = ex.mdp.q_from_values(&j);
        let action_label = |a: usize| {
            ex.mdp
                .action_labels()
                .map(|l| l[a].clone())
                .unwrap_or_else(|| a.to_string())
        };
        let mut cells = Vec::new();
        for &(label, value, tol) in golden.crit_state_values {
            cells.push(CellDiff::near(format!("J{label}"), j[state(ex, label)?], value, tol));
        }
        for row in golden.q_rows {
            let s = state(ex, row.state)?;
            cells.push(CellDiff::near(format!("J({})", row.state), j[s], row.value, GOLDEN_TOL));
            for (a, &expected) in row.q.iter().enumerate() {
                let cell = format!("Q({},{})", row.state, action_label(a));
                cells.push(CellDiff::near(cell, q[(s, a)], expected, GOLDEN_TOL));
            }
        }
        out.push(TableCheck::new(name, "crit_q_table", cells));
    }

    let columns = golden
        .table_states
        .iter()
        .map(|l| state(ex, l))
        .collect::<Result<Vec<_>>>()?;

    let one_step = KStepModel::new(&ex.mdp, Arc::clone(&ex.class), 1)?
        .advantage_table(base.weights(), OccupancyWeighting::OneStep)?;
    if !golden.one_step_rows.is_empty() {
        let mut cells = Vec::new();
        for row in golden.one_step_rows {
            let i = one_step.row_of(row.policy)?;
            for (c, (&s, &expected)) in columns.iter().zip(row.advantages).enumerate() {
                let cell = format!("A1[{}]{}", row.policy, golden.table_states[c]);
                cells.push(CellDiff::near(cell, one_step.advantages[(i, s)], expected, GOLDEN_TOL));
            }
            let cell = format!("A1[{}]weighted", row.policy);
            cells.push(CellDiff::near(cell, one_step.weighted[i], row.weighted, GOLDEN_TOL));
        }
        out.push(TableCheck::new(name, "one_step_table", cells));
    }
    if golden.one_step_nonnegative {
        let (worst, value) = one_step.worst();
        let cell = format!("min weighted A1 ({})", ex.class.label(worst));
        out.push(TableCheck::new(
            name,
            format!("one_step_nonnegative[{}]", ex.class.len()),
            vec![CellDiff {
                cell,
                actual: value,
                expect: Expect::AtLeast(-SIGN_TOL),
            }],
        ));
    }

    let star_tables = golden
        .star_rows
        .par_iter()
        .map(|row| {
            let table = KStepModel::new(&ex.mdp, Arc::clone(&ex.class), row.k)?
                .advantage_table(base.weights(), OccupancyWeighting::OneStep)?;
            let mut cells = Vec::new();
            for (c, (&s, &expected)) in columns.iter().zip(row.advantages).enumerate() {
                let cell = format!("A{}{}", row.k, golden.table_states[c]);
                cells.push(CellDiff::near(cell, table.advantages[(star, s)], expected, GOLDEN_TOL));
            }
            let cell = format!("A{}weighted", row.k);
            cells.push(CellDiff::near(cell, table.weighted[star], row.weighted, GOLDEN_TOL));
            Ok(TableCheck::new(name, format!("star_k{}", row.k), cells))
        })
        .collect::<Result<Vec<_>>>()?;
    out.extend(star_tables);

    if let Some(expected) = golden.k_esc {
        let k = find_k_esc(
            &ex.mdp,
            &ex.class,
            base.weights(),
            expected + 10,
            EscapeMode::TowardBest,
            OccupancyWeighting::OneStep,
            Some(star),
        )?;
        let actual = k.map_or(f64::NAN, |k| k as f64);
        out.push(TableCheck::new(
            name,
            "k_esc",
            vec![CellDiff::near("k_esc", actual, expected as f64, 0.0)],
        ));
    }

    if !golden.slope_coefficients.is_empty() {
        let d = ex.mdp.occupancy(crit_pi)? / (1.0 - ex.mdp.gamma());
        let cells = golden
            .slope_coefficients
            .iter()
            .map(|&(label, value)| Ok(CellDiff::near(format!("slope{label}"), d[state(ex, label)?], value, GOLDEN_TOL)))
            .collect::<Result<Vec<_>>>()?;
        out.push(TableCheck::new(name, "slope_coefficients", cells));
    }

    if let Some(shape) = &golden.sweep {
        out.extend(check_sweep(ex, shape)?);
    }
    Ok(out)
}

fn check_sweep(ex: &Example, shape: &SweepShape) -> Result<Vec<TableCheck>> {
    let name = ex.name;
    let grid = uniform_grid(shape.grid_step)?;
    let (a, b) = (ex.crit_index(), ex.star_index());
    let last = grid.len() - 1;
    let flag = |x: bool| if x { 1.0 } else { 0.0 };

    let k1 = theta_sweep(&ex.mdp, &ex.class, a, b, 1, &grid)?;
    let minima = k1.local_minima();
    let interior_max = k1.local_maxima().into_iter().filter(|&i| i != 0 && i != last).collect::<Vec<_>>();
    let mut k1_cells = vec![
        CellDiff::near("theta=0 local min", flag(minima.contains(&0)), 1.0, 0.0),
        CellDiff::near("theta=1 local min", flag(minima.contains(&last)), 1.0, 0.0),
        CellDiff::near("interior local maxima", interior_max.len() as f64, 1.0, 0.0),
    ];
    if let Some(&i) = interior_max.first() {
        k1_cells.push(CellDiff::near("argmax theta", grid[i], shape.argmax_theta, shape.argmax_tol));
    }

    let sloped = theta_sweep(&ex.mdp, &ex.class, a, b, shape.sloped_k, &grid)?;
    let sloped_cells = vec![
        CellDiff::near("interior stationary points", sloped.interior_stationary().len() as f64, 0.0, 0.0),
        CellDiff {
            cell: "forward difference at theta=0".into(),
            actual: sloped.forward_difference_at_start(),
            expect: Expect::Below(0.0),
        },
    ];

    let affine = theta_sweep(&ex.mdp, &ex.class, a, b, shape.affine_k, &grid)?;
    let gamma = ex.mdp.gamma();
    let bound = 2.0 * gamma.powi(shape.affine_k as i32) * ex.mdp.g_max() / (1.0 - gamma);
    let affine_cells = vec![CellDiff {
        cell: "max deviation from chord".into(),
        actual: affine.chord_deviation(),
        expect: Expect::AtMost(bound),
    }];

    Ok(vec![
        TableCheck::new(name, "sweep_k1", k1_cells),
        TableCheck::new(name, format!("sweep_k{}", shape.sloped_k), sloped_cells),
        TableCheck::new(name, format!("sweep_k{}", shape.affine_k), affine_cells),
    ])
}
