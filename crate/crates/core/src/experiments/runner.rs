//! Config-driven runs: tables, descent traces and a JSON report per
//! (experiment, k), plus the golden verification over the registry.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::builders::{build_example, Example, EXAMPLE_NAMES};
use super::goldens::{check_golden, golden, TableCheck};
use crate::error::{Error, Result};
use crate::kstep::{KStepModel, OccupancyWeighting};
use crate::landscape::{certify_critical_model, find_k_esc, theta_sweep, uniform_grid, EscapeMode, CRITICALITY_TOL};
use crate::mdp::{DeterministicPolicy, TabularMdp};
use crate::optim::{descent_run, near_optimality_bound, performance_gap_model, DescentTrace, Method, OptimizerConfig, MONOTONE_TOL};
use crate::policy_class::{
    build_decentralized_class, build_group_decentralized_class, build_independent_agents_class,
    build_state_aggregation_class, FactoredSpace, GroupingFunction, ObservationMap, PolicyClass,
    DEFAULT_CLASS_CAP,
};

/// An MDP given inline or as a path to a JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MdpSource {
    Path(PathBuf),
    Inline(TabularMdp),
}

/// Policy class constructor and its parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ClassSpec {
    Unrestricted,
    StateAggregation {
        observations: Vec<usize>,
    },
    IndependentAgents {
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        #[serde(default)]
        admissible: Option<Vec<Vec<Vec<usize>>>>,
    },
    Decentralized {
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        observations: Vec<Vec<usize>>,
        #[serde(default)]
        admissible: Option<Vec<Vec<Vec<usize>>>>,
    },
    GroupDecentralized {
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        /// Per joint state, the partition of agents into groups.
        partitions: Vec<Vec<Vec<usize>>>,
        #[serde(default)]
        admissible: Option<Vec<Vec<Vec<usize>>>>,
    },
    Explicit {
        policies: Vec<DeterministicPolicy>,
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
    File {
        path: PathBuf,
    },
}

fn factored(
    state_sizes: &[usize],
    action_sizes: &[usize],
    admissible: &Option<Vec<Vec<Vec<usize>>>>,
) -> Result<FactoredSpace> {
    let f = FactoredSpace::new(state_sizes.to_vec(), action_sizes.to_vec())?;
    match admissible {
        Some(a) => f.with_admissible_actions(a.clone()),
        None => Ok(f),
    }
}

impl ClassSpec {
    pub fn build(&self, mdp: &TabularMdp, base_dir: &Path) -> Result<PolicyClass> {
        let cap = DEFAULT_CLASS_CAP;
        match self {
            ClassSpec::Unrestricted => PolicyClass::unrestricted(mdp, cap),
            ClassSpec::StateAggregation { observations } => {
                build_state_aggregation_class(mdp, &ObservationMap::new(observations.clone())?, cap)
            }
            ClassSpec::IndependentAgents { state_sizes, action_sizes, admissible } => {
                build_independent_agents_class(mdp, &factored(state_sizes, action_sizes, admissible)?, cap)
            }
            ClassSpec::Decentralized { state_sizes, action_sizes, observations, admissible } => {
                let maps = observations
                    .iter()
                    .map(|o| ObservationMap::new(o.clone()))
                    .collect::<Result<Vec<_>>>()?;
                build_decentralized_class(mdp, &factored(state_sizes, action_sizes, admissible)?, &maps, cap)
            }
            ClassSpec::GroupDecentralized { state_sizes, action_sizes, partitions, admissible } => {
                let grouping = GroupingFunction::new(partitions.clone(), state_sizes.len())?;
                build_group_decentralized_class(mdp, &factored(state_sizes, action_sizes, admissible)?, &grouping, cap)
            }
            ClassSpec::Explicit { policies, labels } => PolicyClass::new(policies.clone(), labels.clone()),
            ClassSpec::File { path } => PolicyClass::from_path(base_dir.join(path)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Everything a run needs. Either `experiment` names a built-in example, or
/// `mdp`, `policy_class` and `pi_crit` describe a custom one. The `method`
/// and `k` fields of `optimizer` are overridden per run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub mdp: Option<MdpSource>,
    pub policy_class: Option<ClassSpec>,
    pub pi_crit: Option<String>,
    /// Defaults to the best class member.
    pub pi_star: Option<String>,
    /// Empty means `[1, k_esc]` (or `[1]` if no escape is found).
    pub k: Vec<usize>,
    pub methods: Vec<Method>,
    pub optimizer: OptimizerConfig,
    pub weighting: OccupancyWeighting,
    /// Largest k searched for the escape threshold.
    pub k_max: usize,
    pub out: PathBuf,
    pub seed: u64,
    pub formats: Vec<OutputFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: None,
            mdp: None,
            policy_class: None,
            pi_crit: None,
            pi_star: None,
            k: Vec::new(),
            methods: vec![Method::ProjectedGd, Method::MirrorEntropy],
            optimizer: OptimizerConfig {
                max_iters: 2000,
                keep_vectors: false,
                ..OptimizerConfig::default()
            },
            weighting: OccupancyWeighting::OneStep,
            k_max: 30,
            out: PathBuf::from("out"),
            seed: 0,
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

impl RunConfig {
    pub fn for_experiment(name: &str) -> Self {
        RunConfig {
            experiment: Some(name.to_string()),
            ..Self::default()
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.contains(&0) {
            return Err(Error::ZeroHorizon);
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if self.experiment.is_none() && (self.mdp.is_none() || self.policy_class.is_none()) {
            return Err(Error::InvalidConfig(
                "config needs either `experiment` or both `mdp` and `policy_class`".into(),
            ));
        }
        Ok(())
    }
}

/// A resolved problem: MDP, class and the two designated members.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub mdp: TabularMdp,
    pub class: Arc<PolicyClass>,
    pub crit: usize,
    pub star: usize,
}

impl Problem {
    pub fn from_example(ex: &Example) -> Self {
        Problem {
            name: ex.name.to_string(),
            mdp: ex.mdp.clone(),
            class: Arc::clone(&ex.class),
            crit: ex.crit_index(),
            star: ex.star_index(),
        }
    }

    /// `base_dir` resolves relative paths inside the config.
    pub fn from_config(config: &RunConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        if let Some(name) = &config.experiment {
            let ex = build_example(name)?;
            let mut p = Problem::from_example(&ex);
            if let Some(l) = &config.pi_crit {
                p.crit = p.class.index_of_label(l)?;
            }
            if let Some(l) = &config.pi_star {
                p.star = p.class.index_of_label(l)?;
            }
            return Ok(p);
        }
        let mdp = match config.mdp.as_ref().expect("validated") {
            MdpSource::Path(path) => TabularMdp::from_path(base_dir.join(path))?,
            MdpSource::Inline(m) => m.clone(),
        };
        let class = Arc::new(config.policy_class.as_ref().expect("validated").build(&mdp, base_dir)?);
        let crit = match &config.pi_crit {
            Some(l) => class.index_of_label(l)?,
            None => return Err(Error::InvalidConfig("custom runs need `pi_crit`".into())),
        };
        let star = match &config.pi_star {
            Some(l) => class.index_of_label(l)?,
            None => crate::landscape::best_deterministic(&mdp, &class)?.0,
        };
        Ok(Problem {
            name: "custom".into(),
            mdp,
            class,
            crit,
            star,
        })
    }

    fn vertex(&self, i: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.class.len()];
        w[i] = 1.0;
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateValue {
    pub state: String,
    pub value: f64,
}

/// `J(s)`, `Q(s, a)` and `A(s, a)` of the critical policy at one state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QTableRow {
    pub state: String,
    pub value: f64,
    pub q: Vec<f64>,
    pub advantage: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeThresholds {
    pub k_max: usize,
    pub toward_star_one_step: Option<usize>,
    pub toward_star_k_step: Option<usize>,
    pub any_direction_one_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSummary {
    pub method: Method,
    pub eta: f64,
    pub beta: Option<f64>,
    pub iterations: usize,
    pub stopped_at: Option<usize>,
    pub initial_j_k: f64,
    pub final_j_k: f64,
    pub final_e_j1: f64,
    pub final_gap: f64,
    pub final_kstep_gap: f64,
    pub final_star_weight: f64,
    pub monotone_violations: usize,
    pub within_bound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KReport {
    pub experiment: String,
    pub k: usize,
    pub gamma: f64,
    pub g_max: f64,
    pub pi_crit: String,
    pub pi_star: String,
    pub j_crit: f64,
    pub j_star: f64,
    pub best_value: f64,
    pub occupancy: Vec<StateValue>,
    pub kstep_occupancy: Vec<StateValue>,
    pub action_labels: Vec<String>,
    pub q_table: Vec<QTableRow>,
    pub weighting: OccupancyWeighting,
    pub weighted_to_star_one_step: f64,
    pub weighted_to_star_k_step: f64,
    pub critical: bool,
    pub worst_direction: String,
    pub worst_weighted: f64,
    pub k_esc: EscapeThresholds,
    pub bound: f64,
    pub traces: Vec<TraceSummary>,
}

/// Everything produced for one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentBundle {
    pub name: String,
    pub dir: PathBuf,
    pub reports: Vec<KReport>,
    pub traces: Vec<Vec<DescentTrace>>,
    pub golden: Option<Vec<TableCheck>>,
}

fn labelled(mdp: &TabularMdp, v: &nalgebra::DVector<f64>) -> Vec<StateValue> {
    (0..mdp.n_states())
        .map(|s| StateValue {
            state: mdp.state_label(s),
            value: v[s],
        })
        .collect()
}

pub fn escape_thresholds(problem: &Problem, k_max: usize) -> Result<EscapeThresholds> {
    let w = problem.vertex(problem.crit);
    let find = |mode, weighting, target| find_k_esc(&problem.mdp, &problem.class, &w, k_max, mode, weighting, target);
    Ok(EscapeThresholds {
        k_max,
        toward_star_one_step: find(EscapeMode::TowardBest, OccupancyWeighting::OneStep, Some(problem.star))?,
        toward_star_k_step: find(EscapeMode::TowardBest, OccupancyWeighting::KStep, Some(problem.star))?,
        any_direction_one_step: find(EscapeMode::AnyDirection, OccupancyWeighting::OneStep, None)?,
    })
}

fn summarize(trace: &DescentTrace, model: &KStepModel, star: usize) -> Result<TraceSummary> {
    let last = trace.last();
    let gap = performance_gap_model(model, &trace.final_weights)?;
    Ok(TraceSummary {
        method: trace.method,
        eta: trace.eta,
        beta: trace.beta,
        iterations: trace.records.len() - 1,
        stopped_at: trace.stopped_at,
        initial_j_k: trace.records[0].j_k,
        final_j_k: last.j_k,
        final_e_j1: last.e_j1,
        final_gap: last.gap,
        final_kstep_gap: gap.kstep_gap,
        final_star_weight: trace.final_weights[star],
        monotone_violations: trace.monotone_violations(MONOTONE_TOL),
        within_bound: last.gap <= gap.bound + CRITICALITY_TOL,
    })
}

fn run_k(problem: &Problem, config: &RunConfig, k: usize, k_esc: &EscapeThresholds, dir: &Path) -> Result<(KReport, Vec<DescentTrace>)> {
    let mdp = &problem.mdp;
    let model = KStepModel::new(mdp, Arc::clone(&problem.class), k)?;
    let w0 = problem.vertex(problem.crit);
    let crit_pi = problem.class.policy(problem.crit);

    let table = model.advantage_table(&w0, config.weighting)?;
    let other = match config.weighting {
        OccupancyWeighting::OneStep => OccupancyWeighting::KStep,
        OccupancyWeighting::KStep => OccupancyWeighting::OneStep,
    };
    let other_table = model.advantage_table(&w0, other)?;
    let (one_step, k_step) = match config.weighting {
        OccupancyWeighting::OneStep => (&table, &other_table),
        OccupancyWeighting::KStep => (&other_table, &table),
    };
    let crit_report = certify_critical_model(&model, &w0, CRITICALITY_TOL, config.weighting)?;

    let j = mdp.evaluate_policy(crit_pi)?;
    let q = mdp.q_from_values(&j);
    let q_table = (0..mdp.n_states())
        .map(|s| {
            let row: Vec<f64> = (0..mdp.n_actions()).map(|a| q[(s, a)]).collect();
            QTableRow {
                state: mdp.state_label(s),
                value: j[s],
                advantage: row.iter().map(|x| x - j[s]).collect(),
                q: row,
            }
        })
        .collect();
    let action_labels = match mdp.action_labels() {
        Some(l) => l.to_vec(),
        None => (0..mdp.n_actions()).map(|a| a.to_string()).collect(),
    };

    let traces = config
        .methods
        .iter()
        .map(|&method| {
            let opt = OptimizerConfig {
                method,
                k,
                seed: config.seed,
                target: Some(problem.star),
                ..config.optimizer.clone()
            };
            descent_run(&model, &w0, &opt)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = traces
        .iter()
        .map(|t| summarize(t, &model, problem.star))
        .collect::<Result<Vec<_>>>()?;

    let report = KReport {
        experiment: problem.name.clone(),
        k,
        gamma: mdp.gamma(),
        g_max: mdp.g_max(),
        pi_crit: problem.class.label(problem.crit).to_string(),
        pi_star: problem.class.label(problem.star).to_string(),
        j_crit: mdp.policy_value(crit_pi)?,
        j_star: mdp.policy_value(problem.class.policy(problem.star))?,
        best_value: crate::optim::best_of(model.deterministic_values()?).1,
        occupancy: labelled(mdp, &one_step.occupancy),
        kstep_occupancy: labelled(mdp, &k_step.occupancy),
        action_labels,
        q_table,
        weighting: config.weighting,
        weighted_to_star_one_step: one_step.weighted[problem.star],
        weighted_to_star_k_step: k_step.weighted[problem.star],
        critical: crit_report.certified,
        worst_direction: problem.class.label(crit_report.worst_index).to_string(),
        worst_weighted: crit_report.worst_value,
        k_esc: k_esc.clone(),
        bound: near_optimality_bound(mdp, k),
        traces: summaries,
    };

    fs::create_dir_all(dir)?;
    if config.formats.contains(&OutputFormat::Csv) {
        table.save_csv(dir.join("tables.csv"))?;
        for t in &traces {
            t.save_csv(dir.join(format!("trace_{}.csv", t.method.short_name())))?;
        }
        if problem.class.len() == 2 {
            theta_sweep(mdp, &problem.class, problem.crit, problem.star, k, &uniform_grid(0.001)?)?
                .save_csv(dir.join("sweep.csv"))?;
        }
    }
    if config.formats.contains(&OutputFormat::Json) {
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok((report, traces))
}

/// Runs every requested k (in parallel) and writes
/// `<out>/<name>/k<k>/{tables.csv, trace_<method>.csv, report.json}`.
/// Built-in examples also get `<out>/<name>/golden.json`.
pub fn run_experiment(problem: &Problem, config: &RunConfig) -> Result<ExperimentBundle> {
    config.validate()?;
    let k_esc = escape_thresholds(problem, config.k_max)?;
    let ks = if config.k.is_empty() {
        let mut ks = vec![1];
        ks.extend(k_esc.toward_star_one_step.filter(|&k| k > 1));
        ks
    } else {
        config.k.clone()
    };
    let dir = config.out.join(&problem.name);
    let results = ks
        .par_iter()
        .map(|&k| run_k(problem, config, k, &k_esc, &dir.join(format!("k{k}"))))
        .collect::<Result<Vec<_>>>()?;
    let golden = match golden(&problem.name) {
        Some(g) if problem.name != "custom" => {
            let ex = build_example(&problem.name)?;
            let checks = check_golden(&ex, g)?;
            if config.formats.contains(&OutputFormat::Json) {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("golden.json"), serde_json::to_string_pretty(&checks)? + "\n")?;
            }
            Some(checks)
        }
        _ => None,
    };
    let (reports, traces) = results.into_iter().unzip();
    Ok(ExperimentBundle {
        name: problem.name.clone(),
        dir,
        reports,
        traces,
        golden,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub name: String,
    pub tables: Vec<TableCheck>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.tables.iter().all(|t| t.passed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySummary {
    pub experiments: Vec<ExperimentOutcome>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.experiments.iter().all(ExperimentOutcome::passed)
    }

    pub fn tables_matched(&self) -> (usize, usize) {
        let all = self.experiments.iter().flat_map(|e| &e.tables);
        let total = all.clone().count();
        (all.filter(|t| t.passed).count(), total)
    }

    /// `"P/E experiments, M/N tables matched"`.
    pub fn headline(&self) -> String {
        let ok = self.experiments.iter().filter(|e| e.passed()).count();
        let (m, n) = self.tables_matched();
        format!("{ok}/{} experiments, {m}/{n} tables matched", self.experiments.len())
    }

    /// One line per table, cell diffs under each failure, then the headline.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.experiments {
            for t in &e.tables {
                let status = if t.passed { "ok  " } else { "FAIL" };
                let _ = writeln!(s, "{status} {}/{} ({} cells)", e.name, t.table, t.cells.len());
                for c in t.failures() {
                    let _ = writeln!(s, "       {c}");
                }
            }
        }
        s.push_str(&self.headline());
        s.push('\n');
        s
    }
}

/// Checks every built-in experiment against its goldens. With `out`, each
/// experiment is also run (default k list) into `out`, and the rendered
/// summary lands in `out/summary.txt`.
pub fn verify(out: Option<&Path>, seed: u64) -> Result<VerifySummary> {
    let experiments = EXAMPLE_NAMES
        .par_iter()
        .map(|&name| {
            let ex = build_example(name)?;
            let tables = match out {
                Some(dir) => {
                    let config = RunConfig {
                        out: dir.to_path_buf(),
                        seed,
                        ..RunConfig::for_experiment(name)
                    };
                    run_experiment(&Problem::from_example(&ex), &config)?
                        .golden
                        .expect("built-in experiments have goldens")
                }
                None => check_golden(&ex, golden(name).expect("built-in experiments have goldens"))?,
            };
            Ok(ExperimentOutcome {
                name: name.to_string(),
                tables,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = VerifySummary { experiments };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.txt"), summary.render())?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let c = RunConfig::from_json_str(r#"{"experiment": "two_state", "k": [1, 3]}"#).unwrap();
        assert_eq!(c.methods, vec![Method::ProjectedGd, Method::MirrorEntropy]);
        assert_eq!(c.optimizer.max_iters, 2000);
        let back = RunConfig::from_json_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.k, vec![1, 3]);
        assert!(RunConfig::from_json_str(r#"{"experiment": "x", "bogus": 1}"#).is_err());
    }

    #[test]
    fn zero_k_rejected() {
        let c = RunConfig::from_json_str(r#"{"experiment": "two_state", "k": [0]}"#).unwrap();
        assert!(matches!(c.validate(), Err(Error::ZeroHorizon)));
    }

    #[test]
    fn custom_problem_from_inline_mdp() {
        let text = r#"{
            "mdp": {"n_states": 2, "n_actions": 2,
                    "transition": [[[1,0],[0,1]], [[1,0],[0,1]]],
                    "cost": [[1,2],[2,0]], "gamma": 0.8, "mu": [0.6, 0.4]},
            "policy_class": {"kind": "state_aggregation", "params": {"observations": [0, 0]}},
            "pi_crit": "[0,0]",
            "k": [1]
        }"#;
        let c = RunConfig::from_json_str(text).unwrap();
        let p = Problem::from_config(&c, Path::new(".")).unwrap();
        assert_eq!(p.class.len(), 2);
        assert_eq!(p.class.label(p.star), "[1,1]");
        let unrestricted = r#"{"mdp": "m.json", "policy_class": {"kind": "unrestricted"}, "pi_crit": "x"}"#;
        let c = RunConfig::from_json_str(unrestricted).unwrap();
        assert!(matches!(c.policy_class, Some(ClassSpec::Unrestricted)));
        assert!(matches!(c.mdp, Some(MdpSource::Path(_))));
    }

    #[test]
    fn custom_problem_needs_crit() {
        let c = RunConfig {
            mdp: Some(MdpSource::Inline(build_example("two_state").unwrap().mdp)),
            policy_class: Some(ClassSpec::Unrestricted),
            ..RunConfig::default()
        };
        assert!(Problem::from_config(&c, Path::new(".")).is_err());
    }

    #[test]
    fn run_writes_layout() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            out: dir.path().to_path_buf(),
            k: vec![1, 3],
            ..RunConfig::for_experiment("two_state")
        };
        let p = Problem::from_config(&config, Path::new(".")).unwrap();
        let bundle = run_experiment(&p, &config).unwrap();
        for k in [1, 3] {
            for f in ["tables.csv", "trace_pgd.csv", "trace_mirror.csv", "report.json", "sweep.csv"] {
                assert!(bundle.dir.join(format!("k{k}")).join(f).exists(), "k{k}/{f}");
            }
        }
        assert!(bundle.dir.join("golden.json").exists());
        assert!(bundle.golden.unwrap().iter().all(|t| t.passed));
        let r3 = &bundle.reports[1];
        assert_eq!(r3.k_esc.toward_star_one_step, Some(3));
        assert!(r3.weighted_to_star_one_step < 0.0);
        let trace = std::fs::read_to_string(bundle.dir.join("k1/trace_pgd.csv")).unwrap();
        assert!(trace.starts_with("iter,J_k,E_J1,gap,dirderiv_to_star,step_norm\n"));
    }

    #[test]
    fn headline_counts() {
        let s = VerifySummary {
            experiments: vec![ExperimentOutcome { name: "a".into(), tables: vec![] }],
        };
        assert_eq!(s.headline(), "1/1 experiments, 0/0 tables matched");
    }
}
