use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kstep_pg::experiments::runner::{run_experiment, verify, Problem, RunConfig};
use kstep_pg::experiments::{build_example, golden, EXAMPLE_NAMES};
use kstep_pg::landscape::{theta_sweep, uniform_grid};
use kstep_pg::{KStepModel, Method, OccupancyWeighting};

#[derive(Parser)]
#[command(name = "kstep", version, about = "k-step policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Optimizer {
    Pgd,
    Mirror,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    OneStep,
    KStep,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (or a JSON config) and write tables, traces and reports.
    Run {
        /// Built-in experiment name or path to a config file.
        target: String,
        /// Comma-separated lookaheads, e.g. 1,3,7.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Run one optimizer only (default: both).
        #[arg(long, value_enum)]
        optimizer: Option<Optimizer>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the advantage table at the critical policy as CSV.
    Tables {
        experiment: String,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "one-step")]
        weighting: Weighting,
    },
    /// Print the value along the segment from the critical to the optimal policy as CSV.
    Sweep {
        experiment: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.001)]
        grid: f64,
    },
    /// Check every built-in experiment against its reference tables.
    Verify {
        /// Also run each experiment and write its outputs here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Show the built-in experiments.
    List,
}

fn registry() -> String {
    let mut s = String::new();
    for name in EXAMPLE_NAMES {
        let ex = build_example(name).expect("built-in experiments build");
        let k_esc = golden(name).and_then(|g| g.k_esc).map_or("-".into(), |k| k.to_string());
        s.push_str(&format!(
            "{name:<16} states={:<3} policies={:<5} pi_crit={} pi_star={} k_esc={k_esc}\n",
            ex.mdp.n_states(),
            ex.class.len(),
            ex.pi_crit,
            ex.pi_star
        ));
    }
    s
}

/// Exit code 2 and the registry when `name` is not a built-in experiment.
fn require_experiment(name: &str) -> Option<ExitCode> {
    if EXAMPLE_NAMES.contains(&name) {
        return None;
    }
    eprintln!("unknown experiment '{name}'; available:\n{}", registry());
    Some(ExitCode::from(2))
}

fn run(target: &str, k: Option<Vec<usize>>, optimizer: Option<Optimizer>, out: Option<PathBuf>, seed: Option<u64>) -> Result<ExitCode> {
    let path = Path::new(target);
    let (mut config, base_dir) = if target.ends_with(".json") || path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {target}"))?;
        let config = RunConfig::from_json_str(&text).with_context(|| format!("parsing {target}"))?;
        (config, path.parent().map(Path::to_path_buf).unwrap_or_default())
    } else {
        if let Some(code) = require_experiment(target) {
            return Ok(code);
        }
        (RunConfig::for_experiment(target), PathBuf::from("."))
    };
    if let Some(name) = config.experiment.clone() {
        if let Some(code) = require_experiment(&name) {
            return Ok(code);
        }
    }
    if let Some(k) = k {
        config.k = k;
    }
    if let Some(o) = optimizer {
        config.methods = vec![match o {
            Optimizer::Pgd => Method::ProjectedGd,
            Optimizer::Mirror => Method::MirrorEntropy,
        }];
    }
    if let Some(out) = out {
        config.out = out;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let problem = Problem::from_config(&config, &base_dir).context("building the problem")?;
    let bundle = run_experiment(&problem, &config).context("running the experiment")?;
    let mut stdout = std::io::stdout().lock();
    for r in &bundle.reports {
        writeln!(
            stdout,
            "{} k={}: J_crit={:.4} J_star={:.4} weighted A to star={:.4} critical={}",
            r.experiment, r.k, r.j_crit, r.j_star, r.weighted_to_star_one_step, r.critical
        )?;
        for t in &r.traces {
            writeln!(
                stdout,
                "  {:<6} iters={:<5} E[J1]={:.4} gap={:.4} (bound {:.4}) star weight={:.4}",
                t.method.short_name(),
                t.iterations,
                t.final_e_j1,
                t.final_gap,
                r.bound,
                t.final_star_weight
            )?;
        }
    }
    if let Some(first) = bundle.reports.first() {
        writeln!(stdout, "k_esc={:?}", first.k_esc.toward_star_one_step)?;
    }
    if let Some(checks) = &bundle.golden {
        let ok = checks.iter().filter(|c| c.passed).count();
        writeln!(stdout, "{ok}/{} reference tables matched", checks.len())?;
    }
    writeln!(stdout, "wrote {}", bundle.dir.display())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { target, k, optimizer, out, seed } => run(&target, k, optimizer, out, seed),
        Command::Tables { experiment, k, weighting } => (|| -> Result<ExitCode> {
            if let Some(code) = require_experiment(&experiment) {
                return Ok(code);
            }
            let ex = build_example(&experiment)?;
            let weighting = match weighting {
                Weighting::OneStep => OccupancyWeighting::OneStep,
                Weighting::KStep => OccupancyWeighting::KStep,
            };
            let mut w = vec![0.0; ex.class.len()];
            w[ex.crit_index()] = 1.0;
            let table = KStepModel::new(&ex.mdp, ex.class.clone(), k)?.advantage_table(&w, weighting)?;
            table.write_csv(std::io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Sweep { experiment, k, grid } => (|| -> Result<ExitCode> {
            if let Some(code) = require_experiment(&experiment) {
                return Ok(code);
            }
            let ex = build_example(&experiment)?;
            let curve = theta_sweep(&ex.mdp, &ex.class, ex.crit_index(), ex.star_index(), k, &uniform_grid(grid)?)?;
            curve.write_csv(std::io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Verify { out, seed } => (|| -> Result<ExitCode> {
            let summary = verify(out.as_deref(), seed)?;
            print!("{}", summary.render());
            Ok(if summary.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        })(),
        Command::List => {
            print!("{}", registry());
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
