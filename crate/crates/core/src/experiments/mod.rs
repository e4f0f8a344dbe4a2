//! Built-in examples, golden checks, and the report runner.

pub mod builders;
pub mod goldens;
pub mod runner;

pub use builders::{build_example, Example, EXAMPLE_NAMES};
pub use goldens::{check_golden, golden, CellDiff, Expect, Golden, TableCheck, GOLDENS, GOLDEN_TOL};
pub use runner::{
    run_experiment, verify, ClassSpec, ExperimentBundle, KReport, MdpSource, OutputFormat, Problem,
    RunConfig, VerifySummary,
};
