//! k-step policy gradients over correlated policies for finite discounted
//! MDPs with restricted deterministic policy classes.

pub mod error;
pub mod experiments;
pub mod gradient;
pub mod kstep;
pub mod landscape;
mod linalg;
pub mod mdp;
pub mod optim;
pub mod policy_class;

pub use error::{Error, Result};
pub use mdp::{DeterministicPolicy, MdpDocument, TabularMdp};
pub use policy_class::{
    build_decentralized_class, build_group_decentralized_class, build_independent_agents_class,
    build_state_aggregation_class, CorrelatedPolicy, FactoredSpace, GroupingFunction,
    ObservationMap, PolicyClass, DEFAULT_CLASS_CAP,
};
pub use kstep::{
    kstep_advantage_table, kstep_occupancy, kstep_operator, kstep_q, kstep_q_correlated,
    kstep_value, mc_estimate, AdvantageTable, KStepEvaluation, KStepModel, KStepOperator,
    McConfig, McEstimate, McMode, OccupancyWeighting,
};
pub use gradient::{
    directional_derivative, directional_derivative_closed_form, gradient_dominance_residual,
    kstep_gradient, GradientVector,
};
pub use optim::{
    certify_smoothness, descent, descent_run, mirror_descent_run, performance_gap,
    project_to_simplex, projected_gd_run, DescentTrace, GapRecord, Geometry, Method,
    OptimizerConfig, StepSize, TraceRecord,
};
pub use landscape::{
    best_deterministic, certify_critical, chained_policy_control, find_k_esc, theta_sweep,
    ChainedControl, CriticalityReport, EscapeMode, SweepCurve, CRITICALITY_TOL,
};
