//! Optimistic model-based reinforcement learning for controlled SDEs.
//!
//! The crate simulates `dx = f(x,u) dt + g(x,u) dw`, collects noisy drift and
//! reward measurements, keeps least-squares confidence sets over finite
//! hypothesis classes, and plans optimistically over them. Three episode
//! drivers differ in when the sets are rebuilt and how many measurements one
//! rollout provides.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod environments;
pub mod error;
pub mod function_classes;
pub mod measurement;
pub mod planner;
pub mod pure;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use function_classes::{
    compute_radii, confidence_set, erm_fit, ConfidenceRadii, Dataset, FunctionClass, Hypothesis, Target,
};
pub use measurement::{
    draw_measurement_times, observe, observe_path, Measurement, MeasurementMode, MeasurementOracleConfig,
    SamplerSpec,
};
pub use environments::{catalog, lookup, EnvCatalogEntry, EnvConfig};
pub use planner::{exact_optimal, optimistic_plan, CandidateGrid, OptimalityOracle, OptimisticChoice, ReturnTable};
pub use sde::{
    estimate_return, simulate_trajectory, ControlVec, DynamicsSpec, InitialDistribution, LipschitzConstants, Policy,
    ScalarField, StateVec, Trajectory, VectorField,
};
pub use pure::{
    check_variant, run, run_pure_base, run_pure_low_rollout, run_pure_low_switch, run_schedule_variant, run_variant, RunConfig,
    RunContext, RunLog, Schedule, UpdateRule, Variant,
};
pub use verify::{run_suite, Suite, SuiteReport, VerifyOptions, VerifyReport};
