pub mod config;
pub mod run;

pub use config::{
    covering_schedule, AuditLevel, BlockSpec, Fault, GraphSpec, InitialPattern, InitialSpec,
    Protocol, RegimeName, Sampling, Scenario, ScenarioConfig, ScheduleSpec, Tolerances, WeightRule,
};
pub use run::{
    audit_mass_conservation, detect_convergence, divergence_demo, run_scenario, run_with_trace,
    AuditFailure, AuditStats, RunResult, Sample, CSV_HEADER,
};
