#![allow(dead_code)]

use pushsum_core::harness::{
    AuditLevel, BlockSpec, GraphSpec, InitialSpec, Protocol, RegimeName, Sampling, ScenarioConfig,
    ScheduleSpec, Tolerances, WeightRule,
};
use pushsum_core::WakeMode;

pub fn scenario(
    protocol: Protocol,
    graph: GraphSpec,
    x0: Vec<f64>,
    blocks: BlockSpec,
) -> ScenarioConfig {
    ScenarioConfig {
        protocol,
        iterations: 1000,
        audit: AuditLevel::EveryIteration,
        sampling: Sampling::Auto,
        weights: WeightRule::Equal,
        graph,
        initial: InitialSpec {
            x0: Some(x0),
            pattern: None,
        },
        schedule: ScheduleSpec {
            blocks,
            wake_probability: 0.5,
            failure_probability: 0.5,
            seed: 1,
            wake_mode: WakeMode::Independent,
        },
        tolerances: Tolerances::default(),
        fault: None,
    }
}

pub fn logarithmic(regime: RegimeName, t: u64) -> BlockSpec {
    BlockSpec::Logarithmic {
        regime,
        alpha: None,
        t,
    }
}

/// The five-node ring-plus-chord robust scenario with `x0 = [1, 2, 3, 4, 5]`.
pub fn robust_five(seed: u64) -> ScenarioConfig {
    let mut cfg = scenario(
        Protocol::Robust,
        GraphSpec::RingWithChord { nodes: 5 },
        vec![1.0, 2.0, 3.0, 4.0, 5.0],
        logarithmic(RegimeName::Robust, 0),
    );
    cfg.iterations = 100_000;
    cfg.schedule.seed = seed;
    cfg
}
