//! WebAssembly bindings for the browser demo. Every export returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pushsum_core::harness::{
    run_scenario, BlockSpec, GraphSpec, InitialSpec, Protocol, RunResult, Sampling, ScenarioConfig,
    ScheduleSpec,
};
use pushsum_core::schedule::logarithmic_b_sequence;
use pushsum_core::{Regime, WakeMode};

/// Largest network the page will simulate.
pub const MAX_NODES: usize = 64;
/// Longest run the page will simulate.
pub const MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Serialize, PartialEq)]
pub struct Series {
    pub protocol: &'static str,
    pub iteration: Vec<usize>,
    pub spread: Vec<f64>,
    pub res_x: Vec<f64>,
    pub res_y: Vec<f64>,
    pub max_v: Vec<f64>,
    pub converged_at: Option<usize>,
    pub final_z: Vec<f64>,
    pub mean: f64,
    pub audit_failure: Option<String>,
}

impl From<RunResult> for Series {
    fn from(r: RunResult) -> Self {
        Series {
            protocol: r.protocol.name(),
            iteration: r.samples.iter().map(|s| s.iteration).collect(),
            spread: r.samples.iter().map(|s| s.spread_z).collect(),
            res_x: r.samples.iter().map(|s| s.res_x).collect(),
            res_y: r.samples.iter().map(|s| s.res_y).collect(),
            max_v: r.samples.iter().map(|s| s.max_v).collect(),
            converged_at: r.converged_at,
            audit_failure: r.audit_failures.first().map(ToString::to_string),
            final_z: r.final_z,
            mean: r.mean_x0,
        }
    }
}

/// Parameters shared by the simulation exports.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub nodes: usize,
    pub failure_probability: f64,
    pub block_length: usize,
    pub seed: u64,
    pub iterations: usize,
}

impl Params {
    fn config(&self, protocol: Protocol) -> Result<ScenarioConfig, String> {
        if !(2..=MAX_NODES).contains(&self.nodes) {
            return Err(format!("nodes must be between 2 and {MAX_NODES}"));
        }
        if self.iterations > MAX_ITERATIONS {
            return Err(format!("iterations must be at most {MAX_ITERATIONS}"));
        }
        Ok(ScenarioConfig {
            protocol,
            iterations: self.iterations,
            audit: Default::default(),
            sampling: Sampling::Auto,
            weights: Default::default(),
            graph: GraphSpec::RingWithChord { nodes: self.nodes },
            initial: InitialSpec {
                x0: Some((1..=self.nodes).map(|i| i as f64).collect()),
                pattern: None,
            },
            schedule: ScheduleSpec {
                blocks: BlockSpec::Constant {
                    length: self.block_length,
                },
                wake_probability: 0.5,
                failure_probability: self.failure_probability,
                seed: self.seed,
                wake_mode: WakeMode::default(),
            },
            tolerances: Default::default(),
            fault: None,
        })
    }
}

fn parse_protocol(name: &str) -> Result<Protocol, String> {
    match name {
        "ordinary" => Ok(Protocol::Ordinary),
        "pushsum" => Ok(Protocol::Pushsum),
        "robust" => Ok(Protocol::Robust),
        _ => Err(format!("unknown protocol {name:?}")),
    }
}

pub fn simulate_series(protocol: &str, p: Params) -> Result<Series, String> {
    let cfg = p.config(parse_protocol(protocol)?)?;
    run_scenario(&cfg)
        .map(Series::from)
        .map_err(|e| e.to_string())
}

pub fn compare_series(p: Params) -> Result<Vec<Series>, String> {
    ["ordinary", "pushsum", "robust"]
        .iter()
        .map(|name| simulate_series(name, p))
        .collect()
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Blocks {
    pub lengths: Vec<usize>,
    /// First iteration of each lambda window.
    pub lambda_boundaries: Vec<usize>,
}

pub fn block_lengths(regime: &str, t: u64, nodes: usize, count: usize) -> Result<Blocks, String> {
    let regime = match regime {
        "ordinary" => Regime::Ordinary {
            alpha: 1.0 / nodes.max(1) as f64,
        },
        "pushsum" => Regime::PushSum,
        "robust" => Regime::Robust,
        _ => return Err(format!("unknown regime {regime:?}")),
    };
    if count > 10_000 {
        return Err("count must be at most 10000".into());
    }
    let s = logarithmic_b_sequence(nodes, regime, t, count).map_err(|e| e.to_string())?;
    Ok(Blocks {
        lengths: s.blocks().to_vec(),
        lambda_boundaries: s.lambda_boundaries(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Runs one protocol on a ring with a chord and returns its metric series.
#[wasm_bindgen]
pub fn simulate(
    protocol: &str,
    nodes: usize,
    failure_probability: f64,
    block_length: usize,
    seed: u64,
    iterations: usize,
) -> Result<String, JsError> {
    let p = Params {
        nodes,
        failure_probability,
        block_length,
        seed,
        iterations,
    };
    to_js(simulate_series(protocol, p))
}

/// Runs all three protocols on the same link failures.
#[wasm_bindgen]
pub fn compare(
    nodes: usize,
    failure_probability: f64,
    block_length: usize,
    seed: u64,
    iterations: usize,
) -> Result<String, JsError> {
    let p = Params {
        nodes,
        failure_probability,
        block_length,
        seed,
        iterations,
    };
    to_js(compare_series(p))
}

/// Block lengths of the fastest-growing schedule a regime allows.
#[wasm_bindgen]
pub fn block_schedule(regime: &str, t: u64, nodes: usize, count: usize) -> Result<String, JsError> {
    to_js(block_lengths(regime, t, nodes, count))
}
