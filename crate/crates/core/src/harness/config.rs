//! Scenario description: what to run, on which graph, under which schedule.
//!
//! The serde layout here is the on-disk scenario schema; see the README for
//! a commented example.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_strongly_connected, DirectedGraph};
use crate::schedule::{logarithmic_b_sequence, BlockSchedule, Regime};
use crate::trace::{generate_trace, EventTrace, TraceParams, WakeMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Ordinary,
    Pushsum,
    Robust,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Ordinary => "ordinary",
            Protocol::Pushsum => "pushsum",
            Protocol::Robust => "robust",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditLevel {
    None,
    Boundaries,
    #[default]
    EveryIteration,
}

/// When metric samples are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Every iteration for small runs (n <= 8 and horizon <= 100000), block
    /// boundaries otherwise.
    #[default]
    Auto,
    EveryIteration,
    Boundaries,
}

/// Weight rule for ordinary consensus matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Row-stochastic, `1 / |N_i^-|` per in-neighbor.
    #[default]
    Equal,
    /// Symmetric doubly stochastic weights on the symmetrized realized graph.
    Metropolis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Explicit {
        nodes: usize,
        edges: Vec<[usize; 2]>,
    },
    Ring {
        nodes: usize,
    },
    RingWithChord {
        nodes: usize,
    },
    Complete {
        nodes: usize,
    },
    Path {
        nodes: usize,
    },
}

impl GraphSpec {
    pub fn nodes(&self) -> usize {
        match *self {
            GraphSpec::Explicit { nodes, .. }
            | GraphSpec::Ring { nodes }
            | GraphSpec::RingWithChord { nodes }
            | GraphSpec::Complete { nodes }
            | GraphSpec::Path { nodes } => nodes,
        }
    }

    pub fn set_nodes(&mut self, n: usize) -> Result<()> {
        match self {
            GraphSpec::Explicit { .. } => Err(invalid(
                "graph.nodes",
                "cannot resize an explicit edge list".into(),
            )),
            GraphSpec::Ring { nodes }
            | GraphSpec::RingWithChord { nodes }
            | GraphSpec::Complete { nodes }
            | GraphSpec::Path { nodes } => {
                *nodes = n;
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<DirectedGraph> {
        let g = match self {
            GraphSpec::Explicit { nodes, edges } => {
                DirectedGraph::new(*nodes, edges.iter().map(|&[i, j]| (i, j)))
            }
            GraphSpec::Ring { nodes } => DirectedGraph::ring(*nodes),
            GraphSpec::RingWithChord { nodes } => DirectedGraph::ring_with_chord(*nodes),
            GraphSpec::Complete { nodes } => DirectedGraph::complete(*nodes),
            GraphSpec::Path { nodes } => DirectedGraph::bidirectional_path(*nodes),
        };
        g.map_err(|e| invalid("graph", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPattern {
    /// `x0 = [1, 2, ..., n]`.
    Ramp,
    /// `x0 = [n, 0, ..., 0]`.
    Spike,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<InitialPattern>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Ordinary,
    Pushsum,
    Robust,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockSpec {
    /// Fastest growth the regime bound allows.
    Logarithmic {
        regime: RegimeName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(rename = "T", default)]
        t: u64,
    },
    Constant {
        length: usize,
    },
    /// `b_k = ratio^k`; grows faster than every regime bound.
    Geometric {
        ratio: usize,
    },
    Explicit {
        lengths: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub blocks: BlockSpec,
    pub wake_probability: f64,
    pub failure_probability: f64,
    pub seed: u64,
    #[serde(default)]
    pub wake_mode: WakeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Spread of the estimates that counts as converged.
    #[serde(default = "default_convergence")]
    pub convergence: f64,
    /// Consecutive samples that must stay below `convergence`.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Relative tolerance on conserved mass.
    #[serde(default = "default_conservation")]
    pub conservation: f64,
}

fn default_convergence() -> f64 {
    1e-8
}

fn default_window() -> usize {
    3
}

fn default_conservation() -> f64 {
    1e-9
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            convergence: default_convergence(),
            window: default_window(),
            conservation: default_conservation(),
        }
    }
}

/// Deliberate corruption used to exercise the audit and oracle paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fault {
    /// Halves agent 0's x-mass after the given iteration.
    LeakMass { iteration: usize },
    /// Swaps the first two buffer slots when building oracle matrices.
    MisindexBuffers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub iterations: usize,
    #[serde(default)]
    pub audit: AuditLevel,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub weights: WeightRule,
    pub graph: GraphSpec,
    pub initial: InitialSpec,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
}

/// A validated scenario with every derived object built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Graph whose links carry messages (never has self-loops).
    pub links: DirectedGraph,
    pub x0: Vec<f64>,
    pub schedule: BlockSchedule,
    pub trace_params: TraceParams,
}

fn invalid(field: &str, reason: String) -> Error {
    Error::InvalidConfig {
        field: field.to_string(),
        reason,
    }
}

impl ScenarioConfig {
    /// Checks every field and builds graph, initial values and block schedule.
    pub fn resolve(&self) -> Result<Scenario> {
        if self.iterations == 0 {
            return Err(invalid("iterations", "must be at least 1".into()));
        }
        let t = &self.tolerances;
        if !(t.convergence > 0.0) {
            return Err(invalid("tolerances.convergence", "must be positive".into()));
        }
        if !(t.conservation > 0.0) {
            return Err(invalid(
                "tolerances.conservation",
                "must be positive".into(),
            ));
        }
        if t.window == 0 {
            return Err(invalid("tolerances.window", "must be at least 1".into()));
        }

        let graph = self.graph.build()?;
        let n = graph.node_count();
        let links = match self.protocol {
            Protocol::Robust => {
                graph
                    .require_no_self_loops()
                    .map_err(|e| invalid("graph.edges", e.to_string()))?;
                graph.without_self_loops()
            }
            // self-loops are implicit for these protocols
            Protocol::Ordinary | Protocol::Pushsum => graph.without_self_loops(),
        };
        if n < 2 {
            return Err(invalid("graph.nodes", "need at least 2 nodes".into()));
        }
        if !is_strongly_connected(&links) {
            return Err(invalid("graph", "graph must be strongly connected".into()));
        }

        let x0 = match (&self.initial.x0, self.initial.pattern) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "initial",
                    "give either x0 or pattern, not both".into(),
                ))
            }
            (Some(values), None) => {
                if values.len() != n {
                    return Err(invalid(
                        "initial.x0",
                        format!("has length {}, graph has {n} nodes", values.len()),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("initial.x0", "entries must be finite".into()));
                }
                values.clone()
            }
            (None, Some(InitialPattern::Ramp)) => (1..=n).map(|i| i as f64).collect(),
            (None, Some(InitialPattern::Spike)) => {
                let mut v = vec![0.0; n];
                v[0] = n as f64;
                v
            }
            (None, None) => return Err(invalid("initial", "x0 or pattern is required".into())),
        };

        let trace_params = TraceParams {
            wake_probability: self.schedule.wake_probability,
            failure_probability: self.schedule.failure_probability,
            seed: self.schedule.seed,
            wake_mode: self.schedule.wake_mode,
        };
        trace_params
            .validate()
            .map_err(|e| invalid("schedule", e.to_string()))?;

        let schedule = covering_schedule(&self.schedule.blocks, n, self.iterations)?;
        Ok(Scenario {
            config: self.clone(),
            links,
            x0,
            schedule,
            trace_params,
        })
    }

    /// Applies a `key=value` override, e.g. `schedule.seed=7` or `n=6`.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: String| invalid(key, reason);
        let float = || {
            value
                .parse::<f64>()
                .map_err(|_| bad(format!("not a number: {value:?}")))
        };
        let int = || {
            value
                .parse::<u64>()
                .map_err(|_| bad(format!("not an integer: {value:?}")))
        };
        match key {
            "failure_probability" | "schedule.failure_probability" => {
                self.schedule.failure_probability = float()?
            }
            "wake_probability" | "schedule.wake_probability" => {
                self.schedule.wake_probability = float()?
            }
            "seed" | "schedule.seed" => self.schedule.seed = int()?,
            "iterations" => self.iterations = int()? as usize,
            "T" | "schedule.blocks.T" => match &mut self.schedule.blocks {
                BlockSpec::Logarithmic { t, .. } => *t = int()?,
                _ => return Err(bad("T applies to logarithmic schedules only".into())),
            },
            "n" | "graph.nodes" => {
                let n = int()? as usize;
                self.graph.set_nodes(n)?;
                if let Some(x0) = &self.initial.x0 {
                    if x0.len() != n {
                        return Err(invalid(
                            "initial.x0",
                            format!("has length {}, override sets {n} nodes", x0.len()),
                        ));
                    }
                }
            }
            _ => return Err(bad("unknown override key".into())),
        }
        Ok(())
    }
}

impl Scenario {
    pub fn node_count(&self) -> usize {
        self.links.node_count()
    }

    pub fn trace(&self) -> Result<EventTrace> {
        generate_trace(
            &self.links,
            &self.schedule,
            &self.trace_params,
            self.config.iterations,
        )
    }

    /// Floor on the positive weights of every per-iteration matrix.
    pub fn alpha(&self) -> f64 {
        1.0 / self.node_count() as f64
    }

    /// The growth regime matching the protocol.
    pub fn regime(&self) -> Regime {
        match self.config.protocol {
            Protocol::Ordinary => Regime::Ordinary {
                alpha: self.alpha(),
            },
            Protocol::Pushsum => Regime::PushSum,
            Protocol::Robust => Regime::Robust,
        }
    }
}

/// Builds enough blocks to cover `iterations`.
pub fn covering_schedule(spec: &BlockSpec, n: usize, iterations: usize) -> Result<BlockSchedule> {
    let err = |field: &str, e: Error| invalid(field, e.to_string());
    match spec {
        BlockSpec::Logarithmic { regime, alpha, t } => {
            let regime = match (regime, alpha) {
                (RegimeName::Ordinary, Some(a)) => Regime::Ordinary { alpha: *a },
                (RegimeName::Ordinary, None) => Regime::Ordinary {
                    alpha: 1.0 / n as f64,
                },
                (RegimeName::Pushsum, _) => Regime::PushSum,
                (RegimeName::Robust, _) => Regime::Robust,
            };
            // blocks are >= 1, so `iterations` blocks always suffice
            let mut count = n.max(64);
            loop {
                let s = logarithmic_b_sequence(n, regime, *t, count)
                    .map_err(|e| err("schedule.blocks", e))?;
                if s.total_iterations() >= iterations {
                    return Ok(s);
                }
                count = (count * 2).min(iterations.max(count + 1));
            }
        }
        BlockSpec::Constant { length } => {
            if *length == 0 {
                return Err(invalid(
                    "schedule.blocks.length",
                    "must be at least 1".into(),
                ));
            }
            BlockSchedule::constant(n, *length, iterations.div_ceil(*length))
                .map_err(|e| err("schedule.blocks", e))
        }
        BlockSpec::Geometric { ratio } => {
            if *ratio < 2 {
                return Err(invalid(
                    "schedule.blocks.ratio",
                    "must be at least 2".into(),
                ));
            }
            let mut blocks = Vec::new();
            let mut b = 1usize;
            let mut total = 0;
            while total < iterations {
                b = b.saturating_mul(*ratio);
                blocks.push(b);
                total += b.min(iterations);
            }
            BlockSchedule::new(n, blocks).map_err(|e| err("schedule.blocks", e))
        }
        BlockSpec::Explicit { lengths } => {
            let s = BlockSchedule::new(n, lengths.clone())
                .map_err(|e| err("schedule.blocks.lengths", e))?;
            if s.total_iterations() < iterations {
                return Err(invalid(
                    "schedule.blocks.lengths",
                    format!(
                        "blocks cover {} iterations, scenario runs {iterations}",
                        s.total_iterations()
                    ),
                ));
            }
            Ok(s)
        }
    }
}
