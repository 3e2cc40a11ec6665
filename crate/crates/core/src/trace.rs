//! Wake-up and link-failure event traces.
//!
//! An [`EventTrace`] records, per iteration, which nodes wake up (`tau_i = 1`)
//! and which outgoing links of the awake nodes drop their packet. Every other
//! outgoing link of an awake node delivers (`tau_ij = 1`).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_strongly_connected, DirectedGraph};
use crate::schedule::BlockSchedule;

/// Events of one iteration. Both lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IterationEvents {
    pub wake: Vec<usize>,
    pub failed: Vec<(usize, usize)>,
}

impl IterationEvents {
    pub fn is_awake(&self, i: usize) -> bool {
        self.wake.binary_search(&i).is_ok()
    }

    pub fn is_failed(&self, i: usize, j: usize) -> bool {
        self.failed.binary_search(&(i, j)).is_ok()
    }

    /// `tau_ij`: `i` is awake, `(i, j)` is an edge of `g`, and it did not fail.
    pub fn delivered(&self, g: &DirectedGraph, i: usize, j: usize) -> bool {
        self.is_awake(i) && g.has_edge(i, j) && !self.is_failed(i, j)
    }

    /// Edges of `g` that delivered this iteration.
    pub fn delivered_edges<'a>(
        &'a self,
        g: &'a DirectedGraph,
    ) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.wake.iter().flat_map(move |&i| {
            g.out_neighbors(i)
                .iter()
                .filter(move |&&j| !self.is_failed(i, j))
                .map(move |&j| (i, j))
        })
    }

    /// Graph of the links that transmitted successfully.
    pub fn realized_graph(&self, g: &DirectedGraph) -> DirectedGraph {
        DirectedGraph::new(g.node_count(), self.delivered_edges(g))
            .expect("delivered edges are a subset of g")
    }

    fn normalize(&mut self) {
        self.wake.sort_unstable();
        self.wake.dedup();
        self.failed.sort_unstable();
        self.failed.dedup();
    }
}

/// How nodes are chosen to wake up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WakeMode {
    /// Each node wakes independently with the wake probability.
    #[default]
    Independent,
    /// Exactly one uniformly chosen node wakes per iteration.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub wake_probability: f64,
    pub failure_probability: f64,
    pub seed: u64,
    #[serde(default)]
    pub wake_mode: WakeMode,
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        let p = self.wake_probability;
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "wake_probability",
                reason: format!("must lie in (0, 1], got {p}"),
            });
        }
        let q = self.failure_probability;
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidParameter {
                name: "failure_probability",
                reason: format!("must lie in [0, 1), got {q}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub n: usize,
    pub seed: u64,
    pub schedule: BlockSchedule,
    pub iterations: Vec<IterationEvents>,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Serializes to the line format
    /// `iter=<k> wake=<i,...> fail=<i->j,...>`, preceded by one `#` header
    /// line carrying `n`, the seed and the block lengths.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let blocks: Vec<String> = self
            .schedule
            .blocks()
            .iter()
            .map(usize::to_string)
            .collect();
        writeln!(
            out,
            "# n={} seed={} blocks={}",
            self.n,
            self.seed,
            blocks.join(",")
        )
        .unwrap();
        for (k, ev) in self.iterations.iter().enumerate() {
            let wake: Vec<String> = ev.wake.iter().map(usize::to_string).collect();
            let fail: Vec<String> = ev.failed.iter().map(|(i, j)| format!("{i}->{j}")).collect();
            writeln!(
                out,
                "iter={k} wake={} fail={}",
                wake.join(","),
                fail.join(",")
            )
            .unwrap();
        }
        out
    }

    /// Parses the format written by [`EventTrace::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Option<(usize, u64, Vec<usize>)> = None;
        let mut iterations = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |reason: String| Error::TraceParse {
                line: line_no,
                reason,
            };
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut n = None;
                let mut seed = None;
                let mut blocks = None;
                for field in rest.split_whitespace() {
                    let (key, value) = field
                        .split_once('=')
                        .ok_or_else(|| err(format!("malformed header field {field:?}")))?;
                    match key {
                        "n" => n = Some(parse_num(value).map_err(err)?),
                        "seed" => seed = Some(parse_num(value).map_err(err)?),
                        "blocks" => blocks = Some(parse_list(value, parse_num).map_err(err)?),
                        _ => {}
                    }
                }
                match (n, seed, blocks) {
                    (Some(n), Some(seed), Some(blocks)) => header = Some((n, seed, blocks)),
                    _ => return Err(err("header needs n, seed and blocks".into())),
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = |key: &str| -> Result<&str> {
                let field = fields
                    .next()
                    .ok_or_else(|| err(format!("missing field {key}")))?;
                field
                    .strip_prefix(key)
                    .and_then(|f| f.strip_prefix('='))
                    .ok_or_else(|| err(format!("expected {key}=..., got {field:?}")))
            };
            let k: usize = parse_num(next("iter")?).map_err(err)?;
            if k != iterations.len() {
                return Err(err(format!(
                    "expected iter={}, got iter={k}",
                    iterations.len()
                )));
            }
            let wake = parse_list(next("wake")?, parse_num).map_err(err)?;
            let failed = parse_list(next("fail")?, |s| {
                let (i, j) = s
                    .split_once("->")
                    .ok_or_else(|| format!("malformed link {s:?}"))?;
                Ok((parse_num(i)?, parse_num(j)?))
            })
            .map_err(err)?;
            let mut ev = IterationEvents { wake, failed };
            ev.normalize();
            iterations.push(ev);
        }
        let (n, seed, blocks) = header.ok_or(Error::TraceParse {
            line: 0,
            reason: "missing header line".into(),
        })?;
        Ok(EventTrace {
            n,
            seed,
            schedule: BlockSchedule::new(n, blocks)?,
            iterations,
        })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("invalid number {s:?}"))
}

fn parse_list<T>(
    s: &str,
    item: impl Fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<T>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(item).collect()
}

/// Draws a trace over `g` following `schedule`, then injects deliveries so
/// that every edge succeeds at least once inside every block.
///
/// Each iteration wakes nodes according to `params.wake_mode` and drops each
/// outgoing link of an awake node with the failure probability. For every
/// edge `(i, j)` still uncovered at the end of a block, one iteration of the
/// block is picked uniformly; `i` is woken there if needed (its other links
/// draw fresh outcomes) and `(i, j)` is forced to deliver.
///
/// In sequential mode an injection replaces that iteration's single waker
/// with `i` and makes every link of `i` deliver; the iteration is then
/// pinned. If a block runs out of unpinned iterations the call fails with
/// [`Error::BlockTooShort`].
pub fn generate_trace(
    g: &DirectedGraph,
    schedule: &BlockSchedule,
    params: &TraceParams,
    iterations: usize,
) -> Result<EventTrace> {
    params.validate()?;
    g.require_no_self_loops()?;
    if !is_strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    if schedule.node_count() != g.node_count() {
        return Err(Error::NodeCountMismatch {
            expected: g.node_count(),
            actual: schedule.node_count(),
        });
    }
    let available = schedule.total_iterations();
    if iterations > available {
        return Err(Error::ScheduleTooShort {
            needed: iterations,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = Vec::with_capacity(iterations);
    let mut start = 0;
    for (block, &len) in schedule.blocks().iter().enumerate() {
        if start >= iterations {
            break;
        }
        let end = (start + len).min(iterations);
        let mut events: Vec<IterationEvents> = (start..end)
            .map(|_| draw_iteration(g, params, &mut rng))
            .collect();
        match params.wake_mode {
            WakeMode::Independent => cover_independent(g, params, &mut rng, &mut events),
            WakeMode::Sequential => cover_sequential(g, params, &mut rng, &mut events)
                .map_err(|()| Error::BlockTooShort { block, len })?,
        }
        out.extend(events);
        start = end;
    }

    Ok(EventTrace {
        n: g.node_count(),
        seed: params.seed,
        schedule: schedule.clone(),
        iterations: out,
    })
}

fn draw_iteration(
    g: &DirectedGraph,
    params: &TraceParams,
    rng: &mut ChaCha8Rng,
) -> IterationEvents {
    let n = g.node_count();
    let wake: Vec<usize> = match params.wake_mode {
        WakeMode::Independent => (0..n)
            .filter(|_| rng.random_bool(params.wake_probability))
            .collect(),
        WakeMode::Sequential => vec![rng.random_range(0..n)],
    };
    let mut ev = IterationEvents {
        wake,
        failed: Vec::new(),
    };
    for &i in &ev.wake {
        draw_links(g, params, rng, i, &mut ev.failed);
    }
    ev.normalize();
    ev
}

fn draw_links(
    g: &DirectedGraph,
    params: &TraceParams,
    rng: &mut ChaCha8Rng,
    i: usize,
    failed: &mut Vec<(usize, usize)>,
) {
    for &j in g.out_neighbors(i) {
        if rng.random_bool(params.failure_probability) {
            failed.push((i, j));
        }
    }
}

fn covered_edges(g: &DirectedGraph, events: &[IterationEvents]) -> Vec<bool> {
    let mut covered = vec![false; g.edge_count()];
    for ev in events {
        for (i, j) in ev.delivered_edges(g) {
            covered[g.edge_index(i, j).expect("edge of g")] = true;
        }
    }
    covered
}

fn cover_independent(
    g: &DirectedGraph,
    params: &TraceParams,
    rng: &mut ChaCha8Rng,
    events: &mut [IterationEvents],
) {
    if events.is_empty() {
        return;
    }
    let mut covered = covered_edges(g, events);
    for (h, &(i, j)) in g.edges().iter().enumerate() {
        if covered[h] {
            continue;
        }
        let t = rng.random_range(0..events.len());
        let ev = &mut events[t];
        if !ev.is_awake(i) {
            ev.wake.push(i);
            draw_links(g, params, rng, i, &mut ev.failed);
        }
        ev.failed.retain(|&e| e != (i, j));
        ev.normalize();
        for &k in g.out_neighbors(i) {
            if ev.delivered(g, i, k) {
                covered[g.edge_index(i, k).expect("edge of g")] = true;
            }
        }
    }
}

fn cover_sequential(
    g: &DirectedGraph,
    params: &TraceParams,
    rng: &mut ChaCha8Rng,
    events: &mut [IterationEvents],
) -> std::result::Result<(), ()> {
    if events.is_empty() {
        return Ok(());
    }
    let mut pinned = vec![false; events.len()];
    loop {
        let covered = covered_edges(g, events);
        let Some(h) = covered.iter().position(|c| !c) else {
            return Ok(());
        };
        let (i, _) = g.edges()[h];
        let free: Vec<usize> = (0..events.len()).filter(|&t| !pinned[t]).collect();
        if free.is_empty() {
            return Err(());
        }
        let t = free[rng.random_range(0..free.len())];
        pinned[t] = true;
        events[t] = IterationEvents {
            wake: vec![i],
            failed: Vec::new(),
        };
        // keep the rng stream aligned with an ordinary draw for node i
        let mut discard = Vec::new();
        draw_links(g, params, rng, i, &mut discard);
    }
}

/// Checks both trace invariants against `g`: failures only on outgoing edges
/// of awake nodes, and every edge delivering at least once in every complete
/// block that lies inside the trace.
pub fn validate_trace(trace: &EventTrace, g: &DirectedGraph) -> Result<()> {
    let n = g.node_count();
    if trace.n != n {
        return Err(Error::NodeCountMismatch {
            expected: n,
            actual: trace.n,
        });
    }
    for (k, ev) in trace.iterations.iter().enumerate() {
        let violation = |reason: String| Error::TraceViolation {
            iteration: k,
            reason,
        };
        if let Some(&i) = ev.wake.iter().find(|&&i| i >= n) {
            return Err(violation(format!("wake-up of unknown node {i}")));
        }
        for &(i, j) in &ev.failed {
            if !ev.is_awake(i) {
                return Err(violation(format!(
                    "link {i}->{j} failed but node {i} is asleep"
                )));
            }
            if !g.has_edge(i, j) {
                return Err(violation(format!("link {i}->{j} is not an edge")));
            }
        }
    }
    let mut start = 0;
    for (block, &len) in trace.schedule.blocks().iter().enumerate() {
        let end = start + len;
        if end > trace.len() {
            break;
        }
        let covered = covered_edges(g, &trace.iterations[start..end]);
        if let Some(h) = covered.iter().position(|c| !c) {
            let (i, j) = g.edges()[h];
            return Err(Error::TraceViolation {
                iteration: start,
                reason: format!(
                    "edge {i}->{j} never delivers in block {} (iterations {start}..{end})",
                    block + 1
                ),
            });
        }
        start = end;
    }
    Ok(())
}
