//! Robust asynchronous push-sum.
//!
//! Each node keeps running totals `sigma_x`, `sigma_y` of the mass it has
//! ever sent, and for every in-neighbor `j` the last running total `rho[j]`
//! it received from `j`. A delivered broadcast carries the sender's total, so
//! the receiver picks up everything sent since its last successful receipt,
//! including shares whose packets were dropped.
//!
//! Mass that was sent but not yet delivered over `(i, j)` is modelled as a
//! virtual buffer node holding `u_ij = sigma_i^x - rho_ji^x` and
//! `v_ij = sigma_i^y - rho_ji^y`. [`SystemState`] tracks the buffers
//! explicitly (they fill on a failed send and flush on delivery) so the
//! identity can be audited rather than assumed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_strongly_connected, DirectedGraph};
use crate::matrix::DenseMatrix;
use crate::trace::IterationEvents;

/// Running total stored as the unevaluated sum `hi + lo`.
///
/// Totals grow without bound while the mass they carry stays bounded, so a
/// plain `f64` total would lose the low-order digits of every share. The
/// compensation term keeps the difference of two totals exact to working
/// precision of the shares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counter {
    pub hi: f64,
    pub lo: f64,
}

impl Counter {
    pub fn add(&mut self, v: f64) {
        let s = self.hi + v;
        let bv = s - self.hi;
        let err = (self.hi - (s - bv)) + (v - bv);
        self.hi = s;
        self.lo += err;
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// `self - earlier`.
    pub fn since(self, earlier: Counter) -> f64 {
        (self.hi - earlier.hi) + (self.lo - earlier.lo)
    }
}

impl From<f64> for Counter {
    fn from(hi: f64) -> Self {
        Counter { hi, lo: 0.0 }
    }
}

/// Running totals carried by one broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Broadcast {
    pub sigma_x: Counter,
    pub sigma_y: Counter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub sigma_x: Counter,
    pub sigma_y: Counter,
    /// In-neighbors, sorted; `rho_x[k]` belongs to `senders[k]`.
    senders: Vec<usize>,
    rho_x: Vec<Counter>,
    rho_y: Vec<Counter>,
}

impl AgentState {
    /// Fresh agent with `y = 1` and all counters zero.
    pub fn new(x: f64, senders: &[usize]) -> Self {
        AgentState {
            x,
            y: 1.0,
            sigma_x: Counter::default(),
            sigma_y: Counter::default(),
            senders: senders.to_vec(),
            rho_x: vec![Counter::default(); senders.len()],
            rho_y: vec![Counter::default(); senders.len()],
        }
    }

    fn slot(&self, sender: usize) -> Option<usize> {
        self.senders.binary_search(&sender).ok()
    }

    /// `(rho_x, rho_y)` last recorded for `sender`.
    pub fn rho(&self, sender: usize) -> Option<(Counter, Counter)> {
        self.slot(sender).map(|s| (self.rho_x[s], self.rho_y[s]))
    }

    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    /// Keeps `1 / (d_out + 1)` of the mass, adds the other shares to the
    /// running totals, and returns the broadcast of the new totals.
    pub fn wake(&mut self, d_out: usize) -> Broadcast {
        let split = (d_out + 1) as f64;
        let share_x = self.x / split;
        let share_y = self.y / split;
        self.sigma_x.add(share_x);
        self.sigma_y.add(share_y);
        self.x = share_x;
        self.y = share_y;
        Broadcast {
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
        }
    }

    /// Absorbs everything `sender` has sent since the last receipt.
    ///
    /// The y-total strictly grows with every send, so a message whose
    /// `sigma_y` is below the stored `rho_y` is stale and rejected. The
    /// x-total has no such ordering when values are negative.
    pub fn receive(&mut self, sender: usize, msg: Broadcast) -> Result<()> {
        let slot = self.slot(sender).ok_or_else(|| {
            Error::ProtocolViolation(format!(
                "message from {sender}, which is not an in-neighbor"
            ))
        })?;
        let dy = msg.sigma_y.since(self.rho_y[slot]);
        if dy < 0.0 {
            return Err(Error::ProtocolViolation(format!(
                "stale message from {sender}: sigma_y {} < rho_y {}",
                msg.sigma_y.value(),
                self.rho_y[slot].value()
            )));
        }
        self.x += msg.sigma_x.since(self.rho_x[slot]);
        self.y += dy;
        self.rho_x[slot] = msg.sigma_x;
        self.rho_y[slot] = msg.sigma_y;
        Ok(())
    }

    /// `z = x / y`; errors when `y <= 0`.
    pub fn estimate(&self) -> Result<f64> {
        if self.y > 0.0 {
            Ok(self.x / self.y)
        } else {
            Err(Error::InvariantViolation(format!(
                "agent y = {} is not positive",
                self.y
            )))
        }
    }
}

/// Undelivered mass on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferState {
    pub edge: (usize, usize),
    pub u: f64,
    pub v: f64,
}

impl BufferState {
    /// `u / v`, or 0 when the buffer is empty.
    pub fn ratio(&self) -> f64 {
        if self.v != 0.0 {
            self.u / self.v
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    graph: DirectedGraph,
    agents: Vec<AgentState>,
    buffers: Vec<BufferState>,
    iteration: usize,
}

impl SystemState {
    /// Initial state over a strongly connected graph without self-loops;
    /// buffers are indexed in the graph's sorted edge order.
    pub fn new(graph: &DirectedGraph, x0: &[f64]) -> Result<Self> {
        graph.require_no_self_loops()?;
        if !is_strongly_connected(graph) {
            return Err(Error::NotStronglyConnected);
        }
        if x0.len() != graph.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "x0 has length {}, graph has {} nodes",
                x0.len(),
                graph.node_count()
            )));
        }
        let agents = x0
            .iter()
            .enumerate()
            .map(|(i, &x)| AgentState::new(x, graph.in_neighbors(i)))
            .collect();
        let buffers = graph
            .edges()
            .iter()
            .map(|&edge| BufferState {
                edge,
                u: 0.0,
                v: 0.0,
            })
            .collect();
        Ok(SystemState {
            graph: graph.clone(),
            agents,
            buffers,
            iteration: 0,
        })
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn buffers(&self) -> &[BufferState] {
        &self.buffers
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn node_count(&self) -> usize {
        self.agents.len()
    }

    pub fn buffer_count(&self) -> usize {
        self.buffers.len()
    }

    /// Mutable agent access for fault-injection tests.
    pub fn agents_mut(&mut self) -> &mut [AgentState] {
        &mut self.agents
    }

    /// `phi^(x) = [x; u]`.
    pub fn phi_x(&self) -> Vec<f64> {
        self.agents
            .iter()
            .map(|a| a.x)
            .chain(self.buffers.iter().map(|b| b.u))
            .collect()
    }

    /// `phi^(y) = [y; v]`.
    pub fn phi_y(&self) -> Vec<f64> {
        self.agents
            .iter()
            .map(|a| a.y)
            .chain(self.buffers.iter().map(|b| b.v))
            .collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.y).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.buffers.iter().map(|b| b.v).collect()
    }

    /// Buffer ratios `r_h = u_h / v_h` (0 where `v_h = 0`).
    pub fn ratios(&self) -> Vec<f64> {
        self.buffers.iter().map(BufferState::ratio).collect()
    }

    /// `(sum x + sum u, sum y + sum v)`.
    pub fn total_mass(&self) -> (f64, f64) {
        let x: f64 = self.agents.iter().map(|a| a.x).sum::<f64>()
            + self.buffers.iter().map(|b| b.u).sum::<f64>();
        let y: f64 = self.agents.iter().map(|a| a.y).sum::<f64>()
            + self.buffers.iter().map(|b| b.v).sum::<f64>();
        (x, y)
    }

    /// Largest deviation of a tracked buffer from `sigma_i - rho_ji`.
    pub fn buffer_identity_residual(&self) -> f64 {
        self.buffers
            .iter()
            .map(|b| {
                let (i, j) = b.edge;
                let (rx, ry) = self.agents[j]
                    .rho(i)
                    .expect("buffer edge is an in-edge of j");
                let sender = &self.agents[i];
                let du = (b.u - sender.sigma_x.since(rx)).abs();
                let dv = (b.v - sender.sigma_y.since(ry)).abs();
                du.max(dv)
            })
            .fold(0.0, f64::max)
    }

    /// Applies one iteration of events.
    ///
    /// Phase 1: every awake node splits its entry-state mass and broadcasts
    /// its new totals. Phase 2: every delivered link hands the broadcast to
    /// its receiver and flushes the buffer; every failed link parks the share
    /// in the buffer.
    pub fn step(&mut self, ev: &IterationEvents) -> Result<()> {
        self.check_events(ev)?;
        let mut sent = Vec::with_capacity(ev.wake.len());
        for &i in &ev.wake {
            let d = self.graph.out_degree(i);
            let msg = self.agents[i].wake(d);
            let a = &self.agents[i];
            sent.push((i, msg, a.x, a.y));
        }
        for (i, msg, share_x, share_y) in sent {
            for idx in 0..self.graph.out_degree(i) {
                let j = self.graph.out_neighbors(i)[idx];
                let h = self.graph.edge_index(i, j).expect("out-edge");
                if ev.is_failed(i, j) {
                    let b = &mut self.buffers[h];
                    b.u += share_x;
                    b.v += share_y;
                } else {
                    self.agents[j].receive(i, msg)?;
                    let b = &mut self.buffers[h];
                    b.u = 0.0;
                    b.v = 0.0;
                }
            }
        }
        self.iteration += 1;
        Ok(())
    }

    fn check_events(&self, ev: &IterationEvents) -> Result<()> {
        let n = self.node_count();
        let violation = |reason: String| Error::TraceViolation {
            iteration: self.iteration,
            reason,
        };
        if let Some(&i) = ev.wake.iter().find(|&&i| i >= n) {
            return Err(violation(format!("wake-up of unknown node {i}")));
        }
        for &(i, j) in &ev.failed {
            if !ev.is_awake(i) || !self.graph.has_edge(i, j) {
                return Err(violation(format!(
                    "failure on {i}->{j} is not an outgoing link of an awake node"
                )));
            }
        }
        Ok(())
    }

    /// `z_i = x_i / y_i` for every agent; buffers are excluded.
    pub fn estimate(&self) -> Result<Vec<f64>> {
        self.agents.iter().map(AgentState::estimate).collect()
    }

    /// Full-precision text snapshot: one line per agent, then per buffer.
    pub fn snapshot_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "iteration {}", self.iteration).unwrap();
        for (i, a) in self.agents.iter().enumerate() {
            writeln!(
                out,
                "agent {i} x={:?} y={:?} sigma_x={:?} sigma_y={:?}",
                a.x,
                a.y,
                a.sigma_x.value(),
                a.sigma_y.value()
            )
            .unwrap();
        }
        for b in &self.buffers {
            let (i, j) = b.edge;
            writeln!(out, "buffer {i}->{j} u={:?} v={:?}", b.u, b.v).unwrap();
        }
        out
    }
}

/// `M^k` for one iteration, `(n + m) x (n + m)`, buffers in sorted edge
/// order after the `n` agents.
pub fn build_m_matrix(g: &DirectedGraph, ev: &IterationEvents) -> DenseMatrix {
    let identity: Vec<usize> = (0..g.edge_count()).collect();
    build_m_matrix_with_layout(g, ev, &identity)
}

/// [`build_m_matrix`] with buffer `h` (sorted edge order) stored at row and
/// column `n + layout[h]`. `layout` must be a permutation of `0..m`.
pub fn build_m_matrix_with_layout(
    g: &DirectedGraph,
    ev: &IterationEvents,
    layout: &[usize],
) -> DenseMatrix {
    let n = g.node_count();
    let m = g.edge_count();
    assert_eq!(layout.len(), m, "layout must cover every buffer");
    let mut mat = DenseMatrix::zeros(n + m, n + m);
    for i in 0..n {
        let awake = ev.is_awake(i);
        let keep = 1.0 / (g.out_degree(i) + 1) as f64;
        mat[(i, i)] = if awake { keep } else { 1.0 };
        if !awake {
            continue;
        }
        for &j in g.out_neighbors(i) {
            let h = n + layout[g.edge_index(i, j).expect("out-edge")];
            if ev.is_failed(i, j) {
                mat[(h, i)] = keep;
            } else {
                mat[(j, i)] = keep;
            }
        }
    }
    for (idx, &(i, j)) in g.edges().iter().enumerate() {
        let h = n + layout[idx];
        if ev.delivered(g, i, j) {
            mat[(j, h)] = 1.0;
        } else {
            mat[(h, h)] = 1.0;
        }
    }
    mat
}

/// Agent-to-agent mixing over a window, rescaled onto the ratio variables:
///
/// ```text
/// P = [ Y1^-1 A Y0   Y1^-1 B V0 ]
///     [ V1~  C Y0    V1~  D V0  ]
/// ```
///
/// where `W = [A B; C D]` is the window's `M` product, `Y0 = diag(y_before)`,
/// `Y1 = diag(y_after)`, `V0 = diag(v_before)` and `V1~` holds `1 / v_after`
/// where positive and 0 where `v_after` is zero. Maps `[z; r]` at the window
/// start to `[z; r]` at its end.
pub fn build_p_matrix(
    w: &DenseMatrix,
    y_before: &[f64],
    y_after: &[f64],
    v_before: &[f64],
    v_after: &[f64],
) -> Result<DenseMatrix> {
    let n = y_before.len();
    let m = v_before.len();
    if y_after.len() != n || v_after.len() != m || w.rows() != n + m || w.cols() != n + m {
        return Err(Error::DimensionMismatch(format!(
            "P needs a {0}x{0} window product with y of length {n} and v of length {m}",
            n + m
        )));
    }
    for (name, ys) in [("y_before", y_before), ("y_after", y_after)] {
        if let Some(i) = ys.iter().position(|&y| !(y > 0.0)) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("entry {i} = {} is not positive", ys[i]),
            });
        }
    }
    for (name, vs) in [("v_before", v_before), ("v_after", v_after)] {
        if let Some(h) = vs.iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("entry {h} = {} is negative", vs[h]),
            });
        }
    }
    let right: Vec<f64> = y_before.iter().chain(v_before).copied().collect();
    let left: Vec<f64> = y_after
        .iter()
        .map(|y| 1.0 / y)
        .chain(v_after.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 0.0 }))
        .collect();
    let mut p = DenseMatrix::zeros(n + m, n + m);
    for r in 0..n + m {
        for c in 0..n + m {
            p[(r, c)] = left[r] * w[(r, c)] * right[c];
        }
    }
    Ok(p)
}

/// Lower bound on the positive entries of `P` for lambda-window `k`:
/// `alpha^(lambda_{k+1} + lambda_k + lambda_{k-1} + 1)` with `lambda_{-1} = 0`.
pub fn p_entry_lower_bound(
    alpha: f64,
    lambda_next: usize,
    lambda: usize,
    lambda_prev: usize,
) -> f64 {
    alpha.powi((lambda_next + lambda + lambda_prev + 1) as i32)
}
