use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::matrix::spread;
use crate::protocol::ordinary::{equal_weight_matrix, metropolis_matrix, symmetrized};
use crate::protocol::push_sum::push_sum_step;
use crate::protocol::robust::SystemState;
use crate::schedule::{BlockSchedule, Regime};
use crate::trace::{EventTrace, IterationEvents};

use super::config::{AuditLevel, Fault, Protocol, Sampling, Scenario, ScenarioConfig, WeightRule};

/// Slack allowed on monotone envelopes sampled at lambda-boundaries.
pub const ENVELOPE_SLACK: f64 = 1e-12;

/// Runs with `n <= AUTO_SAMPLE_MAX_NODES` and at most this many iterations
/// are sampled every iteration under [`Sampling::Auto`].
const AUTO_SAMPLE_MAX_ITERATIONS: usize = 100_000;
const AUTO_SAMPLE_MAX_NODES: usize = 8;

pub const CSV_HEADER: &str = "iter,spread_z,res_x,res_y,min_y,max_u,max_v";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub iteration: usize,
    pub spread_z: f64,
    /// `|sum x + sum u - sum x0|`
    pub res_x: f64,
    /// `|sum y + sum v - n|`
    pub res_y: f64,
    /// Smallest agent weight; NaN for ordinary consensus, which has none.
    pub min_y: f64,
    pub max_u: f64,
    pub max_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditFailure {
    pub iteration: usize,
    pub invariant: &'static str,
    pub detail: String,
}

impl std::fmt::Display for AuditFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "invariant `{}` violated at iteration {}: {}",
            self.invariant, self.iteration, self.detail
        )
    }
}

/// Counters and extremes gathered by the audits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditStats {
    pub iteration_checks: usize,
    pub boundary_checks: usize,
    /// Largest `|sum x + sum u - sum x0| / max(|sum x0|, 1)` seen.
    pub max_rel_res_x: f64,
    /// Largest `|sum y + sum v - n| / n` seen.
    pub max_rel_res_y: f64,
    /// Envelope value at each lambda-boundary: `s = max{z, r} - min{z, r}`
    /// for robust runs, `spread(z)` otherwise.
    pub envelope: Vec<(usize, f64)>,
    /// Smallest agent `y` seen at a lambda-boundary, with its lower bound.
    pub min_boundary_y: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub protocol: Protocol,
    pub iterations_run: usize,
    pub converged_at: Option<usize>,
    pub final_z: Vec<f64>,
    pub mean_x0: f64,
    pub samples: Vec<Sample>,
    pub audit_failures: Vec<AuditFailure>,
    pub stats: AuditStats,
    /// Smallest `K` from which the schedule's `lambda_k` meets the protocol's
    /// growth bound up to the run horizon (None if it fails at the horizon).
    pub lambda_bound_from: Option<u64>,
}

impl RunResult {
    pub fn final_spread(&self) -> f64 {
        spread(&self.final_z).unwrap_or(f64::NAN)
    }

    /// Largest `|z_i - mean(x0)|` at the end of the run.
    pub fn max_error(&self) -> f64 {
        self.final_z
            .iter()
            .map(|z| (z - self.mean_x0).abs())
            .fold(0.0, f64::max)
    }

    pub fn passed_audits(&self) -> bool {
        self.audit_failures.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.iteration, s.spread_z, s.res_x, s.res_y, s.min_y, s.max_u, s.max_v
            )
            .unwrap();
        }
        out
    }

    /// One `key=value` per line.
    pub fn summary(&self) -> String {
        let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
        let z: Vec<String> = self.final_z.iter().map(f64::to_string).collect();
        let mut out = String::new();
        writeln!(out, "protocol={}", self.protocol.name()).unwrap();
        writeln!(out, "iterations={}", self.iterations_run).unwrap();
        writeln!(
            out,
            "converged_at={}",
            opt(self.converged_at.map(|v| v as u64))
        )
        .unwrap();
        writeln!(out, "final_spread={}", self.final_spread()).unwrap();
        writeln!(out, "mean_x0={}", self.mean_x0).unwrap();
        writeln!(out, "max_error={}", self.max_error()).unwrap();
        writeln!(out, "final_z={}", z.join(",")).unwrap();
        writeln!(out, "lambda_bound_from={}", opt(self.lambda_bound_from)).unwrap();
        writeln!(
            out,
            "audit_checks={}",
            self.stats.iteration_checks + self.stats.boundary_checks
        )
        .unwrap();
        writeln!(out, "audit_failures={}", self.audit_failures.len()).unwrap();
        for f in &self.audit_failures {
            writeln!(out, "failure={f}").unwrap();
        }
        out
    }
}

/// First recorded iteration whose spread is `<= tol` and stays there for
/// `window` consecutive samples (counting itself).
pub fn detect_convergence(series: &[(usize, f64)], tol: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    let mut run = 0;
    for (idx, &(_, s)) in series.iter().enumerate() {
        if s <= tol {
            run += 1;
            if run == window {
                return Some(series[idx + 1 - window].0);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// `|sum x + sum u - x0_sum|` and `|sum y + sum v - n|`.
pub fn audit_mass_conservation(s: &SystemState, x0_sum: f64, n: usize) -> (f64, f64) {
    let (x, y) = s.total_mass();
    ((x - x0_sum).abs(), (y - n as f64).abs())
}

/// Protocol state advanced by one iteration of events.
enum Engine {
    Ordinary { x: Vec<f64>, weights: WeightRule },
    PushSum { x: Vec<f64>, y: Vec<f64> },
    Robust(Box<SystemState>),
}

impl Engine {
    fn new(scn: &Scenario) -> Result<Self> {
        Ok(match scn.config.protocol {
            Protocol::Ordinary => Engine::Ordinary {
                x: scn.x0.clone(),
                weights: scn.config.weights,
            },
            Protocol::Pushsum => Engine::PushSum {
                x: scn.x0.clone(),
                y: vec![1.0; scn.x0.len()],
            },
            Protocol::Robust => Engine::Robust(Box::new(SystemState::new(&scn.links, &scn.x0)?)),
        })
    }

    fn step(&mut self, links: &DirectedGraph, ev: &IterationEvents) -> Result<()> {
        match self {
            Engine::Ordinary { x, weights } => {
                let realized = ev.realized_graph(links);
                let a = match weights {
                    WeightRule::Equal => equal_weight_matrix(&realized.with_self_loops())?,
                    WeightRule::Metropolis => metropolis_matrix(&symmetrized(&realized))?,
                };
                *x = a.mul_vec(x)?;
            }
            Engine::PushSum { x, y } => {
                let realized = ev.realized_graph(links).with_self_loops();
                let next = push_sum_step(&realized, x, y)?;
                *x = next.x;
                *y = next.y;
            }
            Engine::Robust(s) => s.step(ev)?,
        }
        Ok(())
    }

    fn leak(&mut self) {
        match self {
            Engine::Ordinary { x, .. } | Engine::PushSum { x, .. } => x[0] *= 0.5,
            Engine::Robust(s) => s.agents_mut()[0].x *= 0.5,
        }
    }

    fn estimates(&self) -> Result<Vec<f64>> {
        match self {
            Engine::Ordinary { x, .. } => Ok(x.clone()),
            Engine::PushSum { x, y } => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    if b > 0.0 {
                        Ok(a / b)
                    } else {
                        Err(Error::InvariantViolation(format!(
                            "y = {b} is not positive"
                        )))
                    }
                })
                .collect(),
            Engine::Robust(s) => s.estimate(),
        }
    }

    /// `(sum x + sum u, sum y + sum v)`
    fn mass(&self) -> (f64, f64) {
        match self {
            Engine::Ordinary { x, .. } => (x.iter().sum(), x.len() as f64),
            Engine::PushSum { x, y } => (x.iter().sum(), y.iter().sum()),
            Engine::Robust(s) => s.total_mass(),
        }
    }

    fn agent_y(&self) -> Option<Vec<f64>> {
        match self {
            Engine::Ordinary { .. } => None,
            Engine::PushSum { y, .. } => Some(y.clone()),
            Engine::Robust(s) => Some(s.y()),
        }
    }
}

struct Auditor<'a> {
    scn: &'a Scenario,
    level: AuditLevel,
    x0_sum: f64,
    n: usize,
    /// `[min z, max z]` after the previous iteration (convex-hull audit).
    prev_range: (f64, f64),
    /// `(min, max)` of the envelope at the previous lambda-boundary.
    prev_envelope: (f64, f64),
    stats: AuditStats,
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

impl<'a> Auditor<'a> {
    fn fail(iteration: usize, invariant: &'static str, detail: String) -> AuditFailure {
        AuditFailure {
            iteration,
            invariant,
            detail,
        }
    }

    fn conservation_applies(&self) -> bool {
        !matches!(
            (self.scn.config.protocol, self.scn.config.weights),
            (Protocol::Ordinary, WeightRule::Equal)
        )
    }

    fn check_conservation(&mut self, k: usize, engine: &Engine) -> Option<AuditFailure> {
        if !self.conservation_applies() {
            return None;
        }
        let (mx, my) = engine.mass();
        let rel_x = (mx - self.x0_sum).abs() / self.x0_sum.abs().max(1.0);
        let rel_y = (my - self.n as f64).abs() / self.n as f64;
        self.stats.max_rel_res_x = self.stats.max_rel_res_x.max(rel_x);
        self.stats.max_rel_res_y = self.stats.max_rel_res_y.max(rel_y);
        let tol = self.scn.config.tolerances.conservation;
        if !(rel_x <= tol && rel_y <= tol) {
            return Some(Self::fail(
                k,
                "mass_conservation",
                format!("relative residuals x: {rel_x:e}, y: {rel_y:e} exceed {tol:e}"),
            ));
        }
        None
    }

    /// Checks run after every iteration at level `every_iteration`.
    fn per_iteration(&mut self, k: usize, engine: &Engine, z: &[f64]) -> Option<AuditFailure> {
        self.stats.iteration_checks += 1;
        if let Some(f) = self.check_conservation(k, engine) {
            return Some(f);
        }
        let tol = self.scn.config.tolerances.conservation;
        match engine {
            Engine::Robust(s) => {
                if let Some((i, a)) = s.agents().iter().enumerate().find(|(_, a)| !(a.y > 0.0)) {
                    return Some(Self::fail(k, "positive_y", format!("y_{i} = {}", a.y)));
                }
                for b in s.buffers() {
                    if b.v < 0.0 {
                        return Some(Self::fail(
                            k,
                            "nonnegative_v",
                            format!("v{:?} = {}", b.edge, b.v),
                        ));
                    }
                    if b.v == 0.0 && b.u != 0.0 {
                        return Some(Self::fail(
                            k,
                            "empty_buffer_has_no_x_mass",
                            format!("v{:?} = 0 but u = {}", b.edge, b.u),
                        ));
                    }
                }
                let scale = s
                    .agents()
                    .iter()
                    .map(|a| a.sigma_x.value().abs().max(a.sigma_y.value().abs()))
                    .fold(1.0, f64::max);
                let residual = s.buffer_identity_residual();
                if residual > tol * scale {
                    return Some(Self::fail(
                        k,
                        "buffer_identity",
                        format!("max |u - (sigma - rho)| = {residual:e}"),
                    ));
                }
            }
            Engine::PushSum { y, .. } => {
                if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
                    return Some(Self::fail(k, "positive_y", format!("y_{i} = {}", y[i])));
                }
            }
            Engine::Ordinary { .. } => {}
        }
        // every per-iteration map is a stochastic map on the estimates
        if !matches!(engine, Engine::Robust(_)) {
            let (lo, hi) = range(z);
            let (plo, phi) = self.prev_range;
            let slack = 1e-12 * plo.abs().max(phi.abs()).max(1.0);
            if lo < plo - slack || hi > phi + slack {
                return Some(Self::fail(
                    k,
                    "convex_hull",
                    format!("estimates [{lo}, {hi}] left previous range [{plo}, {phi}]"),
                ));
            }
            self.prev_range = (lo, hi);
        }
        None
    }

    /// Checks at lambda-boundary `mu_{l n}` (l >= 1).
    fn at_boundary(
        &mut self,
        k: usize,
        l: usize,
        engine: &Engine,
        z: &[f64],
    ) -> Result<Option<AuditFailure>> {
        self.stats.boundary_checks += 1;
        if self.level == AuditLevel::Boundaries {
            if let Some(f) = self.check_conservation(k, engine) {
                return Ok(Some(f));
            }
        }
        let schedule: &BlockSchedule = &self.scn.schedule;
        let n = self.n as f64;
        let alpha = 1.0 / n;
        let lambda = schedule.lambda(l)?;
        let lambda_prev = schedule.lambda(l - 1)?;
        let upper = n * (1.0 + self.scn.config.tolerances.conservation);

        let envelope = match engine {
            Engine::Robust(s) => {
                let y_lower = alpha.powi(lambda as i32);
                let v_lower = alpha.powi((lambda + lambda_prev) as i32);
                for (i, a) in s.agents().iter().enumerate() {
                    self.note_boundary_y(a.y, y_lower);
                    if !(a.y >= y_lower && a.y <= upper) {
                        return Ok(Some(Self::fail(
                            k,
                            "y_bounds",
                            format!("y_{i} = {:e} outside [{y_lower:e}, {n}]", a.y),
                        )));
                    }
                }
                for b in s.buffers() {
                    if b.v != 0.0 && !(b.v >= v_lower && b.v <= upper) {
                        return Ok(Some(Self::fail(
                            k,
                            "v_bounds",
                            format!("v{:?} = {:e} outside [{v_lower:e}, {n}]", b.edge, b.v),
                        )));
                    }
                }
                let ratios: Vec<f64> = s
                    .buffers()
                    .iter()
                    .filter(|b| b.v > 0.0)
                    .map(|b| b.ratio())
                    .collect();
                let (zlo, zhi) = range(z);
                let (rlo, rhi) = range(&ratios);
                (zlo.min(rlo), zhi.max(rhi))
            }
            Engine::PushSum { y, .. } => {
                let y_lower = alpha.powi(lambda as i32 - 1);
                for (i, &yi) in y.iter().enumerate() {
                    self.note_boundary_y(yi, y_lower);
                    if !(yi >= y_lower && yi <= upper) {
                        return Ok(Some(Self::fail(
                            k,
                            "y_bounds",
                            format!("y_{i} = {yi:e} outside [{y_lower:e}, {n}]"),
                        )));
                    }
                }
                range(z)
            }
            Engine::Ordinary { .. } => range(z),
        };
        let (lo, hi) = envelope;
        let (plo, phi) = self.prev_envelope;
        self.prev_envelope = envelope;
        self.stats.envelope.push((k, hi - lo));
        if hi > phi + ENVELOPE_SLACK || lo < plo - ENVELOPE_SLACK {
            return Ok(Some(Self::fail(
                k,
                "envelope_monotone",
                format!("envelope [{lo:e}, {hi:e}] left the previous [{plo:e}, {phi:e}]"),
            )));
        }
        Ok(None)
    }

    fn note_boundary_y(&mut self, y: f64, bound: f64) {
        match self.stats.min_boundary_y {
            Some((m, _)) if m <= y => {}
            _ => self.stats.min_boundary_y = Some((y, bound)),
        }
    }
}

/// Smallest `K` such that `lambda_k` meets the regime bound for every
/// `k` in `K..=horizon`.
fn lambda_bound_from(
    schedule: &BlockSchedule,
    regime: Regime,
    t: u64,
    horizon: u64,
) -> Option<u64> {
    let bounds = schedule.lambda_boundaries();
    let n = schedule.node_count();
    let mut from = Some(1);
    for k in (1..=horizon).rev() {
        let lambda = bounds[k as usize] - bounds[k as usize - 1];
        if lambda as f64 > regime.bound(k, t, n) {
            from = (k < horizon).then_some(k + 1);
            break;
        }
    }
    from
}

/// Generates the scenario's trace and runs it.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    let scn = cfg.resolve()?;
    let trace = scn.trace()?;
    run_with_trace(&scn, &trace)
}

/// Runs a resolved scenario over a given trace, sampling metrics and auditing
/// invariants as configured. The first audit failure stops the run; it is
/// returned in `audit_failures`.
pub fn run_with_trace(scn: &Scenario, trace: &EventTrace) -> Result<RunResult> {
    let cfg = &scn.config;
    let n = scn.node_count();
    let horizon = trace.len().min(cfg.iterations);
    let x0_sum: f64 = scn.x0.iter().sum();
    let mut engine = Engine::new(scn)?;

    let sample_every = match cfg.sampling {
        Sampling::EveryIteration => true,
        Sampling::Boundaries => false,
        Sampling::Auto => {
            n <= AUTO_SAMPLE_MAX_NODES && cfg.iterations <= AUTO_SAMPLE_MAX_ITERATIONS
        }
    };
    let block_bounds = scn.schedule.boundaries();
    let lambda_bounds = scn.schedule.lambda_boundaries();
    let mut next_block = 1;
    let mut next_lambda = 1;

    let mut auditor = Auditor {
        scn,
        level: cfg.audit,
        x0_sum,
        n,
        prev_range: range(&scn.x0),
        prev_envelope: range(&scn.x0),
        stats: AuditStats::default(),
    };
    auditor.stats.envelope.push((0, spread(&scn.x0)?));

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut z = engine.estimates()?;
    samples.push(sample(0, &engine, &z, x0_sum, n)?);

    let mut done = 0;
    for (k, ev) in trace.iterations[..horizon].iter().enumerate() {
        engine.step(&scn.links, ev)?;
        if let Some(Fault::LeakMass { iteration }) = cfg.fault {
            if iteration == k {
                engine.leak();
            }
        }
        let t = k + 1;
        done = t;
        z = match engine.estimates() {
            Ok(z) => z,
            Err(e) => {
                failures.push(Auditor::fail(t, "positive_y", e.to_string()));
                break;
            }
        };

        let at_block = next_block < block_bounds.len() && block_bounds[next_block] == t;
        if at_block {
            next_block += 1;
        }
        let at_lambda = next_lambda < lambda_bounds.len() && lambda_bounds[next_lambda] == t;

        if cfg.audit == AuditLevel::EveryIteration {
            if let Some(f) = auditor.per_iteration(t, &engine, &z) {
                failures.push(f);
            }
        }
        if failures.is_empty() && at_lambda && cfg.audit != AuditLevel::None {
            if let Some(f) = auditor.at_boundary(t, next_lambda, &engine, &z)? {
                failures.push(f);
            }
        }
        if at_lambda {
            next_lambda += 1;
        }
        if sample_every || at_block || t == horizon || !failures.is_empty() {
            samples.push(sample(t, &engine, &z, x0_sum, n)?);
        }
        if !failures.is_empty() {
            break;
        }
    }

    let series: Vec<(usize, f64)> = samples.iter().map(|s| (s.iteration, s.spread_z)).collect();
    let converged_at =
        detect_convergence(&series, cfg.tolerances.convergence, cfg.tolerances.window);
    let complete_groups = lambda_bounds[1..]
        .iter()
        .take_while(|&&mu| mu <= horizon)
        .count() as u64;
    let t_offset = match &cfg.schedule.blocks {
        super::config::BlockSpec::Logarithmic { t, .. } => *t,
        _ => 0,
    };
    Ok(RunResult {
        protocol: cfg.protocol,
        iterations_run: done,
        converged_at,
        final_z: z,
        mean_x0: x0_sum / n as f64,
        samples,
        audit_failures: failures,
        stats: auditor.stats,
        lambda_bound_from: lambda_bound_from(
            &scn.schedule,
            scn.regime(),
            t_offset,
            complete_groups,
        ),
    })
}

fn sample(t: usize, engine: &Engine, z: &[f64], x0_sum: f64, n: usize) -> Result<Sample> {
    let (mx, my) = engine.mass();
    let (max_u, max_v) = match engine {
        Engine::Robust(s) => s
            .buffers()
            .iter()
            .fold((0.0f64, 0.0f64), |(u, v), b| (u.max(b.u.abs()), v.max(b.v))),
        _ => (0.0, 0.0),
    };
    Ok(Sample {
        iteration: t,
        spread_z: spread(z)?,
        res_x: (mx - x0_sum).abs(),
        res_y: (my - n as f64).abs(),
        min_y: engine
            .agent_y()
            .map_or(f64::NAN, |y| y.into_iter().fold(f64::INFINITY, f64::min)),
        max_u,
        max_v,
    })
}

/// Runs ordinary consensus under a schedule whose blocks grow faster than
/// the ordinary-consensus bound, to show the spread failing to vanish over
/// the horizon. Illustrative only.
pub fn divergence_demo(cfg: &ScenarioConfig) -> Result<RunResult> {
    if cfg.protocol != Protocol::Ordinary {
        return Err(Error::InvalidConfig {
            field: "protocol".into(),
            reason: "the divergence demo runs ordinary consensus".into(),
        });
    }
    if cfg.iterations == 0 {
        let mut probe = cfg.clone();
        probe.iterations = 1;
        let scn = probe.resolve()?;
        return Ok(RunResult {
            protocol: Protocol::Ordinary,
            iterations_run: 0,
            converged_at: None,
            final_z: scn.x0.clone(),
            mean_x0: scn.x0.iter().sum::<f64>() / scn.x0.len() as f64,
            samples: Vec::new(),
            audit_failures: Vec::new(),
            stats: AuditStats::default(),
            lambda_bound_from: None,
        });
    }
    run_scenario(cfg)
}
