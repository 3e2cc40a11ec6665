use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::harness::config::{Fault, Protocol, Scenario, ScenarioConfig, WeightRule};
use crate::harness::run::ENVELOPE_SLACK;
use crate::matrix::{
    check_stochastic, leading_rows_report, DenseMatrix, ProductAccumulator, Stochasticity,
    STOCHASTIC_TOL,
};
use crate::protocol::ordinary::{
    equal_weight_matrix, metropolis_matrix, ordinary_step, symmetrized,
};
use crate::protocol::push_sum::{build_pushsum_matrix, push_sum_step};
use crate::protocol::robust::{
    build_m_matrix_with_layout, build_p_matrix, p_entry_lower_bound, SystemState,
};
use crate::schedule::BlockSchedule;
use crate::trace::EventTrace;

/// Largest graph the dense oracle accepts.
pub const MAX_ORACLE_NODES: usize = 32;

/// Componentwise tolerance between the state machine and the matrix
/// evolution, relative to `max(1, |value|)`.
pub const ORACLE_TOL: f64 = 1e-12;

/// Budget (in stored matrix entries) for per-block products; window checks
/// are skipped beyond it.
const PRODUCT_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub checked: usize,
    pub skipped: bool,
    /// Iteration and description of the first violation.
    pub first_failure: Option<(usize, String)>,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        CheckOutcome {
            name,
            checked: 0,
            skipped: false,
            first_failure: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }

    fn record(&mut self, iteration: usize, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.first_failure.is_none() {
            self.first_failure = Some((iteration, detail()));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub protocol: Protocol,
    pub iterations: usize,
    /// Largest relative gap between simulated and matrix-evolved state.
    pub max_state_error: f64,
    pub checks: Vec<CheckOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Earliest failing check as `(name, iteration, detail)`.
    pub fn first_failure(&self) -> Option<(&'static str, usize, &str)> {
        self.checks
            .iter()
            .filter_map(|c| {
                c.first_failure
                    .as_ref()
                    .map(|(k, d)| (c.name, *k, d.as_str()))
            })
            .min_by_key(|&(_, k, _)| k)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "protocol={} iterations={}",
            self.protocol.name(),
            self.iterations
        )
        .unwrap();
        writeln!(out, "max_state_error={:e}", self.max_state_error).unwrap();
        for c in &self.checks {
            match (&c.first_failure, c.skipped) {
                (Some((k, d)), _) => writeln!(out, "FAIL {} at iteration {k}: {d}", c.name),
                (None, true) => writeln!(out, "SKIP {}", c.name),
                (None, false) => writeln!(out, "pass {} ({} checks)", c.name, c.checked),
            }
            .unwrap();
        }
        out
    }
}

/// Resolves the scenario, generates its trace and runs the oracle on it.
pub fn verify_scenario(cfg: &ScenarioConfig) -> Result<OracleReport> {
    let scn = cfg.resolve()?;
    if scn.node_count() > MAX_ORACLE_NODES {
        return Err(Error::InvalidConfig {
            field: "graph.nodes".into(),
            reason: format!("the dense oracle handles at most {MAX_ORACLE_NODES} nodes"),
        });
    }
    let trace = scn.trace()?;
    verify_trace(&scn, &trace)
}

pub fn verify_trace(scn: &Scenario, trace: &EventTrace) -> Result<OracleReport> {
    let horizon = trace.len().min(scn.config.iterations);
    match scn.config.protocol {
        Protocol::Robust => {
            let misindex = matches!(scn.config.fault, Some(Fault::MisindexBuffers));
            verify_robust(
                &scn.links,
                &scn.x0,
                trace,
                horizon,
                &scn.schedule,
                misindex,
                scn.config.tolerances.conservation,
            )
        }
        Protocol::Pushsum => verify_pushsum(scn, trace, horizon),
        Protocol::Ordinary => verify_ordinary(scn, trace, horizon),
    }
}

fn rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs() / q.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Per-block matrix products, kept when they fit the memory budget.
struct BlockProducts {
    enabled: bool,
    boundaries: Vec<usize>,
    next: usize,
    current: ProductAccumulator,
    blocks: Vec<DenseMatrix>,
}

impl BlockProducts {
    fn new(schedule: &BlockSchedule, dim: usize, horizon: usize) -> Self {
        let boundaries = schedule.boundaries();
        let complete = boundaries
            .iter()
            .filter(|&&b| b > 0 && b <= horizon)
            .count();
        BlockProducts {
            enabled: complete.saturating_mul(dim * dim) <= PRODUCT_BUDGET,
            boundaries,
            next: 1,
            current: ProductAccumulator::new(),
            blocks: Vec::new(),
        }
    }

    /// Adds the matrix of iteration `t` (0-based).
    fn push(&mut self, t: usize, m: &DenseMatrix) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        self.current.push(m)?;
        if self.next < self.boundaries.len() && self.boundaries[self.next] == t + 1 {
            let done = std::mem::take(&mut self.current);
            self.blocks
                .push(done.into_product().expect("blocks are nonempty"));
            self.next += 1;
        }
        Ok(())
    }

    /// `B_{l+count-1} ... B_l` with its iteration span `[mu_l, mu_{l+count})`.
    fn window(&self, l: usize, count: usize) -> Result<Option<(DenseMatrix, usize, usize)>> {
        if l + count > self.blocks.len() {
            return Ok(None);
        }
        let mut acc = ProductAccumulator::new();
        for b in &self.blocks[l..l + count] {
            acc.push(b)?;
        }
        Ok(Some((
            acc.into_product().expect("count > 0"),
            self.boundaries[l],
            self.boundaries[l + count],
        )))
    }
}

/// Window checks shared by all protocols: every product of `n`
/// consecutive blocks has strictly positive leading `rows` rows with entries
/// at least `alpha^len`, and keeps the stochasticity of its factors.
fn window_checks(
    products: &BlockProducts,
    n: usize,
    rows: usize,
    alpha: f64,
    mode: Stochasticity,
    positivity: &mut CheckOutcome,
    stochastic: &mut CheckOutcome,
) -> Result<()> {
    if !products.enabled {
        positivity.skipped = true;
        stochastic.skipped = true;
        return Ok(());
    }
    let mut l = 0;
    while let Some((w, start, end)) = products.window(l, n)? {
        let report = leading_rows_report(&w, rows, alpha, end - start);
        positivity.record(end, report.holds(), || {
            format!(
                "window [{start}, {end}): min leading entry {:e}, min positive {:e}, bound {:e}",
                report.min_entry, report.min_positive_entry, report.bound
            )
        });
        stochastic.record(end, check_stochastic(&w, mode, STOCHASTIC_TOL), || {
            format!(
                "window [{start}, {end}) product is not {} stochastic",
                mode.name()
            )
        });
        l += 1;
    }
    Ok(())
}

fn misindexed_layout(m: usize) -> Result<Vec<usize>> {
    if m < 2 {
        return Err(Error::InvalidConfig {
            field: "fault".into(),
            reason: "misindexing buffers needs at least two links".into(),
        });
    }
    let mut layout: Vec<usize> = (0..m).collect();
    layout.swap(0, 1);
    Ok(layout)
}

/// Robust push-sum against its `M^k` matrices: per-iteration state equality
/// and column sums, conservation, buffer identity, boundary bounds on `y`
/// and `v`, envelope monotonicity, leading-row positivity of `n`-block
/// products, and the row sums and entry floor of each `P` matrix.
pub fn verify_robust(
    links: &DirectedGraph,
    x0: &[f64],
    trace: &EventTrace,
    horizon: usize,
    schedule: &BlockSchedule,
    misindex: bool,
    conservation_tol: f64,
) -> Result<OracleReport> {
    let n = links.node_count();
    let m = links.edge_count();
    let dim = n + m;
    let alpha = 1.0 / n as f64;
    let layout = if misindex {
        misindexed_layout(m)?
    } else {
        (0..m).collect()
    };
    let mut state = SystemState::new(links, x0)?;
    let mut ox = state.phi_x();
    let mut oy = state.phi_y();
    let x0_sum: f64 = x0.iter().sum();

    let mut equal = CheckOutcome::new("state_matches_product");
    let mut col = CheckOutcome::new("m_column_stochastic");
    let mut mass = CheckOutcome::new("mass_conservation");
    let mut ident = CheckOutcome::new("buffer_identity");
    let mut empty = CheckOutcome::new("empty_buffer_has_no_x_mass");
    let mut bounds = CheckOutcome::new("y_v_bounds");
    let mut envelope = CheckOutcome::new("envelope_monotone");
    let mut leading_rows = CheckOutcome::new("leading_rows_positive");
    let mut window_col = CheckOutcome::new("window_column_stochastic");
    let mut p_rows = CheckOutcome::new("p_row_sums");
    let mut p_floor = CheckOutcome::new("p_entry_floor");
    let mut p_map = CheckOutcome::new("p_maps_ratios");

    let mut products = BlockProducts::new(schedule, dim, horizon);
    let lambda_bounds = schedule.lambda_boundaries();
    let mut next_lambda = 1;
    // (iteration, y, v, z, r) at every lambda-boundary, starting from 0
    let mut snapshots = vec![(
        0usize,
        state.y(),
        state.v(),
        state.estimate()?,
        state.ratios(),
    )];
    let mut max_err: f64 = 0.0;
    let mut prev_envelope = range(x0);

    for (t, ev) in trace.iterations[..horizon].iter().enumerate() {
        let mk = build_m_matrix_with_layout(links, ev, &layout);
        col.record(
            t + 1,
            check_stochastic(&mk, Stochasticity::Column, STOCHASTIC_TOL),
            || format!("column sums {:?}", mk.col_sums()),
        );
        state.step(ev)?;
        ox = mk.mul_vec(&ox)?;
        oy = mk.mul_vec(&oy)?;
        let err = rel_gap(&state.phi_x(), &ox).max(rel_gap(&state.phi_y(), &oy));
        max_err = max_err.max(err);
        equal.record(t + 1, err <= ORACLE_TOL, || format!("relative gap {err:e}"));
        products.push(t, &mk)?;

        let (sx, sy) = state.total_mass();
        let rel_x = (sx - x0_sum).abs() / x0_sum.abs().max(1.0);
        let rel_y = (sy - n as f64).abs() / n as f64;
        mass.record(
            t + 1,
            rel_x <= conservation_tol && rel_y <= conservation_tol,
            || format!("relative residuals x: {rel_x:e}, y: {rel_y:e}"),
        );
        let scale = state
            .agents()
            .iter()
            .map(|a| a.sigma_x.value().abs().max(a.sigma_y.value().abs()))
            .fold(1.0, f64::max);
        let residual = state.buffer_identity_residual();
        ident.record(t + 1, residual <= conservation_tol * scale, || {
            format!("max |u - (sigma - rho)| = {residual:e}")
        });
        let bad = state.buffers().iter().find(|b| b.v == 0.0 && b.u != 0.0);
        empty.record(t + 1, bad.is_none(), || {
            let b = bad.expect("checked");
            format!("buffer {:?} has v = 0, u = {}", b.edge, b.u)
        });

        if next_lambda < lambda_bounds.len() && lambda_bounds[next_lambda] == t + 1 {
            let k = next_lambda;
            next_lambda += 1;
            let lambda = schedule.lambda(k)?;
            let lambda_prev = schedule.lambda(k - 1)?;
            let y_low = alpha.powi(lambda as i32);
            let v_low = alpha.powi((lambda + lambda_prev) as i32);
            let upper = n as f64 * (1.0 + conservation_tol);
            let y = state.y();
            let v = state.v();
            let ok = y.iter().all(|&yi| yi >= y_low && yi <= upper)
                && v.iter()
                    .all(|&vh| vh == 0.0 || (vh >= v_low && vh <= upper));
            bounds.record(t + 1, ok, || {
                format!(
                    "y range {:?}, v {:?}, lower bounds y {y_low:e}, v {v_low:e}",
                    range(&y),
                    v
                )
            });
            let z = state.estimate()?;
            let r: Vec<f64> = state
                .buffers()
                .iter()
                .filter(|b| b.v > 0.0)
                .map(|b| b.ratio())
                .collect();
            let (zlo, zhi) = range(&z);
            let (rlo, rhi) = range(&r);
            let (lo, hi) = (zlo.min(rlo), zhi.max(rhi));
            let (plo, phi) = prev_envelope;
            envelope.record(
                t + 1,
                hi <= phi + ENVELOPE_SLACK && lo >= plo - ENVELOPE_SLACK,
                || format!("envelope [{lo:e}, {hi:e}] left the previous [{plo:e}, {phi:e}]"),
            );
            prev_envelope = (lo, hi);
            snapshots.push((t + 1, y, v, z, state.ratios()));
        }
    }

    if products.enabled {
        let mut l = 0;
        while let Some((w, start, end)) = products.window(l, n)? {
            let report = leading_rows_report(&w, n, alpha, end - start);
            leading_rows.record(end, report.holds(), || {
                format!(
                    "window [{start}, {end}): min leading entry {:e}, min positive {:e}, bound {:e}",
                    report.min_entry, report.min_positive_entry, report.bound
                )
            });
            window_col.record(
                end,
                check_stochastic(&w, Stochasticity::Column, STOCHASTIC_TOL),
                || format!("window [{start}, {end}) product is not column stochastic"),
            );
            l += 1;
        }
        // P over lambda-window k covers [mu_{kn}, mu_{(k+1)n})
        for k in 0..snapshots.len().saturating_sub(1) {
            let (start, y0, v0, z0, r0) = &snapshots[k];
            let (end, y1, v1, z1, r1) = &snapshots[k + 1];
            let (w, _, _) = products.window(k * n, n)?.expect("window inside horizon");
            let w = unlayout(&w, n, &layout);
            let p = build_p_matrix(&w, y0, y1, v0, v1)?;
            let sums = p.row_sums();
            let rows_ok = sums.iter().enumerate().all(|(i, &s)| {
                let target = if i < n || v1[i - n] > 0.0 { 1.0 } else { 0.0 };
                (s - target).abs() <= STOCHASTIC_TOL
            });
            p_rows.record(*end, rows_ok, || {
                format!("row sums {sums:?} over [{start}, {end})")
            });
            let beta = p_entry_lower_bound(
                alpha,
                schedule.lambda(k + 1)?,
                schedule.lambda(k)?,
                if k == 0 { 0 } else { schedule.lambda(k - 1)? },
            );
            let min_pos = p.min_positive_entry().unwrap_or(f64::INFINITY);
            p_floor.record(*end, min_pos >= beta, || {
                format!("smallest positive entry {min_pos:e} below {beta:e} over [{start}, {end})")
            });
            let before: Vec<f64> = z0.iter().chain(r0).copied().collect();
            let mapped = p.mul_vec(&before)?;
            let after: Vec<f64> = z1.iter().chain(r1).copied().collect();
            let gap = mapped
                .iter()
                .zip(&after)
                .enumerate()
                .filter(|&(i, _)| i < n || v1[i - n] > 0.0)
                .map(|(_, (a, b))| (a - b).abs() / b.abs().max(1.0))
                .fold(0.0, f64::max);
            p_map.record(*end, gap <= 1e-9, || {
                format!("P [z; r] differs from [z; r] by {gap:e}")
            });
        }
    } else {
        for c in [
            &mut leading_rows,
            &mut window_col,
            &mut p_rows,
            &mut p_floor,
            &mut p_map,
        ] {
            c.skipped = true;
        }
    }

    Ok(OracleReport {
        protocol: Protocol::Robust,
        iterations: horizon,
        max_state_error: max_err,
        checks: vec![
            equal, col, mass, ident, empty, bounds, envelope, leading_rows, window_col, p_rows, p_floor,
            p_map,
        ],
    })
}

/// Moves buffer rows and columns from `layout` positions back to sorted
/// edge order.
fn unlayout(w: &DenseMatrix, n: usize, layout: &[usize]) -> DenseMatrix {
    let dim = w.rows();
    let pos = |i: usize| if i < n { i } else { n + layout[i - n] };
    let mut out = DenseMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            out[(r, c)] = w[(pos(r), pos(c))];
        }
    }
    out
}

/// Push-sum against its `W^k` matrices: per-iteration state equality and
/// column sums, conservation, the `y` bounds at lambda-boundaries, positivity
/// of `n`-block products, and the estimates staying inside the previous
/// boundary's range.
fn verify_pushsum(scn: &Scenario, trace: &EventTrace, horizon: usize) -> Result<OracleReport> {
    let n = scn.node_count();
    let alpha = scn.alpha();
    let tol = scn.config.tolerances.conservation;
    let x0_sum: f64 = scn.x0.iter().sum();
    let (mut x, mut y) = (scn.x0.clone(), vec![1.0; n]);
    let (mut ox, mut oy) = (x.clone(), y.clone());

    let mut equal = CheckOutcome::new("state_matches_product");
    let mut col = CheckOutcome::new("w_column_stochastic");
    let mut mass = CheckOutcome::new("mass_conservation");
    let mut bounds = CheckOutcome::new("y_bounds");
    let mut hull = CheckOutcome::new("estimates_stay_in_range");
    let mut block_positive = CheckOutcome::new("block_product_positive");
    let mut window_col = CheckOutcome::new("window_column_stochastic");

    let mut products = BlockProducts::new(&scn.schedule, n, horizon);
    let lambda_bounds = scn.schedule.lambda_boundaries();
    let mut next_lambda = 1;
    let mut prev_range = range(&scn.x0);
    let mut max_err: f64 = 0.0;

    for (t, ev) in trace.iterations[..horizon].iter().enumerate() {
        let realized = ev.realized_graph(&scn.links).with_self_loops();
        let w = build_pushsum_matrix(&realized)?;
        col.record(
            t + 1,
            check_stochastic(&w, Stochasticity::Column, STOCHASTIC_TOL),
            || format!("column sums {:?}", w.col_sums()),
        );
        let next = push_sum_step(&realized, &x, &y)?;
        x = next.x;
        y = next.y;
        ox = w.mul_vec(&ox)?;
        oy = w.mul_vec(&oy)?;
        let err = rel_gap(&x, &ox).max(rel_gap(&y, &oy));
        max_err = max_err.max(err);
        equal.record(t + 1, err <= ORACLE_TOL, || format!("relative gap {err:e}"));
        products.push(t, &w)?;

        let rel_x = (x.iter().sum::<f64>() - x0_sum).abs() / x0_sum.abs().max(1.0);
        let rel_y = (y.iter().sum::<f64>() - n as f64).abs() / n as f64;
        mass.record(t + 1, rel_x <= tol && rel_y <= tol, || {
            format!("relative residuals x: {rel_x:e}, y: {rel_y:e}")
        });

        if next_lambda < lambda_bounds.len() && lambda_bounds[next_lambda] == t + 1 {
            let lambda = scn.schedule.lambda(next_lambda)?;
            next_lambda += 1;
            let low = alpha.powi(lambda as i32 - 1);
            let upper = n as f64 * (1.0 + tol);
            bounds.record(t + 1, y.iter().all(|&v| v >= low && v <= upper), || {
                format!("y range {:?} outside [{low:e}, {n}]", range(&y))
            });
            let z = next.z;
            let (lo, hi) = range(&z);
            let (plo, phi) = prev_range;
            let slack = 1e-12 * plo.abs().max(phi.abs()).max(1.0);
            hull.record(t + 1, lo >= plo - slack && hi <= phi + slack, || {
                format!("estimates [{lo}, {hi}] left [{plo}, {phi}]")
            });
            prev_range = (lo, hi);
        }
    }
    window_checks(
        &products,
        n,
        n,
        alpha,
        Stochasticity::Column,
        &mut block_positive,
        &mut window_col,
    )?;

    Ok(OracleReport {
        protocol: Protocol::Pushsum,
        iterations: horizon,
        max_state_error: max_err,
        checks: vec![equal, col, mass, bounds, hull, block_positive, window_col],
    })
}

/// Ordinary consensus against its weight matrices: row sums, block products
/// applied to block-start states, positivity of `n`-block products, the
/// convex-hull property, and (for doubly stochastic weights) conservation.
fn verify_ordinary(scn: &Scenario, trace: &EventTrace, horizon: usize) -> Result<OracleReport> {
    let n = scn.node_count();
    let alpha = scn.alpha();
    let doubly = scn.config.weights == WeightRule::Metropolis;
    let x0_sum: f64 = scn.x0.iter().sum();
    let mut x = scn.x0.clone();

    let mut equal = CheckOutcome::new("state_matches_product");
    let mut row = CheckOutcome::new("a_row_stochastic");
    let mut mass = CheckOutcome::new("mass_conservation");
    let mut hull = CheckOutcome::new("estimates_stay_in_range");
    let mut block_positive = CheckOutcome::new("block_product_positive");
    let mut window_row = CheckOutcome::new("window_row_stochastic");
    if !doubly {
        mass.skipped = true;
    }

    let boundaries = scn.schedule.boundaries();
    let mut next_block = 1;
    let mut block_start = x.clone();
    let mut block = ProductAccumulator::new();
    let mut products = BlockProducts::new(&scn.schedule, n, horizon);
    let mut max_err: f64 = 0.0;

    for (t, ev) in trace.iterations[..horizon].iter().enumerate() {
        let realized = ev.realized_graph(&scn.links);
        let a = if doubly {
            metropolis_matrix(&symmetrized(&realized))?
        } else {
            equal_weight_matrix(&realized.with_self_loops())?
        };
        let mode_ok = check_stochastic(&a, Stochasticity::Row, STOCHASTIC_TOL)
            && (!doubly || check_stochastic(&a, Stochasticity::Column, STOCHASTIC_TOL));
        row.record(t + 1, mode_ok, || format!("row sums {:?}", a.row_sums()));
        let (plo, phi) = range(&x);
        x = ordinary_step(&a, &x)?;
        let (lo, hi) = range(&x);
        let slack = 1e-12 * plo.abs().max(phi.abs()).max(1.0);
        hull.record(t + 1, lo >= plo - slack && hi <= phi + slack, || {
            format!("estimates [{lo}, {hi}] left [{plo}, {phi}]")
        });
        if doubly {
            let rel = (x.iter().sum::<f64>() - x0_sum).abs() / x0_sum.abs().max(1.0);
            mass.record(t + 1, rel <= scn.config.tolerances.conservation, || {
                format!("relative residual {rel:e}")
            });
        }
        block.push(&a)?;
        products.push(t, &a)?;
        if next_block < boundaries.len() && boundaries[next_block] == t + 1 {
            next_block += 1;
            let p = std::mem::take(&mut block)
                .into_product()
                .expect("blocks are nonempty");
            let expected = p.mul_vec(&block_start)?;
            let scale = block_start.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let err = x
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs() / scale)
                .fold(0.0, f64::max);
            max_err = max_err.max(err);
            equal.record(t + 1, err <= ORACLE_TOL, || format!("relative gap {err:e}"));
            block_start = x.clone();
        }
    }
    window_checks(
        &products,
        n,
        n,
        alpha,
        Stochasticity::Row,
        &mut block_positive,
        &mut window_row,
    )?;

    Ok(OracleReport {
        protocol: Protocol::Ordinary,
        iterations: horizon,
        max_state_error: max_err,
        checks: vec![equal, row, mass, hull, block_positive, window_row],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::BlockSchedule;
    use crate::trace::{generate_trace, TraceParams, WakeMode};

    fn trace_for(
        g: &DirectedGraph,
        schedule: &BlockSchedule,
        seed: u64,
        iterations: usize,
    ) -> EventTrace {
        let params = TraceParams {
            wake_probability: 0.5,
            failure_probability: 0.5,
            seed,
            wake_mode: WakeMode::Independent,
        };
        generate_trace(g, schedule, &params, iterations).unwrap()
    }

    #[test]
    fn robust_ring_passes_every_check() {
        let g = DirectedGraph::ring(3).unwrap();
        let schedule = BlockSchedule::constant(3, 4, 30).unwrap();
        let trace = trace_for(&g, &schedule, 11, 100);
        let report =
            verify_robust(&g, &[1.0, 2.0, 6.0], &trace, 100, &schedule, false, 1e-9).unwrap();
        assert!(report.passed(), "{}", report.to_text());
        assert!(
            report.checks.iter().all(|c| !c.skipped && c.checked > 0),
            "{}",
            report.to_text()
        );
    }

    #[test]
    fn misindexed_buffers_are_caught_at_first_failure() {
        let g = DirectedGraph::ring(3).unwrap();
        let schedule = BlockSchedule::constant(3, 4, 30).unwrap();
        let trace = trace_for(&g, &schedule, 11, 100);
        let report =
            verify_robust(&g, &[1.0, 2.0, 6.0], &trace, 100, &schedule, true, 1e-9).unwrap();
        let (name, k, _) = report.first_failure().expect("mismatch expected");
        assert_eq!(name, "state_matches_product");
        // the first iteration that leaves mass in buffer 0 or 1
        let first = trace
            .iterations
            .iter()
            .position(|ev| {
                ev.failed
                    .iter()
                    .any(|&e| g.edge_index(e.0, e.1).unwrap() < 2)
            })
            .unwrap();
        assert_eq!(k, first + 1);
    }
}
