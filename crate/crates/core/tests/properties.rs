use std::collections::BTreeSet;

use proptest::prelude::*;

use pushsum_core::graph::{is_strongly_connected, reachable_set, union_graphs, DirectedGraph};
use pushsum_core::matrix::{
    check_stochastic, contraction_check, product_range, spread, threshold, DenseMatrix,
    ProductAccumulator, Stochasticity,
};
use pushsum_core::protocol::{build_m_matrix, SystemState};
use pushsum_core::schedule::{check_lambda_bound, logarithmic_b_sequence, BlockSchedule, Regime};
use pushsum_core::trace::{generate_trace, validate_trace, EventTrace, TraceParams, WakeMode};

/// All ordered pairs `(i, j)` of an `n`-node graph, loops included.
fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
}

fn graph_from_mask(n: usize, mask: u64) -> DirectedGraph {
    let edges = pairs(n)
        .into_iter()
        .enumerate()
        .filter(|(b, _)| mask >> b & 1 == 1)
        .map(|(_, e)| e);
    DirectedGraph::new(n, edges).unwrap()
}

fn brute_force_strongly_connected(g: &DirectedGraph) -> bool {
    let n = g.node_count();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(i, j) in g.edges() {
        reach[i][j] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    reach.iter().all(|row| row.iter().all(|&r| r))
}

#[test]
fn strong_connectivity_matches_brute_force_for_all_small_digraphs() {
    for n in 1..=4 {
        for mask in 0..1u64 << (n * n) {
            let g = graph_from_mask(n, mask);
            assert_eq!(
                is_strongly_connected(&g),
                brute_force_strongly_connected(&g),
                "{g:?}"
            );
        }
    }
}

#[test]
fn union_of_every_pair_of_three_node_graphs() {
    let n = 3;
    for a in 0..1u64 << 9 {
        for b in (0..1u64 << 9).step_by(7) {
            let u = union_graphs([&graph_from_mask(n, a), &graph_from_mask(n, b)]).unwrap();
            assert_eq!(u, graph_from_mask(n, a | b));
        }
    }
}

#[test]
fn infinite_product_criterion() {
    // sum 1/(k+1) diverges, so prod (1 - 1/(k+1)) = 1/(k+1) vanishes
    let mut p = 1.0;
    let mut terms = 0;
    while p >= 1e-3 {
        terms += 1;
        p *= 1.0 - 1.0 / (terms as f64 + 1.0);
        assert!(terms < 10_000);
    }
    // p = 1 / (terms + 1) first drops below 1e-3 at 1000 terms
    assert_eq!(terms, 1000);
    // sum 2^-k converges, so the product stays above a positive floor
    let mut p = 1.0;
    for k in 1..=60 {
        p *= 1.0 - 0.5f64.powi(k);
        assert!(p >= 0.28);
    }
    assert!(p < 0.29);
}

fn stochastic_matrix(n: usize, mode: Stochasticity) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n).prop_map(move |mut rows| {
        for row in &mut rows {
            row[0] += 1e-3;
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let a = DenseMatrix::from_rows(&rows).unwrap();
        match mode {
            Stochasticity::Row => a,
            Stochasticity::Column => a.transpose(),
        }
    })
}

fn random_schedule() -> impl Strategy<Value = BlockSchedule> {
    (2usize..6, prop::collection::vec(1usize..8, 1..40))
        .prop_map(|(n, blocks)| BlockSchedule::new(n, blocks).unwrap())
}

/// Regime, `n` and `T` such that the first admissible index is small enough
/// to check.
fn regime_case() -> impl Strategy<Value = (Regime, usize, u64)> {
    (0usize..3, 2usize..7, 0u64..400, any::<bool>()).prop_map(|(r, n, d, above)| {
        let (regime, n) = match r {
            0 => (
                Regime::Ordinary {
                    alpha: 1.0 / n as f64,
                },
                n,
            ),
            1 => (Regime::PushSum, n),
            _ => (Regime::Robust, n.min(4)),
        };
        // T at which the bound first reaches n for k = 1
        let pivot = regime.first_admissible_k(0, n) + 1;
        let t = if above {
            pivot + d
        } else {
            pivot.saturating_sub(d + 1)
        };
        (regime, n, t)
    })
}

fn robust_case() -> impl Strategy<Value = (DirectedGraph, Vec<f64>, BlockSchedule, TraceParams)> {
    (
        2usize..6,
        any::<u64>(),
        1usize..6,
        0.05f64..1.0,
        0.0f64..0.95,
    )
        .prop_flat_map(|(n, seed, len, p, q)| {
            let extra = prop::collection::vec((0..n, 0..n), 0..n);
            let x0 = prop::collection::vec(-10.0f64..10.0, n);
            (Just((n, seed, len, p, q)), extra, x0)
        })
        .prop_map(|((n, seed, len, p, q), extra, x0)| {
            let g = DirectedGraph::ring(n)
                .unwrap()
                .with_edges(extra.into_iter().filter(|(i, j)| i != j))
                .unwrap();
            let schedule = BlockSchedule::constant(n, len, 200 / len + 1).unwrap();
            let params = TraceParams {
                wake_probability: p,
                failure_probability: q,
                seed,
                wake_mode: WakeMode::Independent,
            };
            (g, x0, schedule, params)
        })
}

proptest! {
    #[test]
    fn union_has_exactly_the_members_edges(n in 1usize..=4, masks in prop::collection::vec(any::<u64>(), 1..4)) {
        let gs: Vec<DirectedGraph> = masks.iter().map(|&m| graph_from_mask(n, m & ((1 << (n * n)) - 1))).collect();
        let u = union_graphs(&gs).unwrap();
        for (i, j) in pairs(n) {
            prop_assert_eq!(u.has_edge(i, j), gs.iter().any(|g| g.has_edge(i, j)));
        }
    }

    #[test]
    fn reachable_sets_grow_with_self_loops(
        n in 2usize..=5,
        masks in prop::collection::vec(any::<u64>(), 2..8),
        origin in 0usize..5,
        k1 in 0usize..4,
    ) {
        let origin = origin % n;
        let gs: Vec<DirectedGraph> = masks
            .iter()
            .map(|&m| graph_from_mask(n, m & ((1 << (n * n)) - 1)).with_self_loops())
            .collect();
        let k1 = k1 % (gs.len() - 1);
        for k2 in k1..gs.len() - 1 {
            let a = reachable_set(&gs, origin, k1, k2).unwrap();
            let b = reachable_set(&gs, origin, k1, k2 + 1).unwrap();
            prop_assert!(a.is_subset(&b));
            prop_assert!(a.contains(&origin));
        }
    }

    #[test]
    fn product_range_splits(seq in prop::collection::vec(stochastic_matrix(3, Stochasticity::Row), 1..=6)) {
        for k1 in 0..seq.len() {
            for k2 in k1 + 1..seq.len() {
                let whole = product_range(&seq, k1, k2).unwrap();
                let split = seq[k2].matmul(&product_range(&seq, k1, k2 - 1).unwrap()).unwrap();
                prop_assert!(whole.max_abs_diff(&split) <= 1e-15);
            }
        }
    }

    #[test]
    fn column_stochastic_products_stay_column_stochastic(
        seq in prop::collection::vec(stochastic_matrix(4, Stochasticity::Column), 1..30)
    ) {
        let mut acc = ProductAccumulator::new();
        for m in &seq {
            acc.push(m).unwrap();
        }
        prop_assert!(check_stochastic(acc.product().unwrap(), Stochasticity::Column, 1e-12));
    }

    #[test]
    fn threshold_is_idempotent(a in stochastic_matrix(5, Stochasticity::Row), alpha in 0.0f64..0.5) {
        let once = threshold(&a, alpha);
        prop_assert_eq!(threshold(&once, alpha), once);
    }

    #[test]
    fn contraction_holds_for_floored_matrices(
        n in 2usize..6,
        beta_scale in 0.05f64..1.0,
        seed_rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 6),
        u in prop::collection::vec(-100.0f64..100.0, 6),
    ) {
        let beta = beta_scale / n as f64;
        let free = 1.0 - n as f64 * beta;
        let rows: Vec<Vec<f64>> = seed_rows[..n]
            .iter()
            .map(|r| {
                let s: f64 = r[..n].iter().sum::<f64>() + 1e-9;
                r[..n].iter().map(|v| beta + free * (v + 1e-9 / n as f64) / s).collect()
            })
            .collect();
        let a = DenseMatrix::from_rows(&rows).unwrap();
        let floor = a.min_entry().min(beta);
        let report = contraction_check(&a, floor, &u[..n]).unwrap();
        prop_assert!(report.contraction_holds && report.convex_holds, "{report:?}");
    }

    #[test]
    fn lambda_is_a_difference_of_mus(s in random_schedule()) {
        let n = s.node_count();
        for k in 1..=s.lambda_count() {
            prop_assert_eq!(s.lambda(k).unwrap(), s.mu(k * n).unwrap() - s.mu((k - 1) * n).unwrap());
        }
        prop_assert_eq!(s.mu(s.block_count()).unwrap(), s.total_iterations());
    }

    #[test]
    fn logarithmic_schedule_meets_its_bound((regime, n, t) in regime_case()) {
        let k = regime.first_admissible_k(t, n);
        prop_assert!((1..1000).contains(&k), "K = {k}");
        let horizon = k + 60;
        let s = logarithmic_b_sequence(n, regime, t, horizon as usize * n).unwrap();
        prop_assert!(check_lambda_bound(&s, regime, k, t, horizon).unwrap());
        if k > 1 {
            // lambda_k >= n for every schedule, so nothing earlier can work
            prop_assert!(!check_lambda_bound(&s, regime, k - 1, t, horizon).unwrap());
        }
    }

    #[test]
    fn generated_traces_validate_and_round_trip((g, _x0, schedule, params) in robust_case()) {
        let trace = generate_trace(&g, &schedule, &params, 200).unwrap();
        prop_assert!(validate_trace(&trace, &g).is_ok());
        prop_assert_eq!(EventTrace::from_text(&trace.to_text()).unwrap(), trace);
    }

    #[test]
    fn sequential_traces_validate(seed in any::<u64>(), n in 2usize..6) {
        let g = DirectedGraph::ring_with_chord(n).unwrap();
        let schedule = BlockSchedule::constant(n, g.edge_count() + 2, 20).unwrap();
        let params = TraceParams {
            wake_probability: 1.0,
            failure_probability: 0.5,
            seed,
            wake_mode: WakeMode::Sequential,
        };
        let trace = generate_trace(&g, &schedule, &params, schedule.total_iterations()).unwrap();
        prop_assert!(trace.iterations.iter().all(|ev| ev.wake.len() == 1));
        prop_assert!(validate_trace(&trace, &g).is_ok());
    }

    #[test]
    fn robust_state_invariants((g, x0, schedule, params) in robust_case()) {
        let trace = generate_trace(&g, &schedule, &params, 200).unwrap();
        let n = g.node_count();
        let x0_sum: f64 = x0.iter().sum();
        let scale = x0.iter().fold(1.0f64, |m, v| m.max(v.abs())) * n as f64;
        let mut s = SystemState::new(&g, &x0).unwrap();
        for ev in &trace.iterations {
            let m = build_m_matrix(&g, ev);
            prop_assert!(check_stochastic(&m, Stochasticity::Column, 1e-12));
            s.step(ev).unwrap();
            let (mx, my) = s.total_mass();
            prop_assert!((mx - x0_sum).abs() <= 1e-9 * scale);
            prop_assert!((my - n as f64).abs() <= 1e-9 * n as f64);
            prop_assert!(s.agents().iter().all(|a| a.y > 0.0));
            for b in s.buffers() {
                prop_assert!(b.v >= 0.0);
                prop_assert!(b.v > 0.0 || b.u == 0.0);
            }
            prop_assert!(s.buffer_identity_residual() <= 1e-12 * scale);
        }
        // every estimate stays inside the initial range
        let (lo, hi) = x0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let z = s.estimate().unwrap();
        prop_assert!(z.iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
        prop_assert!(spread(&z).unwrap() <= hi - lo + 1e-9);
    }

    #[test]
    fn realized_unions_cover_the_link_graph((g, _x0, schedule, params) in robust_case()) {
        let trace = generate_trace(&g, &schedule, &params, 200).unwrap();
        let bounds = schedule.boundaries();
        for w in bounds.windows(2).filter(|w| w[1] <= 200) {
            let realized: Vec<DirectedGraph> =
                trace.iterations[w[0]..w[1]].iter().map(|ev| ev.realized_graph(&g)).collect();
            let u = union_graphs(&realized).unwrap();
            let expected: BTreeSet<_> = g.edges().iter().copied().collect();
            let got: BTreeSet<_> = u.edges().iter().copied().collect();
            prop_assert_eq!(got, expected);
        }
    }
}
