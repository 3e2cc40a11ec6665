mod common;

use pushsum_core::harness::{
    detect_convergence, divergence_demo, run_scenario, AuditLevel, BlockSpec, Fault, GraphSpec,
    Protocol, RegimeName, Sampling, WeightRule, CSV_HEADER,
};
use pushsum_core::verify::verify_scenario;
use pushsum_core::Error;

use common::{logarithmic, robust_five, scenario};

fn lossy_robust(nodes: usize, length: usize, seed: u64) -> pushsum_core::harness::ScenarioConfig {
    let mut cfg = scenario(
        Protocol::Robust,
        GraphSpec::RingWithChord { nodes },
        (1..=nodes).map(|i| (i * i) as f64).collect(),
        BlockSpec::Constant { length },
    );
    cfg.iterations = 20_000;
    cfg.schedule.seed = seed;
    cfg
}

#[test]
fn two_node_reliable_run_averages() {
    let mut cfg = scenario(
        Protocol::Robust,
        GraphSpec::Complete { nodes: 2 },
        vec![0.0, 2.0],
        BlockSpec::Constant { length: 1 },
    );
    cfg.schedule.failure_probability = 0.0;
    cfg.iterations = 200;
    let r = run_scenario(&cfg).unwrap();
    assert!(r.passed_audits(), "{:?}", r.audit_failures);
    for z in &r.final_z {
        assert!((z - 1.0).abs() <= 1e-8);
    }
}

#[test]
fn lossy_ring_converges_to_mean() {
    let mut cfg = lossy_robust(5, 6, 4);
    cfg.graph = GraphSpec::Ring { nodes: 5 };
    let r = run_scenario(&cfg).unwrap();
    assert!(r.passed_audits(), "{:?}", r.audit_failures);
    assert!(r.converged_at.is_some());
    assert!(r.max_error() <= 1e-6, "max error {}", r.max_error());
}

#[test]
fn lossy_runs_keep_every_invariant() {
    // Blocks of several iterations leave room for genuinely dropped packets.
    for (nodes, length) in [(3, 4), (5, 6), (6, 8)] {
        for seed in 0..4 {
            let r = run_scenario(&lossy_robust(nodes, length, seed)).unwrap();
            assert!(
                r.passed_audits(),
                "n={nodes} seed={seed}: {:?}",
                r.audit_failures
            );
            assert!(
                r.samples.iter().any(|s| s.max_v > 0.0),
                "no packet was ever lost"
            );
            assert!(
                r.max_error() <= 1e-6,
                "n={nodes} seed={seed}: error {}",
                r.max_error()
            );
            assert!(r.stats.max_rel_res_x <= 1e-9 && r.stats.max_rel_res_y <= 1e-9);
            assert!(r.stats.boundary_checks > 0);
        }
    }
}

#[test]
fn lossy_runs_pass_the_oracle() {
    for seed in 0..3 {
        let mut cfg = lossy_robust(4, 4, seed);
        cfg.iterations = 300;
        let report = verify_scenario(&cfg).unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }
}

#[test]
fn pushsum_lossy_blocks_converge() {
    for seed in 0..5 {
        let mut cfg = scenario(
            Protocol::Pushsum,
            GraphSpec::RingWithChord { nodes: 4 },
            vec![2.0, -1.0, 7.0, 0.5],
            BlockSpec::Constant { length: 5 },
        );
        cfg.iterations = 5_000;
        cfg.schedule.seed = seed;
        let r = run_scenario(&cfg).unwrap();
        assert!(r.passed_audits(), "{:?}", r.audit_failures);
        assert!(r.max_error() <= 1e-6);
        let report = verify_scenario(&{
            let mut c = cfg.clone();
            c.iterations = 300;
            c
        })
        .unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }
}

#[test]
fn metropolis_weights_reach_the_mean() {
    let mut cfg = scenario(
        Protocol::Ordinary,
        GraphSpec::Path { nodes: 5 },
        vec![3.0, -2.0, 10.0, 0.0, 4.0],
        BlockSpec::Constant { length: 3 },
    );
    cfg.weights = WeightRule::Metropolis;
    cfg.iterations = 5_000;
    let r = run_scenario(&cfg).unwrap();
    assert!(r.passed_audits(), "{:?}", r.audit_failures);
    assert!(r.max_error() <= 1e-9);
    assert!(verify_scenario(&cfg).unwrap().passed());
}

#[test]
fn equal_weights_stay_inside_initial_range() {
    let mut cfg = scenario(
        Protocol::Ordinary,
        GraphSpec::RingWithChord { nodes: 5 },
        vec![3.0, -2.0, 10.0, 0.0, 4.0],
        logarithmic(RegimeName::Ordinary, 0),
    );
    cfg.iterations = 3_000;
    let r = run_scenario(&cfg).unwrap();
    assert!(r.passed_audits(), "{:?}", r.audit_failures);
    assert!(r.final_spread() <= 1e-9);
    assert!((-2.0..=10.0).contains(&r.final_z[0]));
}

#[test]
fn replay_is_bit_identical() {
    let cfg = lossy_robust(5, 6, 9);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn leaked_mass_is_reported_with_iteration() {
    let mut cfg = lossy_robust(5, 4, 2);
    cfg.fault = Some(Fault::LeakMass { iteration: 40 });
    let r = run_scenario(&cfg).unwrap();
    let f = r.audit_failures.first().expect("audit must fail");
    assert_eq!(f.invariant, "mass_conservation");
    assert_eq!(f.iteration, 41);
    assert_eq!(r.iterations_run, 41);
}

#[test]
fn boundary_audits_still_see_a_leak() {
    let mut cfg = lossy_robust(5, 4, 2);
    cfg.audit = AuditLevel::Boundaries;
    cfg.fault = Some(Fault::LeakMass { iteration: 0 });
    let r = run_scenario(&cfg).unwrap();
    assert_eq!(r.audit_failures[0].invariant, "mass_conservation");
    cfg.audit = AuditLevel::None;
    assert!(run_scenario(&cfg).unwrap().audit_failures.is_empty());
}

#[test]
fn misindexed_oracle_reports_mismatch() {
    let mut cfg = lossy_robust(3, 4, 1);
    cfg.iterations = 100;
    assert!(verify_scenario(&cfg).unwrap().passed());
    cfg.fault = Some(Fault::MisindexBuffers);
    let report = verify_scenario(&cfg).unwrap();
    assert!(!report.passed());
    assert_eq!(report.first_failure().unwrap().0, "state_matches_product");
}

#[test]
fn oracle_refuses_large_graphs() {
    let mut cfg = lossy_robust(33, 4, 1);
    cfg.iterations = 10;
    assert!(matches!(
        verify_scenario(&cfg),
        Err(Error::InvalidConfig { .. })
    ));
}

#[test]
fn csv_and_summary_shape() {
    let mut cfg = robust_five(0);
    cfg.iterations = 50;
    let r = run_scenario(&cfg).unwrap();
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // every iteration plus the initial state for a small run
    assert_eq!(lines.count(), 51);
    assert!(r.samples.iter().all(|s| s.spread_z >= 0.0));
    let summary = r.summary();
    assert!(summary.contains("protocol=robust\n"));
    assert!(summary.contains("audit_failures=0\n"));
    if let Some(k) = r.converged_at {
        let s = r.samples.iter().find(|s| s.iteration == k).unwrap();
        assert!(s.spread_z <= cfg.tolerances.convergence);
    }
}

#[test]
fn boundary_sampling_records_block_ends() {
    let mut cfg = lossy_robust(4, 5, 0);
    cfg.iterations = 100;
    cfg.sampling = Sampling::Boundaries;
    let r = run_scenario(&cfg).unwrap();
    let iters: Vec<usize> = r.samples.iter().map(|s| s.iteration).collect();
    assert_eq!(iters, (0..=20).map(|k| 5 * k).collect::<Vec<_>>());
}

#[test]
fn convergence_series_helper() {
    assert_eq!(detect_convergence(&[], 1.0, 1), None);
    assert_eq!(
        detect_convergence(&[(4, 0.5), (9, 0.1), (12, 0.1)], 0.2, 2),
        Some(9)
    );
}

fn divergence_config(blocks: BlockSpec) -> pushsum_core::harness::ScenarioConfig {
    let mut cfg = scenario(
        Protocol::Ordinary,
        GraphSpec::Complete { nodes: 2 },
        vec![0.0, 1.0],
        blocks,
    );
    cfg.iterations = 100_000;
    cfg.sampling = Sampling::Boundaries;
    cfg.schedule.wake_probability = 0.01;
    cfg.schedule.failure_probability = 0.9999;
    cfg
}

#[test]
fn fast_growing_blocks_stall_ordinary_consensus() {
    let slow = divergence_demo(&divergence_config(BlockSpec::Geometric { ratio: 10 })).unwrap();
    let fast = divergence_demo(&divergence_config(BlockSpec::Constant { length: 1 })).unwrap();
    assert!(slow.final_spread() > 1e-6, "spread {}", slow.final_spread());
    assert!(fast.final_spread() < 1e-12);
    assert_eq!(slow.lambda_bound_from, None);
}

#[test]
fn divergence_demo_horizon_zero_is_empty() {
    let mut cfg = divergence_config(BlockSpec::Geometric { ratio: 2 });
    cfg.iterations = 0;
    assert!(divergence_demo(&cfg).unwrap().samples.is_empty());
    cfg.iterations = 10;
    cfg.protocol = Protocol::Robust;
    assert!(divergence_demo(&cfg).is_err());
}

#[test]
fn invalid_configs_name_their_field() {
    let mut cfg = robust_five(0);
    cfg.iterations = 0;
    assert!(
        matches!(run_scenario(&cfg), Err(Error::InvalidConfig { field, .. }) if field == "iterations")
    );
    let mut cfg = robust_five(0);
    cfg.tolerances.convergence = 0.0;
    assert!(
        matches!(run_scenario(&cfg), Err(Error::InvalidConfig { field, .. }) if field == "tolerances.convergence")
    );
}
