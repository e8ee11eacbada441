mod common;

use common::{desk, desk_tables, oracle_marginal};
use rowshard_core::cost_model::breakpoints;
use rowshard_core::numeric::bisect;
use rowshard_core::planner::{build_frontier, find_points, plan_2tier, plan_3tier, plan_for_budget};
use rowshard_core::{CostModelConfig, RowDistribution, Strategy, Topology};

#[test]
fn reference_breakpoints() {
    let bp = breakpoints(&CostModelConfig::reference(), &Topology::reference_cluster()).unwrap();
    assert!((bp.p_mem_dp - 1.4572e-3).abs() < 1e-7);
    assert!((bp.p_comm_dp - 3.846e-5).abs() < 1e-8);
    assert!((bp.p_comm_flex.unwrap() - 3.087e-5).abs() < 1e-8);

    let (cfg, topo) = desk();
    let bp = breakpoints(&cfg, &topo).unwrap();
    assert!((bp.p_mem_dp - 0.0933).abs() < 1e-4);
    assert!((bp.p_comm_dp - 2.46e-3).abs() < 1e-5);
    assert!((bp.p_comm_flex.unwrap() - 1.976e-3).abs() < 1e-6);
}

#[test]
fn frontier_minimum_is_last_memory_saving_row() {
    let cfg = CostModelConfig::reference();
    let topo = Topology::reference_cluster();
    let bp = breakpoints(&cfg, &topo).unwrap();
    // With E = 1e5 and L = 1000 every row saves memory at B = 4096, so use a
    // longer table where the tail drops below the memory breakpoint.
    for (rows, l) in [(100_000u64, 1000.0), (2_000_000, 1000.0), (300_000, 50.0)] {
        let dist = RowDistribution::synthesize_zipf(0, rows, 1.05, l, 5).unwrap();
        let f = build_frontier(&dist, &cfg, &topo, Strategy::Dp).unwrap();
        let pts = find_points(&f, &dist, &cfg, &topo).unwrap();
        let expected = dist.rows().iter().rposition(|r| r.probability >= bp.p_mem_dp).map_or(0, |k| k + 1);
        assert_eq!(pts.a.row_index, expected, "E={rows} L={l}");
    }
}

#[test]
fn frontier_comm_is_non_increasing_until_c() {
    let (cfg, topo) = desk();
    let dist = desk_tables(1);
    let f = build_frontier(&dist, &cfg, &topo, Strategy::Dp).unwrap();
    let pts = find_points(&f, &dist, &cfg, &topo).unwrap();
    let c = pts.c.row_index;
    for w in f.points[..=c].windows(2) {
        assert!(w[1].cum_marginal_comm_seconds <= w[0].cum_marginal_comm_seconds);
    }
    // And every frontier step matches the hand-written marginal.
    for (k, r) in dist.rows().iter().enumerate().step_by(97) {
        let (dm, dc) = oracle_marginal(Strategy::Dp, r.probability, &cfg, &topo);
        let step_m = f.points[k + 1].cum_marginal_memory_bytes - f.points[k].cum_marginal_memory_bytes;
        let step_c = f.points[k + 1].cum_marginal_comm_seconds - f.points[k].cum_marginal_comm_seconds;
        assert!((step_m - dm).abs() <= 1e-6 * dm.abs().max(1.0));
        assert!((step_c - dc).abs() <= 1e-6 * dc.abs().max(1e-12));
    }
}

#[test]
fn three_tier_trades_dp_rows_for_flex_coverage() {
    let (cfg, topo) = desk();
    let dist = desk_tables(2);
    let two = plan_2tier(&dist, &cfg, &topo).unwrap();
    let three = plan_3tier(&dist, &cfg, &topo).unwrap();
    assert!(three.dp_cut < two.dp_cut);
    assert!(three.predicted.global_a2a_reduction > two.predicted.global_a2a_reduction);
    assert!(three.predicted.additional_memory_bytes <= 0.0);
    assert!(three.flex_cut < dist.len(), "some rows stay row-wise");
    assert!(!three.predicted.intra_a2a.overlappable || three.predicted.intra_a2a.seconds > 0.0);
}

/// Zipf exponent whose 2-tier plan covers `target` of accesses with the DP tier.
fn tune_exponent(target: f64, cfg: &CostModelConfig, topo: &Topology) -> (f64, f64) {
    let coverage = |s: f64| {
        let d = RowDistribution::synthesize_zipf(0, 200_000, s, 300.0, 1).unwrap();
        plan_2tier(&d, cfg, topo).unwrap().coverage().dp.coverage_fraction
    };
    let s = bisect(|s| coverage(s) - target, 0.3, 2.0).unwrap();
    (s, coverage(s))
}

#[test]
fn tuned_two_tier_reduction_equals_dp_coverage() {
    // Production-like skew where the DP tier serves about 77% of accesses.
    let (cfg, topo) = desk();
    let (s, cov) = tune_exponent(0.77, &cfg, &topo);
    assert!((cov - 0.77).abs() < 0.005, "s={s} coverage={cov}");
    let d = RowDistribution::synthesize_zipf(0, 200_000, s, 300.0, 1).unwrap();
    let plan = plan_2tier(&d, &cfg, &topo).unwrap();
    assert!((plan.predicted.global_a2a_reduction - plan.coverage().dp.coverage_fraction).abs() < 1e-12);
}

#[test]
fn published_tier_shares_are_consistent() {
    // DP 63.9%, Flex 21.7%, RW 14.4% for a 3-tier plan with an 85.6% reduction.
    let (dp, flex, rw) = (63.9f64, 21.7f64, 14.4f64);
    assert!((dp + flex + rw - 100.0).abs() < 1e-9);
    assert!((dp + flex - 85.6).abs() < 1e-9);
}

#[test]
fn budget_sweep_is_monotone() {
    let (cfg, topo) = desk();
    let dist = desk_tables(3);
    let f = build_frontier(&dist, &cfg, &topo, Strategy::Dp).unwrap();
    let pts = find_points(&f, &dist, &cfg, &topo).unwrap();
    let lo = pts.a.cum_marginal_memory_bytes;
    let mut last = f64::INFINITY;
    for i in 0..=20 {
        let budget = lo + (i as f64 / 20.0) * (2e8 - lo);
        let plan = plan_for_budget(&dist, &cfg, &topo, budget, false).unwrap();
        let (m, c) = plan.achieved();
        assert!(m <= budget);
        assert!(c <= last);
        last = c;
    }
}

#[test]
fn budget_zero_equals_two_tier_on_desk_tables() {
    let (cfg, topo) = desk();
    let dist = desk_tables(4);
    let a = plan_for_budget(&dist, &cfg, &topo, 0.0, false).unwrap();
    let b = plan_2tier(&dist, &cfg, &topo).unwrap();
    assert_eq!((a.dp_cut, a.flex_cut), (b.dp_cut, b.flex_cut));
}
