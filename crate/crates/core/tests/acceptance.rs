//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use common::{desk, desk_tables, oracle_breakpoints, oracle_marginal, oracle_table_cost, rel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowshard_core::cost_model::{breakpoints, marginal_cost, table_cost};
use rowshard_core::distribution::{RowRecord, TableInfo};
use rowshard_core::numeric::CompensatedSum;
use rowshard_core::planner::{build_frontier, find_points, plan_2tier, plan_3tier, plan_for_budget};
use rowshard_core::simulator::{assign_rows, sample_workload, shard_row_counts, simulate, simulate_many};
use rowshard_core::{
    CostModelConfig, PlanDocument, RowDistribution, RowKey, ShardingPlan, Strategy, TierAssignment, Topology,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn random_config(rng: &mut ChaCha8Rng) -> (CostModelConfig, Topology) {
    let mut cfg = CostModelConfig::new(
        rng.random_range(1..=8192),
        rng.random_range(1..=1024),
        [1, 2, 4, 8][rng.random_range(0..4)],
        rng.random_range(1.0..12.0),
    );
    cfg.dynamic_pass_count = rng.random_range(1..=3);
    cfg.static_pass_count = rng.random_range(1..=2);
    cfg.include_id_distribution_bytes = rng.random_bool(0.3);
    cfg.count_dp_dynamic_memory = rng.random_bool(0.7);
    let nodes = rng.random_range(1..=16);
    let per_node = [1, 2, 4, 8, 16][rng.random_range(0..5)];
    let global = rng.random_range(1.0..200.0);
    // One in five topologies has no intra-node speedup.
    let intra = if rng.random_bool(0.2) { global } else { global * rng.random_range(1.01..20.0) };
    let topo = Topology::from_gibs(nodes, per_node, global, intra, rng.random_range(1.0..400.0), rng.random_range(1.0..100.0))
        .unwrap();
    (cfg, topo)
}

fn random_table(rng: &mut ChaCha8Rng, table_id: u32) -> RowDistribution {
    let num_rows = rng.random_range(1..=10_000u64);
    let skew: f64 = rng.random_range(0.0..3.0);
    let mut rows = Vec::new();
    for row_id in 0..num_rows {
        if rng.random_bool(0.8) {
            rows.push(RowRecord { table_id, row_id, probability: rng.random::<f64>().powf(1.0 + skew) * 5.0 });
        }
    }
    RowDistribution::from_records(rows, BTreeMap::from([(table_id, TableInfo { num_rows, num_samples: 1 })])).unwrap()
}

fn criterion_linearity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let (cfg, topo) = random_config(&mut rng);
        let dist = random_table(&mut rng, t);
        let e = dist.total_table_rows();
        let l = dist.total_expected_length();
        for strategy in Strategy::ALL {
            // Unobserved rows contribute with p = 0.
            let mut sums = [CompensatedSum::new(); 6];
            let unseen = table_cost(strategy, (e - dist.len() as u64) as f64, 0.0, &cfg, &topo);
            let add = |sums: &mut [CompensatedSum; 6], c: rowshard_core::StrategyCost| {
                let v = [
                    c.static_memory_bytes,
                    c.dynamic_memory_bytes,
                    c.rows_accessed_scalars,
                    c.input_id_count,
                    c.dynamic_comm_seconds,
                    c.static_comm_seconds,
                ];
                for (s, x) in sums.iter_mut().zip(v) {
                    s.add(x);
                }
            };
            add(&mut sums, unseen);
            for r in dist.rows() {
                add(&mut sums, table_cost(strategy, 1.0, r.probability, &cfg, &topo));
            }
            let oracle = oracle_table_cost(strategy, e as f64, l, &cfg, &topo);
            for (s, o) in sums.iter().zip(oracle) {
                worst = worst.max(rel(s.value(), o));
            }
        }
    }
    outcome(worst <= 1e-9, format!("max relative error {worst:.2e} over 100 tables x 4 strategies"))
}

fn criterion_breakpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut configs = vec![(CostModelConfig::reference(), Topology::reference_cluster())];
    configs.extend((0..99).map(|_| random_config(&mut rng)));
    let mut worst: f64 = 0.0;
    let mut homogeneous = 0;
    let mut failures = Vec::new();
    for (i, (cfg, topo)) in configs.iter().enumerate() {
        let bp = match breakpoints(cfg, topo) {
            Ok(bp) => bp,
            Err(e) => {
                failures.push(format!("config {i}: {e}"));
                continue;
            }
        };
        let (p_mem, p_comm, price, p_flex) = oracle_breakpoints(cfg, topo);
        worst = worst.max(rel(bp.p_mem_dp, p_mem)).max(rel(bp.p_comm_dp, p_comm));
        worst = worst.max((bp.flex_memory_price - price).abs() / (cfg.dp_replication * cfg.row_bytes()));
        match (bp.p_comm_flex, p_flex) {
            (Some(a), Some(b)) => worst = worst.max(rel(a, b)),
            (None, None) => homogeneous += 1,
            _ => failures.push(format!("config {i}: Flex breakpoint presence differs")),
        }
    }
    let reference = breakpoints(&configs[0].0, &configs[0].1).unwrap();
    let reference_ok = rel(reference.p_mem_dp, 1.4572e-3) < 1e-3
        && rel(reference.p_comm_dp, 3.846e-5) < 1e-3
        && rel(reference.p_comm_flex.unwrap(), 3.087e-5) < 1e-3;
    let passed = failures.is_empty() && worst <= 1e-9 && homogeneous > 0 && reference_ok;
    outcome(
        passed,
        format!(
            "max relative error {worst:.2e} over 100 configs, {homogeneous} homogeneous with no Flex breakpoint, reference ok: {reference_ok}{}",
            if failures.is_empty() { String::new() } else { format!(", failures: {failures:?}") }
        ),
    )
}

fn criterion_frontier_geometry() -> Outcome {
    let mut problems = Vec::new();
    let mut cases = 0;
    for (name, (cfg, topo)) in [("reference", (CostModelConfig::reference(), Topology::reference_cluster())), ("desk", desk())] {
        for s in [0.8, 1.05, 1.3] {
            for l in [50.0, 1000.0] {
                cases += 1;
                let tag = format!("{name} s={s} L={l}");
                let dist = RowDistribution::synthesize_zipf(0, 100_000, s, l, 17).unwrap();
                let frontier = build_frontier(&dist, &cfg, &topo, Strategy::Dp).unwrap();
                let pts = find_points(&frontier, &dist, &cfg, &topo).unwrap();

                // Scan oracle: plain running sums of hand-derived marginals.
                let probs: Vec<f64> = dist.rows().iter().map(|r| r.probability).collect();
                let marg: Vec<f64> = probs.iter().map(|&p| oracle_marginal(Strategy::Dp, p, &cfg, &topo).0).collect();
                let mut mem = vec![0.0];
                for m in &marg {
                    mem.push(mem.last().unwrap() + m);
                }
                let scale = cfg.dp_replication * cfg.row_bytes() * 1e-6;

                let lib: Vec<f64> = frontier.points.iter().map(|p| p.cum_marginal_memory_bytes).collect();
                let drift = lib.iter().zip(&mem).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if drift > scale {
                    problems.push(format!("{tag}: frontier drifts {drift:e} from oracle"));
                }
                // Unimodal: steps are non-decreasing because p is sorted descending.
                if let Some(k) = marg.windows(2).position(|w| w[1] < w[0]) {
                    problems.push(format!("{tag}: marginal decreases at {k}"));
                }
                let min = mem.iter().copied().fold(f64::INFINITY, f64::min);
                let a = pts.a.row_index;
                if (mem[a] - min).abs() > scale {
                    problems.push(format!("{tag}: A={a} is not the minimum"));
                }
                let bp = breakpoints(&cfg, &topo).unwrap();
                let last_saving = probs.iter().rposition(|&p| p >= bp.p_mem_dp).map_or(0, |k| k + 1);
                if a != last_saving && (mem[a] - mem[last_saving]).abs() > scale {
                    problems.push(format!("{tag}: A={a} but last memory-saving row is {last_saving}"));
                }
                let b = pts.b.row_index;
                let next = marg.get(b).copied().unwrap_or(f64::INFINITY);
                if !(mem[b] <= scale && mem[b] > -next - scale) {
                    problems.push(format!("{tag}: B={b} outside (-dmem, 0]"));
                }
                if b + 1 < mem.len() && mem[b + 1] <= -scale {
                    problems.push(format!("{tag}: B={b} is not the last non-positive point"));
                }
                let c = probs.iter().rposition(|&p| p >= bp.p_comm_dp).map_or(0, |k| k + 1);
                if pts.c.row_index != c {
                    problems.push(format!("{tag}: C={} but scan gives {c}", pts.c.row_index));
                }
                if pts.d.row_index != dist.len() {
                    problems.push(format!("{tag}: D is not the last point"));
                }
            }
        }
    }
    outcome(problems.is_empty(), format!("{cases} zipf cases checked against scan oracle{}", join(&problems)))
}

fn join(problems: &[String]) -> String {
    if problems.is_empty() {
        String::new()
    } else {
        format!("; {}", problems.join("; "))
    }
}

fn suite_workloads() -> Vec<(String, RowDistribution, CostModelConfig, Topology)> {
    let (cfg, topo) = desk();
    let mut out = vec![("desk 4-table".to_string(), desk_tables(5), cfg, topo)];
    for (s, l) in [(0.8, 50.0), (1.05, 200.0), (1.3, 1000.0)] {
        out.push((
            format!("zipf s={s} L={l}"),
            RowDistribution::synthesize_zipf(9, 20_000, s, l, 3).unwrap(),
            cfg,
            topo,
        ));
    }
    let reference = CostModelConfig::reference();
    out.push((
        "reference cfg zipf".to_string(),
        RowDistribution::synthesize_zipf(0, 200_000, 1.05, 100.0, 4).unwrap(),
        reference,
        topo,
    ));
    out
}

fn criterion_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut plans = 0;
    for (_, dist, cfg, topo) in suite_workloads() {
        let f = build_frontier(&dist, &cfg, &topo, Strategy::Dp).unwrap();
        let pts = find_points(&f, &dist, &cfg, &topo).unwrap();
        let mut all: Vec<ShardingPlan> = vec![plan_2tier(&dist, &cfg, &topo).unwrap(), plan_3tier(&dist, &cfg, &topo).unwrap()];
        for budget in [pts.a.cum_marginal_memory_bytes, 0.0, 1e7, 1e9] {
            for flex in [false, true] {
                if let Ok(p) = plan_for_budget(&dist, &cfg, &topo, budget, flex) {
                    all.push(p);
                }
            }
        }
        for p in &all {
            let cov = p.coverage();
            worst = worst.max((p.predicted.global_a2a_reduction - (cov.dp.coverage_fraction + cov.flex.coverage_fraction)).abs());
            worst = worst.max((cov.total_fraction() - 1.0).abs());
            plans += 1;
        }
    }
    outcome(worst <= 1e-9, format!("max |reduction - (DP + Flex coverage)| = {worst:.2e} over {plans} plans"))
}

struct SimCase {
    name: String,
    predicted: [f64; 2],
    simulated: [f64; 2],
    peaks: [f64; 3],
}

fn run_simulations(cases: &[(String, RowDistribution, CostModelConfig, Topology)], iterations: u32) -> Vec<SimCase> {
    cases
        .iter()
        .map(|(name, dist, cfg, topo)| {
            let two = plan_2tier(dist, cfg, topo).unwrap();
            let three = plan_3tier(dist, cfg, topo).unwrap();
            let p2 = assign_rows(&TierAssignment::from_plan(&two, dist), dist, topo, 0).unwrap();
            let p3 = assign_rows(&TierAssignment::from_plan(&three, dist), dist, topo, 0).unwrap();
            let rw = assign_rows(&TierAssignment::pure_rw(dist), dist, topo, 0).unwrap();
            let wl = sample_workload(dist, cfg, topo, 2024, iterations).unwrap();
            let r = simulate_many(&[&p2, &p3, &rw], &wl, cfg, topo, 0, 1).unwrap();
            let coverage = |p: &ShardingPlan| p.coverage().dp.coverage_fraction + p.coverage().flex.coverage_fraction;
            SimCase {
                name: name.clone(),
                predicted: [coverage(&two), coverage(&three)],
                simulated: [r[0].reduction_vs(&r[2]), r[1].reduction_vs(&r[2])],
                peaks: [r[0].peak_memory_bytes_per_gpu, r[1].peak_memory_bytes_per_gpu, r[2].peak_memory_bytes_per_gpu],
            }
        })
        .collect()
}

fn criterion_monte_carlo(desk_case: &SimCase) -> Outcome {
    let gaps = [
        (desk_case.simulated[0] - desk_case.predicted[0]).abs(),
        (desk_case.simulated[1] - desk_case.predicted[1]).abs(),
    ];
    outcome(
        gaps[0] < 0.02 && gaps[1] < 0.02,
        format!(
            "2-tier predicted {:.4} simulated {:.4}; 3-tier predicted {:.4} simulated {:.4} (200 iterations, U=32, B=64)",
            desk_case.predicted[0], desk_case.simulated[0], desk_case.predicted[1], desk_case.simulated[1]
        ),
    )
}

fn criterion_memory(cases: &[SimCase]) -> Outcome {
    let mut problems = Vec::new();
    let mut margin = f64::INFINITY;
    for c in cases {
        for (label, peak) in [("2-tier", c.peaks[0]), ("3-tier", c.peaks[1])] {
            margin = margin.min(c.peaks[2] - peak);
            if peak > c.peaks[2] {
                problems.push(format!("{}: {label} peak {peak:.0} > RW {:.0}", c.name, c.peaks[2]));
            }
        }
    }
    outcome(
        problems.is_empty(),
        format!("{} workloads, smallest RW-minus-plan peak margin {margin:.0} bytes{}", cases.len(), join(&problems)),
    )
}

fn criterion_greedy_dominance() -> Outcome {
    let (cfg, topo) = desk();
    let dist = RowDistribution::synthesize_zipf(0, 10_000, 1.05, 100.0, 8).unwrap();
    let probs: Vec<f64> = dist.rows().iter().map(|r| r.probability).collect();
    let f = build_frontier(&dist, &cfg, &topo, Strategy::Dp).unwrap();
    let pts = find_points(&f, &dist, &cfg, &topo).unwrap();
    let at_a = plan_for_budget(&dist, &cfg, &topo, pts.a.cum_marginal_memory_bytes, false).unwrap();
    let at_b = plan_2tier(&dist, &cfg, &topo).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut accepted = 0;
    let mut violations = 0;
    let mut attempts = 0;
    for plan in [&at_a, &at_b] {
        let k = plan.dp_cut;
        let (plan_mem, plan_comm) = plan.achieved();
        let tol = 0.05 * plan_mem.abs().max(cfg.dp_replication * k as f64 * cfg.row_bytes());
        let window = (3 * k + 10).min(probs.len());
        let mut taken = 0;
        while taken < 500 && attempts < 2_000_000 {
            attempts += 1;
            let mut subset: Vec<usize> = (0..k).collect();
            let swaps = rng.random_range(1..=(k / 4).max(1));
            let mut members = vec![false; window];
            members[..k].iter_mut().for_each(|m| *m = true);
            for _ in 0..swaps {
                let out = rng.random_range(0..k);
                let candidate = rng.random_range(0..window);
                if !members[candidate] {
                    members[subset[out]] = false;
                    members[candidate] = true;
                    subset[out] = candidate;
                }
            }
            let (mut m, mut c) = (CompensatedSum::new(), CompensatedSum::new());
            for &i in &subset {
                let (dm, dc) = marginal_cost(Strategy::Dp, probs[i], &cfg, &topo);
                m.add(dm);
                c.add(dc);
            }
            if (m.value() - plan_mem).abs() > tol {
                continue;
            }
            taken += 1;
            if c.value() < plan_comm - 1e-12 * plan_comm.abs() {
                violations += 1;
            }
        }
        accepted += taken;
    }
    outcome(
        accepted == 1000 && violations == 0,
        format!("{accepted} equal-memory subsets (sizes {} and {}), {violations} beat the greedy plan", at_a.dp_cut, at_b.dp_cut),
    )
}

fn criterion_hash() -> Outcome {
    let topo = Topology::reference_cluster();
    let quantile = ChiSquared::new(31.0).unwrap().inverse_cdf(0.999);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_chi: f64 = 0.0;
    for (table_id, hash_seed) in [(0u32, 0u64), (3, 0), (0, 12345), (7, 99)] {
        let counts = shard_row_counts((0..1_000_000u64).map(|row_id| RowKey { table_id, row_id }), hash_seed, &topo);
        let mean = 1_000_000.0 / 32.0;
        let max = *counts.iter().max().unwrap() as f64;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
        worst_ratio = worst_ratio.max(max / mean);
        worst_chi = worst_chi.max(chi);
    }
    outcome(
        worst_ratio < 1.01 && worst_chi < quantile,
        format!("max/mean {worst_ratio:.6}, chi-square {worst_chi:.3} < {quantile:.3} (10^6 rows, 32 shards, 4 table/seed pairs)"),
    )
}

fn criterion_determinism() -> Outcome {
    let build = || {
        let (cfg, topo) = desk();
        let dist = desk_tables(11);
        let plan = plan_3tier(&dist, &cfg, &topo).unwrap();
        let doc = PlanDocument::new(&plan, &dist, &cfg, &topo).unwrap().to_json().unwrap();
        (doc, dist, plan, cfg, topo)
    };
    let (doc1, dist, plan, cfg, topo) = build();
    let (doc2, ..) = build();
    let placement = assign_rows(&TierAssignment::from_plan(&plan, &dist), &dist, &topo, 0).unwrap();
    let wl = sample_workload(&dist, &cfg, &topo, 99, 12).unwrap();
    let run = |threads| serde_json::to_string(&simulate(&placement, &wl, &cfg, &topo, 0, threads).unwrap()).unwrap();
    let (a, b, c) = (run(1), run(1), run(4));
    outcome(
        doc1 == doc2 && a == b && a == c,
        format!(
            "plan documents identical: {}, sim reports identical across runs: {}, threads 1 vs 4: {}",
            doc1 == doc2,
            a == b,
            a == c
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let passed = o.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" / limit {:.0}s", l.as_secs_f64()));
        println!(
            "[{}] {n}. {name}: {} ({:.2}s{budget})",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    };

    report(1, "linearity", Some(Duration::from_secs(5)), &mut criterion_linearity);
    report(2, "breakpoints", Some(Duration::from_secs(5)), &mut criterion_breakpoints);
    report(3, "frontier geometry", Some(Duration::from_secs(10)), &mut criterion_frontier_geometry);
    report(4, "model identity", None, &mut criterion_identity);

    let cases = suite_workloads();
    let mut sims = Vec::new();
    report(5, "monte-carlo agreement", Some(Duration::from_secs(120)), &mut || {
        sims = run_simulations(&cases[..1], 200);
        criterion_monte_carlo(&sims[0])
    });
    report(6, "memory neutrality", None, &mut || {
        let mut all = std::mem::take(&mut sims);
        all.extend(run_simulations(&cases[1..], 20));
        criterion_memory(&all)
    });
    report(7, "greedy dominance", None, &mut criterion_greedy_dominance);
    report(8, "hash uniformity", None, &mut criterion_hash);
    report(9, "determinism", None, &mut criterion_determinism);

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
