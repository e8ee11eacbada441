use std::path::Path;

use anyhow::{bail, Context, Result};
use rowshard_core::cost_model::breakpoints as compute_breakpoints;
use rowshard_core::planner::{self, build_frontier, find_points, MAX_REPORTED_FRONTIER_POINTS};
use rowshard_core::simulator::{compare as compare_metrics, sample_workload, simulate_against_baseline};
use rowshard_core::{
    Breakpoints, CostReport, Discrepancy, FrontierPoints, PlanDocument, RowDistribution, SimComparison, Strategy,
    Tier, TierAssignment,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{Goal, Loaded};
use crate::output::{self, millis, mib, percent, Table};
use crate::Common;

/// Everything `simulate` writes to `sim_report.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub plan_goal: String,
    pub threads_independent: bool,
    pub predicted_global_a2a_reduction: f64,
    pub comparison: SimComparison,
    pub discrepancies: Vec<Discrepancy>,
}

pub fn synth(c: &Common) -> Result<()> {
    let loaded = Loaded::from_path(&c.manifest, c.out.as_deref())?;
    let mut echo = loaded.manifest.clone();
    let mut table = Table::new(&["table_id", "num_rows", "observed_rows", "expected_length", "file"]);
    let mut outputs = Vec::new();
    for (spec, echoed) in loaded.manifest.tables.iter().zip(echo.tables.iter_mut()) {
        if spec.zipf.is_none() {
            log::info!("table {} has no zipf spec; keeping its histogram", spec.table_id);
            continue;
        }
        let dist = loaded.synthesize(spec)?;
        let path = loaded.histogram_path(spec);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        dist.write_histogram_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        table.row(&[
            spec.table_id.to_string(),
            spec.num_rows.to_string(),
            dist.len().to_string(),
            format!("{:.3}", dist.total_expected_length()),
            path.display().to_string(),
        ]);
        echoed.histogram = Some(path.clone());
        outputs.push(path.display().to_string());
    }
    // Echo of the manifest pointing at the written files, so a rerun reads them back.
    echo.output_dir = loaded.output_dir.clone();
    echo.topology = loaded.resolve(&loaded.manifest.topology);
    let echo_path = loaded.output_dir.join("manifest.toml");
    output::write_file(&echo_path, toml::to_string(&echo)?)?;
    outputs.push(echo_path.display().to_string());
    print!("{}", table.render());
    output::write_run_meta(&loaded.output_dir, "synth", &outputs)
}

fn landmark_table(points: &FrontierPoints, dist: &RowDistribution) -> Table {
    let mut t = Table::new(&["point", "rows_moved", "last_probability", "memory_bytes", "comm_seconds"]);
    for (name, p) in [("A", points.a), ("B", points.b), ("C", points.c), ("D", points.d)] {
        let prob = match p.row_index {
            0 => "-".to_string(),
            k => format!("{:.4e}", dist.rows()[k - 1].probability),
        };
        t.row(&[
            name.to_string(),
            p.row_index.to_string(),
            prob,
            format!("{:.4e}", p.cum_marginal_memory_bytes),
            format!("{:.4e}", p.cum_marginal_comm_seconds),
        ]);
    }
    t
}

fn coverage_csv(doc: &PlanDocument) -> String {
    let mut s = String::from("tier,rows,expected_length,coverage_fraction\n");
    for tier in [Tier::Dp, Tier::Flex, Tier::Rw] {
        let st = doc.coverage.get(tier);
        s.push_str(&format!("{},{},{:e},{:e}\n", tier.name(), st.row_count, st.expected_length, st.coverage_fraction));
    }
    s
}

fn collective_table(p: &CostReport) -> Table {
    let mut t = Table::new(&["collective", "bytes_per_gpu", "latency", "overlappable"]);
    t.row(&["global a2a (RW baseline)".to_string(), mib(p.baseline_global_a2a.bytes_per_gpu), millis(p.baseline_global_a2a.seconds), "no".into()]);
    for (name, c) in [
        ("global a2a", p.global_a2a),
        ("intra-node a2a", p.intra_a2a),
        ("global all-reduce", p.global_all_reduce),
        ("cross-node all-reduce", p.cross_all_reduce),
    ] {
        let ov = if c.overlappable { "yes" } else { "no" };
        t.row(&[name.to_string(), mib(c.bytes_per_gpu), millis(c.seconds), ov.to_string()]);
    }
    t
}

pub fn plan(c: &Common) -> Result<()> {
    let loaded = Loaded::from_path(&c.manifest, c.out.as_deref())?;
    let topo = loaded.topology()?;
    let cfg = loaded.cost_model();
    let dist = loaded.distribution()?;
    let out = &loaded.output_dir;
    let mut outputs = Vec::new();

    let frontier = build_frontier(&dist, &cfg, &topo, Strategy::Dp)?;
    let points = find_points(&frontier, &dist, &cfg, &topo)?;
    let keep = [points.a.row_index, points.b.row_index, points.c.row_index];
    let frontier_path = out.join("frontier.csv");
    planner::Frontier::write_csv(
        &frontier.downsample(MAX_REPORTED_FRONTIER_POINTS, &keep),
        &dist,
        output::create(&frontier_path)?,
    )?;
    outputs.push(frontier_path.display().to_string());

    let goal = match loaded.goal()? {
        Goal::Frontier => {
            let path = out.join("frontier_points.json");
            output::write_json(&path, &points)?;
            outputs.push(path.display().to_string());
            println!("DP frontier over {} observed rows", dist.len());
            print!("{}", landmark_table(&points, &dist).render());
            return output::write_run_meta(out, "plan", &outputs);
        }
        Goal::Plan(g) => g,
    };

    let plan = planner::plan(goal, &dist, &cfg, &topo)?;
    let doc = PlanDocument::new(&plan, &dist, &cfg, &topo)?;
    let plan_path = out.join("plan.json");
    output::write_file(&plan_path, doc.to_json()?)?;
    let coverage_path = out.join("coverage.csv");
    output::write_file(&coverage_path, coverage_csv(&doc))?;
    let assignment_path = out.join("assignment.csv");
    TierAssignment::from_plan(&plan, &dist).write_csv(&dist, output::create(&assignment_path)?)?;
    outputs.extend([plan_path, coverage_path, assignment_path].iter().map(|p| p.display().to_string()));

    println!("goal {goal}: {} tables, {} observed rows", dist.tables().len(), dist.len());
    let mut t = Table::new(&["tier", "rows", "expected_length", "coverage"]);
    for tier in [Tier::Dp, Tier::Flex, Tier::Rw] {
        let st = doc.coverage.get(tier);
        t.row(&[tier.name().to_string(), st.row_count.to_string(), format!("{:.3}", st.expected_length), percent(st.coverage_fraction)]);
    }
    print!("{}", t.render());
    let p = &doc.predicted;
    println!();
    print!("{}", collective_table(p).render());
    println!();
    println!("predicted global a2a reduction: {}", percent(p.global_a2a_reduction));
    println!(
        "memory per GPU: {} (RW baseline {}), change {:+.0} bytes",
        mib(p.total_memory_bytes),
        mib(p.baseline_total_memory_bytes),
        p.additional_memory_bytes
    );
    output::write_run_meta(out, "plan", &outputs)
}

fn load_plan(path: &Path) -> Result<PlanDocument> {
    PlanDocument::from_path(path).with_context(|| format!("cannot load plan {}", path.display()))
}

fn discrepancy_table(rows: &[Discrepancy]) -> Table {
    let mut t = Table::new(&["metric", "predicted", "simulated", "relative_error", "flag"]);
    for d in rows {
        t.row(&[
            d.metric.clone(),
            format!("{:.4e}", d.predicted),
            format!("{:.4e}", d.simulated),
            format!("{:+.3}%", 100.0 * d.relative_error),
            if d.flagged { "!" } else { "" }.to_string(),
        ]);
    }
    t
}

fn discrepancy_csv(rows: &[Discrepancy]) -> String {
    let mut s = String::from("metric,predicted,simulated,relative_error,flagged\n");
    for d in rows {
        s.push_str(&format!("{},{:e},{:e},{:e},{}\n", d.metric, d.predicted, d.simulated, d.relative_error, d.flagged));
    }
    s
}

pub fn simulate(c: &Common, plan_path: &Path, threads: usize) -> Result<()> {
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    let doc = load_plan(plan_path)?;
    let loaded = Loaded::from_path(&c.manifest, c.out.as_deref())?;
    let topo = loaded.topology()?;
    let cfg = loaded.cost_model();
    let dist = loaded.distribution()?;
    doc.check_tables(&dist).context("plan does not match the manifest")?;
    if doc.config != cfg || doc.topology != topo {
        log::warn!("plan was made for a different cost model or topology; simulating with the manifest's");
    }
    let m = &loaded.manifest;
    let workload = sample_workload(&dist, &cfg, &topo, m.seed, m.simulation.iterations)?;
    let run = simulate_against_baseline(&doc.assignment()?, &dist, &workload, &cfg, &topo, m.hash_seed, threads)?;
    let discrepancies = compare_metrics(&doc.predicted, &run.plan, rowshard_core::simulator::DEFAULT_COMPARE_TOLERANCE);

    let out = &loaded.output_dir;
    let sim_csv = out.join("sim_iterations.csv");
    run.plan.write_csv(output::create(&sim_csv)?)?;
    let base_csv = out.join("baseline_iterations.csv");
    run.baseline.write_csv(output::create(&base_csv)?)?;
    let report_path = out.join("sim_report.json");
    let report = SimulationOutput {
        plan_goal: doc.goal.to_string(),
        threads_independent: true,
        predicted_global_a2a_reduction: doc.predicted.global_a2a_reduction,
        comparison: run,
        discrepancies,
    };
    output::write_json(&report_path, &report)?;

    let run = &report.comparison;
    println!(
        "{} iterations, {} samples per iteration, plan {}",
        workload.num_iterations(),
        workload.samples_per_iteration(),
        report.plan_goal
    );
    let mut t = Table::new(&["", "predicted", "simulated"]);
    t.row(&["global a2a reduction".to_string(), percent(report.predicted_global_a2a_reduction), percent(run.global_a2a_reduction)]);
    print!("{}", t.render());
    println!();
    let (b, p) = (&run.baseline.summary, &run.plan.summary);
    let mut t = Table::new(&["collective", "RW baseline", "plan"]);
    t.row(&["global a2a".to_string(), millis(b.global_a2a_seconds), millis(p.global_a2a_seconds)]);
    t.row(&["intra-node a2a (overlappable)".to_string(), millis(b.intra_a2a_seconds), millis(p.intra_a2a_seconds)]);
    t.row(&["global all-reduce".to_string(), millis(b.ar_global_seconds), millis(p.ar_global_seconds)]);
    t.row(&["cross-node all-reduce (overlappable)".to_string(), millis(b.ar_cross_seconds), millis(p.ar_cross_seconds)]);
    t.row(&["total".to_string(), millis(b.total_comm_seconds()), millis(p.total_comm_seconds())]);
    t.row(&["total without overlappable".to_string(), millis(b.blocking_comm_seconds()), millis(p.blocking_comm_seconds())]);
    print!("{}", t.render());
    println!();
    println!("latency speedup: {:.3}x ({:.3}x without overlappable collectives)", run.speedup, run.speedup_blocking);
    println!(
        "peak memory per GPU: plan {} vs RW {}",
        mib(run.plan.peak_memory_bytes_per_gpu),
        mib(run.baseline.peak_memory_bytes_per_gpu)
    );
    if report.discrepancies.iter().any(|d| d.flagged) {
        log::warn!("some simulated metrics differ from the prediction by more than the tolerance; see `compare`");
    }
    let outputs: Vec<String> = [sim_csv, base_csv, report_path].iter().map(|p| p.display().to_string()).collect();
    output::write_run_meta(out, "simulate", &outputs)
}

pub fn compare(plan_path: &Path, report_path: &Path, tolerance: f64, out: Option<&Path>) -> Result<()> {
    let doc = load_plan(plan_path)?;
    let text = std::fs::read_to_string(report_path)
        .with_context(|| format!("cannot read report {}", report_path.display()))?;
    let report: SimulationOutput =
        serde_json::from_str(&text).with_context(|| format!("invalid report {}", report_path.display()))?;
    let rows = compare_metrics(&doc.predicted, &report.comparison.plan, tolerance);
    print!("{}", discrepancy_table(&rows).render());
    let flagged = rows.iter().filter(|d| d.flagged).count();
    println!("{flagged} of {} metrics outside {}", rows.len(), percent(tolerance));
    if let Some(dir) = out {
        let path = dir.join("compare.csv");
        output::write_file(&path, discrepancy_csv(&rows))?;
        output::write_run_meta(dir, "compare", &[path.display().to_string()])?;
    }
    Ok(())
}

fn breakpoint_table(bp: &Breakpoints) -> Table {
    let mut t = Table::new(&["quantity", "value"]);
    t.row(&["DP memory breakpoint".to_string(), format!("{:.6e}", bp.p_mem_dp)]);
    t.row(&["DP communication breakpoint".to_string(), format!("{:.6e}", bp.p_comm_dp)]);
    t.row(&[
        "Flex communication breakpoint".to_string(),
        bp.p_comm_flex.map_or_else(|| "none (homogeneous topology)".to_string(), |p| format!("{p:.6e}")),
    ]);
    t.row(&["Flex memory price (bytes/row)".to_string(), format!("{:.3}", bp.flex_memory_price)]);
    t
}

pub fn breakpoints(manifest: &Path) -> Result<()> {
    let loaded = Loaded::from_path(manifest, None)?;
    let bp = compute_breakpoints(&loaded.cost_model(), &loaded.topology()?)?;
    print!("{}", breakpoint_table(&bp).render());
    Ok(())
}
