use anyhow::{ensure, Result};
use mcwlan_core::aloha::{frontier_shape, region_boundary};
use mcwlan_core::frontier::{
    axis_capacity, merge_identical, shape_classify, trace_analytic, trace_deviation, trace_empirical, uniform_grid, AnalyticSolver, BoundaryTrace,
    TraceSpec,
};
use mcwlan_core::params::{ArrivalVector, ChannelSpec, MBPS};
use mcwlan_core::simulator::{classify_stability, population_histogram, simulate};
use mcwlan_core::single_channel::{classify, solve_sigma, tilde_cost, InitialCondition};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, MultiModel};
use crate::output::{Cell, Table};

fn single_channel(cfg: &ExperimentConfig) -> Result<ChannelSpec> {
    let chans = cfg.channels()?;
    ensure!(chans.len() == 1, "this command models one channel, but {} were configured", chans.len());
    Ok(chans[0])
}

fn lambda(cfg: &ExperimentConfig) -> Result<ArrivalVector> {
    Ok(ArrivalVector::new(cfg.lambda_bits())?)
}

pub fn sigma_solver(cfg: &ExperimentConfig) -> Result<AnalyticSolver> {
    Ok(AnalyticSolver::Sigma { params: cfg.params(), chan: single_channel(cfg)?, opts: cfg.solver.options() })
}

pub fn solve(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let chan = single_channel(cfg)?;
    let l = lambda(cfg)?;
    let mut t = Table::new("solve", &["ic", "node", "lambda_mbps", "tau", "p", "wbar", "rho", "rho_hat", "iterations", "residual"]);
    for ic in cfg.solver.initial_conditions(l.len()) {
        let s = solve_sigma(&l, &ic, &cfg.params(), &chan, &cfg.solver.options())?;
        for i in 0..l.len() {
            let st = &s.state;
            t.push(vec![
                ic.label.as_str().into(),
                i.into(),
                cfg.lambda_mbps[i].into(),
                st.tau[i].into(),
                st.p[i].into(),
                st.wbar[i].into(),
                st.rho[i].into(),
                st.rho_hat[i].into(),
                s.iterations.into(),
                s.residual.into(),
            ]);
        }
    }
    Ok(vec![t])
}

pub fn classify_cmd(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let chan = single_channel(cfg)?;
    let l = lambda(cfg)?;
    let ics = cfg.solver.initial_conditions(l.len());
    let v = classify(&l, &cfg.params(), &chan, &cfg.solver.options(), &ics)?;
    let mut t = Table::new("classify", &["ic", "converged", "stable", "node", "tau", "rho"]);
    for ic in &ics {
        match v.solution(&ic.label) {
            Some(s) => {
                for i in 0..l.len() {
                    t.push(vec![
                        ic.label.as_str().into(),
                        true.into(),
                        s.state.is_stable().into(),
                        i.into(),
                        s.state.tau[i].into(),
                        s.state.rho[i].into(),
                    ]);
                }
            }
            None => t.push(vec![ic.label.as_str().into(), false.into(), false.into(), Cell::Missing, Cell::Missing, Cell::Missing]),
        }
    }
    t.summary = json!({ "class": v.class, "in_region": v.in_region(), "distinct": v.distinct, "diverged": v.diverged });
    Ok(vec![t])
}

/// Trace spec from the configuration; the free grid runs up to the free
/// node's own limit under `capacity` unless `free_max_mbps` is set.
pub fn trace_spec(cfg: &ExperimentConfig, capacity: Option<&AnalyticSolver>) -> Result<TraceSpec> {
    let tr = &cfg.trace;
    let base = cfg.lambda_bits();
    let (step, max_rate) = (tr.step_mbps * MBPS, tr.max_rate_mbps * MBPS);
    let free_values = match tr.free_axis {
        None => vec![0.0],
        Some(f) => {
            let upper = match (tr.free_max_mbps, capacity) {
                (Some(x), _) => x * MBPS,
                (None, Some(solver)) => {
                    let zero = InitialCondition::zero(base.len());
                    let mut b = base.clone();
                    b[tr.sweep_axis] = 0.0;
                    axis_capacity(&b, f, step, max_rate, solver, &zero)?
                }
                (None, None) => anyhow::bail!("trace.free_max_mbps is required for this command"),
            };
            uniform_grid(upper, tr.free_points)
        }
    };
    Ok(TraceSpec {
        base,
        sweep_axis: tr.sweep_axis,
        free_axis: tr.free_axis,
        free_values,
        step,
        max_rate,
        refine_levels: tr.refine_levels,
    })
}

fn shape_summary(t: &BoundaryTrace) -> Value {
    match (shape_classify(t), trace_deviation(t)) {
        (Ok(shape), Ok(dev)) => json!({ "shape": shape, "above_chord": dev.above, "below_chord": dev.below }),
        _ => Value::Null,
    }
}

pub fn trace_table(name: &str, traces: &[BoundaryTrace]) -> Table {
    let merged = merge_identical(traces);
    let mut t = Table::new(name, &["ic", "free_mbps", "boundary_mbps", "flagged"]);
    let mut shapes = serde_json::Map::new();
    for tr in &merged {
        let label = tr.ic_label.clone().unwrap_or_else(|| "-".into());
        for p in &tr.points {
            t.push(vec![label.as_str().into(), (p.free / MBPS).into(), (p.boundary / MBPS).into(), p.flagged.into()]);
        }
        shapes.insert(label, shape_summary(tr));
    }
    let method = traces.first().map(|t| t.method);
    let axes = traces.first().map(|t| (t.sweep_axis, t.free_axis));
    t.summary = json!({ "method": method, "axes": axes, "shapes": shapes });
    t
}

pub fn boundary(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let solver = sigma_solver(cfg)?;
    let spec = trace_spec(cfg, Some(&solver))?;
    let traces = trace_analytic(&spec, &solver, &cfg.solver.initial_conditions(spec.base.len()))?;
    Ok(vec![trace_table("boundary", &traces)])
}

pub fn region_tilde(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let chan = single_channel(cfg)?;
    let (cost, substituted) = tilde_cost(&chan);
    let solver = AnalyticSolver::SigmaTilde { params: cfg.params(), t: cost };
    let spec = trace_spec(cfg, Some(&solver))?;
    let traces = trace_analytic(&spec, &solver, &[])?;
    let mut t = trace_table("region_tilde", &traces);
    t.summary["slot_cost_s"] = json!(cost);
    t.summary["cost_substituted"] = json!(substituted);
    Ok(vec![t])
}

pub fn multichannel_solver(cfg: &ExperimentConfig) -> Result<AnalyticSolver> {
    let chans = cfg.channels()?;
    let policy = cfg.policy()?;
    Ok(match cfg.multichannel.model {
        MultiModel::Exact => AnalyticSolver::SigmaG { params: cfg.params(), chans, policy, opts: cfg.solver.options() },
        MultiModel::Tilde => AnalyticSolver::SigmaGTilde { params: cfg.params(), policy, t: tilde_cost(&chans[0]).0 },
    })
}

pub fn multichannel(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let solver = multichannel_solver(cfg)?;
    let spec = trace_spec(cfg, Some(&solver))?;
    let traces = trace_analytic(&spec, &solver, &cfg.solver.initial_conditions(spec.base.len()))?;
    let mut t = trace_table("multichannel", &traces);
    t.summary["q"] = json!(cfg.multichannel.q);
    Ok(vec![t])
}

pub fn aloha_tables(users: usize, wbars: &[f64], grid: usize, prefix: &str) -> Result<Vec<Table>> {
    let mut out = Vec::new();
    for &w in wbars {
        let b = region_boundary(users, w, grid)?;
        let mut cols: Vec<String> = (1..=users).map(|i| format!("tau_{i}")).collect();
        cols.extend((1..=users).map(|i| format!("rate_{i}")));
        let mut t = Table::with_columns(format!("{prefix}_wbar{}", crate::output::sig12(w)), cols);
        for p in &b {
            t.push(p.tau.iter().chain(&p.rates).map(|&x| Cell::from(x)).collect());
        }
        let shape = if users == 2 { frontier_shape(&b).ok() } else { None };
        t.summary = json!({ "wbar": w, "grid": grid, "frontier_points": b.len(), "shape": shape });
        out.push(t);
    }
    Ok(out)
}

pub fn aloha(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    aloha_tables(cfg.aloha.users, &cfg.aloha.wbar, cfg.aloha.grid, "aloha")
}

pub fn simulate_cmd(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let sim = cfg.sim_config()?;
    let r = simulate(&sim)?;
    let outcome = classify_stability(&r, &sim)?;
    let mut nodes = Table::new(
        "simulate",
        &[
            "node",
            "lambda_mbps",
            "throughput_mbps",
            "arrivals",
            "successes",
            "collisions",
            "attempts",
            "backlog",
            "in_service",
            "time_fraction_busy",
            "slot_fraction_busy",
            "backlog_ratio",
            "unstable",
        ],
    );
    for i in 0..sim.nodes.len() {
        let sum = |m: &Vec<Vec<u64>>| m[i].iter().sum::<u64>();
        nodes.push(vec![
            i.into(),
            (sim.nodes[i].lambda / MBPS).into(),
            (r.throughput[i] / MBPS).into(),
            r.arrivals[i].into(),
            sum(&r.successes).into(),
            sum(&r.collisions).into(),
            sum(&r.attempts).into(),
            r.backlog[i].into(),
            r.in_service[i].into(),
            r.time_fraction_busy(i).into(),
            r.slot_fraction_busy(i).into(),
            outcome.margins[i].backlog_ratio.into(),
            outcome.margins[i].unstable.into(),
        ]);
    }
    nodes.summary = json!({
        "unstable": outcome.unstable,
        "samples": r.samples,
        "channel_tally": r.channel_tally,
        "empirical_tau": r.empirical_tau,
        "mean_population": (0..sim.channels.len()).map(|k| r.mean_population(k).ok()).collect::<Vec<_>>(),
    });
    let mut pop = Table::new("simulate_population", &["channel", "count", "samples"]);
    for k in 0..sim.channels.len() {
        for (c, &n) in population_histogram(&r, k)?.iter().enumerate() {
            pop.push(vec![k.into(), c.into(), n.into()]);
        }
    }
    let mut tables = vec![nodes, pop];
    if let Some(s) = &r.series {
        let mut cols = vec!["time_s".to_string()];
        cols.extend((0..sim.channels.len()).map(|k| format!("population_{k}")));
        cols.extend((0..sim.nodes.len()).map(|i| format!("delivered_{i}")));
        let mut t = Table::with_columns("simulate_series", cols);
        for j in 0..s.times.len() {
            let mut row: Vec<Cell> = vec![s.times[j].into()];
            row.extend(s.population[j].iter().map(|&c| Cell::from(c as u64)));
            row.extend(s.cumulative_successes[j].iter().map(|&c| Cell::from(c)));
            t.push(row);
        }
        tables.push(t);
    }
    Ok(tables)
}

pub fn empirical_table(name: &str, trace: &BoundaryTrace) -> Table {
    let reps = trace.points.first().map_or(0, |p| p.replicates.len());
    let mut cols = vec!["free_mbps".to_string(), "boundary_mbps".to_string()];
    cols.extend((0..reps).map(|r| format!("replicate_{r}")));
    let mut t = Table::with_columns(name, cols);
    for p in &trace.points {
        let mut row: Vec<Cell> = vec![(p.free / MBPS).into(), (p.boundary / MBPS).into()];
        row.extend(p.replicates.iter().map(|&x| Cell::from(x / MBPS)));
        t.push(row);
    }
    t.summary = json!({ "method": trace.method, "axes": (trace.sweep_axis, trace.free_axis), "shape": shape_summary(trace) });
    t
}

pub fn sweep_sim(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let capacity = if cfg.channels_mbps.len() == 1 { Some(sigma_solver(cfg)?) } else { None };
    let spec = trace_spec(cfg, capacity.as_ref())?;
    let trace = trace_empirical(&spec, &cfg.sim_config()?, cfg.simulation.replications)?;
    Ok(vec![empirical_table("sweep_sim", &trace)])
}
