//! Named recipes with the experiment parameters pre-filled. Seeds,
//! replication counts, the search step and the free-grid size come from the
//! supplied configuration.

use anyhow::{bail, Result};
use mcwlan_core::frontier::{
    axis_capacity, sweep_solution_component, trace_analytic, trace_empirical, uniform_grid, AnalyticSolver, BoundaryTrace, TraceSpec,
};
use mcwlan_core::multi_channel::UnbiasedPolicy;
use mcwlan_core::params::{ChannelSpec, SystemParams, MBPS};
use mcwlan_core::simulator::{population_histogram, simulate, NodeConfig, PolicySpec, SimConfig};
use mcwlan_core::single_channel::{extremal_ics, tilde_cost, InitialCondition};
use serde_json::json;

use crate::commands::{aloha_tables, empirical_table, trace_table};
use crate::config::ExperimentConfig;
use crate::output::{sig12, Cell, Table};

pub const RECIPES: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    match name {
        "fig1" => fig1(cfg),
        "fig2" => fig2(cfg),
        "fig3" => fig3(cfg),
        "fig4" => aloha_tables(2, &[1.0, 2.0, 5.0, 10.0, 20.0], mcwlan_core::aloha::DEFAULT_GRID, "fig4"),
        "fig5" => fig5(cfg),
        "fig6" => fig6(cfg),
        "fig7" => fig7(cfg),
        "fig8" => fig8(cfg),
        other => bail!("unknown recipe {other:?}; expected one of {}", RECIPES.join(", ")),
    }
}

fn single(params: SystemParams, cfg: &ExperimentConfig) -> Result<AnalyticSolver> {
    let chan = ChannelSpec::new(&params, 11.0 * MBPS)?;
    Ok(AnalyticSolver::Sigma { params, chan, opts: cfg.solver.options() })
}

fn step(cfg: &ExperimentConfig) -> (f64, f64) {
    (cfg.trace.step_mbps * MBPS, cfg.trace.max_rate_mbps * MBPS)
}

/// Two-node spec over `[0, limit of node 1 alone]`.
fn pair_spec(cfg: &ExperimentConfig, capacity: &AnalyticSolver) -> Result<TraceSpec> {
    let (s, max) = step(cfg);
    let cap = axis_capacity(&[0.0, 0.0], 1, s, max, capacity, &InitialCondition::zero(2))?;
    let mut spec = TraceSpec::pair(uniform_grid(cap, cfg.trace.free_points), s, max);
    spec.refine_levels = cfg.trace.refine_levels;
    Ok(spec)
}

fn fig1(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let range: Vec<f64> = (0..=200).map(|k| 0.05 * k as f64 * MBPS).collect();
    let base = [0.0, 2.0 * MBPS];
    let mut out = Vec::new();
    for w in [2u32, 4, 8, 16] {
        let params = SystemParams::table_one().with_window(w, 0);
        let chan = ChannelSpec::new(&params, 11.0 * MBPS)?;
        let comps = extremal_ics(2)
            .iter()
            .map(|ic| sweep_solution_component(&base, 0, &range, ic, &params, &chan, &cfg.solver.options()))
            .collect::<mcwlan_core::Result<Vec<_>>>()?;
        let mut t = Table::new(format!("fig1_w{w}_m0"), &["lambda1_mbps", "rho1_zero", "rho1_near_one", "jump_zero", "jump_near_one"]);
        for (j, &x) in range.iter().enumerate() {
            let jump = |c: usize| comps[c].jumps.get(j).copied().unwrap_or(false);
            t.push(vec![(x / MBPS).into(), comps[0].rho_curve[j].into(), comps[1].rho_curve[j].into(), jump(0).into(), jump(1).into()]);
        }
        t.summary = json!({ "w": w, "m": 0, "lambda2_mbps": 2.0, "max_rho_gap": comps[0].max_gap(&comps[1]) });
        out.push(t);
    }
    Ok(out)
}

fn fig2(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let mut out = Vec::new();
    for w in [128u32, 32, 4] {
        let params = SystemParams::table_one().with_window(w, 5);
        let solver = single(params, cfg)?;
        let spec = pair_spec(cfg, &solver)?;
        let exact = trace_analytic(&spec, &solver, &[InitialCondition::zero(2)])?;
        let chan = ChannelSpec::new(&params, 11.0 * MBPS)?;
        let tilde = trace_analytic(&spec, &AnalyticSolver::SigmaTilde { params, t: tilde_cost(&chan).0 }, &[])?;
        let mut both: Vec<BoundaryTrace> = exact.clone();
        let mut t = tilde[0].clone();
        t.ic_label = Some("tilde".into());
        both.push(t);
        out.push(trace_table(&format!("fig2_w{w}"), &both));
        if w == 32 {
            let template = SimConfig::single_channel(params, chan, &[0.0, 0.0], cfg.simulation.t_f_s, cfg.simulation.seed);
            let emp = trace_empirical(&spec, &template, cfg.simulation.replications)?;
            let mut e = empirical_table("fig2_w32_empirical", &emp);
            e.summary["max_gap_to_analytic_mbps"] = json!(exact[0].max_gap(&emp) / MBPS);
            out.push(e);
        }
    }
    Ok(out)
}

fn fig3(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let solver = single(SystemParams::table_one().with_window(2, 0), cfg)?;
    let spec = pair_spec(cfg, &solver)?;
    let traces = trace_analytic(&spec, &solver, &extremal_ics(2))?;
    let mut t = trace_table("fig3", &traces);
    t.summary["max_gap_mbps"] = json!(traces[0].max_gap(&traces[1]) / MBPS);
    Ok(vec![t])
}

fn bichannel(params: SystemParams) -> Result<Vec<ChannelSpec>> {
    let c = ChannelSpec::new(&params, 11.0 * MBPS)?;
    Ok(vec![c, c])
}

fn fig5(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let mut out = Vec::new();
    for w in [2u32, 8, 32] {
        let params = SystemParams::table_one().with_window(w, 5);
        let solver = AnalyticSolver::SigmaG { params, chans: bichannel(params)?, policy: UnbiasedPolicy::equi(2)?, opts: cfg.solver.options() };
        let spec = pair_spec(cfg, &solver)?;
        out.push(trace_table(&format!("fig5_w{w}"), &trace_analytic(&spec, &solver, &extremal_ics(2))?));
    }
    Ok(out)
}

fn fig6(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let shares = [0.5, 0.6, 0.7, 0.9];
    let mut out = Vec::new();
    for w in [8u32, 32] {
        let params = SystemParams::table_one().with_window(w, 5);
        let solver = |a: f64| -> Result<AnalyticSolver> {
            Ok(AnalyticSolver::SigmaG {
                params,
                chans: bichannel(params)?,
                policy: UnbiasedPolicy::new(vec![a, 1.0 - a])?,
                opts: cfg.solver.options(),
            })
        };
        let spec = pair_spec(cfg, &solver(0.5)?)?;
        let traces = shares
            .iter()
            .map(|&a| Ok(trace_analytic(&spec, &solver(a)?, &[InitialCondition::zero(2)])?.remove(0)))
            .collect::<Result<Vec<_>>>()?;
        let mut cols = vec!["free_mbps".to_string()];
        cols.extend(shares.iter().map(|a| format!("q{}_mbps", sig12(*a))));
        let mut t = Table::with_columns(format!("fig6_w{w}"), cols);
        for j in 0..spec.free_values.len() {
            let mut row: Vec<Cell> = vec![(spec.free_values[j] / MBPS).into()];
            row.extend(traces.iter().map(|tr| Cell::from(tr.points[j].boundary / MBPS)));
            t.push(row);
        }
        let dominates: Vec<bool> = traces[1..].iter().map(|tr| traces[0].dominates(tr, 1e-9)).collect();
        t.summary = json!({ "w": w, "m": 5, "equi_dominates": dominates });
        out.push(t);
    }
    Ok(out)
}

fn fig7(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let params = SystemParams::table_one();
    let channels = vec![ChannelSpec::new(&params, 11.0 * MBPS)?, ChannelSpec::new(&params, 5.5 * MBPS)?];
    let ramp = PolicySpec::stage_ramp(params.m);
    let policies = [
        ("assign_50_50", PolicySpec::packet_assign(vec![0.5, 0.5])),
        ("assign_67_33", PolicySpec::packet_assign(vec![2.0 / 3.0, 1.0 / 3.0])),
        ("assign_80_20", PolicySpec::packet_assign(vec![0.8, 0.2])),
        ("sac_ramp", PolicySpec::sac(ramp)),
    ];
    let (s, max) = step(cfg);
    let free_values = uniform_grid(3.5 * MBPS, cfg.trace.free_points);
    let mut out = Vec::new();
    for (label, policy) in policies {
        let mut nodes: Vec<NodeConfig> =
            (0..10).map(|i| NodeConfig { lambda: 0.5 * MBPS, policy: policy.clone(), initial_channel: i % 2 }).collect();
        nodes.extend((0..2).map(|i| NodeConfig { lambda: 0.0, policy: policy.clone(), initial_channel: i % 2 }));
        let template = SimConfig {
            params,
            channels: channels.clone(),
            nodes,
            t_f: cfg.simulation.t_f_s,
            seed: cfg.simulation.seed,
            alpha_threshold: cfg.simulation.alpha,
            sample_interval: cfg.simulation.sample_interval_s,
            record_series: false,
        };
        let mut base = vec![0.5 * MBPS; 10];
        base.extend([0.0, 0.0]);
        let spec = TraceSpec { base, sweep_axis: 10, free_axis: Some(11), free_values: free_values.clone(), step: s, max_rate: max, refine_levels: 0 };
        let trace = trace_empirical(&spec, &template, cfg.simulation.replications)?;
        let mut t = empirical_table(&format!("fig7_{label}"), &trace);
        t.summary["policy"] = json!(policy);
        out.push(t);
    }
    Ok(out)
}

fn fig8(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let params = SystemParams::table_one();
    let channels = vec![ChannelSpec::new(&params, 1.0 * MBPS)?, ChannelSpec::new(&params, 10.0 * MBPS)?];
    let half = PolicySpec::constant_probs(0.5, params.m);
    let ramp = PolicySpec::stage_ramp(params.m);
    let policies = [
        ("sac_half", PolicySpec::sac(half.clone())),
        ("sas_half", PolicySpec::sas(half)),
        ("sac_ramp", PolicySpec::sac(ramp.clone())),
        ("sas_ramp", PolicySpec::sas(ramp)),
    ];
    let n = 60;
    let mut hists = Vec::new();
    let mut summary = serde_json::Map::new();
    for (label, policy) in &policies {
        let sim = SimConfig {
            params,
            channels: channels.clone(),
            nodes: (0..n).map(|i| NodeConfig { lambda: 0.1 * MBPS, policy: policy.clone(), initial_channel: i % 2 }).collect(),
            t_f: 180.0,
            seed: cfg.simulation.seed,
            alpha_threshold: cfg.simulation.alpha,
            sample_interval: cfg.simulation.sample_interval_s,
            record_series: false,
        };
        let r = simulate(&sim)?;
        let h = population_histogram(&r, 0)?.to_vec();
        summary.insert(
            label.to_string(),
            json!({ "mean_slow_population": r.mean_population(0)?, "throughput_mbps": r.throughput.iter().sum::<f64>() / MBPS }),
        );
        hists.push((h, r.samples));
    }
    let mut cols = vec!["count".to_string()];
    cols.extend(policies.iter().map(|(l, _)| format!("{l}_fraction")));
    let mut t = Table::with_columns("fig8", cols);
    for c in 0..=n {
        let mut row: Vec<Cell> = vec![c.into()];
        row.extend(hists.iter().map(|(h, samples)| Cell::from(h[c] as f64 / *samples as f64)));
        t.push(row);
    }
    t.summary = serde_json::Value::Object(summary);
    Ok(vec![t])
}
