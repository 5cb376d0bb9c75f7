use std::process::ExitCode;
use std::time::Instant;

use mcwlan_core::aloha::{frontier_shape, grid_points, region_boundary, contained_in, DEFAULT_GRID};
use mcwlan_core::frontier::*;
use mcwlan_core::multi_channel::{equi_occupancy_gap, solve_sigma_g};
use mcwlan_core::params::saturated_tau;
use mcwlan_core::simulator::*;
use mcwlan_core::single_channel::*;
use mcwlan_core::slotstats::{conditional_slot_lengths, effective_costs, rho_hat_hat};
use mcwlan_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 0.1 * MBPS;
const MAX_RATE: f64 = 20.0 * MBPS;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn table_one() -> (SystemParams, ChannelSpec) {
    let p = SystemParams::table_one();
    let c = ChannelSpec::new(&p, 11.0 * MBPS).unwrap();
    (p, c)
}

fn sigma(w: u32, m: u32) -> AnalyticSolver {
    let params = SystemParams::table_one().with_window(w, m);
    let chan = ChannelSpec::new(&params, 11.0 * MBPS).unwrap();
    AnalyticSolver::Sigma { params, chan, opts: SolverOptions::default() }
}

/// N=2 traces over `[0, capacity of node 1]`, one per extremal start.
fn pair_traces(solver: &AnalyticSolver, points: usize) -> Vec<BoundaryTrace> {
    let cap = axis_capacity(&[0.0, 0.0], 1, STEP, MAX_RATE, solver, &InitialCondition::zero(2)).unwrap();
    let spec = TraceSpec::pair(uniform_grid(cap, points), STEP, MAX_RATE);
    trace_analytic(&spec, solver, &extremal_ics(2)).unwrap()
}

fn saturated_limit() -> Check {
    let (base, chan) = table_one();
    let mut worst = (0.0f64, 0.0f64);
    for n in [2usize, 5, 10] {
        let sat = saturated_tau(&base, n).map_err(|e| e.to_string())?;
        worst.0 = worst.0.max(sat.residual(&base, n));
        let lambda = ArrivalVector::uniform(n, 1e3 * MBPS).unwrap();
        let sol = solve_sigma(&lambda, &InitialCondition::zero(n), &base, &chan, &SolverOptions::default()).map_err(|e| e.to_string())?;
        for i in 0..n {
            worst.1 = worst.1.max((sol.state.tau[i] - sat.tau).abs()).max((sol.state.p[i] - sat.p).abs());
        }
    }
    ensure(worst.0 < 1e-10 && worst.1 < 1e-6, format!("closed-form residual {:.2e}, solver gap {:.2e}", worst.0, worst.1))
}

fn single_node() -> Check {
    let (params, chan) = table_one();
    let exact = params.payload_bits / (15.5 * params.sigma + chan.t_s);
    let mut spec = TraceSpec::single(STEP, MAX_RATE);
    spec.refine_levels = 7;
    let analytic = trace_analytic(&spec, &sigma(32, 5), &[InitialCondition::zero(1)]).unwrap()[0].points[0].boundary;
    let template = SimConfig::single_channel(params, chan, &[0.0], 10.0, 1);
    let emp = trace_empirical(&TraceSpec::single(STEP, MAX_RATE), &template, 5).unwrap();
    let e = &emp.points[0];
    let spread = e.replicates.iter().map(|r| (r - exact).abs()).fold(0.0, f64::max);
    ensure(
        (analytic - exact).abs() < 1e-3 * MBPS && (e.boundary - exact).abs() <= 2.0 * STEP + 1e-6,
        format!(
            "exact {:.4}, analytic {:.4}, empirical mean {:.3} (worst seed off by {:.2}) Mbps",
            exact / MBPS,
            analytic / MBPS,
            e.boundary / MBPS,
            spread / MBPS
        ),
    )
}

fn shape_spectrum() -> Check {
    let expect = [(128, RegionShape::Convex), (32, RegionShape::NearLinear), (4, RegionShape::Concave), (2, RegionShape::Concave)];
    let mut ok = true;
    let mut msg = Vec::new();
    for (w, want) in expect {
        for t in pair_traces(&sigma(w, 5), 11) {
            let got = shape_classify(&t).map_err(|e| e.to_string())?;
            ok &= got == want;
            msg.push(format!("W={w}/{}:{got:?}", t.ic_label.as_deref().unwrap_or("-")));
        }
    }
    ensure(ok, msg.join(" "))
}

fn multi_equilibrium() -> Check {
    let small = pair_traces(&sigma(2, 0), 11);
    let large = pair_traces(&sigma(16, 0), 11);
    let zone_b = small[0].max_gap(&small[1]);
    let coincide = large[0].max_gap(&large[1]);
    // ρ₁ against λ₁ with λ₂ fixed, from both extremal starts
    let range: Vec<f64> = (0..=100).map(|k| 0.1 * k as f64 * MBPS).collect();
    let component_gap = |w: u32| {
        let params = SystemParams::table_one().with_window(w, 0);
        let chan = ChannelSpec::new(&params, 11.0 * MBPS).unwrap();
        let ics = extremal_ics(2);
        let c: Vec<SolutionComponent> = ics
            .iter()
            .map(|ic| sweep_solution_component(&[0.0, 2.0 * MBPS], 0, &range, ic, &params, &chan, &SolverOptions::default()).unwrap())
            .collect();
        c[0].max_gap(&c[1])
    };
    let (rho_small, rho_large) = (component_gap(2), component_gap(16));
    ensure(
        zone_b > 1e-3 * MBPS
            && coincide < 1e-3 * MBPS
            && rho_small > 1e-3
            && rho_large < 1e-3
            && small[0].dominates(&small[1], 1e-9)
            && large[0].dominates(&large[1], 1e-9),
        format!(
            "boundary gap W=2 {:.3} Mbps, W=16 {:.2e} Mbps; utilization gap W=2 {rho_small:.3}, W=16 {rho_large:.2e}",
            zone_b / MBPS,
            coincide / MBPS
        ),
    )
}

fn analytic_vs_empirical() -> Check {
    let (params, chan) = table_one();
    let solver = sigma(32, 5);
    let spec = TraceSpec::pair(uniform_grid(6.0 * MBPS, 7), STEP, MAX_RATE);
    let analytic = trace_analytic(&spec, &solver, &[InitialCondition::zero(2)]).unwrap().remove(0);
    let template = SimConfig::single_channel(params, chan, &[0.0, 0.0], 10.0, 1);
    let empirical = trace_empirical(&spec, &template, 5).unwrap();
    let gap = analytic.max_gap(&empirical);
    ensure(gap <= 3.0 * STEP + 1e-6, format!("max gap {:.3} Mbps over {} points", gap / MBPS, spec.free_values.len()))
}

fn theorem_three() -> Check {
    let (params, chan) = table_one();
    let t = chan.t_s;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_neg = 0.0f64;
    let mut min_nonuniform = f64::INFINITY;
    for trial in 0..1000 {
        let k = 2 + trial % 3;
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let n = rng.random_range(2..5usize);
        let lambda = ArrivalVector::new((0..n).map(|_| rng.random_range(0.05..1.0) * MBPS).collect()).unwrap();
        for policy in [UnbiasedPolicy::new(q).unwrap(), UnbiasedPolicy::equi(k).unwrap()] {
            let uniform = policy.q().iter().all(|&x| (x - 1.0 / k as f64).abs() < 1e-15);
            let gaps = match equi_occupancy_gap(&lambda, &policy, &params, t) {
                Ok(g) => g,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e.to_string()),
            };
            for g in gaps {
                worst_neg = worst_neg.min(g.gap);
                if uniform {
                    if g.gap.abs() > 1e-10 {
                        return Err(format!("uniform gap {:.2e}", g.gap));
                    }
                } else {
                    min_nonuniform = min_nonuniform.min(g.gap);
                }
            }
        }
    }
    let spec = TraceSpec::pair(uniform_grid(6.0 * MBPS, 11), STEP, 30.0 * MBPS);
    let trace = |a: f64| {
        let s = AnalyticSolver::SigmaGTilde { params, policy: UnbiasedPolicy::new(vec![a, 1.0 - a]).unwrap(), t };
        trace_analytic(&spec, &s, &[]).unwrap().remove(0)
    };
    let equi = trace(0.5);
    let contained = [0.6, 0.7, 0.9].iter().all(|&a| equi.dominates(&trace(a), 1e-9));
    ensure(
        worst_neg >= -1e-12 && min_nonuniform > 1e-10 && contained,
        format!("min gap {worst_neg:.2e}, min non-uniform gap {min_nonuniform:.2e}, equi-occupancy trace dominates: {contained}"),
    )
}

fn reduction_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let w = [2u32, 4, 8, 16, 32, 64][rng.random_range(0..6)];
        let m = rng.random_range(0..6);
        let params = SystemParams::table_one().with_window(w, m);
        let chan = ChannelSpec::new(&params, rng.random_range(1.0..54.0) * MBPS).unwrap();
        let n = rng.random_range(1..6usize);
        let lambda = ArrivalVector::new((0..n).map(|_| rng.random_range(0.0..3.0) * MBPS).collect()).unwrap();
        let ic = InitialCondition::uniform("u", n, rng.random_range(0.0..0.999));
        let opts = SolverOptions::default();
        let single = solve_sigma(&lambda, &ic, &params, &chan, &opts);
        let multi = solve_sigma_g(&lambda, &UnbiasedPolicy::equi(1).unwrap(), &params, &[chan], &ic, &opts);
        match (single, multi) {
            (Ok(s), Ok(g)) => {
                for i in 0..n {
                    worst = worst.max((s.state.tau[i] - g.state.tau[i][0]).abs()).max((s.state.rho[i] - g.state.rho[i]).abs());
                }
            }
            (Err(_), Err(_)) => {}
            _ => return Err("solvers disagree on convergence".into()),
        }
    }
    ensure(worst < 1e-10, format!("max difference {worst:.2e} over 50 instances"))
}

fn slot_ordering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut violations = 0;
    for _ in 0..200 {
        let w = [2u32, 4, 8, 16, 32, 64, 128][rng.random_range(0..7)];
        let params = SystemParams::table_one().with_window(w, 5);
        let chan = ChannelSpec::new(&params, 11.0 * MBPS).unwrap();
        let costs = effective_costs(&params, &chan).unwrap();
        let n = rng.random_range(1..5usize);
        let lambda = ArrivalVector::new((0..n).map(|_| rng.random_range(0.0..4.0) * MBPS).collect()).unwrap();
        let Ok(sol) = solve_sigma(&lambda, &InitialCondition::zero(n), &params, &chan, &SolverOptions::default()) else { continue };
        for i in 0..n {
            let rho = sol.state.rho[i];
            let slots = conditional_slot_lengths(i, &sol.state.tau, 1.0 / sol.state.wbar[i], &costs).unwrap();
            let hh = rho_hat_hat(rho, &slots);
            let interior = rho > 0.0 && rho < 1.0;
            if hh > rho + 1e-15 || (interior && hh >= rho) {
                violations += 1;
            }
            checked += 1;
        }
    }
    let (params, chan) = table_one();
    let mut sim_worst = f64::NEG_INFINITY;
    for (seed, rates) in [(1u64, vec![2.0, 1.0, 2.5]), (2, vec![0.5, 0.5]), (3, vec![3.0, 3.0])] {
        let l: Vec<f64> = rates.iter().map(|r| r * MBPS).collect();
        let cfg = SimConfig::single_channel(params, chan, &l, 10.0, seed);
        let r = simulate(&cfg).unwrap();
        for i in 0..l.len() {
            sim_worst = sim_worst.max(r.slot_fraction_busy(i) - r.time_fraction_busy(i));
        }
    }
    ensure(
        violations == 0 && sim_worst <= 1e-2,
        format!("{violations} analytic violations in {checked} nodes, max simulated slot-minus-time fraction {sim_worst:.4}"),
    )
}

fn aloha_transition() -> Check {
    let full = frontier_shape(&region_boundary(2, 1.0, DEFAULT_GRID).unwrap()).unwrap();
    let capped = frontier_shape(&region_boundary(2, 20.0, DEFAULT_GRID).unwrap()).unwrap();
    let wbars = [1.0, 2.0, 5.0, 10.0, 20.0];
    let nested = wbars.windows(2).all(|w| {
        let outer = grid_points(2, w[0], DEFAULT_GRID).unwrap();
        let inner = region_boundary(2, w[1], DEFAULT_GRID).unwrap();
        contained_in(&inner, &outer, 1.0 / w[0] / (DEFAULT_GRID - 1) as f64)
    });
    ensure(
        full == RegionShape::Concave && capped == RegionShape::Convex && nested,
        format!("W̄=1 {full:?}, W̄=20 {capped:?}, nested {nested}"),
    )
}

fn slow_channel_population(policy: PolicySpec) -> f64 {
    let params = SystemParams::table_one();
    let channels = vec![ChannelSpec::new(&params, 1.0 * MBPS).unwrap(), ChannelSpec::new(&params, 10.0 * MBPS).unwrap()];
    let mut mean = 0.0;
    for seed in 0..3 {
        let cfg = SimConfig {
            params,
            channels: channels.clone(),
            nodes: (0..20).map(|i| NodeConfig { lambda: 0.1 * MBPS, policy: policy.clone(), initial_channel: i % 2 }).collect(),
            t_f: 60.0,
            seed,
            alpha_threshold: DEFAULT_ALPHA,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            record_series: false,
        };
        mean += simulate(&cfg).unwrap().mean_population(0).unwrap() / 3.0;
    }
    mean
}

fn anti_clustering() -> Check {
    let m = SystemParams::table_one().m as usize;
    let sas = slow_channel_population(PolicySpec::sas(vec![0.5; m + 1]));
    let sac = slow_channel_population(PolicySpec::sac(vec![0.5; m + 1]));
    let ramp = slow_channel_population(PolicySpec::sas(PolicySpec::stage_ramp(m as u32)));
    ensure(
        sas > sac && sas - ramp >= 0.5 * (sas - sac),
        format!("mean slow-channel population SAS {sas:.2}, SAC {sac:.2}, staged SAS {ramp:.2}"),
    )
}

fn determinism() -> Check {
    let params = SystemParams::table_one();
    let channels = vec![ChannelSpec::new(&params, 11.0 * MBPS).unwrap(), ChannelSpec::new(&params, 2.0 * MBPS).unwrap()];
    let cfg = SimConfig {
        params,
        channels,
        nodes: (0..6).map(|i| NodeConfig { lambda: 0.7 * MBPS, policy: PolicySpec::sac(vec![0.3; 6]), initial_channel: i % 2 }).collect(),
        t_f: 3.0,
        seed: 2024,
        alpha_threshold: DEFAULT_ALPHA,
        sample_interval: DEFAULT_SAMPLE_INTERVAL,
        record_series: true,
    };
    let a = serde_json::to_vec(&simulate(&cfg).unwrap()).unwrap();
    let b = serde_json::to_vec(&simulate(&cfg).unwrap()).unwrap();
    ensure(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("saturated limit", saturated_limit),
        ("single-node closed form", single_node),
        ("region shape spectrum", shape_spectrum),
        ("multi-equilibrium", multi_equilibrium),
        ("analytic vs empirical", analytic_vs_empirical),
        ("equi-occupancy optimality", theorem_three),
        ("single-channel reduction", reduction_identity),
        ("slot-time ordering", slot_ordering),
        ("aloha transition", aloha_transition),
        ("switch-after-collision anti-clustering", anti_clustering),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.2}s]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.2}s]", k + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
