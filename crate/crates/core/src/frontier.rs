//! Boundary tracing of analytic and simulated stability regions, and
//! solution-component sweeps over one arrival rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::multi_channel::{solve_sigma_g, solve_sigma_g_tilde, UnbiasedPolicy};
use crate::params::{ArrivalVector, ChannelSpec, SystemParams};
use crate::shape::{chord_deviation, classify_shape, ChordDeviation, RegionShape};
use crate::simulator::{classify_stability, simulate, SimConfig};
use crate::single_channel::{solve_sigma, solve_sigma_tilde, InitialCondition, SolverOptions};

/// Extra bisection levels after the stepping search.
pub const REFINE_LEVELS: u32 = 4;

/// Deviation from the endpoint chord, as a fraction of the dynamic range,
/// below which a boundary counts as near-linear.
pub const NEAR_LINEAR_BAND: f64 = 0.065;

/// Minimum number of trace points for shape classification.
pub const MIN_SHAPE_POINTS: usize = 5;

/// Jump in utilization between adjacent sweep points marking a phase transition.
pub const JUMP_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMethod {
    AnalyticSigma,
    AnalyticSigmaTilde,
    AnalyticSigmaG,
    AnalyticSigmaGTilde,
    EmpiricalSim,
}

/// Which rates vary along a trace and which stay at their base values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    /// Rates of every node (bits/s); the swept and free entries are overwritten.
    pub base: Vec<f64>,
    /// Node whose largest stable rate is searched.
    pub sweep_axis: usize,
    /// Node whose rate is set to each of `free_values` in turn.
    pub free_axis: Option<usize>,
    pub free_values: Vec<f64>,
    /// Search step Δλ (bits/s).
    pub step: f64,
    /// The search never goes past this rate.
    pub max_rate: f64,
    /// Bisection levels after stepping (analytic traces only).
    #[serde(default = "default_refine")]
    pub refine_levels: u32,
}

fn default_refine() -> u32 {
    REFINE_LEVELS
}

impl TraceSpec {
    /// Two-node trace of node 0's boundary against node 1's rate.
    pub fn pair(free_values: Vec<f64>, step: f64, max_rate: f64) -> Self {
        TraceSpec { base: vec![0.0, 0.0], sweep_axis: 0, free_axis: Some(1), free_values, step, max_rate, refine_levels: REFINE_LEVELS }
    }

    /// Single-node search (a one-point trace).
    pub fn single(step: f64, max_rate: f64) -> Self {
        TraceSpec { base: vec![0.0], sweep_axis: 0, free_axis: None, free_values: vec![0.0], step, max_rate, refine_levels: REFINE_LEVELS }
    }

    fn validate(&self) -> Result<()> {
        let n = self.base.len();
        if self.sweep_axis >= n {
            return Err(Error::OutOfRange { index: self.sweep_axis, len: n });
        }
        if let Some(f) = self.free_axis {
            if f >= n || f == self.sweep_axis {
                return param("free axis must be a node other than the swept one");
            }
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return param(format!("step must be positive, got {}", self.step));
        }
        if !(self.max_rate > 0.0 && self.max_rate.is_finite()) {
            return param(format!("max_rate must be positive, got {}", self.max_rate));
        }
        if self.free_values.is_empty() {
            return param("at least one free value is required");
        }
        if self.base.iter().chain(&self.free_values).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return param("rates must be finite and non-negative");
        }
        Ok(())
    }

    fn lambda(&self, free: f64, sweep: f64) -> ArrivalVector {
        let mut l = self.base.clone();
        if let Some(f) = self.free_axis {
            l[f] = free;
        }
        l[self.sweep_axis] = sweep;
        ArrivalVector::new(l).expect("trace rates are validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Rate of the free node.
    pub free: f64,
    /// Largest stable rate of the swept node.
    pub boundary: f64,
    /// Some evaluation during the search failed to converge.
    pub flagged: bool,
    /// Per-replication boundaries (empirical traces only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTrace {
    pub base: Vec<f64>,
    pub sweep_axis: usize,
    pub free_axis: Option<usize>,
    pub points: Vec<TracePoint>,
    pub method: TraceMethod,
    /// Initial condition family (analytic fixed-point solvers only).
    pub ic_label: Option<String>,
}

impl BoundaryTrace {
    /// Largest pointwise boundary difference against a trace over the same grid.
    pub fn max_gap(&self, other: &BoundaryTrace) -> f64 {
        self.points.iter().zip(&other.points).map(|(a, b)| (a.boundary - b.boundary).abs()).fold(0.0, f64::max)
    }

    /// Pointwise `self ≥ other − tol`.
    pub fn dominates(&self, other: &BoundaryTrace, tol: f64) -> bool {
        self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| a.boundary >= b.boundary - tol)
    }

    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.free, p.boundary)).collect()
    }
}

/// Analytic model used for a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticSolver {
    Sigma { params: SystemParams, chan: ChannelSpec, opts: SolverOptions },
    SigmaTilde { params: SystemParams, t: f64 },
    SigmaG { params: SystemParams, chans: Vec<ChannelSpec>, policy: UnbiasedPolicy, opts: SolverOptions },
    SigmaGTilde { params: SystemParams, policy: UnbiasedPolicy, t: f64 },
}

impl AnalyticSolver {
    pub fn method(&self) -> TraceMethod {
        match self {
            AnalyticSolver::Sigma { .. } => TraceMethod::AnalyticSigma,
            AnalyticSolver::SigmaTilde { .. } => TraceMethod::AnalyticSigmaTilde,
            AnalyticSolver::SigmaG { .. } => TraceMethod::AnalyticSigmaG,
            AnalyticSolver::SigmaGTilde { .. } => TraceMethod::AnalyticSigmaGTilde,
        }
    }

    fn uses_ics(&self) -> bool {
        matches!(self, AnalyticSolver::Sigma { .. } | AnalyticSolver::SigmaG { .. })
    }

    /// `(stable, flagged)` of the solution from one start.
    fn member(&self, lambda: &ArrivalVector, ic: &InitialCondition) -> Result<(bool, bool)> {
        let outcome = match self {
            AnalyticSolver::Sigma { params, chan, opts } => solve_sigma(lambda, ic, params, chan, opts).map(|s| s.state.is_stable()),
            AnalyticSolver::SigmaTilde { params, t } => match solve_sigma_tilde(lambda, params, *t) {
                Err(Error::Infeasible(_)) => Ok(false),
                r => r.map(|s| s.is_stable()),
            },
            AnalyticSolver::SigmaG { params, chans, policy, opts } => {
                solve_sigma_g(lambda, policy, params, chans, ic, opts).map(|s| s.state.is_stable())
            }
            AnalyticSolver::SigmaGTilde { params, policy, t } => match solve_sigma_g_tilde(lambda, policy, params, *t) {
                Err(Error::Infeasible(_)) => Ok(false),
                r => r.map(|s| s.is_stable()),
            },
        };
        match outcome {
            Ok(s) => Ok((s, false)),
            Err(Error::NoConvergence { .. }) => Ok((false, true)),
            Err(e) => Err(e),
        }
    }
}

/// Steps from zero until the first unstable rate, then bisects
/// `refine` times between the last stable and the first unstable rate.
fn search(
    stable: &dyn Fn(f64) -> Result<(bool, bool)>,
    step: f64,
    max_rate: f64,
    refine: u32,
) -> Result<(f64, bool)> {
    let mut flagged = false;
    let mut check = |x: f64| -> Result<bool> {
        let (s, f) = stable(x)?;
        flagged |= f;
        Ok(s)
    };
    if !check(0.0)? {
        return Ok((0.0, flagged));
    }
    let mut lo = 0.0;
    let mut k = 1u64;
    let hi = loop {
        let next = (k as f64 * step).min(max_rate);
        if check(next)? {
            lo = next;
            if next >= max_rate {
                return Ok((max_rate, flagged));
            }
            k += 1;
        } else {
            break next;
        }
    };
    let mut hi = hi;
    for _ in 0..refine {
        let mid = 0.5 * (lo + hi);
        if check(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, flagged))
}

/// Traces the analytic boundary once per initial condition (fixed-point
/// solvers) or once (closed forms, which ignore `ics`).
pub fn trace_analytic(spec: &TraceSpec, solver: &AnalyticSolver, ics: &[InitialCondition]) -> Result<Vec<BoundaryTrace>> {
    spec.validate()?;
    let n = spec.base.len();
    let families: Vec<Option<&InitialCondition>> =
        if solver.uses_ics() { ics.iter().map(Some).collect() } else { vec![None] };
    if families.is_empty() {
        return param("at least one initial condition is required");
    }
    for ic in families.iter().flatten() {
        ic.validate(n)?;
    }
    let fallback = InitialCondition::zero(n);
    families
        .into_iter()
        .map(|ic| {
            let start = ic.unwrap_or(&fallback);
            let points = spec
                .free_values
                .par_iter()
                .map(|&free| {
                    let member = |x: f64| solver.member(&spec.lambda(free, x), start);
                    let (boundary, flagged) = search(&member, spec.step, spec.max_rate, spec.refine_levels)?;
                    Ok(TracePoint { free, boundary, flagged, replicates: Vec::new() })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(BoundaryTrace {
                base: spec.base.clone(),
                sweep_axis: spec.sweep_axis,
                free_axis: spec.free_axis,
                points,
                method: solver.method(),
                ic_label: ic.map(|c| c.label.clone()),
            })
        })
        .collect()
}

/// Drops traces whose points repeat an earlier trace's, appending their
/// labels to the one kept (`zero|near_one`).
pub fn merge_identical(traces: &[BoundaryTrace]) -> Vec<BoundaryTrace> {
    let mut kept: Vec<BoundaryTrace> = Vec::new();
    for t in traces {
        match kept.iter_mut().find(|k| k.points == t.points && k.method == t.method) {
            Some(k) => {
                if let (Some(a), Some(b)) = (&mut k.ic_label, &t.ic_label) {
                    a.push('|');
                    a.push_str(b);
                }
            }
            None => kept.push(t.clone()),
        }
    }
    kept
}

/// Largest stable rate of `axis` (others at their base rates) from one start.
pub fn axis_capacity(base: &[f64], axis: usize, step: f64, max_rate: f64, solver: &AnalyticSolver, ic: &InitialCondition) -> Result<f64> {
    let spec = TraceSpec { base: base.to_vec(), sweep_axis: axis, free_axis: None, free_values: vec![0.0], step, max_rate, refine_levels: REFINE_LEVELS };
    let t = trace_analytic(&spec, solver, std::slice::from_ref(ic))?;
    Ok(t[0].points[0].boundary)
}

/// `count` evenly spaced values over `[0, upper]`.
pub fn uniform_grid(upper: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| upper * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Empirical boundary: per replication (seed `template.seed + r`), the last
/// stable step before the first unstable one, averaged over replications.
pub fn trace_empirical(spec: &TraceSpec, template: &SimConfig, replications: usize) -> Result<BoundaryTrace> {
    spec.validate()?;
    if replications == 0 {
        return param("replications must be at least 1");
    }
    if template.nodes.len() != spec.base.len() {
        return param("simulation template and trace disagree on the node count");
    }
    template.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.free_values.len()).flat_map(|p| (0..replications).map(move |r| (p, r))).collect();
    let results = jobs
        .par_iter()
        .map(|&(p, r)| {
            let free = spec.free_values[p];
            let seed = template.seed.wrapping_add(r as u64);
            let member = |x: f64| -> Result<(bool, bool)> {
                let lambda = spec.lambda(free, x);
                let mut cfg = template.with_seed(seed);
                for (node, &l) in cfg.nodes.iter_mut().zip(lambda.as_slice()) {
                    node.lambda = l;
                }
                let report = simulate(&cfg)?;
                Ok((!classify_stability(&report, &cfg)?.unstable, false))
            };
            search(&member, spec.step, spec.max_rate, 0).map(|(b, _)| b)
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = spec
        .free_values
        .iter()
        .enumerate()
        .map(|(p, &free)| {
            let replicates = results[p * replications..(p + 1) * replications].to_vec();
            let boundary = replicates.iter().sum::<f64>() / replications as f64;
            TracePoint { free, boundary, flagged: false, replicates }
        })
        .collect();
    Ok(BoundaryTrace {
        base: spec.base.clone(),
        sweep_axis: spec.sweep_axis,
        free_axis: spec.free_axis,
        points,
        method: TraceMethod::EmpiricalSim,
        ic_label: None,
    })
}

pub fn trace_deviation(trace: &BoundaryTrace) -> Result<ChordDeviation> {
    chord_deviation(&trace.curve(), MIN_SHAPE_POINTS)
}

/// Region shape from the trace's deviation against its endpoint chord.
pub fn shape_classify(trace: &BoundaryTrace) -> Result<RegionShape> {
    Ok(classify_shape(trace_deviation(trace)?, NEAR_LINEAR_BAND))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionComponent {
    pub ic_label: String,
    pub lambda_sweep: Vec<f64>,
    /// Utilization of the swept node; `None` where the solver did not converge.
    pub rho_curve: Vec<Option<f64>>,
    /// Utilizations of every node along the sweep.
    pub rho_all: Vec<Option<Vec<f64>>>,
    /// `jumps[j]` marks a transition between sweep points `j` and `j + 1`.
    pub jumps: Vec<bool>,
}

impl SolutionComponent {
    /// Largest pointwise difference of the swept node's utilization over
    /// points where both components converged.
    pub fn max_gap(&self, other: &SolutionComponent) -> f64 {
        self.rho_curve
            .iter()
            .zip(&other.rho_curve)
            .filter_map(|(a, b)| Some((a.as_ref()? - b.as_ref()?).abs()))
            .fold(0.0, f64::max)
    }
}

/// Utilization of node `sweep_axis` along `lambda_range`, all other nodes at `base`.
pub fn sweep_solution_component(
    base: &[f64],
    sweep_axis: usize,
    lambda_range: &[f64],
    ic: &InitialCondition,
    params: &SystemParams,
    chan: &ChannelSpec,
    opts: &SolverOptions,
) -> Result<SolutionComponent> {
    if lambda_range.is_empty() {
        return param("sweep range must not be empty");
    }
    if sweep_axis >= base.len() {
        return Err(Error::OutOfRange { index: sweep_axis, len: base.len() });
    }
    ic.validate(base.len())?;
    let rho_all = lambda_range
        .par_iter()
        .map(|&x| {
            let mut l = base.to_vec();
            l[sweep_axis] = x;
            match solve_sigma(&ArrivalVector::new(l)?, ic, params, chan, opts) {
                Ok(s) => Ok(Some(s.state.rho)),
                Err(Error::NoConvergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let rho_curve: Vec<Option<f64>> = rho_all.iter().map(|r| r.as_ref().map(|v| v[sweep_axis])).collect();
    let jumps = rho_curve
        .windows(2)
        .map(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if (b - a).abs() > JUMP_THRESHOLD))
        .collect();
    Ok(SolutionComponent { ic_label: ic.label.clone(), lambda_sweep: lambda_range.to_vec(), rho_curve, rho_all, jumps })
}
