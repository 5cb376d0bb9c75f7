//! Single-channel stability: the fixed-point system in `(τ, p, ρ, ρ̂)`, its
//! large-window closed form and classification over initial conditions.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::params::{wbar_unchecked, ArrivalVector, ChannelSpec, SystemParams};
use crate::slotstats::{effective_costs, rho_hat_hat, slot_lengths_unchecked, EffectiveSlotCosts, SlotLengths};

/// How the slot-time utilization `ρ̂` is obtained from `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhoHatMode {
    /// Slot-length weighted approximation `ρ̂̂`.
    #[default]
    SlotWeighted,
    /// Crude `ρ̂ ≈ ρ`.
    Utilization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relaxation weight of the new iterate, in (0, 1].
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub rho_hat: RhoHatMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { damping: 0.5, tolerance: 1e-10, max_iterations: 100_000, rho_hat: RhoHatMode::SlotWeighted }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return param(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tolerance > 0.0) {
            return param(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.max_iterations == 0 {
            return param("max_iterations must be positive");
        }
        Ok(())
    }
}

/// Per-node state of the single-channel system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointState {
    pub tau: Vec<f64>,
    pub p: Vec<f64>,
    pub wbar: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_hat: Vec<f64>,
}

impl FixedPointState {
    pub fn zeros(n: usize) -> Self {
        FixedPointState {
            tau: vec![0.0; n],
            p: vec![0.0; n],
            wbar: vec![0.0; n],
            rho: vec![0.0; n],
            rho_hat: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Every queue has utilization strictly below one.
    pub fn is_stable(&self) -> bool {
        self.rho.iter().all(|&r| r < 1.0)
    }

    fn distance(&self, other: &FixedPointState) -> f64 {
        self.tau
            .iter()
            .zip(&other.tau)
            .chain(self.rho.iter().zip(&other.rho))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Starting values of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub label: String,
    pub tau0: Vec<f64>,
    pub rho0: Vec<f64>,
}

/// Value used for the "near one" extremal initial condition.
pub const NEAR_ONE: f64 = 0.999;

impl InitialCondition {
    pub fn uniform(label: impl Into<String>, n: usize, value: f64) -> Self {
        InitialCondition { label: label.into(), tau0: vec![value; n], rho0: vec![value; n] }
    }

    pub fn zero(n: usize) -> Self {
        Self::uniform("zero", n, 0.0)
    }

    pub fn near_one(n: usize) -> Self {
        Self::uniform("near_one", n, NEAR_ONE)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.tau0.len() != n || self.rho0.len() != n {
            return param(format!("initial condition '{}' has the wrong length (expected {n})", self.label));
        }
        if self.tau0.iter().chain(&self.rho0).any(|v| !(0.0..=1.0).contains(v)) {
            return param(format!("initial condition '{}' has entries outside [0, 1]", self.label));
        }
        Ok(())
    }
}

/// The two extremal initial conditions, all-zero first.
pub fn extremal_ics(n: usize) -> Vec<InitialCondition> {
    vec![InitialCondition::zero(n), InitialCondition::near_one(n)]
}

/// Extremal conditions plus a uniform grid with `k` levels per node over `[0, NEAR_ONE]`.
pub fn ic_grid(n: usize, k: usize) -> Vec<InitialCondition> {
    let mut out = extremal_ics(n);
    if k < 2 || n == 0 {
        return out;
    }
    let levels: Vec<f64> = (0..k).map(|j| NEAR_ONE * j as f64 / (k - 1) as f64).collect();
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let tau0: Vec<f64> = (0..n)
            .map(|_| {
                let v = levels[c % k];
                c /= k;
                v
            })
            .collect();
        let label = format!("grid{code}");
        out.push(InitialCondition { label, rho0: tau0.clone(), tau0 });
    }
    out
}

/// Mean service time of one packet and per bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceTimeBreakdown {
    /// Seconds per bit.
    pub x_bar: f64,
    /// Seconds per packet.
    pub per_packet: f64,
}

/// `P X̄ = (W̄ − 1)/(1 − p) E[S_{Q,T̄x}] + T_c p/(1 − p) + T_s`.
pub fn service_time(wbar: f64, p: f64, e_s_q_notx: f64, chan: &ChannelSpec, payload_bits: f64) -> ServiceTimeBreakdown {
    let per_packet = if p >= 1.0 {
        f64::INFINITY
    } else {
        (wbar - 1.0) / (1.0 - p) * e_s_q_notx + chan.t_c * p / (1.0 - p) + chan.t_s
    };
    ServiceTimeBreakdown { x_bar: per_packet / payload_bits, per_packet }
}

/// Quantities of node `i` in one channel, given everyone's attempt rates there.
pub(crate) struct NodeChannelEval {
    pub p: f64,
    pub wbar: f64,
    pub slots: SlotLengths,
    pub per_packet: f64,
}

pub(crate) fn eval_node(
    i: usize,
    tau: &[f64],
    params: &SystemParams,
    costs: &EffectiveSlotCosts,
    chan: &ChannelSpec,
) -> NodeChannelEval {
    let survive: f64 = tau.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &t)| 1.0 - t).product();
    let p = (1.0 - survive).clamp(0.0, 1.0);
    let wbar = wbar_unchecked(p, params.w, params.m);
    let slots = slot_lengths_unchecked(i, tau, 1.0 / wbar, costs);
    let per_packet = service_time(wbar, p, slots.e_s_q_notx, chan, params.payload_bits).per_packet;
    NodeChannelEval { p, wbar, slots, per_packet }
}

/// `ρ = min{λ/P · service, 1}`; zero traffic never loads the queue.
pub(crate) fn utilization(lambda: f64, payload_bits: f64, per_packet: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        (lambda / payload_bits * per_packet).min(1.0)
    }
}

pub(crate) fn slot_utilization(rho: f64, slots: &SlotLengths, mode: RhoHatMode) -> f64 {
    match mode {
        RhoHatMode::SlotWeighted => rho_hat_hat(rho, slots),
        RhoHatMode::Utilization => rho,
    }
}

/// Evaluates the system at `tau`: returns the state at `tau` (with derived
/// `p, W̄, ρ, ρ̂`) and the image `Γ(τ)`.
fn evaluate(
    tau: &[f64],
    lambda: &ArrivalVector,
    params: &SystemParams,
    costs: &EffectiveSlotCosts,
    chan: &ChannelSpec,
    mode: RhoHatMode,
) -> (FixedPointState, Vec<f64>) {
    let n = tau.len();
    let mut state = FixedPointState::zeros(n);
    state.tau.copy_from_slice(tau);
    let mut image = vec![0.0; n];
    for i in 0..n {
        let e = eval_node(i, tau, params, costs, chan);
        let rho = utilization(lambda[i], params.payload_bits, e.per_packet);
        let rho_hat = slot_utilization(rho, &e.slots, mode);
        state.p[i] = e.p;
        state.wbar[i] = e.wbar;
        state.rho[i] = rho;
        state.rho_hat[i] = rho_hat;
        image[i] = rho_hat / e.wbar;
    }
    (state, image)
}

fn check_inputs(n_state: usize, lambda: &ArrivalVector, params: &SystemParams) -> Result<()> {
    params.validate()?;
    if lambda.len() != n_state {
        return param(format!("arrival vector has {} entries but the state has {n_state}", lambda.len()));
    }
    Ok(())
}

/// One application of the composed map: `p` from `τ`, `W̄` from `p`, slots,
/// `ρ` from the service time, `ρ̂` from `ρ`, and finally `τ' = ρ̂/W̄`.
///
/// The returned state carries `τ'` alongside the quantities evaluated at the input `τ`.
pub fn sigma_step(
    state: &FixedPointState,
    lambda: &ArrivalVector,
    params: &SystemParams,
    chan: &ChannelSpec,
    mode: RhoHatMode,
) -> Result<FixedPointState> {
    check_inputs(state.len(), lambda, params)?;
    let costs = effective_costs(params, chan)?;
    let (mut at, image) = evaluate(&state.tau, lambda, params, &costs, chan, mode);
    at.tau = image;
    Ok(at)
}

/// A converged fixed point together with the initial condition that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub ic_label: String,
    pub state: FixedPointState,
    pub iterations: usize,
    /// `max |Γ(τ) − τ|` at the returned state.
    pub residual: f64,
}

/// Damped fixed-point iteration `τ ← τ + η (Γ(τ) − τ)` from the given start.
pub fn solve_sigma(
    lambda: &ArrivalVector,
    ic: &InitialCondition,
    params: &SystemParams,
    chan: &ChannelSpec,
    opts: &SolverOptions,
) -> Result<Solution> {
    let n = lambda.len();
    check_inputs(n, lambda, params)?;
    ic.validate(n)?;
    opts.validate()?;
    let costs = effective_costs(params, chan)?;
    // a silent node's attempt rate is zero at every iterate
    let mut tau: Vec<f64> = ic.tau0.iter().zip(lambda.as_slice()).map(|(&t, &l)| if l == 0.0 { 0.0 } else { t }).collect();
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iterations {
        let (state, image) = evaluate(&tau, lambda, params, &costs, chan, opts.rho_hat);
        residual = tau.iter().zip(&image).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual < opts.tolerance {
            return Ok(Solution { ic_label: ic.label.clone(), state, iterations: it, residual });
        }
        for (t, g) in tau.iter_mut().zip(&image) {
            *t = (*t + opts.damping * (g - *t)).clamp(0.0, 1.0);
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residual })
}

/// Max-norm residuals of the three defining equations at `state`:
/// `[τ = ρ̂/W̄, p = 1 − Π(1 − τ_j), ρ = min{λ X̄, 1}]`.
pub fn sigma_residuals(
    state: &FixedPointState,
    lambda: &ArrivalVector,
    params: &SystemParams,
    chan: &ChannelSpec,
    mode: RhoHatMode,
) -> Result<[f64; 3]> {
    check_inputs(state.len(), lambda, params)?;
    let costs = effective_costs(params, chan)?;
    let mut r = [0.0_f64; 3];
    for i in 0..state.len() {
        let e = eval_node(i, &state.tau, params, &costs, chan);
        let rho = utilization(lambda[i], params.payload_bits, e.per_packet);
        let rho_hat = slot_utilization(rho, &e.slots, mode);
        r[0] = r[0].max((state.tau[i] - rho_hat / e.wbar).abs());
        r[1] = r[1].max((state.p[i] - e.p).abs());
        r[2] = r[2].max((state.rho[i] - rho).abs());
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    StableAllIc,
    UnstableAllIc,
    IcDependent,
}

/// Outcome of solving from every initial condition of a set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    pub solutions: Vec<Solution>,
    /// Labels of initial conditions that failed to converge.
    pub diverged: Vec<String>,
    /// Number of fixed points more than [`DISTINCT_TOLERANCE`] apart.
    pub distinct: usize,
}

impl StabilityVerdict {
    /// Membership in the stability region: some initial condition yields a stable fixed point.
    pub fn in_region(&self) -> bool {
        self.solutions.iter().any(|s| s.state.is_stable())
    }

    pub fn solution(&self, label: &str) -> Option<&Solution> {
        self.solutions.iter().find(|s| s.ic_label == label)
    }
}

pub const DISTINCT_TOLERANCE: f64 = 1e-4;

fn count_distinct(solutions: &[Solution]) -> usize {
    let mut reps: Vec<&FixedPointState> = Vec::new();
    for s in solutions {
        if reps.iter().all(|r| r.distance(&s.state) > DISTINCT_TOLERANCE) {
            reps.push(&s.state);
        }
    }
    reps.len()
}

pub fn classify(
    lambda: &ArrivalVector,
    params: &SystemParams,
    chan: &ChannelSpec,
    opts: &SolverOptions,
    ics: &[InitialCondition],
) -> Result<StabilityVerdict> {
    let mut solutions = Vec::new();
    let mut diverged = Vec::new();
    for ic in ics {
        match solve_sigma(lambda, ic, params, chan, opts) {
            Ok(s) => solutions.push(s),
            Err(Error::NoConvergence { .. }) => diverged.push(ic.label.clone()),
            Err(e) => return Err(e),
        }
    }
    if solutions.is_empty() {
        return Err(Error::AllDiverged(ics.len()));
    }
    let stable = solutions.iter().filter(|s| s.state.is_stable()).count();
    let class = if stable == solutions.len() {
        StabilityClass::StableAllIc
    } else if stable == 0 {
        StabilityClass::UnstableAllIc
    } else {
        StabilityClass::IcDependent
    };
    let distinct = count_distinct(&solutions);
    Ok(StabilityVerdict { class, solutions, diverged, distinct })
}

/// The common slot cost used by the closed form, and whether `T_s ≠ T_c`
/// forced the substitution `T = T_s`.
pub fn tilde_cost(chan: &ChannelSpec) -> (f64, bool) {
    (chan.t_s, chan.t_s != chan.t_c)
}

/// Closed-form solution of the large-window system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeSolution {
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
    pub cost: f64,
}

impl TildeSolution {
    pub fn is_stable(&self) -> bool {
        self.rho.iter().all(|&r| r < 1.0)
    }
}

/// The coupling coefficients `(γ¹_i, γ²_i)`.
pub fn tilde_gammas(lambda: &ArrivalVector, params: &SystemParams, t: f64) -> Vec<(f64, f64)> {
    let w = params.w as f64;
    let pb = params.payload_bits;
    lambda
        .as_slice()
        .iter()
        .map(|&l| {
            let x = l * t / pb;
            let g2 = l * ((w - 1.0) * params.sigma + 2.0 * t) / (pb * (w + 1.0));
            (x / (1.0 + x), g2 / (1.0 + x))
        })
        .collect()
}

pub fn solve_sigma_tilde(lambda: &ArrivalVector, params: &SystemParams, t: f64) -> Result<TildeSolution> {
    params.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return param(format!("slot cost T must be positive, got {t}"));
    }
    let g = tilde_gammas(lambda, params, t);
    let s1: f64 = g.iter().map(|x| x.0).sum();
    let s2: f64 = g.iter().map(|x| x.1).sum();
    if s1 >= 1.0 {
        return Err(Error::Infeasible(format!("sum of gamma1 = {s1} >= 1")));
    }
    let half_window = (params.w as f64 + 1.0) / 2.0;
    let tau: Vec<f64> = g.iter().map(|&(g1, g2)| g1 * s2 / (1.0 - s1) + g2).collect();
    let rho = tau.iter().map(|t| t * half_window).collect();
    Ok(TildeSolution { tau, rho, cost: t })
}

/// Membership in the approximate region: `0 < τ_i < 2/(W+1)` for all `i`.
pub fn lambda_tilde_contains(lambda: &ArrivalVector, params: &SystemParams, t: f64) -> bool {
    let bound = 2.0 / (params.w as f64 + 1.0);
    match solve_sigma_tilde(lambda, params, t) {
        Ok(s) => s.tau.iter().all(|&x| x > 0.0 && x < bound),
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{saturated_tau, MBPS, US};
    use approx::assert_abs_diff_eq;

    fn setup() -> (SystemParams, ChannelSpec) {
        let p = SystemParams::table_one();
        let c = ChannelSpec::new(&p, 11.0 * MBPS).unwrap();
        (p, c)
    }

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn zero_traffic_is_fixed_in_one_step() {
        let (p, c) = setup();
        let lam = ArrivalVector::zeros(3);
        let next = sigma_step(&FixedPointState::zeros(3), &lam, &p, &c, RhoHatMode::SlotWeighted).unwrap();
        assert!(next.tau.iter().chain(&next.p).chain(&next.rho).all(|&v| v == 0.0));
        for ic in extremal_ics(3) {
            let s = solve_sigma(&lam, &ic, &p, &c, &opts()).unwrap();
            assert!(s.state.tau.iter().chain(&s.state.p).chain(&s.state.rho).all(|&v| v == 0.0));
            assert_eq!(s.iterations, 0);
        }
    }

    #[test]
    fn single_node_service_time() {
        let (p, c) = setup();
        let lam = ArrivalVector::from_mbps(&[1.0]).unwrap();
        let step = sigma_step(&FixedPointState::zeros(1), &lam, &p, &c, RhoHatMode::SlotWeighted).unwrap();
        let per_packet = 15.5 * p.sigma + c.t_s;
        assert_abs_diff_eq!(per_packet / US, 1857.909, epsilon = 1e-3);
        assert_abs_diff_eq!(step.rho[0], 1e6 * per_packet / 12_000.0, epsilon = 1e-12);
        assert_abs_diff_eq!(step.rho[0], 0.15483, epsilon = 1e-5);
        let b = service_time(16.5, 0.0, p.sigma, &c, p.payload_bits);
        assert_abs_diff_eq!(b.per_packet, per_packet, epsilon = 1e-15);
        assert_abs_diff_eq!(b.per_packet, b.x_bar * p.payload_bits, epsilon = 1e-15);
    }

    #[test]
    fn certain_collision_from_a_saturated_tau() {
        let (p, c) = setup();
        let lam = ArrivalVector::from_mbps(&[1.0, 1.0, 1.0]).unwrap();
        let mut s = FixedPointState::zeros(3);
        s.tau = vec![1.0, 0.1, 0.2];
        let next = sigma_step(&s, &lam, &p, &c, RhoHatMode::SlotWeighted).unwrap();
        assert_eq!(next.p[1], 1.0);
        assert_eq!(next.p[2], 1.0);
        assert_eq!(next.rho[1], 1.0);
    }

    #[test]
    fn symmetric_solution_for_symmetric_input() {
        let (p, c) = setup();
        let lam = ArrivalVector::from_mbps(&[2.0, 2.0]).unwrap();
        let s = solve_sigma(&lam, &InitialCondition::uniform("u", 2, 0.3), &p, &c, &opts()).unwrap();
        assert_abs_diff_eq!(s.state.tau[0], s.state.tau[1], epsilon = 1e-9);
    }

    #[test]
    fn single_node_overload_saturates() {
        let (p, c) = setup();
        let cap = p.payload_bits / (15.5 * p.sigma + c.t_s);
        assert_abs_diff_eq!(cap / MBPS, 6.459, epsilon = 1e-3);
        let s = solve_sigma(&ArrivalVector::from_mbps(&[7.0]).unwrap(), &InitialCondition::zero(1), &p, &c, &opts()).unwrap();
        assert_eq!(s.state.rho[0], 1.0);
        let s = solve_sigma(&ArrivalVector::from_mbps(&[6.4]).unwrap(), &InitialCondition::zero(1), &p, &c, &opts()).unwrap();
        assert!(s.state.rho[0] < 1.0);
    }

    #[test]
    fn saturation_reproduces_bianchi_point() {
        let (p, c) = setup();
        for n in [2usize, 5, 10] {
            let lam = ArrivalVector::uniform(n, 100.0 * MBPS).unwrap();
            let s = solve_sigma(&lam, &InitialCondition::zero(n), &p, &c, &opts()).unwrap();
            let sat = saturated_tau(&p, n).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(s.state.tau[i], sat.tau, epsilon = 1e-6);
                assert_abs_diff_eq!(s.state.p[i], sat.p, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn residuals_small_at_solution() {
        let (p, c) = setup();
        let lam = ArrivalVector::from_mbps(&[1.5, 2.5, 0.5]).unwrap();
        let s = solve_sigma(&lam, &InitialCondition::zero(3), &p, &c, &opts()).unwrap();
        let r = sigma_residuals(&s.state, &lam, &p, &c, RhoHatMode::SlotWeighted).unwrap();
        assert!(r.iter().all(|&x| x < 1e-8), "{r:?}");
    }

    #[test]
    fn non_convergence_is_reported() {
        let (p, c) = setup();
        let lam = ArrivalVector::from_mbps(&[3.0, 3.0]).unwrap();
        let o = SolverOptions { max_iterations: 2, ..opts() };
        assert!(matches!(
            solve_sigma(&lam, &InitialCondition::near_one(2), &p, &c, &o),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn classify_zero_is_stable() {
        let (p, c) = setup();
        let v = classify(&ArrivalVector::zeros(2), &p, &c, &opts(), &extremal_ics(2)).unwrap();
        assert_eq!(v.class, StabilityClass::StableAllIc);
        assert!(v.in_region());
    }

    #[test]
    fn classify_finds_two_equilibria_at_tiny_window() {
        let p = SystemParams::table_one().with_window(2, 0);
        let c = ChannelSpec::new(&p, 11.0 * MBPS).unwrap();
        let mut found = false;
        for k in 1..=40 {
            let l1 = 0.25 * k as f64;
            let lam = ArrivalVector::from_mbps(&[l1, 2.0]).unwrap();
            let v = classify(&lam, &p, &c, &opts(), &extremal_ics(2)).unwrap();
            if v.class == StabilityClass::IcDependent {
                assert!(v.distinct >= 2);
                assert!(v.solution("zero").unwrap().state.is_stable());
                assert!(!v.solution("near_one").unwrap().state.is_stable());
                found = true;
                break;
            }
        }
        assert!(found, "no IC-dependent point found");
    }

    #[test]
    fn large_window_is_never_ic_dependent() {
        let p = SystemParams::table_one().with_window(128, 5);
        let c = ChannelSpec::new(&p, 11.0 * MBPS).unwrap();
        for a in 0..12 {
            for b in 0..12 {
                let lam = ArrivalVector::from_mbps(&[0.4 * a as f64, 0.4 * b as f64]).unwrap();
                let v = classify(&lam, &p, &c, &opts(), &extremal_ics(2)).unwrap();
                assert_ne!(v.class, StabilityClass::IcDependent, "{lam:?}");
            }
        }
    }

    #[test]
    fn ic_grid_contents() {
        let g = ic_grid(2, 3);
        assert_eq!(g.len(), 2 + 9);
        assert!(g.iter().all(|ic| ic.validate(2).is_ok()));
    }

    #[test]
    fn tilde_zero_and_symmetry() {
        let (p, c) = setup();
        let (t, substituted) = tilde_cost(&c);
        assert!(substituted);
        assert_eq!(t, c.t_s);
        let s = solve_sigma_tilde(&ArrivalVector::zeros(3), &p, t).unwrap();
        assert!(s.tau.iter().all(|&x| x == 0.0));
        let s = solve_sigma_tilde(&ArrivalVector::from_mbps(&[1.0, 1.0, 1.0]).unwrap(), &p, t).unwrap();
        assert_abs_diff_eq!(s.tau[0], s.tau[2], epsilon = 1e-15);
    }

    #[test]
    fn tilde_closed_form_matches_direct_iteration() {
        let (p, c) = setup();
        let t = c.t_s;
        let lam = ArrivalVector::from_mbps(&[1.0, 1.0]).unwrap();
        let s = solve_sigma_tilde(&lam, &p, t).unwrap();
        // iterate τ_i = 2ρ_i/(W+1), ρ_i = λ_i/P [(W−1)/2 (σ + T Σ_{j≠i} τ_j) + T (1 + Σ_{j≠i} τ_j)]
        let w = p.w as f64;
        let mut tau = [0.0_f64; 2];
        for _ in 0..10_000 {
            let mut next = [0.0; 2];
            for i in 0..2 {
                let others = tau[1 - i];
                let rho = lam[i] / p.payload_bits
                    * ((w - 1.0) / 2.0 * (p.sigma + t * others) + t * (1.0 + others));
                next[i] = 2.0 * rho / (w + 1.0);
            }
            tau = next;
        }
        assert_abs_diff_eq!(s.tau[0], tau[0], epsilon = 1e-10);
        assert_abs_diff_eq!(s.tau[1], tau[1], epsilon = 1e-10);
    }

    #[test]
    fn tilde_infeasible_signal() {
        let (p, c) = setup();
        let lam = ArrivalVector::from_mbps(&[100.0, 100.0]).unwrap();
        assert!(matches!(solve_sigma_tilde(&lam, &p, c.t_s), Err(Error::Infeasible(_))));
        assert!(!lambda_tilde_contains(&lam, &p, c.t_s));
    }

    #[test]
    fn tilde_membership_cases() {
        let (p, c) = setup();
        let t = c.t_s;
        assert!(!lambda_tilde_contains(&ArrivalVector::zeros(2), &p, t));
        // one node: τ = γ² < 2/(W+1)
        let lam = ArrivalVector::from_mbps(&[2.0]).unwrap();
        let g = tilde_gammas(&lam, &p, t)[0];
        let s = solve_sigma_tilde(&lam, &p, t).unwrap();
        assert_abs_diff_eq!(s.tau[0], g.0 * g.1 / (1.0 - g.0) + g.1, epsilon = 1e-15);
        assert_eq!(lambda_tilde_contains(&lam, &p, t), s.tau[0] < 2.0 / 33.0);
    }
}
