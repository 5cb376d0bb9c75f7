//! Multi-channel stability under unbiased switching policies: the per-channel
//! fixed-point system, occupancy conversions, its large-window linear form
//! and the equi-occupancy optimality gap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::params::{ArrivalVector, ChannelSpec, SystemParams};
use crate::single_channel::{
    eval_node, slot_utilization, utilization, InitialCondition, NodeChannelEval, RhoHatMode, SolverOptions,
};
use crate::slotstats::{effective_costs, EffectiveSlotCosts};

const DIST_TOLERANCE: f64 = 1e-12;

fn check_distribution(q: &[f64], what: &str) -> Result<()> {
    if q.is_empty() {
        return param(format!("{what} must have at least one channel"));
    }
    if q.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return param(format!("{what} has negative or non-finite entries"));
    }
    let s: f64 = q.iter().sum();
    if (s - 1.0).abs() > DIST_TOLERANCE * q.len() as f64 {
        return param(format!("{what} sums to {s}, not 1"));
    }
    Ok(())
}

/// The three channel distributions of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    /// Occupancy in node slots.
    pub q: Vec<f64>,
    /// Occupancy in channel slots; not necessarily a distribution.
    pub q_hat: Vec<f64>,
    /// Packet assignment distribution.
    pub q_tilde: Vec<f64>,
}

/// A switching policy summarized by the occupancy distribution it induces at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnbiasedPolicy {
    q: Vec<f64>,
}

impl UnbiasedPolicy {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_distribution(&q, "occupancy distribution")?;
        Ok(UnbiasedPolicy { q })
    }

    /// Equal occupancy over `k` channels.
    pub fn equi(k: usize) -> Result<Self> {
        if k == 0 {
            return param("channel count must be at least 1");
        }
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn channels(&self) -> usize {
        self.q.len()
    }
}

impl TryFrom<Vec<f64>> for UnbiasedPolicy {
    type Error = Error;
    fn try_from(q: Vec<f64>) -> Result<Self> {
        UnbiasedPolicy::new(q)
    }
}

impl From<UnbiasedPolicy> for Vec<f64> {
    fn from(p: UnbiasedPolicy) -> Self {
        p.q
    }
}

fn hat_from_n_unchecked(q: &[f64], present: &[f64], absent: &[f64]) -> Vec<f64> {
    (0..q.len())
        .map(|k| {
            let others: f64 = (0..q.len()).filter(|&l| l != k).map(|l| q[l] * present[l] / absent[k]).sum();
            q[k] / (q[k] + others)
        })
        .collect()
}

/// `q̂^(k) = q^(k) / (q^(k) + Σ_{l≠k} q^(l) E[slot₊^(l)] / E[slot₋^(k)])`.
pub fn occupancy_hat_from_n(q: &[f64], mean_slot_present: &[f64], mean_slot_absent: &[f64]) -> Result<Vec<f64>> {
    check_distribution(q, "occupancy distribution")?;
    if mean_slot_present.len() != q.len() || mean_slot_absent.len() != q.len() {
        return param("slot means must have one entry per channel");
    }
    for &s in mean_slot_present.iter().chain(mean_slot_absent) {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain { what: "mean slot length", value: s });
        }
    }
    Ok(hat_from_n_unchecked(q, mean_slot_present, mean_slot_absent))
}

/// Inverts [`occupancy_hat_from_n`]: recovers `q` from `q̂` and the slot means.
pub fn occupancy_n_from_hat(q_hat: &[f64], mean_slot_present: &[f64], mean_slot_absent: &[f64]) -> Result<Vec<f64>> {
    let k = q_hat.len();
    if k == 0 || mean_slot_present.len() != k || mean_slot_absent.len() != k {
        return param("occupancy profile and slot means must have one entry per channel");
    }
    for &s in mean_slot_present.iter().chain(mean_slot_absent) {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain { what: "mean slot length", value: s });
        }
    }
    // Row k: q_k (1 − q̂_k) − q̂_k Σ_{l≠k} q_l a_l / b_k = 0, plus Σ q = 1.
    let mut a = DMatrix::<f64>::zeros(k + 1, k);
    for r in 0..k {
        for l in 0..k {
            a[(r, l)] = if l == r {
                1.0 - q_hat[r]
            } else {
                -q_hat[r] * mean_slot_present[l] / mean_slot_absent[r]
            };
        }
    }
    for l in 0..k {
        a[(k, l)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k + 1);
    b[k] = 1.0;
    let svd = a.svd(true, true);
    let q = svd.solve(&b, 1e-14).map_err(|e| Error::Infeasible(e.to_string()))?;
    Ok(q.iter().copied().collect())
}

/// `q^(k) ∝ q̃^(k) B̄^(k) / ρ̂^(k)` with `B̄ = W̄/(1 − p)`.
pub fn occupancy_n_from_packet(q_tilde: &[f64], wbar: &[f64], p: &[f64], rho_hat: &[f64]) -> Result<Vec<f64>> {
    check_distribution(q_tilde, "packet assignment distribution")?;
    let k = q_tilde.len();
    if wbar.len() != k || p.len() != k || rho_hat.len() != k {
        return param("per-channel inputs must have one entry per channel");
    }
    let mut weights = Vec::with_capacity(k);
    for c in 0..k {
        if !(0.0..1.0).contains(&p[c]) {
            return Err(Error::Domain { what: "collision probability", value: p[c] });
        }
        if q_tilde[c] == 0.0 {
            weights.push(0.0);
            continue;
        }
        if !(rho_hat[c] > 0.0) {
            return Err(Error::Domain { what: "slot utilization of an assigned channel", value: rho_hat[c] });
        }
        weights.push(q_tilde[c] * wbar[c] / (1.0 - p[c]) / rho_hat[c]);
    }
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Packet assignment implied by `q`; falls back to `q` when no channel carries load.
fn packet_from_n(q: &[f64], wbar: &[f64], p: &[f64], rho_hat: &[f64]) -> Vec<f64> {
    let weights: Vec<f64> = (0..q.len())
        .map(|k| if p[k] < 1.0 { q[k] * rho_hat[k] * (1.0 - p[k]) / wbar[k] } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        weights.into_iter().map(|w| w / total).collect()
    } else {
        q.to_vec()
    }
}

/// Per-node, per-channel state. Matrices are indexed `[node][channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFixedPointState {
    pub tau: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub wbar: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub rho_hat: Vec<Vec<f64>>,
    pub occupancy: Vec<OccupancyProfile>,
}

impl MultiFixedPointState {
    pub fn nodes(&self) -> usize {
        self.rho.len()
    }

    pub fn channels(&self) -> usize {
        self.tau.first().map_or(0, Vec::len)
    }

    pub fn is_stable(&self) -> bool {
        self.rho.iter().all(|&r| r < 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSolution {
    pub ic_label: String,
    pub state: MultiFixedPointState,
    pub iterations: usize,
    pub residual: f64,
}

struct MultiSystem<'a> {
    lambda: &'a ArrivalVector,
    q: &'a [f64],
    params: &'a SystemParams,
    chans: &'a [ChannelSpec],
    costs: Vec<EffectiveSlotCosts>,
    mode: RhoHatMode,
}

impl MultiSystem<'_> {
    /// State at `(τ, ρ̂)` and the images of both.
    fn evaluate(&self, tau: &[Vec<f64>], rho_hat_in: &[Vec<f64>]) -> (MultiFixedPointState, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = tau.len();
        let k = self.q.len();
        let columns: Vec<Vec<f64>> = (0..k).map(|c| tau.iter().map(|row| row[c]).collect()).collect();
        let mut state = MultiFixedPointState {
            tau: tau.to_vec(),
            p: vec![vec![0.0; k]; n],
            wbar: vec![vec![0.0; k]; n],
            rho: vec![0.0; n],
            rho_hat: vec![vec![0.0; k]; n],
            occupancy: Vec::with_capacity(n),
        };
        let mut tau_image = vec![vec![0.0; k]; n];
        for i in 0..n {
            let evals: Vec<NodeChannelEval> =
                (0..k).map(|c| eval_node(i, &columns[c], self.params, &self.costs[c], &self.chans[c])).collect();
            let present: Vec<f64> = (0..k)
                .map(|c| {
                    let r = rho_hat_in[i][c];
                    r * evals[c].slots.e_s_q + (1.0 - r) * evals[c].slots.e_s_qbar
                })
                .collect();
            let absent: Vec<f64> = evals.iter().map(|e| e.slots.e_s_qbar).collect();
            let q_hat = hat_from_n_unchecked(self.q, &present, &absent);
            let p_row: Vec<f64> = evals.iter().map(|e| e.p).collect();
            let wbar_row: Vec<f64> = evals.iter().map(|e| e.wbar).collect();
            // per-packet costs are weighted by where packets are served
            let q_tilde = packet_from_n(self.q, &wbar_row, &p_row, &rho_hat_in[i]);
            let service: f64 = (0..k).filter(|&c| q_tilde[c] > 0.0).map(|c| q_tilde[c] * evals[c].per_packet).sum();
            let rho = utilization(self.lambda[i], self.params.payload_bits, service);
            state.rho[i] = rho;
            for c in 0..k {
                let rho_hat = slot_utilization(rho, &evals[c].slots, self.mode);
                state.p[i][c] = evals[c].p;
                state.wbar[i][c] = evals[c].wbar;
                state.rho_hat[i][c] = rho_hat;
                tau_image[i][c] = q_hat[c] * rho_hat / evals[c].wbar;
            }
            state.occupancy.push(OccupancyProfile { q: self.q.to_vec(), q_hat, q_tilde });
        }
        let rho_hat_image = state.rho_hat.clone();
        (state, tau_image, rho_hat_image)
    }
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn build_system<'a>(
    lambda: &'a ArrivalVector,
    policy: &'a UnbiasedPolicy,
    params: &'a SystemParams,
    chans: &'a [ChannelSpec],
    mode: RhoHatMode,
) -> Result<MultiSystem<'a>> {
    params.validate()?;
    if chans.len() != policy.channels() {
        return param(format!("policy covers {} channels but {} were given", policy.channels(), chans.len()));
    }
    let costs = chans.iter().map(|c| effective_costs(params, c)).collect::<Result<Vec<_>>>()?;
    Ok(MultiSystem { lambda, q: policy.q(), params, chans, costs, mode })
}

/// Damped iteration of the multi-channel system on `(τ, ρ̂)`.
///
/// The start is `τ^(k) = q^(k) τ₀`, `ρ̂^(k) = ρ₀`. With a single channel the
/// occupancy profile is identically one and the iteration runs on `τ` alone,
/// reproducing the single-channel solver exactly.
pub fn solve_sigma_g(
    lambda: &ArrivalVector,
    policy: &UnbiasedPolicy,
    params: &SystemParams,
    chans: &[ChannelSpec],
    ic: &InitialCondition,
    opts: &SolverOptions,
) -> Result<MultiSolution> {
    let n = lambda.len();
    ic.validate(n)?;
    opts.validate()?;
    let sys = build_system(lambda, policy, params, chans, opts.rho_hat)?;
    let q = policy.q();
    let single = q.len() == 1;
    let mut tau: Vec<Vec<f64>> = ic
        .tau0
        .iter()
        .zip(lambda.as_slice())
        .map(|(&t, &l)| q.iter().map(|&qk| if l == 0.0 { 0.0 } else { t * qk }).collect())
        .collect();
    let mut rho_hat: Vec<Vec<f64>> = ic.rho0.iter().map(|&r| vec![r; q.len()]).collect();
    let mut residual = f64::INFINITY;
    for it in 0..opts.max_iterations {
        let (state, tau_img, rho_hat_img) = sys.evaluate(&tau, &rho_hat);
        residual = max_diff(&tau, &tau_img);
        if !single {
            residual = residual.max(max_diff(&rho_hat, &rho_hat_img));
        }
        if residual < opts.tolerance {
            return Ok(MultiSolution { ic_label: ic.label.clone(), state, iterations: it, residual });
        }
        for (row, img) in tau.iter_mut().zip(&tau_img) {
            for (t, g) in row.iter_mut().zip(img) {
                *t = (*t + opts.damping * (g - *t)).clamp(0.0, 1.0);
            }
        }
        for (row, img) in rho_hat.iter_mut().zip(&rho_hat_img) {
            for (r, g) in row.iter_mut().zip(img) {
                *r = (*r + opts.damping * (g - *r)).clamp(0.0, 1.0);
            }
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iterations, residual })
}

/// Max-norm residuals `[τ = q̂ρ̂/W̄, p = 1 − Π(1 − τ_j), ρ]` at a state.
pub fn sigma_g_residuals(
    state: &MultiFixedPointState,
    lambda: &ArrivalVector,
    policy: &UnbiasedPolicy,
    params: &SystemParams,
    chans: &[ChannelSpec],
    mode: RhoHatMode,
) -> Result<[f64; 3]> {
    let sys = build_system(lambda, policy, params, chans, mode)?;
    if state.nodes() != lambda.len() || state.channels() != policy.channels() {
        return param("state shape does not match the arrival vector and policy");
    }
    let (at, tau_img, _) = sys.evaluate(&state.tau, &state.rho_hat);
    let rho = at.rho.iter().zip(&state.rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok([max_diff(&state.tau, &tau_img), max_diff(&state.p, &at.p), rho])
}

/// Membership in the multi-channel region from a set of starts: some start
/// converges to a solution with every `ρ_i < 1`.
pub fn sigma_g_contains(
    lambda: &ArrivalVector,
    policy: &UnbiasedPolicy,
    params: &SystemParams,
    chans: &[ChannelSpec],
    ics: &[InitialCondition],
    opts: &SolverOptions,
) -> Result<bool> {
    let mut converged = 0;
    for ic in ics {
        match solve_sigma_g(lambda, policy, params, chans, ic, opts) {
            Ok(s) if s.state.is_stable() => return Ok(true),
            Ok(_) => converged += 1,
            Err(Error::NoConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if converged == 0 {
        return Err(Error::AllDiverged(ics.len()));
    }
    Ok(false)
}

/// Solution of the large-window unbiased-policy system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TildeGSolution {
    /// `[node][channel]`.
    pub tau: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub cost: f64,
}

impl TildeGSolution {
    pub fn is_stable(&self) -> bool {
        self.rho.iter().all(|&r| r < 1.0)
    }
}

fn tilde_g_coefficients(lambda: &ArrivalVector, params: &SystemParams, t: f64) -> Vec<(f64, f64)> {
    let w = params.w as f64;
    let pb = params.payload_bits;
    lambda
        .as_slice()
        .iter()
        .map(|&l| (l * ((w - 1.0) * params.sigma + 2.0 * t) / (2.0 * pb), l * t / pb))
        .collect()
}

/// Closed form of the linear system `ρ_i = a_i + b_i s Σ_{j≠i} ρ_j`, with
/// `s = Σ_k q_k²`, `a_i = λ_i((W−1)σ + 2T)/(2P)`, `b_i = λ_i T/P` and
/// `τ_i^(k) = 2 q_k ρ_i/(W+1)`.
pub fn solve_sigma_g_tilde(
    lambda: &ArrivalVector,
    policy: &UnbiasedPolicy,
    params: &SystemParams,
    t: f64,
) -> Result<TildeGSolution> {
    params.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return param(format!("slot cost T must be positive, got {t}"));
    }
    let q = policy.q();
    let s: f64 = q.iter().map(|x| x * x).sum();
    let coef = tilde_g_coefficients(lambda, params, t);
    let num: f64 = coef.iter().map(|&(a, b)| a / (1.0 + b * s)).sum();
    let den = 1.0 - coef.iter().map(|&(_, b)| b * s / (1.0 + b * s)).sum::<f64>();
    if den <= 0.0 {
        return Err(Error::Infeasible(format!("coupling denominator {den} <= 0")));
    }
    let total = num / den;
    let rho: Vec<f64> = coef.iter().map(|&(a, b)| (a + b * s * total) / (1.0 + b * s)).collect();
    let scale = 2.0 / (params.w as f64 + 1.0);
    let tau = rho.iter().map(|&r| q.iter().map(|&qk| scale * qk * r).collect()).collect();
    Ok(TildeGSolution { tau, rho, cost: t })
}

/// Both sides of the convexity certificate at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGap {
    /// `ρ_i` under the given occupancy.
    pub lhs: f64,
    /// `θ¹_i K φ_i(1/K) + θ²_i` with the same `ρ_j`.
    pub rhs: f64,
    pub gap: f64,
}

/// Per-node gap `θ¹_i Σ_{j≠i} α_j (Σ_k q_k² − 1/K)` at the solution under `q`,
/// with `α_j = 2ρ_j/(W+1)` and `θ¹_i = λ_i(W+1)T/(2P)`.
pub fn equi_occupancy_gap(
    lambda: &ArrivalVector,
    policy: &UnbiasedPolicy,
    params: &SystemParams,
    t: f64,
) -> Result<Vec<OccupancyGap>> {
    let sol = solve_sigma_g_tilde(lambda, policy, params, t)?;
    let w = params.w as f64;
    let q = policy.q();
    let k = q.len() as f64;
    let s: f64 = q.iter().map(|x| x * x).sum();
    let coef = tilde_g_coefficients(lambda, params, t);
    let weight: Vec<f64> = sol.rho.iter().map(|r| 2.0 * r / (w + 1.0)).collect();
    let total_weight: f64 = weight.iter().sum();
    Ok((0..lambda.len())
        .map(|i| {
            let theta1 = lambda[i] * (w + 1.0) * t / (2.0 * params.payload_bits);
            let others = total_weight - weight[i];
            let rhs = theta1 * others / k + coef[i].0;
            OccupancyGap { lhs: sol.rho[i], rhs, gap: theta1 * others * (s - 1.0 / k) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{MBPS, US};
    use crate::single_channel::{extremal_ics, solve_sigma, solve_sigma_tilde};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn setup(k: usize) -> (SystemParams, Vec<ChannelSpec>) {
        let p = SystemParams::table_one();
        let c = ChannelSpec::new(&p, 11.0 * MBPS).unwrap();
        (p, vec![c; k])
    }

    #[test]
    fn hat_examples() {
        assert_eq!(occupancy_hat_from_n(&[1.0], &[1.0], &[2.0]).unwrap(), vec![1.0]);
        let q = occupancy_hat_from_n(&[0.5, 0.5], &[3.0, 3.0], &[3.0, 3.0]).unwrap();
        assert_abs_diff_eq!(q[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-15);
        let q = occupancy_hat_from_n(&[0.5, 0.5], &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(q[0], 1.0 / 3.0, epsilon = 1e-15);
        assert!(occupancy_hat_from_n(&[0.5, 0.5], &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn packet_examples() {
        let q = occupancy_n_from_packet(&[0.5, 0.5], &[10.0, 20.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(q[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(occupancy_n_from_packet(&[1.0], &[7.0], &[0.2], &[0.3]).unwrap(), vec![1.0]);
        let q = occupancy_n_from_packet(&[0.3, 0.7], &[9.0, 9.0], &[0.1, 0.1], &[0.4, 0.4]).unwrap();
        assert_abs_diff_eq!(q[0], 0.3, epsilon = 1e-15);
        assert!(occupancy_n_from_packet(&[0.5, 0.5], &[1.0, 1.0], &[0.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn hat_inverse_recovers_q() {
        let q = [0.2, 0.5, 0.3];
        let present = [1.0e-3, 1.3e-3, 0.8e-3];
        let absent = [0.9e-3, 1.1e-3, 0.7e-3];
        let qh = occupancy_hat_from_n(&q, &present, &absent).unwrap();
        let back = occupancy_n_from_hat(&qh, &present, &absent).unwrap();
        for (a, b) in q.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_channel_reduction_is_exact() {
        let (p, chans) = setup(1);
        let policy = UnbiasedPolicy::equi(1).unwrap();
        let opts = SolverOptions::default();
        let lam = ArrivalVector::from_mbps(&[1.3, 2.1, 0.4]).unwrap();
        for ic in extremal_ics(3) {
            let a = solve_sigma(&lam, &ic, &p, &chans[0], &opts).unwrap();
            let b = solve_sigma_g(&lam, &policy, &p, &chans, &ic, &opts).unwrap();
            assert_eq!(a.iterations, b.iterations);
            for i in 0..3 {
                assert_eq!(a.state.tau[i], b.state.tau[i][0]);
                assert_eq!(a.state.rho[i], b.state.rho[i]);
                assert_eq!(a.state.rho_hat[i], b.state.rho_hat[i][0]);
                assert_eq!(a.state.p[i], b.state.p[i][0]);
            }
        }
    }

    #[test]
    fn zero_traffic_gives_zero_state() {
        let (p, chans) = setup(2);
        let policy = UnbiasedPolicy::equi(2).unwrap();
        let s = solve_sigma_g(
            &ArrivalVector::zeros(3),
            &policy,
            &p,
            &chans,
            &InitialCondition::near_one(3),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(s.state.tau.iter().flatten().all(|&t| t == 0.0));
        assert!(s.state.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn symmetric_channels_give_identical_channel_states() {
        let (p, chans) = setup(2);
        let policy = UnbiasedPolicy::equi(2).unwrap();
        let lam = ArrivalVector::from_mbps(&[2.0, 2.0]).unwrap();
        let s = solve_sigma_g(&lam, &policy, &p, &chans, &InitialCondition::zero(2), &SolverOptions::default()).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(s.state.tau[i][0], s.state.tau[i][1], epsilon = 1e-9);
            assert_abs_diff_eq!(s.state.rho_hat[i][0], s.state.rho_hat[i][1], epsilon = 1e-9);
        }
        let r = sigma_g_residuals(&s.state, &lam, &policy, &p, &chans, RhoHatMode::SlotWeighted).unwrap();
        assert!(r.iter().all(|&x| x < 1e-8), "{r:?}");
    }

    #[test]
    fn channel_permutation_is_equivariant() {
        let (p, _) = setup(2);
        let fast = ChannelSpec::new(&p, 11.0 * MBPS).unwrap();
        let slow = ChannelSpec::new(&p, 2.0 * MBPS).unwrap();
        let lam = ArrivalVector::from_mbps(&[0.4, 0.7]).unwrap();
        let opts = SolverOptions::default();
        let ic = InitialCondition::zero(2);
        let a = solve_sigma_g(&lam, &UnbiasedPolicy::new(vec![0.3, 0.7]).unwrap(), &p, &[fast, slow], &ic, &opts).unwrap();
        let b = solve_sigma_g(&lam, &UnbiasedPolicy::new(vec![0.7, 0.3]).unwrap(), &p, &[slow, fast], &ic, &opts).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(a.state.rho[i], b.state.rho[i], epsilon = 1e-9);
            assert_abs_diff_eq!(a.state.tau[i][0], b.state.tau[i][1], epsilon = 1e-9);
        }
    }

    #[test]
    fn channelization_lowers_utilization() {
        let (p, chans) = setup(2);
        let lam = ArrivalVector::from_mbps(&[2.0, 2.0]).unwrap();
        let opts = SolverOptions::default();
        let ic = InitialCondition::zero(2);
        let one = solve_sigma(&lam, &ic, &p, &chans[0], &opts).unwrap();
        let two = solve_sigma_g(&lam, &UnbiasedPolicy::equi(2).unwrap(), &p, &chans, &ic, &opts).unwrap();
        assert!(two.state.rho[0] < one.state.rho[0]);
    }

    #[test]
    fn tilde_g_reduces_to_single_channel_closed_form() {
        let p = SystemParams::table_one();
        let t = 1547.909 * US;
        let lam = ArrivalVector::from_mbps(&[1.0, 2.5, 0.3]).unwrap();
        let a = solve_sigma_tilde(&lam, &p, t).unwrap();
        let b = solve_sigma_g_tilde(&lam, &UnbiasedPolicy::equi(1).unwrap(), &p, t).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(a.tau[i], b.tau[i][0], epsilon = 1e-14);
            assert_abs_diff_eq!(a.rho[i], b.rho[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn tilde_g_matches_direct_iteration() {
        let p = SystemParams::table_one();
        let t = 1547.909 * US;
        let w = p.w as f64;
        let q = [0.7, 0.3];
        let lam = [1.5 * MBPS, 0.8 * MBPS];
        // iterate the defining pair directly
        let mut rho = [0.0_f64; 2];
        for _ in 0..10_000 {
            let tau: Vec<Vec<f64>> = rho.iter().map(|&r| q.iter().map(|&qk| 2.0 * qk * r / (w + 1.0)).collect()).collect();
            let mut next = [0.0; 2];
            for i in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    let others: f64 = (0..2).filter(|&j| j != i).map(|j| tau[j][k]).sum();
                    acc += q[k] * ((w - 1.0) / 2.0 * (p.sigma + t * others) + t * (1.0 + others));
                }
                next[i] = lam[i] / p.payload_bits * acc;
            }
            rho = next;
        }
        let s = solve_sigma_g_tilde(&ArrivalVector::new(lam.to_vec()).unwrap(), &UnbiasedPolicy::new(q.to_vec()).unwrap(), &p, t)
            .unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(s.rho[i], rho[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn tilde_g_infeasible_at_heavy_load() {
        let p = SystemParams::table_one();
        let lam = ArrivalVector::from_mbps(&[50.0, 50.0]).unwrap();
        let r = solve_sigma_g_tilde(&lam, &UnbiasedPolicy::equi(1).unwrap(), &p, 1547.909 * US);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn equi_occupancy_minimizes_utilization() {
        let p = SystemParams::table_one();
        let t = 1547.909 * US;
        let lam = ArrivalVector::from_mbps(&[1.0, 2.0, 1.5]).unwrap();
        let u = solve_sigma_g_tilde(&lam, &UnbiasedPolicy::equi(2).unwrap(), &p, t).unwrap();
        let b = solve_sigma_g_tilde(&lam, &UnbiasedPolicy::new(vec![0.7, 0.3]).unwrap(), &p, t).unwrap();
        for i in 0..3 {
            assert!(u.rho[i] <= b.rho[i]);
        }
        let g = equi_occupancy_gap(&lam, &UnbiasedPolicy::equi(2).unwrap(), &p, t).unwrap();
        assert!(g.iter().all(|x| x.gap.abs() < 1e-15));
    }

    #[test]
    fn convexity_certificate_arithmetic() {
        let q: [f64; 2] = [0.7, 0.3];
        let s: f64 = q.iter().map(|x| x * x).sum();
        assert_abs_diff_eq!(s, 0.58, epsilon = 1e-15);
        assert!(s > 2.0 * 0.25);
    }

    proptest! {
        #[test]
        fn gap_is_nonnegative_and_consistent(raw in proptest::collection::vec(0.01f64..1.0, 2..5), l1 in 0.1f64..2.0, l2 in 0.1f64..2.0) {
            let total: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let policy = UnbiasedPolicy::new(q).unwrap();
            let p = SystemParams::table_one();
            let lam = ArrivalVector::from_mbps(&[l1, l2]).unwrap();
            if let Ok(g) = equi_occupancy_gap(&lam, &policy, &p, 1547.909 * US) {
                for x in g {
                    prop_assert!(x.gap >= -1e-12);
                    prop_assert!((x.lhs - x.rhs - x.gap).abs() < 1e-10);
                }
            }
        }
    }
}
