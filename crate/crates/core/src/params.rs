//! System parameters, DCF timing and the average backoff window.
//!
//! All durations are kept in seconds and all rates in bits per second.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Microseconds to seconds.
pub const US: f64 = 1e-6;
/// Megabits per second to bits per second.
pub const MBPS: f64 = 1e6;

/// How slot costs account for runs of successive attempts by one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollisionModel {
    /// Every attempt sees an independent collision probability.
    #[default]
    Bianchi,
    /// Only run-first attempts are decoupled; slot costs absorb successive attempts.
    Facs,
}

/// Global MAC/PHY constants shared by every channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Initial backoff window `W` in slots.
    pub w: u32,
    /// Maximum backoff stage `m`.
    pub m: u32,
    /// Empty slot duration.
    pub sigma: f64,
    pub difs: f64,
    pub sifs: f64,
    pub ack_time: f64,
    pub header_time: f64,
    pub prop_delay: f64,
    /// Packet payload `P` in bits.
    pub payload_bits: f64,
    pub collision_model: CollisionModel,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams::table_one()
    }
}

impl SystemParams {
    /// The test-bench parameter set: 1500-byte packets, W = 32, m = 5,
    /// 20 us slots, basic access timing.
    pub fn table_one() -> Self {
        SystemParams {
            w: 32,
            m: 5,
            sigma: 20.0 * US,
            difs: 50.0 * US,
            sifs: 10.0 * US,
            ack_time: 203.0 * US,
            header_time: 192.0 * US,
            prop_delay: 1.0 * US,
            payload_bits: 12_000.0,
            collision_model: CollisionModel::Bianchi,
        }
    }

    pub fn with_window(mut self, w: u32, m: u32) -> Self {
        self.w = w;
        self.m = m;
        self
    }

    pub fn with_collision_model(mut self, model: CollisionModel) -> Self {
        self.collision_model = model;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.w < 2 {
            return param(format!("initial window W must be >= 2, got {}", self.w));
        }
        if self.m > 30 {
            return param(format!("maximum backoff stage m = {} is too large", self.m));
        }
        let durations = [
            ("sigma", self.sigma),
            ("difs", self.difs),
            ("sifs", self.sifs),
            ("ack_time", self.ack_time),
            ("header_time", self.header_time),
            ("prop_delay", self.prop_delay),
        ];
        for (name, d) in durations {
            if !(d.is_finite() && d > 0.0) {
                return param(format!("{name} must be a positive duration, got {d}"));
            }
        }
        if !(self.payload_bits.is_finite() && self.payload_bits > 0.0) {
            return param(format!("payload must be positive, got {}", self.payload_bits));
        }
        Ok(())
    }

    /// Largest contention window, `2^m W`.
    pub fn max_window(&self) -> u64 {
        (self.w as u64) << self.m
    }
}

/// A channel: its rate and the derived success / collision slot durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Transmission rate in bits per second.
    pub bandwidth: f64,
    pub t_s: f64,
    pub t_c: f64,
}

impl ChannelSpec {
    pub fn new(params: &SystemParams, bandwidth: f64) -> Result<Self> {
        derive_timing(params, bandwidth)
    }

    /// The larger of the two busy-slot costs.
    pub fn max_busy(&self) -> f64 {
        self.t_s.max(self.t_c)
    }
}

/// Per-node Poisson arrival rates in bits per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArrivalVector(Vec<f64>);

impl ArrivalVector {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        for (i, &l) in lambda.iter().enumerate() {
            if !(l.is_finite() && l >= 0.0) {
                return param(format!("arrival rate of node {i} must be finite and >= 0, got {l}"));
            }
        }
        Ok(ArrivalVector(lambda))
    }

    pub fn zeros(n: usize) -> Self {
        ArrivalVector(vec![0.0; n])
    }

    pub fn uniform(n: usize, rate: f64) -> Result<Self> {
        Self::new(vec![rate; n])
    }

    pub fn from_mbps(rates: &[f64]) -> Result<Self> {
        Self::new(rates.iter().map(|r| r * MBPS).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn with(&self, node: usize, rate: f64) -> Result<Self> {
        let mut v = self.0.clone();
        *v.get_mut(node).ok_or(Error::OutOfRange { index: node, len: self.0.len() })? = rate;
        Self::new(v)
    }
}

impl std::ops::Index<usize> for ArrivalVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Basic-access success and collision durations for a channel of the given rate.
pub fn derive_timing(params: &SystemParams, bandwidth: f64) -> Result<ChannelSpec> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return param(format!("channel bandwidth must be positive, got {bandwidth}"));
    }
    let airtime = params.payload_bits / bandwidth;
    let t_s = airtime
        + params.header_time
        + params.ack_time
        + params.difs
        + params.sifs
        + 2.0 * params.prop_delay;
    let t_c = airtime + params.header_time + params.difs + params.prop_delay;
    Ok(ChannelSpec { bandwidth, t_s, t_c })
}

/// Evaluates the average backoff length for any `p` in `[0, 1]`, including
/// the finite limit at `p = 1`.
pub(crate) fn wbar_unchecked(p: f64, w: u32, m: u32) -> f64 {
    let two_p = 2.0 * p;
    let mut geometric = 0.0;
    let mut term = 1.0;
    for _ in 0..m {
        geometric += term;
        term *= two_p;
    }
    // `term` is now (2p)^m
    0.5 * (w as f64 * ((1.0 - p) * geometric + term) + 1.0)
}

/// Average backoff length `W̄` (slots per attempt) at collision probability `p`.
pub fn avg_backoff_window(p: f64, params: &SystemParams) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain { what: "collision probability", value: p });
    }
    Ok(wbar_unchecked(p, params.w, params.m))
}

/// The saturated symmetric fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturatedPoint {
    pub tau: f64,
    pub p: f64,
}

impl SaturatedPoint {
    /// Max-norm residual of the two defining equations.
    pub fn residual(&self, params: &SystemParams, n: usize) -> f64 {
        let p = self.p;
        let denom = (1.0 - 2.0 * p) * (params.w as f64 + 1.0)
            + p * params.w as f64 * (1.0 - (2.0 * p).powi(params.m as i32));
        let tau_eq = 2.0 * (1.0 - 2.0 * p) / denom;
        // at p = 1/2 the closed form is 0/0; fall back to 1/W̄
        let tau_eq = if tau_eq.is_finite() { tau_eq } else { 1.0 / wbar_unchecked(p, params.w, params.m) };
        let p_eq = 1.0 - (1.0 - self.tau).powi(n as i32 - 1);
        (self.tau - tau_eq).abs().max((self.p - p_eq).abs())
    }
}

/// Solves the saturated pair `τ = 1/W̄(p)`, `p = 1 − (1 − τ)^(N−1)` by
/// bisection on `p`.
pub fn saturated_tau(params: &SystemParams, n: usize) -> Result<SaturatedPoint> {
    if n == 0 {
        return param("node count must be at least 1");
    }
    let tau_of = |p: f64| 1.0 / wbar_unchecked(p, params.w, params.m);
    let gap = |p: f64| p - (1.0 - (1.0 - tau_of(p)).powi(n as i32 - 1));
    if n == 1 {
        return Ok(SaturatedPoint { tau: tau_of(0.0), p: 0.0 });
    }
    // gap(0) <= 0 < gap(1) and gap is increasing since τ(p) decreases in p.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let p = 0.5 * (lo + hi);
    let tau = tau_of(p);
    Ok(SaturatedPoint { tau, p: 1.0 - (1.0 - tau).powi(n as i32 - 1) })
}
