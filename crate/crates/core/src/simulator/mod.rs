//! Discrete-event simulation of DCF stations sharing one or more channels.

mod engine;
pub mod policy;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::params::{ChannelSpec, SystemParams};
pub use policy::{apply_policy, NodeState, PolicyDecision, PolicyKind, PolicySpec, TxEvent};

/// Name of the generator recorded in every report.
pub const RNG_NAME: &str = "ChaCha8Rng";

/// Default instability threshold on the backlog ratio.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Default population sampling period (seconds).
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    /// Arrival rate (bits/s).
    pub lambda: f64,
    pub policy: PolicySpec,
    pub initial_channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: SystemParams,
    pub channels: Vec<ChannelSpec>,
    pub nodes: Vec<NodeConfig>,
    /// Simulated horizon (seconds).
    pub t_f: f64,
    pub seed: u64,
    pub alpha_threshold: f64,
    pub sample_interval: f64,
    #[serde(default)]
    pub record_series: bool,
}

impl SimConfig {
    /// Static single-channel setup with the given per-node rates.
    pub fn single_channel(params: SystemParams, chan: ChannelSpec, lambdas: &[f64], t_f: f64, seed: u64) -> Self {
        SimConfig {
            params,
            channels: vec![chan],
            nodes: lambdas
                .iter()
                .map(|&lambda| NodeConfig { lambda, policy: PolicySpec::fixed(), initial_channel: 0 })
                .collect(),
            t_f,
            seed,
            alpha_threshold: DEFAULT_ALPHA,
            sample_interval: DEFAULT_SAMPLE_INTERVAL,
            record_series: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.channels.is_empty() {
            return param("at least one channel is required");
        }
        if self.nodes.is_empty() {
            return param("at least one node is required");
        }
        if !(self.t_f.is_finite() && self.t_f > 0.0) {
            return param(format!("t_f must be positive, got {}", self.t_f));
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold < 1.0) {
            return param(format!("alpha_threshold must lie in (0, 1), got {}", self.alpha_threshold));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return param(format!("sample_interval must be positive, got {}", self.sample_interval));
        }
        for c in &self.channels {
            if !(c.t_s > 0.0 && c.t_c > 0.0 && self.params.sigma < c.t_s.min(c.t_c)) {
                return param("every channel needs sigma < min(t_s, t_c)");
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.lambda.is_finite() && n.lambda >= 0.0) {
                return param(format!("node {i} has invalid arrival rate {}", n.lambda));
            }
            if n.initial_channel >= self.channels.len() {
                return Err(Error::OutOfRange { index: n.initial_channel, len: self.channels.len() });
            }
            n.policy.validate(self.channels.len(), self.params.m)?;
        }
        Ok(())
    }
}

/// Per-sample time series, recorded when `record_series` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSeries {
    pub times: Vec<f64>,
    /// `[sample][channel]` node counts.
    pub population: Vec<Vec<u32>>,
    /// `[sample][node]` cumulative successful packets.
    pub cumulative_successes: Vec<Vec<u64>>,
}

/// Per-channel slot tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTally {
    pub idle_slots: u64,
    pub success_slots: u64,
    pub collision_slots: u64,
    /// Sum of the durations of every slot started before the horizon.
    pub elapsed: f64,
}

/// Per-node matrices are indexed `[node][channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub rng: String,
    pub t_f: f64,
    /// Delivered bits per second.
    pub throughput: Vec<f64>,
    /// Packets waiting behind the head-of-line packet at the horizon.
    pub backlog: Vec<u64>,
    pub in_service: Vec<bool>,
    pub arrivals: Vec<u64>,
    pub successes: Vec<Vec<u64>>,
    pub collisions: Vec<Vec<u64>>,
    pub attempts: Vec<Vec<u64>>,
    /// Channel slots begun while the node was on the channel.
    pub slots_total: Vec<Vec<u64>>,
    /// Of those, slots begun while the node had a packet in service there.
    pub slots_busy: Vec<Vec<u64>>,
    /// Time with a non-empty queue (seconds).
    pub busy_time: Vec<f64>,
    pub channel_tally: Vec<ChannelTally>,
    /// `[channel][count]`: how often `count` nodes were found on the channel.
    pub population_histogram: Vec<Vec<u64>>,
    pub samples: u64,
    /// Attempts per channel slot.
    pub empirical_tau: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SimSeries>,
}

impl SimReport {
    /// Fraction of time with a non-empty queue.
    pub fn time_fraction_busy(&self, node: usize) -> f64 {
        self.busy_time[node] / self.t_f
    }

    /// Fraction of channel slots, over all channels, begun with a packet in service.
    pub fn slot_fraction_busy(&self, node: usize) -> f64 {
        let total: u64 = self.slots_total[node].iter().sum();
        let busy: u64 = self.slots_busy[node].iter().sum();
        if total == 0 {
            0.0
        } else {
            busy as f64 / total as f64
        }
    }

    pub fn mean_population(&self, channel: usize) -> Result<f64> {
        let h = population_histogram(self, channel)?;
        let n: u64 = h.iter().sum();
        if n == 0 {
            return Ok(0.0);
        }
        Ok(h.iter().enumerate().map(|(c, &k)| c as f64 * k as f64).sum::<f64>() / n as f64)
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    engine::run(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMargin {
    pub throughput_deficit: bool,
    /// Queued bits behind the head-of-line packet at the horizon over `λ T_f`;
    /// absent for silent nodes.
    pub backlog_ratio: Option<f64>,
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityOutcome {
    pub unstable: bool,
    pub margins: Vec<NodeMargin>,
}

/// A run is unstable when some node both under-delivers and has more than
/// `α λ T_f` bits queued behind its head-of-line packet at the horizon. Nodes without traffic are skipped.
pub fn classify_stability(report: &SimReport, config: &SimConfig) -> Result<StabilityOutcome> {
    if report.throughput.len() != config.nodes.len() {
        return param("report and config disagree on the node count");
    }
    let pb = config.params.payload_bits;
    let margins: Vec<NodeMargin> = config
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if n.lambda == 0.0 {
                return NodeMargin { throughput_deficit: false, backlog_ratio: None, unstable: false };
            }
            let ratio = report.backlog[i] as f64 * pb / (n.lambda * config.t_f);
            let deficit = report.throughput[i] < n.lambda;
            NodeMargin { throughput_deficit: deficit, backlog_ratio: Some(ratio), unstable: deficit && ratio > config.alpha_threshold }
        })
        .collect();
    Ok(StabilityOutcome { unstable: margins.iter().any(|m| m.unstable), margins })
}

pub fn population_histogram(report: &SimReport, channel: usize) -> Result<&[u64]> {
    report
        .population_histogram
        .get(channel)
        .map(Vec::as_slice)
        .ok_or(Error::OutOfRange { index: channel, len: report.population_histogram.len() })
}
