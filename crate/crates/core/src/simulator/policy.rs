//! Channel-switching rules applied after a transmission outcome.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Static,
    /// Switch after success.
    Sas,
    /// Switch after collision, keeping the advanced stage and the redrawn timer.
    Sac,
    /// Draw the channel of each next packet from a fixed distribution.
    PacketAssign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Switch probability per backoff stage `0..=m` (SAS and SAC).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub switch_probs: Vec<f64>,
    /// Channel distribution of the next packet (packet assignment).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assign_dist: Vec<f64>,
}

impl PolicySpec {
    pub fn fixed() -> Self {
        PolicySpec { kind: PolicyKind::Static, switch_probs: Vec::new(), assign_dist: Vec::new() }
    }

    pub fn sas(switch_probs: Vec<f64>) -> Self {
        PolicySpec { kind: PolicyKind::Sas, switch_probs, assign_dist: Vec::new() }
    }

    pub fn sac(switch_probs: Vec<f64>) -> Self {
        PolicySpec { kind: PolicyKind::Sac, switch_probs, assign_dist: Vec::new() }
    }

    pub fn packet_assign(assign_dist: Vec<f64>) -> Self {
        PolicySpec { kind: PolicyKind::PacketAssign, switch_probs: Vec::new(), assign_dist }
    }

    /// Same probability at every stage `0..=m`.
    pub fn constant_probs(p: f64, m: u32) -> Vec<f64> {
        vec![p; m as usize + 1]
    }

    /// `α_j = j/m` for `j = 0..=m` (all zero when `m = 0`).
    pub fn stage_ramp(m: u32) -> Vec<f64> {
        (0..=m).map(|j| if m == 0 { 0.0 } else { j as f64 / m as f64 }).collect()
    }

    pub fn validate(&self, channels: usize, max_stage: u32) -> Result<()> {
        match self.kind {
            PolicyKind::Static => Ok(()),
            PolicyKind::Sas | PolicyKind::Sac => {
                if self.switch_probs.len() != max_stage as usize + 1 {
                    return param(format!(
                        "switch_probs needs {} entries (stages 0..={max_stage}), got {}",
                        max_stage + 1,
                        self.switch_probs.len()
                    ));
                }
                if self.switch_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return param("switch probabilities must lie in [0, 1]");
                }
                Ok(())
            }
            PolicyKind::PacketAssign => {
                if self.assign_dist.len() != channels {
                    return param(format!("assign_dist needs {channels} entries, got {}", self.assign_dist.len()));
                }
                if self.assign_dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return param("assign_dist entries must be non-negative");
                }
                let s: f64 = self.assign_dist.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return param(format!("assign_dist sums to {s}, not 1"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxEvent {
    Success,
    Collision,
}

/// Observable state of one station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    /// Packets held, including the one in service.
    pub queue: u64,
    pub channel: usize,
    pub stage: u32,
    /// Remaining backoff slots.
    pub timer: u64,
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub channel: usize,
    pub stage: u32,
}

fn other_channel<R: Rng + ?Sized>(current: usize, channels: usize, rng: &mut R) -> usize {
    let r = rng.random_range(0..channels - 1);
    if r >= current {
        r + 1
    } else {
        r
    }
}

/// Channel and backoff stage after `event`. The stage follows the outcome
/// (reset on success, advanced and capped at `max_stage` on collision) and
/// switching draws on the stage at which the outcome happened.
pub fn apply_policy<R: Rng + ?Sized>(
    node: &NodeState,
    event: TxEvent,
    policy: &PolicySpec,
    channels: usize,
    max_stage: u32,
    rng: &mut R,
) -> PolicyDecision {
    let stage = match event {
        TxEvent::Success => 0,
        TxEvent::Collision => (node.stage + 1).min(max_stage),
    };
    let prob = |probs: &[f64]| probs.get(node.stage as usize).copied().unwrap_or(0.0);
    let channel = match (policy.kind, event) {
        _ if channels < 2 => node.channel,
        (PolicyKind::Sas, TxEvent::Success) | (PolicyKind::Sac, TxEvent::Collision) => {
            let p = prob(&policy.switch_probs);
            if p > 0.0 && rng.random::<f64>() < p {
                other_channel(node.channel, channels, rng)
            } else {
                node.channel
            }
        }
        (PolicyKind::PacketAssign, TxEvent::Success) => match WeightedIndex::new(&policy.assign_dist) {
            Ok(d) => d.sample(rng),
            Err(_) => node.channel,
        },
        _ => node.channel,
    };
    PolicyDecision { channel, stage }
}
