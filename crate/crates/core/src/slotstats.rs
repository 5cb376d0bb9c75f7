//! Conditional mean slot lengths seen by a tagged node, and the slot-time
//! utilization approximation `ρ̂̂` built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ChannelSpec, CollisionModel, SystemParams};

/// Effective durations of an idle, successful and colliding slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSlotCosts {
    pub idle: f64,
    pub success: f64,
    pub collision: f64,
}

/// Slot costs under the active collision model.
///
/// Under FACS a success slot absorbs the geometric run of immediate
/// re-attempts, and a collision slot absorbs two-node collision runs, with
/// the conditional window replaced by `W`.
pub fn effective_costs(params: &SystemParams, chan: &ChannelSpec) -> Result<EffectiveSlotCosts> {
    match params.collision_model {
        CollisionModel::Bianchi => Ok(EffectiveSlotCosts {
            idle: params.sigma,
            success: chan.t_s,
            collision: chan.t_c,
        }),
        CollisionModel::Facs => {
            if params.w < 2 {
                return Err(Error::Domain { what: "FACS slot costs (W >= 2)", value: params.w as f64 });
            }
            let w = params.w as f64;
            Ok(EffectiveSlotCosts {
                idle: params.sigma,
                success: chan.t_s / (1.0 - 1.0 / w),
                collision: chan.t_c / (1.0 - 1.0 / (w * w)) + 2.0 * chan.t_s / (w - 1.0 / w),
            })
        }
    }
}

/// Outcome probabilities of a slot under some conditioning event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcomes {
    pub idle: f64,
    pub success: f64,
    pub collision: f64,
}

impl SlotOutcomes {
    /// Folds independent transmitters into (idle, exactly-one) probabilities.
    fn from_attempts(taus: impl Iterator<Item = f64>) -> Self {
        let (mut idle, mut one) = (1.0, 0.0);
        for t in taus {
            one = one * (1.0 - t) + idle * t;
            idle *= 1.0 - t;
        }
        SlotOutcomes { idle, success: one, collision: (1.0 - idle - one).max(0.0) }
    }

    pub fn mean_length(&self, costs: &EffectiveSlotCosts) -> f64 {
        costs.idle * self.idle + costs.success * self.success + costs.collision * self.collision
    }
}

/// Outcomes of a slot in which node `i` does not transmit (only others act).
pub fn outcomes_node_silent(i: usize, tau: &[f64]) -> SlotOutcomes {
    SlotOutcomes::from_attempts(tau.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &t)| t))
}

/// Outcomes of a slot in which node `i` has a packet and attempts with `tau_q_i`.
pub fn outcomes_node_backlogged(i: usize, tau: &[f64], tau_q_i: f64) -> SlotOutcomes {
    SlotOutcomes::from_attempts(
        tau.iter().enumerate().map(|(j, &t)| if j == i { tau_q_i } else { t }),
    )
}

/// Mean slot lengths seen from node `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotLengths {
    /// `E[S_{i,Q}]`: node `i` has a non-empty queue at the slot start.
    pub e_s_q: f64,
    /// `E[S_{i,Q̄}]`: node `i` has an empty queue.
    pub e_s_qbar: f64,
    /// `E[S_{i,Q,T̄x}]`: non-empty queue, but `i` is counting down, not transmitting.
    pub e_s_q_notx: f64,
}

pub fn conditional_slot_lengths(
    i: usize,
    tau: &[f64],
    tau_q_i: f64,
    costs: &EffectiveSlotCosts,
) -> Result<SlotLengths> {
    if i >= tau.len() {
        return Err(Error::OutOfRange { index: i, len: tau.len() });
    }
    for &t in tau {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::Domain { what: "attempt probability", value: t });
        }
    }
    if !(tau_q_i > 0.0 && tau_q_i <= 1.0) {
        return Err(Error::Domain { what: "conditional attempt probability", value: tau_q_i });
    }
    Ok(slot_lengths_unchecked(i, tau, tau_q_i, costs))
}

pub(crate) fn slot_lengths_unchecked(
    i: usize,
    tau: &[f64],
    tau_q_i: f64,
    costs: &EffectiveSlotCosts,
) -> SlotLengths {
    let silent = outcomes_node_silent(i, tau).mean_length(costs);
    let backlogged = outcomes_node_backlogged(i, tau, tau_q_i).mean_length(costs);
    // With i silent the others' activity is the same whether its queue is
    // empty or counting down, so the two silent conditionings coincide.
    SlotLengths { e_s_q: backlogged, e_s_qbar: silent, e_s_q_notx: silent }
}

/// `ρ̂̂ = ρ E[S_Q̄] / (ρ E[S_Q̄] + (1 − ρ) E[S_Q])`, clamped to `[0, 1]`.
pub fn rho_hat_hat(rho: f64, slots: &SlotLengths) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    if rho >= 1.0 {
        return 1.0;
    }
    let busy = rho * slots.e_s_qbar;
    (busy / (busy + (1.0 - rho) * slots.e_s_q)).clamp(0.0, 1.0)
}
