//! The decision process: observation tensors, reward composition, and the
//! slot-level simulator that ties world, channel, twin, and scheduler
//! together.

mod reward;
mod sim;
mod state;

pub use reward::{compute_reward, shape_reward, RewardBreakdown, RewardContext, RewardWeights};
pub use sim::{EpisodeLog, SimError, SimParams, Simulator, SlotRecord, StepInfo, StepOutcome};
pub use state::{build_s1, build_s2, navigation_target, select_service_target, StateTensor};

use serde::{Deserialize, Serialize};

/// Continuous per-slot flight decision: speed, vertical angle from the
/// z-axis, horizontal angle in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightAction {
    pub velocity: f64,
    pub psi_ver: f64,
    pub psi_hor: f64,
}

impl FlightAction {
    pub fn new(velocity: f64, psi_ver: f64, psi_hor: f64) -> Self {
        Self {
            velocity,
            psi_ver,
            psi_hor,
        }
    }

    /// Clamp into the feasible box `[0, v_max] x [0, pi] x [0, 2*pi]`.
    pub fn clamped(velocity: f64, psi_ver: f64, psi_hor: f64, v_max: f64) -> Self {
        Self {
            velocity: velocity.clamp(0.0, v_max),
            psi_ver: psi_ver.clamp(0.0, std::f64::consts::PI),
            psi_hor: psi_hor.clamp(0.0, 2.0 * std::f64::consts::PI),
        }
    }

    pub fn hold() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}
