//! Multi-component reward with sigmoid shaping.
//!
//! Six per-slot components (collision, low velocity, elapsed time, service
//! rate, progress toward the navigation target, newly covered area) are
//! summed and squashed into `(-1, 1)`; the completion bonus is added
//! unsquashed on the final slot only.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Collision penalty for canceled actions.
    pub w1: f64,
    /// Low-velocity penalty.
    pub w2: f64,
    /// Per-slot time penalty factor.
    pub w3: f64,
    /// Service-rate weight (rate in Mbit/s).
    pub w4: f64,
    pub b4: f64,
    /// Large distance-change weight.
    pub w51: f64,
    /// Small distance-change weight; must be below `w51`.
    pub w52: f64,
    /// Exploration weight.
    pub w6: f64,
    /// Completion bonus base.
    pub w7: f64,
    /// Velocity threshold as a fraction of `v_max`.
    pub j_vr: f64,
    /// Distance-change threshold, meters.
    pub j_dr: f64,
    /// Attractive-potential range, meters.
    pub j_dp: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w1: 100.0,
            w2: 3.0,
            w3: 0.01,
            w4: 2.0,
            b4: 1.0,
            w51: 3.0,
            w52: 1.0,
            w6: 0.5,
            w7: 500.0,
            j_vr: 0.6,
            j_dr: 20.0,
            j_dp: 50.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.w51 > self.w52 && self.w52 > 0.0) {
            return Err(format!(
                "reward.w51 ({}) must exceed reward.w52 ({}) > 0",
                self.w51, self.w52
            ));
        }
        if !(self.j_vr > 0.0 && self.j_vr <= 1.0) {
            return Err(format!("reward.j_vr ({}) must lie in (0, 1]", self.j_vr));
        }
        for (name, v) in [
            ("w1", self.w1),
            ("w2", self.w2),
            ("w3", self.w3),
            ("w4", self.w4),
            ("b4", self.b4),
            ("w6", self.w6),
            ("w7", self.w7),
            ("j_dr", self.j_dr),
            ("j_dp", self.j_dp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("reward.{name} ({v}) must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Everything one slot contributes to its reward.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext {
    /// The action was canceled (twin veto or physical block) and the UAV
    /// held position.
    pub vetoed: bool,
    /// Executed velocity; zero when held.
    pub velocity: f64,
    pub v_max: f64,
    /// Current slot index, 1-based.
    pub slot: usize,
    /// UAV-GU rate in bit/s when a user was served this slot.
    pub serving_rate_bps: Option<f64>,
    /// Distance change to the navigation target, previous minus current
    /// (positive = approaching); absent when every user is already served.
    pub delta_distance: Option<f64>,
    /// Grid cells newly covered by the communication disc this slot.
    pub newly_covered: usize,
    /// This slot completed the mission.
    pub completed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r6: f64,
    pub r7: f64,
    /// Sum of r1..r6 before shaping.
    pub r_s: f64,
    /// `g(r_s)`, inside (-1, 1).
    pub shaped: f64,
    pub total: f64,
}

/// Sigmoid shaping `g(x) = 2 / (1 + e^-x) - 1`; odd, `g(0) = 0` exactly.
///
/// The mathematical range is the open interval (-1, 1); for |x| large
/// enough that f64 rounds the sigmoid to its asymptote, the result is
/// pulled one step inside so the strict bound survives in floating point.
pub fn shape_reward(x: f64) -> f64 {
    const LIMIT: f64 = 1.0 - f64::EPSILON;
    (2.0 / (1.0 + (-x).exp()) - 1.0).clamp(-LIMIT, LIMIT)
}

pub fn compute_reward(ctx: &RewardContext, w: &RewardWeights) -> RewardBreakdown {
    let r1 = if ctx.vetoed { -w.w1 } else { 0.0 };
    let r2 = if ctx.velocity < w.j_vr * ctx.v_max {
        -w.w2
    } else {
        0.0
    };
    let r3 = -w.w3 * ctx.slot as f64;
    let r4 = match ctx.serving_rate_bps {
        Some(rate) => w.w4 * (rate / 1.0e6) + w.b4,
        None => 0.0,
    };
    let r5 = match ctx.delta_distance {
        Some(dd) if dd > w.j_dr => w.w51 * dd.abs(),
        Some(dd) if dd >= -w.j_dr => w.w52 * dd.abs(),
        Some(dd) => -w.w51 * dd.abs(),
        None => 0.0,
    };
    let r6 = if ctx.newly_covered > 0 {
        w.w6 * ctx.newly_covered as f64
    } else {
        -w.w6
    };
    let r7 = if ctx.completed {
        w.w7 - ctx.slot as f64
    } else {
        0.0
    };
    let r_s = r1 + r2 + r3 + r4 + r5 + r6;
    let shaped = shape_reward(r_s);
    RewardBreakdown {
        r1,
        r2,
        r3,
        r4,
        r5,
        r6,
        r7,
        r_s,
        shaped,
        total: shaped + r7,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet_ctx() -> RewardContext {
        RewardContext {
            vetoed: false,
            velocity: 40.0,
            v_max: 40.0,
            slot: 0,
            serving_rate_bps: None,
            delta_distance: None,
            newly_covered: 1,
            completed: false,
        }
    }

    #[test]
    fn shaping_is_odd_and_bounded() {
        assert_eq!(shape_reward(0.0), 0.0);
        for x in [-500.0, -3.0, -0.1, 0.1, 3.0, 500.0] {
            let g = shape_reward(x);
            assert!((-1.0..1.0).contains(&g), "g({x}) = {g}");
            assert_relative_eq!(shape_reward(-x), -g, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_components_give_zero_reward() {
        // All components zero requires ΔS > 0 balanced away; craft directly.
        let w = RewardWeights {
            w6: 0.0,
            w3: 0.0,
            ..Default::default()
        };
        let ctx = quiet_ctx();
        let r = compute_reward(&ctx, &w);
        assert_eq!(r.r_s, 0.0);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn distance_branches() {
        let w = RewardWeights::default();
        let mut ctx = quiet_ctx();
        ctx.delta_distance = Some(25.0);
        assert_relative_eq!(compute_reward(&ctx, &w).r5, 75.0);
        ctx.delta_distance = Some(10.0);
        assert_relative_eq!(compute_reward(&ctx, &w).r5, 10.0);
        ctx.delta_distance = Some(-10.0);
        assert_relative_eq!(compute_reward(&ctx, &w).r5, 10.0);
        ctx.delta_distance = Some(-25.0);
        assert_relative_eq!(compute_reward(&ctx, &w).r5, -75.0);
        ctx.delta_distance = None;
        assert_eq!(compute_reward(&ctx, &w).r5, 0.0);
    }

    #[test]
    fn completion_bonus_added_outside_shaping() {
        let w = RewardWeights::default();
        let mut ctx = quiet_ctx();
        ctx.completed = true;
        ctx.slot = 100;
        let r = compute_reward(&ctx, &w);
        assert_eq!(r.r7, 400.0);
        assert_relative_eq!(r.total, r.shaped + 400.0);
        assert!((r.shaped).abs() < 1.0);
    }

    #[test]
    fn veto_velocity_time_service_components()  {
        let w = RewardWeights::default();
        let mut ctx = quiet_ctx();
        ctx.vetoed = true;
        ctx.velocity = 0.0;
        ctx.slot = 7;
        ctx.serving_rate_bps = Some(2.0e7);
        ctx.newly_covered = 0;
        let r = compute_reward(&ctx, &w);
        assert_eq!(r.r1, -100.0);
        assert_eq!(r.r2, -3.0); // a held slot still pays the velocity penalty
        assert_relative_eq!(r.r3, -0.07);
        assert_relative_eq!(r.r4, 2.0 * 20.0 + 1.0);
        assert_eq!(r.r6, -0.5);
    }

    #[test]
    fn weight_validation() {
        assert!(RewardWeights::default().validate().is_ok());
        let bad = RewardWeights {
            w51: 1.0,
            w52: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().unwrap_err().contains("w51"));
    }
}
