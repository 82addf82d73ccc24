//! Slot-level episode simulator.
//!
//! Per slot: gate the action against the twin's knowledge, enforce true
//! geometry, move, sense, serve at most one user (TDMA relay), update the
//! coverage grid, and compose the reward. The twin's gate cancels actions it
//! predicts to be unsafe; moves it could not predict are blocked by the
//! physical check and counted as actual collisions, so the true position
//! never penetrates a building or leaves the mission volume.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{effective_rate, slot_data, ChannelError, ChannelModel};
use crate::scheduler::{anneal, AnnealParams, Schedule};
use crate::seeding::stream;
use crate::twin::{
    predict_next_position, safety_gate, MissionBounds, SafetyReason, TwinError, VirtualEnv,
};
use crate::world::{
    coverage_radius, line_of_sight, point_in_building, segment_intersects_box, sense,
    EnvironmentMap, GridGeometry, Vec3, WorldError, WorldGenConfig,
};

use super::reward::{compute_reward, RewardBreakdown, RewardContext, RewardWeights};
use super::state::{build_s1, build_s2, navigation_target, select_service_target, StateTensor};
use super::FlightAction;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step() called after the episode finished")]
    EpisodeOver,
    #[error("UAV start position is infeasible: {0}")]
    BadStart(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Runtime parameter bundle for one simulator instance.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub world: WorldGenConfig,
    pub grid: GridGeometry,
    pub uav_start: Vec3,
    pub max_flight_alt: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub max_slots: usize,
    pub v_max: f64,
    pub beta_sen: f64,
    pub beta_com: f64,
    pub channel: ChannelModel,
    pub weights: RewardWeights,
    pub anneal: AnnealParams,
    /// Accumulate sensed geometry across slots (digital twin on) or rebuild
    /// from the current slot's sensing only.
    pub dt_enabled: bool,
}

impl SimParams {
    pub fn delta_s(&self) -> f64 {
        self.delta1 + self.delta2 + self.delta3
    }

    pub fn bounds(&self) -> MissionBounds {
        MissionBounds {
            side_xy: self.world.side_xy,
            max_flight_alt: self.max_flight_alt,
        }
    }

    /// Non-fatal configuration hazards.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let step = self.v_max * self.delta_s();
        if let Ok(sense_radius) = coverage_radius(self.uav_start.z, self.beta_sen) {
            if step >= sense_radius {
                out.push(format!(
                    "per-slot displacement {step:.1} m reaches beyond the sensing radius \
                     {sense_radius:.1} m at the start altitude; unsensed obstacles may only be \
                     caught by the physical check"
                ));
            }
        }
        out
    }
}

/// Per-slot log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub position: Vec3,
    pub action: FlightAction,
    pub reward: f64,
    pub served_gu: Option<usize>,
    pub vetoed: bool,
}

/// Full episode trace plus mission statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EpisodeLog {
    pub slots: Vec<SlotRecord>,
    /// Completion slot; `None` when the horizon ran out first.
    pub t_f: Option<usize>,
    /// Per-user first-served slot, by user id.
    pub user_first_served: Vec<Option<usize>>,
    pub veto_count: usize,
    pub actual_collision_count: usize,
    /// Slots where the true position sat inside a building or outside the
    /// mission volume. The gate plus physical enforcement make this zero by
    /// construction; it is tracked against ground truth anyway.
    pub violation_count: usize,
    pub coverage_cells: usize,
    pub total_reward: f64,
}

impl EpisodeLog {
    pub fn served_count(&self) -> usize {
        self.user_first_served.iter().flatten().count()
    }

    /// Mission time in seconds: completion slot (or the horizon when
    /// incomplete) times the slot duration.
    pub fn mission_time_s(&self, delta_s: f64, max_slots: usize) -> f64 {
        self.t_f.unwrap_or(max_slots) as f64 * delta_s
    }

    /// Sum of per-user first-served slots times the slot duration (the
    /// objective in its per-user form); only meaningful when complete.
    pub fn sum_tk_s(&self, delta_s: f64) -> Option<f64> {
        let mut total = 0usize;
        for t in &self.user_first_served {
            total += (*t)?;
        }
        Some(total as f64 * delta_s)
    }
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub vetoed: bool,
    pub actual_collision: bool,
    pub served_gu: Option<usize>,
    pub newly_covered: usize,
    pub all_served: bool,
    pub position: Vec3,
    pub breakdown: RewardBreakdown,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: StateTensor,
    pub reward: f64,
    pub done: bool,
    /// Mission completed (as opposed to the horizon expiring).
    pub completed: bool,
    pub info: StepInfo,
}

pub struct Simulator {
    params: SimParams,
    env: EnvironmentMap,
    ve: VirtualEnv,
    uav: Vec3,
    slot: usize,
    schedule: Schedule,
    visited: Vec<bool>,
    done: bool,
    t_f: Option<usize>,
    rng_channel: ChaCha8Rng,
    log: EpisodeLog,
}

impl Simulator {
    /// Build a simulator on a fresh training layout for `episode`.
    pub fn train_episode(
        params: &SimParams,
        master_seed: u64,
        episode: u64,
    ) -> Result<Self, SimError> {
        let env = crate::twin::spawn_training_ve(
            &params.world,
            crate::seeding::derive_seed(master_seed, "train-env", episode),
        )?;
        Self::with_env(params, env, crate::seeding::derive_seed(master_seed, "episode", episode))
    }

    /// Build a simulator on a held-out deployment layout.
    pub fn deploy_episode(
        params: &SimParams,
        master_seed: u64,
        episode: u64,
    ) -> Result<Self, SimError> {
        let env = crate::twin::spawn_training_ve(
            &params.world,
            crate::seeding::derive_seed(master_seed, "eval-env", episode),
        )?;
        Self::with_env(
            params,
            env,
            crate::seeding::derive_seed(master_seed, "eval-episode", episode),
        )
    }

    /// Build a simulator on a provided map. `seed` drives scheduling and
    /// per-slot fading only.
    pub fn with_env(params: &SimParams, env: EnvironmentMap, seed: u64) -> Result<Self, SimError> {
        let bounds = params.bounds();
        if !bounds.contains(&params.uav_start) {
            return Err(SimError::BadStart(format!(
                "{:?} outside mission bounds",
                params.uav_start
            )));
        }
        if point_in_building(&env, &params.uav_start) {
            return Err(SimError::BadStart(format!(
                "{:?} inside a building",
                params.uav_start
            )));
        }
        let user_positions: Vec<Vec3> = env.users.iter().map(|u| u.position).collect();
        let mut anneal_rng = stream(seed, "anneal", 0);
        let outcome = anneal(&params.uav_start, &user_positions, &params.anneal, &mut anneal_rng);
        let mut sim = Self {
            params: params.clone(),
            ve: VirtualEnv::new(params.grid),
            env,
            uav: params.uav_start,
            slot: 0,
            schedule: outcome.schedule,
            visited: vec![false; params.grid.n_cells()],
            done: false,
            t_f: None,
            rng_channel: stream(seed, "channel", 0),
            log: EpisodeLog::default(),
        };
        // The UAV senses before its first move so the initial observation
        // carries whatever sits under the starting cone.
        let report = sense(&sim.env, &sim.uav, sim.params.beta_sen, &sim.params.grid, 0)?;
        sim.ve.apply_report(&report, &sim.uav, sim.params.beta_sen)?;
        sim.log.user_first_served = vec![None; sim.env.users.len()];
        Ok(sim)
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn uav_position(&self) -> Vec3 {
        self.uav
    }

    pub fn environment(&self) -> &EnvironmentMap {
        &self.env
    }

    pub fn virtual_env(&self) -> &VirtualEnv {
        &self.ve
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current_slot(&self) -> usize {
        self.slot
    }

    /// Current observation.
    pub fn state(&self) -> StateTensor {
        let s1 = build_s1(
            &self.env.users,
            &self.schedule,
            &self.uav,
            &self.params.grid,
            &self.params.weights,
            self.params.beta_com,
            self.env.max_alt,
        );
        let s2 = build_s2(
            &self.ve,
            &self.uav,
            &self.params.grid,
            self.params.beta_sen,
            self.env.max_alt,
        );
        StateTensor {
            rows: self.params.grid.rows,
            cols: self.params.grid.cols,
            s1: s1.into_iter().map(|v| v as f32).collect(),
            s2: s2.into_iter().map(|v| v as f32).collect(),
        }
    }

    /// Advance one slot.
    pub fn step(&mut self, action: FlightAction) -> Result<StepOutcome, SimError> {
        if self.done {
            return Err(SimError::EpisodeOver);
        }
        let t = self.slot + 1;
        let action = FlightAction::clamped(
            action.velocity,
            action.psi_ver,
            action.psi_hor,
            self.params.v_max,
        );
        let bounds = self.params.bounds();
        let delta_s = self.params.delta_s();

        let nav_before = navigation_target(&self.schedule, &self.env.users);
        let d_before =
            nav_before.map(|idx| self.uav.distance(&self.env.users[idx].position));

        // (1) Twin-side gate, then physical enforcement for anything the
        // twin could not know about.
        let verdict = safety_gate(&self.ve, None, &self.uav, &action, &bounds, delta_s);
        let mut vetoed = false;
        let mut actual_collision = false;
        if !verdict.is_safe() {
            vetoed = true;
            self.log.veto_count += 1;
            debug_assert!(verdict.reason() != SafetyReason::None);
        } else {
            let predicted = predict_next_position(&self.uav, &action, delta_s);
            let blocked = !bounds.contains(&predicted)
                || self
                    .env
                    .buildings
                    .iter()
                    .any(|b| segment_intersects_box(&self.uav, &predicted, b));
            if blocked {
                actual_collision = true;
                self.log.actual_collision_count += 1;
            } else {
                // (2) Execute the move.
                self.uav = predicted;
            }
        }
        let canceled = vetoed || actual_collision;
        let executed_velocity = if canceled { 0.0 } else { action.velocity };
        self.slot = t;
        if !bounds.contains(&self.uav) || point_in_building(&self.env, &self.uav) {
            self.log.violation_count += 1;
            debug_assert!(false, "true position violated C4/C5 at slot {t}");
        }

        // (3) Sense from the new position.
        if !self.params.dt_enabled {
            self.ve = VirtualEnv::new(self.params.grid);
        }
        let report = sense(&self.env, &self.uav, self.params.beta_sen, &self.params.grid, t)?;
        self.ve.apply_report(&report, &self.uav, self.params.beta_sen)?;

        // (4) Serve at most one user through the relay.
        let d_com = coverage_radius(self.uav.z, self.params.beta_com)?;
        let target = select_service_target(&self.schedule, &self.env.users, &self.uav, d_com);
        let mut serving_rate = None;
        if let Some(idx) = target {
            let d_bs = self.env.bs_position.distance(&self.uav);
            let bs_link = self.params.channel.bs_uav_link(d_bs, &mut self.rng_channel)?;
            let gu_pos = self.env.users[idx].position;
            let los = line_of_sight(&self.env, &self.uav, &gu_pos) == 1;
            let d_uk = self.uav.distance(&gu_pos);
            let gu_link = self
                .params
                .channel
                .uav_gu_link(d_uk, los, &mut self.rng_channel)?;
            let r_eff = effective_rate(bs_link.rate_bps, gu_link.rate_bps);
            let bits = slot_data(r_eff, self.params.delta2);
            self.env.users[idx].deliver(bits, t);
            if self.env.users[idx].served {
                self.log.user_first_served[idx] = self.env.users[idx].first_served_slot;
            }
            serving_rate = Some(gu_link.rate_bps);
        }

        // (5) Newly covered cells under the communication disc.
        let newly_covered = self.update_coverage(d_com);

        // (7) Termination: completion or horizon.
        let all_served = self.env.users.iter().all(|u| u.served);
        let completed = all_served && self.t_f.is_none();
        if completed {
            self.t_f = Some(t);
            self.log.t_f = Some(t);
        }
        if all_served || t >= self.params.max_slots {
            self.done = true;
        }

        // (6) Reward.
        let d_after = nav_before.map(|idx| self.uav.distance(&self.env.users[idx].position));
        let ctx = RewardContext {
            vetoed: canceled,
            velocity: executed_velocity,
            v_max: self.params.v_max,
            slot: t,
            serving_rate_bps: serving_rate,
            delta_distance: d_before.zip(d_after).map(|(b, a)| b - a),
            newly_covered,
            completed,
        };
        let breakdown = compute_reward(&ctx, &self.params.weights);
        self.log.total_reward += breakdown.total;
        self.log.slots.push(SlotRecord {
            slot: t,
            position: self.uav,
            action,
            reward: breakdown.total,
            served_gu: target,
            vetoed: canceled,
        });

        Ok(StepOutcome {
            state: self.state(),
            reward: breakdown.total,
            done: self.done,
            completed,
            info: StepInfo {
                vetoed,
                actual_collision,
                served_gu: target,
                newly_covered,
                all_served,
                position: self.uav,
                breakdown,
            },
        })
    }

    fn update_coverage(&mut self, d_com: f64) -> usize {
        let grid = &self.params.grid;
        let r2 = d_com * d_com;
        let r_lo = ((self.uav.x - d_com) / grid.cell_size).floor().max(0.0) as usize;
        let r_hi = (((self.uav.x + d_com) / grid.cell_size).ceil() as usize).min(grid.rows);
        let c_lo = ((self.uav.y - d_com) / grid.cell_size).floor().max(0.0) as usize;
        let c_hi = (((self.uav.y + d_com) / grid.cell_size).ceil() as usize).min(grid.cols);
        let mut fresh = 0;
        for row in r_lo..r_hi {
            for col in c_lo..c_hi {
                let (cx, cy) = grid.cell_center(row, col);
                let dx = cx - self.uav.x;
                let dy = cy - self.uav.y;
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let idx = row * grid.cols + col;
                if !self.visited[idx] {
                    self.visited[idx] = true;
                    fresh += 1;
                }
            }
        }
        self.log.coverage_cells += fresh;
        fresh
    }
}
