//! TD3/DDPG update rules and the episode training loop.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{FlightAction, SimError, SimParams, Simulator, StateTensor};
use crate::neural::{
    ActorArch, AdamState, CriticArch, NetSpec, NetworkParams, NeuralError,
};
use crate::seeding::stream;
use crate::world::Vec3;

/// Pre-tanh magnitude beyond which the saturation penalty engages.
const PRE_TANH_KNEE: f64 = 1.5;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("batch of {got} transitions, expected {want}")]
    ShortBatch { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Td3,
    Ddpg,
}

impl Algorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::Td3 => "td3",
            Algorithm::Ddpg => "ddpg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3Hyper {
    pub gamma: f64,
    pub tau: f64,
    /// Actor and target networks update once per this many critic updates.
    pub policy_delay: usize,
    pub batch: usize,
    pub buffer_capacity: usize,
    /// Exploration noise std in normalized action units.
    pub explore_sigma: f64,
    /// Target-smoothing noise std in normalized action units.
    pub target_sigma: f64,
    /// Clip bound on the smoothing noise.
    pub target_clip: f64,
    pub lr: f64,
    pub max_episodes: usize,
    /// Slots driven by scripted exploration before the policy (and any
    /// updates) take over; the usual off-policy bootstrap.
    pub warmup_random_slots: usize,
    /// Exploration noise std at the final episode; sigma interpolates
    /// linearly from `explore_sigma` across training. Equal values (the
    /// default) keep it constant.
    pub explore_sigma_final: f64,
    /// Coefficient of a hinge penalty on pre-tanh head outputs beyond
    /// |u| = 1.5 in the actor objective; keeps the squashed heads out of
    /// their flat saturation regions without touching the useful range.
    /// Zero disables it.
    pub actor_pre_tanh_reg: f64,
}

impl Default for Td3Hyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            batch: 256,
            buffer_capacity: 300_000,
            explore_sigma: 0.1,
            target_sigma: 0.2,
            target_clip: 0.5,
            lr: 1.0e-4,
            max_episodes: 2000,
            warmup_random_slots: 0,
            explore_sigma_final: 0.1,
            actor_pre_tanh_reg: 0.0,
        }
    }
}

impl Td3Hyper {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("td3.gamma ({}) must lie in (0, 1)", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("td3.tau ({}) must lie in (0, 1]", self.tau));
        }
        if self.policy_delay == 0 {
            return Err("td3.policy_delay must be at least 1".into());
        }
        if self.batch == 0 || self.buffer_capacity < self.batch {
            return Err(format!(
                "td3.batch ({}) must be positive and fit the buffer ({})",
                self.batch, self.buffer_capacity
            ));
        }
        for (name, v) in [
            ("explore_sigma", self.explore_sigma),
            ("explore_sigma_final", self.explore_sigma_final),
            ("target_sigma", self.target_sigma),
            ("target_clip", self.target_clip),
            ("lr", self.lr),
            ("actor_pre_tanh_reg", self.actor_pre_tanh_reg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("td3.{name} ({v}) must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Map a normalized action to the physical bounds
/// `[0, v_max] x [0, pi] x [0, 2*pi]`.
pub fn physical_action(a_norm: &[f64; 3], v_max: f64) -> FlightAction {
    FlightAction::new(
        (a_norm[0] + 1.0) / 2.0 * v_max,
        (a_norm[1] + 1.0) / 2.0 * std::f64::consts::PI,
        (a_norm[2] + 1.0) / 2.0 * (2.0 * std::f64::consts::PI),
    )
}

/// Clipped double-Q bootstrap target.
pub fn target_value(r: f64, done: bool, gamma: f64, q1: f64, q2: f64) -> f64 {
    if done {
        r
    } else {
        r + gamma * q1.min(q2)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub did_update: bool,
}

use crate::agent::{ReplayBuffer, Transition};

/// Actor, critics, their targets, and the optimizers.
pub struct Td3Agent {
    pub algorithm: Algorithm,
    pub hyper: Td3Hyper,
    actor_arch: ActorArch,
    critic_arch: CriticArch,
    pub actor: NetworkParams,
    pub actor_target: NetworkParams,
    pub critic1: NetworkParams,
    pub critic1_target: NetworkParams,
    pub critic2: Option<NetworkParams>,
    pub critic2_target: Option<NetworkParams>,
    adam_actor: AdamState,
    adam_critic1: AdamState,
    adam_critic2: Option<AdamState>,
    critic_updates: u64,
    actor_updates: u64,
    smoothing_draws: u64,
    v_max: f64,
}

impl Td3Agent {
    pub fn new(
        spec: &NetSpec,
        grid: (usize, usize),
        hyper: Td3Hyper,
        algorithm: Algorithm,
        v_max: f64,
        init_rng: &mut ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        let (actor_arch, actor) = ActorArch::build(spec, grid, init_rng)?;
        let (critic_arch, critic1) = CriticArch::build(spec, grid, 3, init_rng)?;
        let critic2 = match algorithm {
            Algorithm::Td3 => Some(CriticArch::build(spec, grid, 3, init_rng)?.1),
            Algorithm::Ddpg => None,
        };
        let adam_actor = AdamState::new(actor.len(), hyper.lr);
        let adam_critic1 = AdamState::new(critic1.len(), hyper.lr);
        let adam_critic2 = critic2.as_ref().map(|c| AdamState::new(c.len(), hyper.lr));
        Ok(Self {
            algorithm,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_arch,
            critic_arch,
            adam_actor,
            adam_critic1,
            adam_critic2,
            critic_updates: 0,
            actor_updates: 0,
            smoothing_draws: 0,
            hyper,
            v_max,
        })
    }

    pub fn critic_update_count(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_update_count(&self) -> u64 {
        self.actor_updates
    }

    pub fn smoothing_draw_count(&self) -> u64 {
        self.smoothing_draws
    }

    pub fn critic_count(&self) -> usize {
        1 + self.critic2.is_some() as usize
    }

    pub fn actor_arch(&self) -> &ActorArch {
        &self.actor_arch
    }

    /// Policy action for a state: clipped noisy normalized action plus its
    /// physical mapping.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &StateTensor,
        sigma: f64,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<([f64; 3], FlightAction), AgentError> {
        let s1 = state.s1_f64();
        let s2 = state.s2_f64();
        let (mut a, _) = self.actor_arch.forward(&self.actor, &s1, &s2)?;
        if !deterministic && sigma > 0.0 {
            for v in &mut a {
                let eps: f64 = StandardNormal.sample(rng);
                *v += sigma * eps;
            }
        }
        for v in &mut a {
            *v = v.clamp(-1.0, 1.0);
        }
        Ok((a, physical_action(&a, self.v_max)))
    }

    /// First critic's value for a state-action pair (diagnostics and
    /// tests).
    pub fn critic_q1(&self, state: &StateTensor, action: &[f64; 3]) -> Result<f64, AgentError> {
        let (q, _) = self.critic_arch.forward(
            &self.critic1,
            &state.s1_f64(),
            &state.s2_f64(),
            action,
        )?;
        Ok(q)
    }

    /// Smoothed target action (TD3 path): clipped noise added to the target
    /// policy output, then clipped to the action box.
    pub fn smoothed_target_action<R: Rng + ?Sized>(
        &mut self,
        s1: &[f64],
        s2: &[f64],
        rng: &mut R,
    ) -> Result<[f64; 3], AgentError> {
        self.smoothing_draws += 1;
        let (mut a, _) = self.actor_arch.forward(&self.actor_target, s1, s2)?;
        for v in &mut a {
            let eps: f64 = StandardNormal.sample(rng);
            let noise = (self.hyper.target_sigma * eps)
                .clamp(-self.hyper.target_clip, self.hyper.target_clip);
            *v = (*v + noise).clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// One gradient step on every network that is due, per the sampled
    /// minibatch. No-op until the buffer holds one full batch.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
    ) -> Result<UpdateStats, AgentError> {
        if buffer.len() < self.hyper.batch {
            return Ok(UpdateStats::default());
        }
        let batch = self.hyper.batch;
        let indices = buffer.sample_indices(batch, rng);

        // Decode states once per sample.
        struct Decoded {
            s1: Vec<f64>,
            s2: Vec<f64>,
            n1: Vec<f64>,
            n2: Vec<f64>,
            a: [f64; 3],
            r: f64,
            done: bool,
        }
        let decoded: Vec<Decoded> = indices
            .iter()
            .map(|&i| {
                let t = buffer.get(i);
                Decoded {
                    s1: t.s.s1_f64(),
                    s2: t.s.s2_f64(),
                    n1: t.s_next.s1_f64(),
                    n2: t.s_next.s2_f64(),
                    a: t.a,
                    r: t.r,
                    done: t.done,
                }
            })
            .collect();

        // Bootstrap targets from the target networks.
        let mut targets = Vec::with_capacity(batch);
        for d in &decoded {
            let a_next = match self.algorithm {
                Algorithm::Td3 => self.smoothed_target_action(&d.n1, &d.n2, rng)?,
                Algorithm::Ddpg => {
                    let (a, _) = self.actor_arch.forward(&self.actor_target, &d.n1, &d.n2)?;
                    a
                }
            };
            let (q1, _) = self
                .critic_arch
                .forward(&self.critic1_target, &d.n1, &d.n2, &a_next)?;
            let q2 = match &self.critic2_target {
                Some(c2t) => self.critic_arch.forward(c2t, &d.n1, &d.n2, &a_next)?.0,
                None => q1,
            };
            targets.push(target_value(d.r, d.done, self.hyper.gamma, q1, q2));
        }

        // Critic regression toward the targets.
        let mut grads1 = vec![0.0; self.critic1.len()];
        let mut loss1 = 0.0;
        for (d, &y) in decoded.iter().zip(targets.iter()) {
            let (q, tape) = self.critic_arch.forward(&self.critic1, &d.s1, &d.s2, &d.a)?;
            let residual = q - y;
            loss1 += residual * residual;
            let upstream = 2.0 * residual / batch as f64;
            self.critic_arch
                .backward(&self.critic1, &tape, upstream, &mut grads1);
        }
        loss1 /= batch as f64;
        self.adam_critic1.apply(&mut self.critic1, &grads1);

        let mut loss2 = None;
        if let Some(critic2) = self.critic2.as_mut() {
            let mut grads2 = vec![0.0; critic2.len()];
            let mut l2 = 0.0;
            for (d, &y) in decoded.iter().zip(targets.iter()) {
                let (q, tape) = self.critic_arch.forward(critic2, &d.s1, &d.s2, &d.a)?;
                let residual = q - y;
                l2 += residual * residual;
                let upstream = 2.0 * residual / batch as f64;
                self.critic_arch.backward(critic2, &tape, upstream, &mut grads2);
            }
            l2 /= batch as f64;
            self.adam_critic2
                .as_mut()
                .expect("critic2 implies its optimizer")
                .apply(critic2, &grads2);
            loss2 = Some(l2);
        }
        self.critic_updates += 1;

        // Delayed policy and target updates.
        let mut actor_objective = None;
        if self.critic_updates % self.hyper.policy_delay as u64 == 0 {
            let mut grads = vec![0.0; self.actor.len()];
            let mut objective = 0.0;
            let reg = self.hyper.actor_pre_tanh_reg;
            for d in &decoded {
                let (a_pi, actor_tape) = self.actor_arch.forward(&self.actor, &d.s1, &d.s2)?;
                let (q, critic_tape) =
                    self.critic_arch.forward(&self.critic1, &d.s1, &d.s2, &a_pi)?;
                objective += q;
                // Ascent on mean Q: chain d(-Q)/da through the actor. The
                // optional pre-tanh penalty descends directly on the raw
                // head outputs.
                let mut scratch = vec![0.0; self.critic1.len()];
                let d_action =
                    self.critic_arch
                        .backward(&self.critic1, &critic_tape, 1.0, &mut scratch);
                let dout = [
                    -d_action[0] / batch as f64,
                    -d_action[1] / batch as f64,
                    -d_action[2] / batch as f64,
                ];
                let raw = actor_tape.raw_outputs();
                let hinge = |u: f64| -> f64 {
                    let excess = (u.abs() - PRE_TANH_KNEE).max(0.0);
                    2.0 * excess * u.signum()
                };
                let d_raw = [
                    reg * hinge(raw[0]) / batch as f64,
                    reg * hinge(raw[1]) / batch as f64,
                    reg * hinge(raw[2]) / batch as f64,
                ];
                self.actor_arch
                    .backward_raw(&self.actor, &actor_tape, dout, d_raw, &mut grads);
            }
            objective /= batch as f64;
            self.adam_actor.apply(&mut self.actor, &grads);
            self.actor_updates += 1;
            actor_objective = Some(objective);

            self.actor_target.soft_update_from(&self.actor, self.hyper.tau);
            self.critic1_target
                .soft_update_from(&self.critic1, self.hyper.tau);
            if let (Some(c2), Some(c2t)) = (&self.critic2, self.critic2_target.as_mut()) {
                c2t.soft_update_from(c2, self.hyper.tau);
            }
        }

        Ok(UpdateStats {
            critic1_loss: loss1,
            critic2_loss: loss2,
            actor_objective,
            did_update: true,
        })
    }
}

/// Per-episode training statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub total_reward: f64,
    pub served: usize,
    pub vetoes: usize,
    pub collisions: usize,
    /// Ground-truth boundary/building violations (zero by construction).
    pub violations: usize,
    /// Completion slot, or the horizon if unfinished.
    pub t_f: usize,
    pub completed: bool,
    pub slots: usize,
    pub wall_ms: u64,
}

pub struct TrainResult {
    pub agent: Td3Agent,
    pub stats: Vec<EpisodeStat>,
}

/// Full training loop: fresh layout per episode, exploration noise on the
/// online policy, one update attempt per slot.
pub fn train(
    params: &SimParams,
    spec: &NetSpec,
    hyper: &Td3Hyper,
    algorithm: Algorithm,
    master_seed: u64,
    progress: Option<&mut dyn FnMut(&EpisodeStat)>,
) -> Result<TrainResult, AgentError> {
    let mut init_rng = stream(master_seed, "net-init", 0);
    let grid = (params.grid.rows, params.grid.cols);
    let agent = Td3Agent::new(
        spec,
        grid,
        hyper.clone(),
        algorithm,
        params.v_max,
        &mut init_rng,
    )?;
    let end = hyper.max_episodes;
    train_from(agent, params, master_seed, 0, end, progress)
}

/// Continue training an existing agent over `[start_episode, end_episode)`.
/// Exploration and update streams derive per episode, so a resumed run sees
/// the same per-episode noise a continuous run would (the replay buffer
/// itself starts empty on resume).
pub fn train_from(
    mut agent: Td3Agent,
    params: &SimParams,
    master_seed: u64,
    start_episode: usize,
    end_episode: usize,
    mut progress: Option<&mut dyn FnMut(&EpisodeStat)>,
) -> Result<TrainResult, AgentError> {
    let mut buffer = ReplayBuffer::new(agent.hyper.buffer_capacity);
    let mut stats = Vec::with_capacity(end_episode.saturating_sub(start_episode));
    let mut total_slots: usize = 0;
    for episode in start_episode..end_episode {
        let started = Instant::now();
        let mut explore_rng = stream(master_seed, "explore", episode as u64);
        let mut update_rng = stream(master_seed, "update", episode as u64);
        let mut sim = Simulator::train_episode(params, master_seed, episode as u64)?;
        let mut state = Arc::new(sim.state());
        // Linear exploration-noise schedule across the episode budget.
        let sigma = {
            let h = &agent.hyper;
            let span = (end_episode.max(1) - 1).max(1) as f64;
            let frac = (episode as f64 / span).min(1.0);
            h.explore_sigma + (h.explore_sigma_final - h.explore_sigma) * frac
        };
        let mut waypoint: Option<Vec3> = None;
        loop {
            let warming_up = total_slots < agent.hyper.warmup_random_slots;
            let (a_norm, action) = if warming_up {
                warmup_action(&mut waypoint, &sim, params, &mut explore_rng)
            } else {
                agent.act(&state, sigma, false, &mut explore_rng)?
            };
            let out = sim.step(action)?;
            total_slots += 1;
            let next = Arc::new(out.state);
            buffer.push(Transition {
                s: state.clone(),
                a: a_norm,
                r: out.reward,
                s_next: next.clone(),
                done: out.completed,
            });
            if !warming_up {
                agent.update(&buffer, &mut update_rng)?;
            }
            state = next;
            if out.done {
                break;
            }
        }
        let log = sim.log();
        let stat = EpisodeStat {
            episode,
            total_reward: log.total_reward,
            served: log.served_count(),
            vetoes: log.veto_count,
            collisions: log.actual_collision_count,
            violations: log.violation_count,
            t_f: log.t_f.unwrap_or(params.max_slots),
            completed: log.t_f.is_some(),
            slots: log.slots.len(),
            wall_ms: started.elapsed().as_millis() as u64,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&stat);
        }
        stats.push(stat);
    }
    Ok(TrainResult { agent, stats })
}

/// Scripted warmup behavior: mostly straight flight toward a random
/// waypoint (resampled on arrival or by chance), sometimes a uniformly
/// random action. Directed segments fill the replay buffer with the
/// approach-and-serve sequences pure random walks rarely produce.
fn warmup_action(
    waypoint: &mut Option<Vec3>,
    sim: &Simulator,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
) -> ([f64; 3], FlightAction) {
    if rng.gen_bool(0.2) {
        let a = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        return (a, physical_action(&a, params.v_max));
    }
    let pos = sim.uav_position();
    let step = params.v_max * params.delta_s();
    let need_new = match waypoint {
        Some(w) => pos.distance(w) < step || rng.gen_bool(0.05),
        None => true,
    };
    if need_new {
        let side = params.world.side_xy;
        *waypoint = Some(Vec3::new(
            rng.gen_range(0.05 * side..0.95 * side),
            rng.gen_range(0.05 * side..0.95 * side),
            rng.gen_range(0.3 * params.max_flight_alt..0.95 * params.max_flight_alt),
        ));
    }
    let w = waypoint.expect("waypoint just set");
    let dx = w.x - pos.x;
    let dy = w.y - pos.y;
    let dz = w.z - pos.z;
    let dist = (dx * dx + dy * dy + dz * dz).sqrt().max(1e-9);
    let v = (dist / params.delta_s()).min(params.v_max) * rng.gen_range(0.8..1.0);
    let psi_ver = (dz / dist).clamp(-1.0, 1.0).acos();
    let psi_hor = dy.atan2(dx).rem_euclid(2.0 * std::f64::consts::PI);
    let action = FlightAction::clamped(v, psi_ver, psi_hor, params.v_max);
    // Normalized form for the replay buffer (inverse of the affine map).
    let a = [
        (2.0 * action.velocity / params.v_max - 1.0).clamp(-1.0, 1.0),
        (2.0 * action.psi_ver / std::f64::consts::PI - 1.0).clamp(-1.0, 1.0),
        (action.psi_hor / std::f64::consts::PI - 1.0).clamp(-1.0, 1.0),
    ];
    (a, action)
}

/// Deterministic greedy rollout of a trained actor.
pub fn rollout_deterministic(
    sim: &mut Simulator,
    actor_arch: &ActorArch,
    actor: &NetworkParams,
    v_max: f64,
) -> Result<(), AgentError> {
    let mut state = sim.state();
    loop {
        let s1 = state.s1_f64();
        let s2 = state.s2_f64();
        let (a, _) = actor_arch.forward(actor, &s1, &s2)?;
        let action = physical_action(&a, v_max);
        let out = sim.step(action)?;
        state = out.state;
        if out.done {
            return Ok(());
        }
    }
}

/// Uniform-random policy rollout (baseline).
pub fn rollout_random<R: Rng + ?Sized>(
    sim: &mut Simulator,
    v_max: f64,
    rng: &mut R,
) -> Result<(), AgentError> {
    loop {
        let a = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let out = sim.step(physical_action(&a, v_max))?;
        if out.done {
            return Ok(());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn tiny_state() -> StateTensor {
        StateTensor {
            rows: 8,
            cols: 8,
            s1: vec![0.1; 64],
            s2: vec![0.0; 64],
        }
    }

    fn tiny_spec() -> NetSpec {
        NetSpec {
            branch: vec![crate::neural::ConvSpec {
                in_ch: 1,
                out_ch: 2,
                kernel: 3,
                stride: 2,
                pad: 1,
            }],
            fusion: vec![crate::neural::ConvSpec {
                in_ch: 4,
                out_ch: 4,
                kernel: 3,
                stride: 2,
                pad: 1,
            }],
            attn_reduction: 2,
            spatial_kernel: 3,
            shared_widths: vec![8],
            head_widths: vec![4],
        }
    }

    fn tiny_agent(algorithm: Algorithm) -> Td3Agent {
        let hyper = Td3Hyper {
            batch: 4,
            buffer_capacity: 64,
            max_episodes: 1,
            ..Default::default()
        };
        let mut rng = rng_from_seed(0);
        Td3Agent::new(&tiny_spec(), (8, 8), hyper, algorithm, 40.0, &mut rng).unwrap()
    }

    #[test]
    fn physical_action_bounds() {
        let lo = physical_action(&[-1.0, -1.0, -1.0], 40.0);
        assert_eq!((lo.velocity, lo.psi_ver, lo.psi_hor), (0.0, 0.0, 0.0));
        let hi = physical_action(&[1.0, 1.0, 1.0], 40.0);
        assert_relative_eq!(hi.velocity, 40.0);
        assert_relative_eq!(hi.psi_ver, std::f64::consts::PI);
        assert_relative_eq!(hi.psi_hor, 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn act_clips_noise() {
        let agent = tiny_agent(Algorithm::Td3);
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let (a, phys) = agent.act(&tiny_state(), 5.0, false, &mut rng).unwrap();
            for v in a {
                assert!((-1.0..=1.0).contains(&v));
            }
            assert!(phys.velocity <= 40.0 && phys.velocity >= 0.0);
        }
        // Deterministic mode ignores sigma.
        let (a1, _) = agent.act(&tiny_state(), 5.0, true, &mut rng).unwrap();
        let (a2, _) = agent.act(&tiny_state(), 5.0, true, &mut rng).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn target_value_cases() {
        assert_relative_eq!(target_value(0.5, false, 0.99, 2.0, 1.5), 1.985);
        assert_eq!(target_value(0.5, true, 0.99, 2.0, 1.5), 0.5);
        assert_relative_eq!(target_value(0.0, false, 0.9, 3.0, 3.0), 2.7);
        // Dominance: never above either single-critic bootstrap.
        let y = target_value(0.1, false, 0.99, 1.0, 4.0);
        assert!(y <= 0.1 + 0.99 * 1.0 + 1e-12);
        assert!(y <= 0.1 + 0.99 * 4.0 + 1e-12);
    }

    #[test]
    fn smoothing_respects_clip() {
        let mut agent = tiny_agent(Algorithm::Td3);
        let s = tiny_state();
        let s1 = s.s1_f64();
        let s2 = s.s2_f64();
        let (base, _) = agent
            .actor_arch
            .forward(&agent.actor_target, &s1, &s2)
            .unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let a = agent.smoothed_target_action(&s1, &s2, &mut rng).unwrap();
            for i in 0..3 {
                assert!((a[i] - base[i]).abs() <= agent.hyper.target_clip + 1e-12);
                assert!((-1.0..=1.0).contains(&a[i]));
            }
        }
        // Zero clip disables smoothing entirely.
        agent.hyper.target_clip = 0.0;
        let a = agent.smoothed_target_action(&s1, &s2, &mut rng).unwrap();
        for i in 0..3 {
            assert_relative_eq!(a[i], base[i].clamp(-1.0, 1.0));
        }
    }

    fn fill_buffer(buffer: &mut ReplayBuffer, n: usize) {
        let mut rng = rng_from_seed(17);
        for k in 0..n {
            let mut s = tiny_state();
            for v in s.s1.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut s_next = tiny_state();
            for v in s_next.s1.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            buffer.push(Transition {
                s: Arc::new(s),
                a: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
                r: (k % 5) as f64 * 0.1,
                s_next: Arc::new(s_next),
                done: k % 7 == 0,
            });
        }
    }

    #[test]
    fn update_gates_on_batch_size() {
        let mut agent = tiny_agent(Algorithm::Td3);
        let mut buffer = ReplayBuffer::new(64);
        let mut rng = rng_from_seed(2);
        fill_buffer(&mut buffer, 3); // below batch = 4
        let stats = agent.update(&buffer, &mut rng).unwrap();
        assert!(!stats.did_update);
        assert_eq!(agent.critic_update_count(), 0);
    }

    #[test]
    fn actor_updates_follow_policy_delay() {
        let mut agent = tiny_agent(Algorithm::Td3);
        let mut buffer = ReplayBuffer::new(64);
        fill_buffer(&mut buffer, 16);
        let mut rng = rng_from_seed(2);
        for _ in 0..10 {
            agent.update(&buffer, &mut rng).unwrap();
        }
        assert_eq!(agent.critic_update_count(), 10);
        assert_eq!(agent.actor_update_count(), 5);
    }

    #[test]
    fn ddpg_structure_single_critic_no_smoothing() {
        let mut agent = tiny_agent(Algorithm::Ddpg);
        assert_eq!(agent.critic_count(), 1);
        let mut buffer = ReplayBuffer::new(64);
        fill_buffer(&mut buffer, 16);
        let mut rng = rng_from_seed(2);
        for _ in 0..6 {
            let stats = agent.update(&buffer, &mut rng).unwrap();
            assert!(stats.critic2_loss.is_none());
        }
        assert_eq!(agent.smoothing_draw_count(), 0);
    }

    #[test]
    fn critic_loss_decreases_on_fixed_batch() {
        let mut agent = tiny_agent(Algorithm::Td3);
        agent.hyper.lr = 1e-3;
        // Rebuild optimizers with the larger lr for a visible effect.
        agent.adam_critic1 = AdamState::new(agent.critic1.len(), 1e-3);
        agent.adam_critic2 = agent
            .critic2
            .as_ref()
            .map(|c| AdamState::new(c.len(), 1e-3));
        let mut buffer = ReplayBuffer::new(8);
        fill_buffer(&mut buffer, 8);
        let mut rng = rng_from_seed(4);
        let first = agent.update(&buffer, &mut rng).unwrap().critic1_loss;
        let mut last = first;
        for _ in 0..30 {
            last = agent.update(&buffer, &mut rng).unwrap().critic1_loss;
        }
        assert!(last < first, "critic loss {first} -> {last}");
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        // J(phi) = mean_batch Q_theta1(s, pi_phi(s)) with the critic frozen;
        // the assembled chain-rule gradient must match central differences.
        let hyper = Td3Hyper {
            batch: 4,
            buffer_capacity: 64,
            ..Default::default()
        };
        let mut rng = rng_from_seed(7000);
        let agent =
            Td3Agent::new(&tiny_spec(), (8, 8), hyper, Algorithm::Td3, 40.0, &mut rng).unwrap();
        let mut gen = rng_from_seed(7001);
        let states: Vec<StateTensor> = (0..4)
            .map(|_| StateTensor {
                rows: 8,
                cols: 8,
                s1: (0..64).map(|_| gen.gen_range(-1.0..1.0f32)).collect(),
                s2: (0..64).map(|_| gen.gen_range(0.0..1.0f32)).collect(),
            })
            .collect();

        let objective = |actor_params: &crate::neural::NetworkParams| -> f64 {
            let mut total = 0.0;
            for s in &states {
                let (a, _) = agent
                    .actor_arch
                    .forward(actor_params, &s.s1_f64(), &s.s2_f64())
                    .unwrap();
                let (q, _) = agent
                    .critic_arch
                    .forward(&agent.critic1, &s.s1_f64(), &s.s2_f64(), &a)
                    .unwrap();
                total += q;
            }
            total / states.len() as f64
        };

        // Assemble the analytic gradient exactly the way update() does.
        let mut grads = vec![0.0; agent.actor.len()];
        for s in &states {
            let s1 = s.s1_f64();
            let s2 = s.s2_f64();
            let (a, actor_tape) = agent.actor_arch.forward(&agent.actor, &s1, &s2).unwrap();
            let (_, critic_tape) = agent
                .critic_arch
                .forward(&agent.critic1, &s1, &s2, &a)
                .unwrap();
            let mut scratch = vec![0.0; agent.critic1.len()];
            let d_action =
                agent
                    .critic_arch
                    .backward(&agent.critic1, &critic_tape, 1.0, &mut scratch);
            let dout = [
                d_action[0] / states.len() as f64,
                d_action[1] / states.len() as f64,
                d_action[2] / states.len() as f64,
            ];
            agent
                .actor_arch
                .backward(&agent.actor, &actor_tape, dout, &mut grads);
        }
        let err = crate::neural::gradient_check(&agent.actor, &grads, 1e-5, objective);
        assert!(err < 1e-4, "policy-gradient FD mismatch: {err}");
    }

    #[test]
    fn actor_converges_on_quadratic_bandit() {
        // One-step MDP with a known optimum: r(a) = 5(1 - |a - a*|^2). The
        // actor must climb most of the achievable reward; exactness is
        // bounded by the test net's value resolution.
        let target: [f64; 3] = [0.3, -0.2, 0.5];
        let reward_of = |a: &[f64; 3]| {
            5.0 * (1.0
                - (a[0] - target[0]).powi(2)
                - (a[1] - target[1]).powi(2)
                - (a[2] - target[2]).powi(2))
        };
        let hyper = Td3Hyper {
            batch: 32,
            buffer_capacity: 4096,
            lr: 1e-3,
            policy_delay: 2,
            ..Default::default()
        };
        let mut rng = rng_from_seed(99);
        let mut agent =
            Td3Agent::new(&tiny_spec(), (8, 8), hyper, Algorithm::Td3, 40.0, &mut rng).unwrap();
        let state = Arc::new(tiny_state());
        let mut buffer = ReplayBuffer::new(4096);
        let mut fill = rng_from_seed(100);
        for _ in 0..1024 {
            let a = [
                fill.gen_range(-1.0..1.0),
                fill.gen_range(-1.0..1.0),
                fill.gen_range(-1.0..1.0),
            ];
            buffer.push(Transition {
                s: state.clone(),
                a,
                r: reward_of(&a),
                s_next: state.clone(),
                done: true,
            });
        }
        let (a0, _) = agent.act(&state, 0.0, true, &mut rng).unwrap();
        let mut update_rng = rng_from_seed(101);
        for _ in 0..4000 {
            agent.update(&buffer, &mut update_rng).unwrap();
        }
        let (a, _) = agent.act(&state, 0.0, true, &mut update_rng).unwrap();
        assert!(
            reward_of(&a) > reward_of(&a0) + 1.0,
            "no improvement: start {:.3}, end {:.3}",
            reward_of(&a0),
            reward_of(&a)
        );
        assert!(
            reward_of(&a) > 4.0,
            "policy {a:?} earns {:.3}, optimum 5.0 at {target:?}",
            reward_of(&a)
        );
    }

    #[test]
    fn soft_update_geometric_contraction() {
        let agent = tiny_agent(Algorithm::Td3);
        let online = agent.actor.clone();
        let mut target = agent.actor_target.clone();
        // Push the target away, then contract with frozen online params.
        for v in target.data_mut() {
            *v += 1.0;
        }
        let tau = 0.01;
        let d0: f64 = target
            .data()
            .iter()
            .zip(online.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        for _ in 0..100 {
            target.soft_update_from(&online, tau);
        }
        let d100: f64 = target
            .data()
            .iter()
            .zip(online.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(d100 / d0, (1.0 - tau).powi(100), max_relative = 1e-9);
    }
}
