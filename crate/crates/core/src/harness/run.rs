//! Training and evaluation runners with artifact emission.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    rollout_deterministic, rollout_random, train, train_from, AgentError, Algorithm, EpisodeStat,
    Td3Agent, TrainResult,
};
use crate::config::SimConfig;
use crate::harness::csvio::{write_csv, TrajectoryLog};
use crate::mdp::{SimError, Simulator};
use crate::neural::{Checkpoint, CheckpointError, NetworkParams};
use crate::seeding::stream;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Sidecar file that makes a training run resumable: which episode to
/// continue from under the same master seed. Per-episode RNG streams mean
/// the continuation draws the exact noise sequences of an uninterrupted
/// run; the replay buffer restarts empty, which is documented behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResumeState {
    pub master_seed: u64,
    pub episodes_completed: usize,
    pub config_hash: String,
}

pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub csv_path: PathBuf,
    pub rng_state_path: PathBuf,
    pub stats: Vec<EpisodeStat>,
}

/// Build a checkpoint from a trained agent.
pub fn checkpoint_from_agent(agent: &Td3Agent, cfg: &SimConfig) -> Checkpoint {
    let mut ck = Checkpoint::new();
    ck.meta.insert("net_preset".into(), cfg.net.preset.clone());
    ck.meta
        .insert("grid_rows".into(), cfg.world.grid_rows.to_string());
    ck.meta
        .insert("grid_cols".into(), cfg.world.grid_cols.to_string());
    ck.meta
        .insert("algorithm".into(), agent.algorithm.tag().into());
    ck.meta
        .insert("config_hash".into(), cfg.resolved_hash());
    ck.sections.push(("actor".into(), agent.actor.clone()));
    ck.sections
        .push(("actor_target".into(), agent.actor_target.clone()));
    ck.sections.push(("critic1".into(), agent.critic1.clone()));
    ck.sections
        .push(("critic1_target".into(), agent.critic1_target.clone()));
    if let Some(c2) = &agent.critic2 {
        ck.sections.push(("critic2".into(), c2.clone()));
    }
    if let Some(c2t) = &agent.critic2_target {
        ck.sections.push(("critic2_target".into(), c2t.clone()));
    }
    ck
}

/// Validate a checkpoint against a config and rebuild an agent from it.
pub fn agent_from_checkpoint(
    ck: &Checkpoint,
    cfg: &SimConfig,
) -> Result<Td3Agent, HarnessError> {
    for (key, want) in [
        ("net_preset", cfg.net.preset.clone()),
        ("grid_rows", cfg.world.grid_rows.to_string()),
        ("grid_cols", cfg.world.grid_cols.to_string()),
    ] {
        match ck.meta.get(key) {
            Some(got) if *got == want => {}
            Some(got) => {
                return Err(CheckpointError::Incompatible(format!(
                    "{key}: checkpoint has '{got}', config wants '{want}'"
                ))
                .into())
            }
            None => {
                return Err(CheckpointError::Incompatible(format!(
                    "checkpoint missing meta key '{key}'"
                ))
                .into())
            }
        }
    }
    let algorithm = match ck.meta.get("algorithm").map(String::as_str) {
        Some("ddpg") => Algorithm::Ddpg,
        _ => Algorithm::Td3,
    };
    let params = cfg.to_sim_params();
    let mut init_rng = stream(cfg.master_seed, "net-init", 0);
    let mut agent = Td3Agent::new(
        &cfg.net_spec(),
        (cfg.world.grid_rows, cfg.world.grid_cols),
        cfg.td3.clone(),
        algorithm,
        params.v_max,
        &mut init_rng,
    )?;
    let load = |name: &str, into: &mut NetworkParams| -> Result<(), HarnessError> {
        let section = ck.require_section(name)?;
        if !section.same_layout(into) {
            return Err(CheckpointError::Incompatible(format!(
                "section '{name}' has a different parameter layout"
            ))
            .into());
        }
        into.data_mut().copy_from_slice(section.data());
        Ok(())
    };
    load("actor", &mut agent.actor)?;
    load("actor_target", &mut agent.actor_target)?;
    load("critic1", &mut agent.critic1)?;
    load("critic1_target", &mut agent.critic1_target)?;
    if let Some(c2) = agent.critic2.as_mut() {
        load("critic2", c2)?;
    }
    if let Some(c2t) = agent.critic2_target.as_mut() {
        load("critic2_target", c2t)?;
    }
    Ok(agent)
}

fn training_rows(stats: &[EpisodeStat]) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(stats.len());
    let mut window: Vec<f64> = Vec::new();
    for s in stats {
        window.push(s.total_reward);
        let lo = window.len().saturating_sub(20);
        let smoothed: f64 =
            window[lo..].iter().sum::<f64>() / (window.len() - lo) as f64;
        rows.push(vec![
            s.episode.to_string(),
            format!("{:.6}", s.total_reward),
            format!("{smoothed:.6}"),
            s.served.to_string(),
            s.vetoes.to_string(),
            s.collisions.to_string(),
            s.t_f.to_string(),
            (s.completed as u8).to_string(),
            s.slots.to_string(),
        ]);
    }
    rows
}

const TRAIN_HEADER: [&str; 9] = [
    "episode",
    "reward",
    "smoothed_reward",
    "served",
    "vetoes",
    "collisions",
    "t_f",
    "completed",
    "slots",
];

/// Train per the config and write checkpoint, per-episode CSV (smoothed
/// reward over a window of 20), and the resume sidecar.
pub fn run_train(
    cfg: &SimConfig,
    out_dir: &Path,
    progress: Option<&mut dyn FnMut(&EpisodeStat)>,
) -> Result<TrainArtifacts, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let params = cfg.to_sim_params();
    let spec = cfg.net_spec();
    let started = std::time::Instant::now();
    let TrainResult { agent, stats } = train(
        &params,
        &spec,
        &cfg.td3,
        cfg.mode.algorithm,
        cfg.master_seed,
        progress,
    )?;
    write_artifacts(cfg, out_dir, &agent, &stats, started.elapsed().as_secs_f64())
}

/// Continue a previous run from its checkpoint and resume sidecar.
pub fn resume_train(
    cfg: &SimConfig,
    checkpoint_path: &Path,
    rng_state_path: &Path,
    out_dir: &Path,
    progress: Option<&mut dyn FnMut(&EpisodeStat)>,
) -> Result<TrainArtifacts, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let ck = Checkpoint::load(checkpoint_path)?;
    let agent = agent_from_checkpoint(&ck, cfg)?;
    let text = std::fs::read_to_string(rng_state_path).map_err(io_err(rng_state_path))?;
    let resume: ResumeState =
        serde_json::from_str(&text).map_err(|e| HarnessError::Other(e.to_string()))?;
    if resume.master_seed != cfg.master_seed {
        return Err(HarnessError::Other(format!(
            "resume state was recorded under master seed {}, config has {}",
            resume.master_seed, cfg.master_seed
        )));
    }
    let params = cfg.to_sim_params();
    let started = std::time::Instant::now();
    let TrainResult { agent, stats } = train_from(
        agent,
        &params,
        cfg.master_seed,
        resume.episodes_completed,
        cfg.td3.max_episodes,
        progress,
    )?;
    write_artifacts(cfg, out_dir, &agent, &stats, started.elapsed().as_secs_f64())
}

fn write_artifacts(
    cfg: &SimConfig,
    out_dir: &Path,
    agent: &Td3Agent,
    stats: &[EpisodeStat],
    wall_s: f64,
) -> Result<TrainArtifacts, HarnessError> {
    let csv_path = out_dir.join("training.csv");
    write_csv(
        &csv_path,
        &[
            ("config_hash", cfg.resolved_hash()),
            ("variant", cfg.variant_tag()),
            ("master_seed", cfg.master_seed.to_string()),
        ],
        &TRAIN_HEADER,
        &training_rows(stats),
    )
    .map_err(io_err(&csv_path))?;
    // Wall time goes into a trailing comment so the data rows stay
    // reproducible byte for byte.
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&csv_path)
            .map_err(io_err(&csv_path))?;
        writeln!(f, "# wall_s={wall_s:.3}").map_err(io_err(&csv_path))?;
    }
    let checkpoint_path = out_dir.join("checkpoint.bin");
    checkpoint_from_agent(agent, cfg).save(&checkpoint_path)?;
    let rng_state_path = out_dir.join("rng_state.json");
    let resume = ResumeState {
        master_seed: cfg.master_seed,
        episodes_completed: stats.last().map(|s| s.episode + 1).unwrap_or(0),
        config_hash: cfg.resolved_hash(),
    };
    std::fs::write(
        &rng_state_path,
        serde_json::to_string_pretty(&resume).expect("resume serializes"),
    )
    .map_err(io_err(&rng_state_path))?;
    Ok(TrainArtifacts {
        checkpoint_path,
        csv_path,
        rng_state_path,
        stats: stats.to_vec(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Write one trajectory JSON per episode into this directory.
    pub trajectory_dir: Option<PathBuf>,
    /// Also write an eval.csv with per-episode rows.
    pub csv_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_mission_time_s: f64,
    pub std_mission_time_s: f64,
    pub served_fraction: f64,
    pub completed_episodes: usize,
    pub mean_vetoes: f64,
    pub mean_actual_collisions: f64,
    pub mission_times_s: Vec<f64>,
}

fn summarize(
    mission_times: Vec<f64>,
    served: &[usize],
    users: usize,
    completed: usize,
    vetoes: &[usize],
    collisions: &[usize],
) -> EvalSummary {
    let n = mission_times.len().max(1) as f64;
    let mean = mission_times.iter().sum::<f64>() / n;
    let var = mission_times
        .iter()
        .map(|t| (t - mean) * (t - mean))
        .sum::<f64>()
        / n;
    EvalSummary {
        episodes: mission_times.len(),
        mean_mission_time_s: mean,
        std_mission_time_s: var.sqrt(),
        served_fraction: served.iter().sum::<usize>() as f64
            / (users.max(1) * mission_times.len().max(1)) as f64,
        completed_episodes: completed,
        mean_vetoes: vetoes.iter().sum::<usize>() as f64 / n,
        mean_actual_collisions: collisions.iter().sum::<usize>() as f64 / n,
        mission_times_s: mission_times,
    }
}

/// Deterministic evaluation over held-out layouts.
pub fn run_eval(
    cfg: &SimConfig,
    checkpoint_path: &Path,
    n_episodes: usize,
    opts: &EvalOptions,
) -> Result<EvalSummary, HarnessError> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let agent = agent_from_checkpoint(&ck, cfg)?;
    let params = cfg.to_sim_params();
    let mut mission_times = Vec::with_capacity(n_episodes);
    let mut served = Vec::with_capacity(n_episodes);
    let mut vetoes = Vec::with_capacity(n_episodes);
    let mut collisions = Vec::with_capacity(n_episodes);
    let mut completed = 0;
    let mut rows = Vec::with_capacity(n_episodes);
    if let Some(dir) = &opts.trajectory_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    for ep in 0..n_episodes {
        let mut sim = Simulator::deploy_episode(&params, cfg.master_seed, ep as u64)?;
        rollout_deterministic(&mut sim, agent.actor_arch(), &agent.actor, params.v_max)?;
        let log = sim.log();
        let mt = log.mission_time_s(params.delta_s(), params.max_slots);
        if log.t_f.is_some() {
            completed += 1;
        }
        rows.push(vec![
            ep.to_string(),
            format!("{mt:.3}"),
            log.served_count().to_string(),
            log.veto_count.to_string(),
            log.actual_collision_count.to_string(),
            log.t_f.map(|t| t.to_string()).unwrap_or_else(|| "".into()),
        ]);
        if let Some(dir) = &opts.trajectory_dir {
            let traj = TrajectoryLog::from_episode(
                sim.environment(),
                &sim.schedule().order,
                [params.uav_start.x, params.uav_start.y, params.uav_start.z],
                log,
                params.delta_s(),
                params.max_flight_alt,
            );
            let path = dir.join(format!("trajectory_ep{ep:03}.json"));
            std::fs::write(&path, traj.to_json().expect("trajectory serializes"))
                .map_err(io_err(&path))?;
        }
        mission_times.push(mt);
        served.push(log.served_count());
        vetoes.push(log.veto_count);
        collisions.push(log.actual_collision_count);
    }
    if let Some(path) = &opts.csv_path {
        write_csv(
            path,
            &[
                ("config_hash", cfg.resolved_hash()),
                ("variant", cfg.variant_tag()),
                ("checkpoint", checkpoint_path.display().to_string()),
            ],
            &["episode", "mission_time_s", "served", "vetoes", "collisions", "t_f"],
            &rows,
        )
        .map_err(io_err(path))?;
    }
    Ok(summarize(
        mission_times,
        &served,
        cfg.world.user_count,
        completed,
        &vetoes,
        &collisions,
    ))
}

/// Uniform-random policy over the same held-out layouts; the floor any
/// trained policy must beat.
pub fn run_random_baseline(cfg: &SimConfig, n_episodes: usize) -> Result<EvalSummary, HarnessError> {
    let params = cfg.to_sim_params();
    let mut mission_times = Vec::with_capacity(n_episodes);
    let mut served = Vec::new();
    let mut vetoes = Vec::new();
    let mut collisions = Vec::new();
    let mut completed = 0;
    for ep in 0..n_episodes {
        let mut sim = Simulator::deploy_episode(&params, cfg.master_seed, ep as u64)?;
        let mut rng = stream(cfg.master_seed, "random-policy", ep as u64);
        rollout_random(&mut sim, params.v_max, &mut rng)?;
        let log = sim.log();
        if log.t_f.is_some() {
            completed += 1;
        }
        mission_times.push(log.mission_time_s(params.delta_s(), params.max_slots));
        served.push(log.served_count());
        vetoes.push(log.veto_count);
        collisions.push(log.actual_collision_count);
    }
    Ok(summarize(
        mission_times,
        &served,
        cfg.world.user_count,
        completed,
        &vetoes,
        &collisions,
    ))
}
