//! Command-line front end: environment generation, scheduling, training,
//! evaluation, sweeps, plotting, and link-budget audits.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lawnsim::agent::EpisodeStat;
use lawnsim::channel::{effective_rate, link_rate, slot_data};
use lawnsim::config::{load_config, SimConfig};
use lawnsim::harness::{
    generate_environment_with_ratio, render_trajectory_svg, resume_train, run_eval, run_sweep,
    run_train, EvalOptions, SweepAxis, SweepSpec, TrajectoryLog, Variant,
};
use lawnsim::scheduler::{anneal_traced, AnnealParams};
use lawnsim::world::{generate_environment, EnvironmentMap, Vec3};

#[derive(Parser)]
#[command(
    name = "lawnsim",
    about = "UAV trajectory design toolkit: simulator, scheduler, TD3/DDPG training",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Path to a TOML config; missing keys fall back to reference defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset when no config file is given.
    #[arg(long, default_value = "paper", value_parser = ["paper", "desk"])]
    preset: String,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => SimConfig::preset(&self.preset)?,
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        for w in cfg.to_sim_params().warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment JSON fixture.
    GenEnv {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Target obstacle-volume ratio (within 10%) instead of the
        /// configured building count.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long, default_value = "env.json")]
        out: PathBuf,
    },
    /// Run user scheduling on an environment and write the order plus the
    /// best-length trace.
    Schedule {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Environment JSON (defaults to generating one from the config).
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train a policy and write checkpoint + training CSV.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Continue from <out-dir>/checkpoint.bin + rng_state.json.
        #[arg(long)]
        resume: bool,
        /// Print a progress line every N episodes.
        #[arg(long, default_value_t = 20)]
        log_every: usize,
    },
    /// Evaluate a checkpoint deterministically on held-out layouts.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also write one trajectory JSON per episode.
        #[arg(long)]
        trajectories: bool,
    },
    /// Evaluate checkpoints across one experiment axis.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = SweepAxis::parse)]
        axis: SweepAxis,
        /// Comma-separated axis values, e.g. "1,2,4".
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Comma-separated variant tags, e.g. "td3-dt,td3-nodt".
        #[arg(long, value_delimiter = ',', default_value = "td3-dt")]
        variants: Vec<String>,
        /// Checkpoint per variant as tag=path; repeatable.
        #[arg(long = "checkpoint", value_name = "TAG=PATH")]
        checkpoints: Vec<String>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Render a trajectory JSON to SVG.
    Plot {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a link-budget table (CSV) over a distance sweep.
    LinkBudget {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 10.0)]
        d_min: f64,
        #[arg(long, default_value_t = 1000.0)]
        d_max: f64,
        #[arg(long, default_value_t = 10.0)]
        step: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the fully resolved configuration as TOML.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenEnv { cfg, ratio, out } => {
            let cfg = cfg.load()?;
            let params = cfg.to_sim_params();
            let env = match ratio {
                Some(r) => {
                    let (env, achieved) =
                        generate_environment_with_ratio(&params.world, r, 0.10, cfg.master_seed)?;
                    eprintln!("achieved obstacle ratio {achieved:.4} (target {r:.4})");
                    env
                }
                None => generate_environment(&params.world, cfg.master_seed)?,
            };
            std::fs::write(&out, env.to_json()?)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} ({} buildings, {} users)",
                out.display(),
                env.buildings.len(),
                env.users.len()
            );
            Ok(())
        }
        Command::Schedule { cfg, env, out_dir } => {
            let cfg = cfg.load()?;
            let params = cfg.to_sim_params();
            let env: EnvironmentMap = match env {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    EnvironmentMap::from_json(&text)?
                }
                None => generate_environment(&params.world, cfg.master_seed)?,
            };
            run_schedule(&cfg, &params.uav_start, &params.anneal, &env, &out_dir)
        }
        Command::Train {
            cfg,
            out_dir,
            resume,
            log_every,
        } => {
            let cfg = cfg.load()?;
            let mut print_progress = |s: &EpisodeStat| {
                if log_every > 0 && (s.episode + 1) % log_every == 0 {
                    eprintln!(
                        "episode {:>5}  reward {:>9.3}  served {}/{}  vetoes {:>3}  t_f {:>4}",
                        s.episode, s.total_reward, s.served, cfg.world.user_count, s.vetoes, s.t_f
                    );
                }
            };
            let artifacts = if resume {
                let ck = out_dir.join("checkpoint.bin");
                let rng = out_dir.join("rng_state.json");
                resume_train(&cfg, &ck, &rng, &out_dir, Some(&mut print_progress))?
            } else {
                run_train(&cfg, &out_dir, Some(&mut print_progress))?
            };
            println!(
                "trained {} episodes; checkpoint {}, log {}",
                artifacts.stats.len(),
                artifacts.checkpoint_path.display(),
                artifacts.csv_path.display()
            );
            Ok(())
        }
        Command::Eval {
            cfg,
            checkpoint,
            episodes,
            out_dir,
            trajectories,
        } => {
            let cfg = cfg.load()?;
            std::fs::create_dir_all(&out_dir)?;
            let opts = EvalOptions {
                trajectory_dir: trajectories.then(|| out_dir.join("trajectories")),
                csv_path: Some(out_dir.join("eval.csv")),
            };
            let summary = run_eval(&cfg, &checkpoint, episodes, &opts)?;
            println!(
                "episodes {}  mission time {:.1} s ± {:.1}  served {:.0}%  completed {}/{}  \
                 vetoes {:.1}  collisions {:.1}",
                summary.episodes,
                summary.mean_mission_time_s,
                summary.std_mission_time_s,
                summary.served_fraction * 100.0,
                summary.completed_episodes,
                summary.episodes,
                summary.mean_vetoes,
                summary.mean_actual_collisions
            );
            Ok(())
        }
        Command::Sweep {
            cfg,
            axis,
            values,
            seeds,
            variants,
            checkpoints,
            out_dir,
        } => {
            let cfg = cfg.load()?;
            let variants: Vec<Variant> = variants
                .iter()
                .map(|v| Variant::parse(v))
                .collect::<Result<_, _>>()
                .map_err(anyhow::Error::msg)?;
            let mut ck_map = BTreeMap::new();
            for spec in &checkpoints {
                let Some((tag, path)) = spec.split_once('=') else {
                    bail!("--checkpoint wants TAG=PATH, got '{spec}'");
                };
                ck_map.insert(tag.to_string(), PathBuf::from(path));
            }
            let spec = SweepSpec {
                axis,
                values,
                seeds_per_point: seeds,
                variants,
            };
            let rows = run_sweep(&cfg, &spec, &ck_map, &out_dir)?;
            println!(
                "swept {}: {} rows -> {}",
                spec.axis.name(),
                rows.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Plot { trajectory, out } => {
            let text = std::fs::read_to_string(&trajectory)
                .with_context(|| format!("reading {}", trajectory.display()))?;
            let traj = TrajectoryLog::from_json(&text)?;
            std::fs::write(&out, render_trajectory_svg(&traj))
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::LinkBudget {
            cfg,
            d_min,
            d_max,
            step,
            out,
        } => {
            let cfg = cfg.load()?;
            let table = link_budget_table(&cfg, d_min, d_max, step)?;
            match out {
                Some(path) => std::fs::write(&path, table)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{table}"),
            }
            Ok(())
        }
        Command::Config { cfg } => {
            let cfg = cfg.load()?;
            println!("# resolved config (hash {})", cfg.resolved_hash());
            print!("{}", cfg.to_toml_string());
            Ok(())
        }
    }
}

fn run_schedule(
    cfg: &SimConfig,
    start: &Vec3,
    anneal_params: &AnnealParams,
    env: &EnvironmentMap,
    out_dir: &std::path::Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let positions: Vec<Vec3> = env.users.iter().map(|u| u.position).collect();
    let seed = lawnsim::seeding::derive_seed(cfg.master_seed, "cli-schedule", 0);
    let mut rng = lawnsim::seeding::rng_from_seed(seed);
    let outcome = anneal_traced(start, &positions, anneal_params, &mut rng);
    let sched_path = out_dir.join("schedule.csv");
    let rows: Vec<Vec<String>> = outcome
        .schedule
        .order
        .iter()
        .enumerate()
        .map(|(rank, uid)| {
            let u = &env.users[*uid];
            vec![
                rank.to_string(),
                uid.to_string(),
                format!("{:.3}", u.position.x),
                format!("{:.3}", u.position.y),
            ]
        })
        .collect();
    lawnsim::harness::write_csv(
        &sched_path,
        &[
            ("config_hash", cfg.resolved_hash()),
            ("tour_length_m", format!("{:.3}", outcome.length)),
        ],
        &["rank", "user_id", "x_m", "y_m"],
        &rows,
    )?;
    let trace_path = out_dir.join("schedule_trace.csv");
    let trace_rows: Vec<Vec<String>> = outcome
        .trace
        .unwrap_or_default()
        .iter()
        .enumerate()
        .map(|(i, len)| vec![i.to_string(), format!("{len:.6}")])
        .collect();
    lawnsim::harness::write_csv(
        &trace_path,
        &[("config_hash", cfg.resolved_hash())],
        &["iteration", "best_length_m"],
        &trace_rows,
    )?;
    println!(
        "schedule {:?} length {:.1} m -> {}",
        outcome.schedule.order,
        outcome.length,
        sched_path.display()
    );
    Ok(())
}

fn link_budget_table(cfg: &SimConfig, d_min: f64, d_max: f64, step: f64) -> Result<String> {
    if !(d_min > 0.0 && d_max >= d_min && step > 0.0) {
        bail!("distance sweep requires 0 < d_min <= d_max and step > 0");
    }
    let params = cfg.to_sim_params();
    let ch = &params.channel.params;
    let mut out = String::new();
    out.push_str(&format!("# config_hash={}\n", cfg.resolved_hash()));
    out.push_str(
        "distance_m,path_loss_db,lsf_los_db,lsf_nlos_db,rate_bs_uav_los_bps,\
         rate_uav_gu_los_bps,rate_uav_gu_nlos_bps,effective_los_bps,slot_data_los_bits\n",
    );
    let mut d = d_min;
    while d <= d_max + 1e-9 {
        let pl = lawnsim::channel::free_space_path_loss_db(d, ch.f_c_hz, ch.light_speed)?;
        let lsf_los = pl + ch.gamma_los_db;
        let lsf_nlos = pl + ch.gamma_nlos_db;
        let g_los = 10f64.powf(-lsf_los / 10.0);
        let g_nlos = 10f64.powf(-lsf_nlos / 10.0);
        let r_bs = link_rate(ch.p_b_w, g_los, ch);
        let r_gu_los = link_rate(ch.p_u_w, g_los, ch);
        let r_gu_nlos = link_rate(ch.p_u_w, g_nlos, ch);
        let r_eff = effective_rate(r_bs, r_gu_los);
        out.push_str(&format!(
            "{d:.1},{pl:.3},{lsf_los:.3},{lsf_nlos:.3},{r_bs:.0},{r_gu_los:.0},{r_gu_nlos:.0},\
             {r_eff:.0},{:.0}\n",
            slot_data(r_eff, params.delta2)
        ));
        d += step;
    }
    Ok(out)
}
