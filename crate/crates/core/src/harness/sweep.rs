//! Directional experiment sweeps over data volume, user count, and obstacle
//! density, with long-form CSV output and a companion line chart per axis.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{rollout_deterministic, Algorithm};
use crate::config::SimConfig;
use crate::harness::csvio::write_csv;
use crate::harness::plot::{render_line_chart, ChartSeries};
use crate::harness::run::{agent_from_checkpoint, HarnessError};
use crate::mdp::Simulator;
use crate::neural::Checkpoint;
use crate::seeding::derive_seed;
use crate::world::{generate_environment, EnvironmentMap, WorldGenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    DataVolume,
    GuCount,
    ObstacleRatio,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::DataVolume => "data_volume",
            SweepAxis::GuCount => "gu_count",
            SweepAxis::ObstacleRatio => "obstacle_ratio",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "data_volume" => Ok(SweepAxis::DataVolume),
            "gu_count" => Ok(SweepAxis::GuCount),
            "obstacle_ratio" => Ok(SweepAxis::ObstacleRatio),
            other => Err(format!(
                "unknown sweep axis '{other}' (data_volume, gu_count, obstacle_ratio)"
            )),
        }
    }
}

/// One curve in the baseline matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub dt_enabled: bool,
}

impl Variant {
    pub fn tag(&self) -> String {
        format!(
            "{}-{}",
            self.algorithm.tag(),
            if self.dt_enabled { "dt" } else { "nodt" }
        )
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let (alg, dt) = s
            .split_once('-')
            .ok_or_else(|| format!("variant '{s}' must look like 'td3-dt'"))?;
        let algorithm = match alg {
            "td3" => Algorithm::Td3,
            "ddpg" => Algorithm::Ddpg,
            other => return Err(format!("unknown algorithm '{other}'")),
        };
        let dt_enabled = match dt {
            "dt" => true,
            "nodt" => false,
            other => return Err(format!("unknown dt flag '{other}'")),
        };
        Ok(Self {
            algorithm,
            dt_enabled,
        })
    }

    pub fn apply(&self, cfg: &mut SimConfig) {
        cfg.mode.algorithm = self.algorithm;
        cfg.mode.dt_enabled = self.dt_enabled;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds_per_point: usize,
    pub variants: Vec<Variant>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.values.is_empty() {
            return Err("sweep values must be non-empty".into());
        }
        if self.seeds_per_point == 0 {
            return Err("sweep needs at least one seed per point".into());
        }
        if self.variants.is_empty() {
            return Err("sweep needs at least one variant".into());
        }
        Ok(())
    }

    pub fn expected_rows(&self) -> usize {
        self.values.len() * self.seeds_per_point * self.variants.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub variant: String,
    pub mission_time_s: f64,
    pub served: usize,
    pub users: usize,
    pub completed: bool,
    pub t_f_slots: usize,
}

/// Generate a map whose obstacle-volume ratio lands within `tolerance`
/// (relative) of the target, adjusting the building count and retrying
/// derived seeds. The achieved ratio rides along in the result.
pub fn generate_environment_with_ratio(
    base: &WorldGenConfig,
    target_ratio: f64,
    tolerance: f64,
    seed: u64,
) -> Result<(EnvironmentMap, f64), HarnessError> {
    if target_ratio <= 0.0 {
        return Err(HarnessError::Other(format!(
            "target obstacle ratio must be positive, got {target_ratio}"
        )));
    }
    let mut cfg = base.clone();
    // First guess from the expected volume of one building.
    let mean_edge = (base.building_len_range.0 + base.building_len_range.1) / 2.0;
    let mean_height = (base.height_range.0 + base.height_range.1) / 2.0;
    let scene_volume = base.side_xy * base.side_xy * base.max_alt;
    let per_building = mean_edge * mean_edge * mean_height;
    cfg.building_count = ((target_ratio * scene_volume / per_building).round() as usize).max(1);

    let max_attempts = 200;
    for attempt in 0..max_attempts {
        let env = generate_environment(&cfg, derive_seed(seed, "ratio-attempt", attempt))?;
        let ratio = env.obstacle_ratio();
        let rel = (ratio - target_ratio).abs() / target_ratio;
        if rel <= tolerance {
            return Ok((env, ratio));
        }
        // Nudge the count toward the target; same count retries a new seed.
        if ratio < target_ratio {
            cfg.building_count += 1;
        } else if cfg.building_count > 1 {
            cfg.building_count -= 1;
        }
    }
    Err(HarnessError::Other(format!(
        "could not hit obstacle ratio {target_ratio} within relative tolerance {tolerance} after \
         {max_attempts} attempts"
    )))
}

fn apply_axis_value(cfg: &mut SimConfig, axis: SweepAxis, value: f64) {
    match axis {
        SweepAxis::DataVolume => cfg.world.demand_mbits = value,
        SweepAxis::GuCount => cfg.world.user_count = value.round() as usize,
        SweepAxis::ObstacleRatio => {} // handled at environment generation
    }
}

/// Evaluate trained checkpoints across one sweep axis.
///
/// `checkpoints` maps variant tags to checkpoint files; every variant in the
/// spec must be covered. Rows land in `sweep_<axis>.csv`, the mean curves in
/// `sweep_<axis>.svg`.
pub fn run_sweep(
    base_cfg: &SimConfig,
    spec: &SweepSpec,
    checkpoints: &BTreeMap<String, PathBuf>,
    out_dir: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    spec.validate().map_err(HarnessError::Other)?;
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(spec.expected_rows());
    for variant in &spec.variants {
        let tag = variant.tag();
        let ck_path = checkpoints.get(&tag).ok_or_else(|| {
            HarnessError::Other(format!("no checkpoint supplied for variant '{tag}'"))
        })?;
        let mut cfg = base_cfg.clone();
        variant.apply(&mut cfg);
        let ck = Checkpoint::load(ck_path)?;
        let agent = agent_from_checkpoint(&ck, &cfg)?;
        for &value in &spec.values {
            let mut point_cfg = cfg.clone();
            apply_axis_value(&mut point_cfg, spec.axis, value);
            let params = point_cfg.to_sim_params();
            for seed_idx in 0..spec.seeds_per_point {
                // One seed per (axis, seed index), shared across axis
                // values: paired layouts keep the directional comparison
                // free of between-environment variance.
                let point_seed = derive_seed(
                    base_cfg.master_seed,
                    &format!("sweep-{}", spec.axis.name()),
                    seed_idx as u64,
                );
                let env = match spec.axis {
                    SweepAxis::ObstacleRatio => {
                        generate_environment_with_ratio(&params.world, value, 0.10, point_seed)?.0
                    }
                    _ => generate_environment(&params.world, point_seed)?,
                };
                let mut sim = Simulator::with_env(&params, env, point_seed)?;
                rollout_deterministic(&mut sim, agent.actor_arch(), &agent.actor, params.v_max)?;
                let log = sim.log();
                rows.push(SweepRow {
                    axis: spec.axis.name().into(),
                    value,
                    seed: seed_idx as u64,
                    variant: tag.clone(),
                    mission_time_s: log.mission_time_s(params.delta_s(), params.max_slots),
                    served: log.served_count(),
                    users: point_cfg.world.user_count,
                    completed: log.t_f.is_some(),
                    t_f_slots: log.t_f.unwrap_or(params.max_slots),
                });
            }
        }
    }
    write_sweep_outputs(base_cfg, spec, &rows, out_dir)?;
    Ok(rows)
}

fn write_sweep_outputs(
    cfg: &SimConfig,
    spec: &SweepSpec,
    rows: &[SweepRow],
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let csv_path = out_dir.join(format!("sweep_{}.csv", spec.axis.name()));
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.axis.clone(),
                format!("{}", r.value),
                r.seed.to_string(),
                r.variant.clone(),
                format!("{:.3}", r.mission_time_s),
                r.served.to_string(),
                r.users.to_string(),
                (r.completed as u8).to_string(),
                r.t_f_slots.to_string(),
            ]
        })
        .collect();
    write_csv(
        &csv_path,
        &[
            ("config_hash", cfg.resolved_hash()),
            ("axis", spec.axis.name().into()),
            ("seeds_per_point", spec.seeds_per_point.to_string()),
        ],
        &[
            "axis",
            "value",
            "seed",
            "variant",
            "mission_time_s",
            "served",
            "users",
            "completed",
            "t_f_slots",
        ],
        &csv_rows,
    )
    .map_err(|source| HarnessError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;

    // Mean mission time per (variant, value).
    let mut series = Vec::new();
    for variant in &spec.variants {
        let tag = variant.tag();
        let mut points = Vec::new();
        for &value in &spec.values {
            let times: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == tag && r.value == value)
                .map(|r| r.mission_time_s)
                .collect();
            if !times.is_empty() {
                points.push((value, times.iter().sum::<f64>() / times.len() as f64));
            }
        }
        series.push(ChartSeries { label: tag, points });
    }
    let svg = render_line_chart(
        &format!("mission time vs {}", spec.axis.name()),
        spec.axis.name(),
        "mission time (s)",
        &series,
    );
    let svg_path = out_dir.join(format!("sweep_{}.svg", spec.axis.name()));
    std::fs::write(&svg_path, svg).map_err(|source| HarnessError::Io {
        path: svg_path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Mean mission time per (variant, value) pair, for directional checks.
pub fn mean_by_value(rows: &[SweepRow], variant: &str) -> Vec<(f64, f64)> {
    let mut grouped: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    let mut order: Vec<(u64, f64)> = Vec::new();
    for r in rows.iter().filter(|r| r.variant == variant) {
        let key = r.value.to_bits();
        if !grouped.contains_key(&key) {
            order.push((key, r.value));
        }
        let entry = grouped.entry(key).or_insert((0.0, 0));
        entry.0 += r.mission_time_s;
        entry.1 += 1;
    }
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    order
        .into_iter()
        .map(|(key, value)| {
            let (sum, n) = grouped[&key];
            (value, sum / n as f64)
        })
        .collect()
}
