//! TOML configuration with validated defaults.
//!
//! An empty file parses to the full reference setting (1000 m scene, 10
//! users, 2 GHz / 10 MHz channel, T0 = 2000 annealing, TD3 with the paper
//! hyperparameters); the `desk` preset shrinks everything to a 200 m scene
//! that trains in minutes on one CPU core. Unknown keys are rejected and
//! all invariant violations are reported together with their field paths.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{Algorithm, Td3Hyper};
use crate::channel::{dbm_to_watts, ChannelModel, ChannelParams};
use crate::mdp::{RewardWeights, SimParams};
use crate::neural::NetSpec;
use crate::scheduler::AnnealParams;
use crate::world::{GridGeometry, Vec3, WorldGenConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub side_m: f64,
    pub scene_alt_m: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub building_count: usize,
    pub building_len_range_m: (f64, f64),
    pub building_height_scale_m: f64,
    pub building_height_range_m: (f64, f64),
    pub user_count: usize,
    pub demand_mbits: f64,
    pub bs_position_m: [f64; 3],
    pub uav_start_m: [f64; 3],
    pub placement_max_retries: usize,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            side_m: 1000.0,
            scene_alt_m: 150.0,
            grid_rows: 100,
            grid_cols: 100,
            building_count: 8,
            building_len_range_m: (50.0, 150.0),
            building_height_scale_m: 100.0,
            building_height_range_m: (40.0, 150.0),
            user_count: 10,
            demand_mbits: 10.0,
            bs_position_m: [0.0, 0.0, 30.0],
            uav_start_m: [0.0, 0.0, 100.0],
            placement_max_retries: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub delta1_s: f64,
    pub delta2_s: f64,
    pub delta3_s: f64,
    pub max_slots: usize,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self {
            delta1_s: 0.5,
            delta2_s: 0.5,
            delta3_s: 0.2,
            max_slots: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsSection {
    pub v_max_mps: f64,
    pub max_flight_alt_m: f64,
    pub beta_sen_deg: f64,
    pub beta_com_deg: f64,
}

impl Default for KinematicsSection {
    fn default() -> Self {
        Self {
            v_max_mps: 40.0,
            max_flight_alt_m: 140.0,
            beta_sen_deg: 30.0,
            beta_com_deg: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub bs_power_dbm: f64,
    pub uav_power_dbm: f64,
    pub noise_dbm: f64,
    pub gamma_los_db: f64,
    pub gamma_nlos_db: f64,
    pub rician_k_db: f64,
    pub light_speed_mps: f64,
    pub freeze_fading: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            carrier_hz: 2.0e9,
            bandwidth_hz: 1.0e7,
            bs_power_dbm: 40.0,
            uav_power_dbm: 10.0,
            noise_dbm: -75.0,
            gamma_los_db: 0.1,
            gamma_nlos_db: 21.0,
            rician_k_db: 15.0,
            light_speed_mps: 3.0e8,
            freeze_fading: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub preset: String,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            preset: "paper".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSection {
    pub dt_enabled: bool,
    pub algorithm: Algorithm,
}

impl Default for ModeSection {
    fn default() -> Self {
        Self {
            dt_enabled: true,
            algorithm: Algorithm::Td3,
        }
    }
}

/// The complete experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub master_seed: u64,
    pub world: WorldSection,
    pub timing: TimingSection,
    pub kinematics: KinematicsSection,
    pub channel: ChannelSection,
    pub reward: RewardWeights,
    pub anneal: AnnealParams,
    pub net: NetSection,
    pub td3: Td3Hyper,
    pub mode: ModeSection,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            master_seed: 2024,
            world: WorldSection::default(),
            timing: TimingSection::default(),
            kinematics: KinematicsSection::default(),
            channel: ChannelSection::default(),
            reward: RewardWeights::default(),
            anneal: AnnealParams::default(),
            net: NetSection::default(),
            td3: Td3Hyper::default(),
            mode: ModeSection::default(),
        }
    }
}

impl SimConfig {
    /// Reference-scale configuration.
    pub fn paper() -> Self {
        Self::default()
    }

    /// CPU-trainable configuration: 200 m scene, 20x20 grid, 3 users with
    /// 2 Mbit demands, two buildings, small nets, short horizon.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.world = WorldSection {
            side_m: 200.0,
            scene_alt_m: 60.0,
            grid_rows: 20,
            grid_cols: 20,
            building_count: 2,
            building_len_range_m: (30.0, 60.0),
            building_height_scale_m: 30.0,
            building_height_range_m: (20.0, 50.0),
            user_count: 3,
            demand_mbits: 2.0,
            bs_position_m: [0.0, 0.0, 10.0],
            uav_start_m: [100.0, 100.0, 45.0],
            placement_max_retries: 10_000,
        };
        cfg.timing.max_slots = 60;
        cfg.kinematics.v_max_mps = 20.0;
        cfg.kinematics.max_flight_alt_m = 55.0;
        cfg.channel.bandwidth_hz = 1.0e6;
        cfg.net.preset = "desk".into();
        cfg.td3.batch = 16;
        cfg.td3.buffer_capacity = 20_000;
        cfg.td3.max_episodes = 300;
        cfg.td3.explore_sigma = 0.2;
        cfg.td3.warmup_random_slots = 1500;
        cfg
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(ConfigError::Parse(format!(
                "unknown preset '{other}' (expected 'paper' or 'desk')"
            ))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig =
            toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the fully resolved configuration; stamped into every
    /// emitted CSV so outputs are traceable to exact settings.
    pub fn resolved_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string().as_bytes());
        hasher
            .finalize()
            .iter()
            .fold(String::with_capacity(64), |mut acc, b| {
                use std::fmt::Write;
                let _ = write!(acc, "{b:02x}");
                acc
            })
    }

    /// Short variant label for logs and sweep rows.
    pub fn variant_tag(&self) -> String {
        format!(
            "{}-{}",
            self.mode.algorithm.tag(),
            if self.mode.dt_enabled { "dt" } else { "nodt" }
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if (self.timing.delta1_s - self.timing.delta2_s).abs() > 1e-12 {
            problems.push(format!(
                "timing.delta1_s ({}) must equal timing.delta2_s ({})",
                self.timing.delta1_s, self.timing.delta2_s
            ));
        }
        for (name, v) in [
            ("timing.delta1_s", self.timing.delta1_s),
            ("timing.delta3_s", self.timing.delta3_s),
            ("kinematics.v_max_mps", self.kinematics.v_max_mps),
            ("world.side_m", self.world.side_m),
            ("world.scene_alt_m", self.world.scene_alt_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} ({v}) must be positive"));
            }
        }
        if self.timing.max_slots == 0 {
            problems.push("timing.max_slots must be at least 1".into());
        }
        if self.kinematics.beta_com_deg <= self.kinematics.beta_sen_deg {
            problems.push(format!(
                "kinematics.beta_com_deg ({}) must exceed beta_sen_deg ({})",
                self.kinematics.beta_com_deg, self.kinematics.beta_sen_deg
            ));
        }
        if !(self.kinematics.beta_sen_deg >= 0.0 && self.kinematics.beta_com_deg < 90.0) {
            problems.push("kinematics beamwidths must lie in [0, 90) degrees".into());
        }
        if self.kinematics.max_flight_alt_m > self.world.scene_alt_m {
            problems.push(format!(
                "kinematics.max_flight_alt_m ({}) cannot exceed world.scene_alt_m ({})",
                self.kinematics.max_flight_alt_m, self.world.scene_alt_m
            ));
        }
        if self.world.grid_rows == 0 || self.world.grid_rows != self.world.grid_cols {
            problems.push(format!(
                "world.grid_rows ({}) and world.grid_cols ({}) must be equal and positive",
                self.world.grid_rows, self.world.grid_cols
            ));
        }
        if self.channel.gamma_nlos_db <= self.channel.gamma_los_db {
            problems.push(format!(
                "channel.gamma_nlos_db ({}) must exceed channel.gamma_los_db ({})",
                self.channel.gamma_nlos_db, self.channel.gamma_los_db
            ));
        }
        if let Err(e) = self.reward.validate() {
            problems.push(e);
        }
        if let Err(e) = self.td3.validate() {
            problems.push(e);
        }
        if self.anneal.t0 <= 0.0
            || !(self.anneal.cooling > 0.0 && self.anneal.cooling < 1.0)
            || self.anneal.max_iter == 0
        {
            problems.push(format!(
                "anneal requires t0 > 0, cooling in (0, 1), max_iter >= 1 \
                 (got {}, {}, {})",
                self.anneal.t0, self.anneal.cooling, self.anneal.max_iter
            ));
        }
        if NetSpec::by_name(&self.net.preset).is_err() {
            problems.push(format!("net.preset ('{}') is not a known preset", self.net.preset));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn net_spec(&self) -> NetSpec {
        NetSpec::by_name(&self.net.preset).expect("validated preset")
    }

    /// Convert into the simulator's runtime bundle: Mbit to bits, dBm to
    /// watts, degrees to radians.
    pub fn to_sim_params(&self) -> SimParams {
        let world = WorldGenConfig {
            side_xy: self.world.side_m,
            max_alt: self.world.scene_alt_m,
            building_count: self.world.building_count,
            building_len_range: self.world.building_len_range_m,
            height_scale: self.world.building_height_scale_m,
            height_range: self.world.building_height_range_m,
            user_count: self.world.user_count,
            demand_bits: self.world.demand_mbits * 1.0e6,
            bs_position: Vec3::new(
                self.world.bs_position_m[0],
                self.world.bs_position_m[1],
                self.world.bs_position_m[2],
            ),
            clear_column: Some((self.world.uav_start_m[0], self.world.uav_start_m[1])),
            max_retries: self.world.placement_max_retries,
        };
        let channel_params = ChannelParams {
            f_c_hz: self.channel.carrier_hz,
            bandwidth_hz: self.channel.bandwidth_hz,
            p_b_w: dbm_to_watts(self.channel.bs_power_dbm),
            p_u_w: dbm_to_watts(self.channel.uav_power_dbm),
            noise_w: dbm_to_watts(self.channel.noise_dbm),
            gamma_los_db: self.channel.gamma_los_db,
            gamma_nlos_db: self.channel.gamma_nlos_db,
            rician_k_db: self.channel.rician_k_db,
            light_speed: self.channel.light_speed_mps,
        };
        SimParams {
            grid: GridGeometry::new(self.world.side_m, self.world.grid_rows, self.world.grid_cols),
            world,
            uav_start: Vec3::new(
                self.world.uav_start_m[0],
                self.world.uav_start_m[1],
                self.world.uav_start_m[2],
            ),
            max_flight_alt: self.kinematics.max_flight_alt_m,
            delta1: self.timing.delta1_s,
            delta2: self.timing.delta2_s,
            delta3: self.timing.delta3_s,
            max_slots: self.timing.max_slots,
            v_max: self.kinematics.v_max_mps,
            beta_sen: self.kinematics.beta_sen_deg.to_radians(),
            beta_com: self.kinematics.beta_com_deg.to_radians(),
            channel: ChannelModel::new(channel_params, self.channel.freeze_fading),
            weights: self.reward,
            anneal: self.anneal.clone(),
            dt_enabled: self.mode.dt_enabled,
        }
    }
}

/// Read, parse, and validate a config file.
pub fn load_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SimConfig::from_toml_str(&text)
}
