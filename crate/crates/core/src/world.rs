//! Ground-truth 3-D mission environment.
//!
//! The world is a square scene with axis-aligned box buildings and static
//! ground users. All geometry queries (containment, segment-box
//! intersection, line of sight, cone coverage, sensing) operate on this
//! ground truth; the digital twin in [`crate::twin`] only ever sees what
//! [`sense`] reports.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::rng_from_seed;

/// A point or displacement in the mission frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Distance ignoring the z components.
    pub fn ground_distance(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// An axis-aligned building: footprint in the xy-plane extruded from the
/// ground up to `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub height: f64,
}

impl Building {
    /// Closed-footprint containment test in the ground plane.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn footprint_overlaps(&self, other: &Building) -> bool {
        self.x_min <= other.x_max
            && self.x_max >= other.x_min
            && self.y_min <= other.y_max
            && self.y_max >= other.y_min
    }

    pub fn footprint_area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn volume(&self) -> f64 {
        self.footprint_area() * self.height
    }
}

/// A static terminal on the ground with a fixed data demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundUser {
    pub id: usize,
    pub position: Vec3,
    pub demand_bits: f64,
    pub delivered_bits: f64,
    pub served: bool,
    /// Slot index at which the cumulative delivered data first met the
    /// demand, if it has.
    pub first_served_slot: Option<usize>,
}

impl GroundUser {
    pub fn new(id: usize, x: f64, y: f64, demand_bits: f64) -> Self {
        Self {
            id,
            position: Vec3::new(x, y, 0.0),
            demand_bits,
            delivered_bits: 0.0,
            served: demand_bits <= 0.0,
            first_served_slot: None,
        }
    }

    /// Accumulate delivered data; flips `served` and records the slot the
    /// first time the demand is met.
    pub fn deliver(&mut self, bits: f64, slot: usize) {
        self.delivered_bits += bits;
        if !self.served && self.delivered_bits >= self.demand_bits {
            self.served = true;
            self.first_served_slot = Some(slot);
        }
    }
}

/// The ground-truth scene: bounds, buildings, users, and the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentMap {
    /// Side length of the square mission area, meters.
    pub side_xy: f64,
    /// Scene ceiling; buildings never exceed it.
    pub max_alt: f64,
    pub buildings: Vec<Building>,
    pub users: Vec<GroundUser>,
    pub bs_position: Vec3,
}

impl EnvironmentMap {
    /// Total building volume divided by the mission-space volume.
    pub fn obstacle_ratio(&self) -> f64 {
        let total: f64 = self.buildings.iter().map(Building::volume).sum();
        total / (self.side_xy * self.side_xy * self.max_alt)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// One sensed grid cell: the cell indices plus the building height observed
/// there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensedCell {
    pub row: usize,
    pub col: usize,
    pub height: f64,
}

/// Everything the UAV's sensing cone picked up in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingReport {
    pub slot: usize,
    pub cells: Vec<SensedCell>,
}

/// Discretization of the mission area into `rows x cols` square cells.
/// Row index runs along x, column index along y; cell (i, j) covers
/// `[i*cell, (i+1)*cell) x [j*cell, (j+1)*cell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
}

impl GridGeometry {
    pub fn new(side_xy: f64, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cell_size: side_xy / rows as f64,
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (row as f64 + 0.5) * self.cell_size,
            (col as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing the point, clamped to the grid at the far edges.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let row = ((x / self.cell_size).floor() as isize).clamp(0, self.rows as isize - 1);
        let col = ((y / self.cell_size).floor() as isize).clamp(0, self.cols as isize - 1);
        (row as usize, col as usize)
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("coverage angle beta = {0} rad is outside [0, pi/2)")]
    BetaOutOfRange(f64),
    #[error("failed to place {what} after {retries} retries")]
    PlacementFailed { what: &'static str, retries: usize },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// Parameters for random scene generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldGenConfig {
    pub side_xy: f64,
    pub max_alt: f64,
    pub building_count: usize,
    /// Uniform range for footprint edge lengths, meters.
    pub building_len_range: (f64, f64),
    /// Rayleigh scale for building heights.
    pub height_scale: f64,
    /// Heights are clamped (not re-drawn) into this range.
    pub height_range: (f64, f64),
    pub user_count: usize,
    pub demand_bits: f64,
    pub bs_position: Vec3,
    /// Ground point no building footprint may cover (the launch pad).
    pub clear_column: Option<(f64, f64)>,
    pub max_retries: usize,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        Self {
            side_xy: 1000.0,
            max_alt: 150.0,
            building_count: 8,
            building_len_range: (50.0, 150.0),
            height_scale: 100.0,
            height_range: (40.0, 150.0),
            user_count: 10,
            demand_bits: 10.0e6,
            bs_position: Vec3::new(0.0, 0.0, 30.0),
            clear_column: None,
            max_retries: 10_000,
        }
    }
}

/// Generate a scene deterministically from `(cfg, seed)`.
///
/// Buildings are placed by rejection sampling with non-overlapping
/// footprints; heights follow a Rayleigh distribution clamped into
/// `height_range`. Users are placed uniformly on the ground outside every
/// footprint.
pub fn generate_environment(cfg: &WorldGenConfig, seed: u64) -> Result<EnvironmentMap, WorldError> {
    if cfg.side_xy <= 0.0 || cfg.max_alt <= 0.0 {
        return Err(WorldError::InvalidConfig(
            "scene dimensions must be positive".into(),
        ));
    }
    if cfg.building_len_range.0 <= 0.0 || cfg.building_len_range.1 < cfg.building_len_range.0 {
        return Err(WorldError::InvalidConfig(
            "building length range must be positive and ordered".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let buildings = place_buildings(cfg, &mut rng)?;
    let users = place_users(cfg, &buildings, &mut rng)?;
    Ok(EnvironmentMap {
        side_xy: cfg.side_xy,
        max_alt: cfg.max_alt,
        buildings,
        users,
        bs_position: cfg.bs_position,
    })
}

/// Inverse-CDF Rayleigh draw: `scale * sqrt(-2 ln U)`.
fn sample_rayleigh(scale: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    scale * (-2.0 * u.ln()).sqrt()
}

fn place_buildings(
    cfg: &WorldGenConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Building>, WorldError> {
    if cfg.height_scale <= 0.0 {
        return Err(WorldError::InvalidConfig(
            "building height scale must be positive".into(),
        ));
    }
    let mut buildings: Vec<Building> = Vec::with_capacity(cfg.building_count);
    let mut retries = 0;
    while buildings.len() < cfg.building_count {
        let len_x = rng.gen_range(cfg.building_len_range.0..=cfg.building_len_range.1);
        let len_y = rng.gen_range(cfg.building_len_range.0..=cfg.building_len_range.1);
        if len_x >= cfg.side_xy || len_y >= cfg.side_xy {
            return Err(WorldError::InvalidConfig(
                "building edge exceeds scene side".into(),
            ));
        }
        let x_min = rng.gen_range(0.0..=(cfg.side_xy - len_x));
        let y_min = rng.gen_range(0.0..=(cfg.side_xy - len_y));
        let height = sample_rayleigh(cfg.height_scale, rng)
            .clamp(cfg.height_range.0, cfg.height_range.1.min(cfg.max_alt));
        let candidate = Building {
            x_min,
            x_max: x_min + len_x,
            y_min,
            y_max: y_min + len_y,
            height,
        };
        let blocks_clear_column = cfg
            .clear_column
            .is_some_and(|(x, y)| candidate.footprint_contains(x, y));
        if blocks_clear_column || buildings.iter().any(|b| b.footprint_overlaps(&candidate)) {
            retries += 1;
            if retries > cfg.max_retries {
                return Err(WorldError::PlacementFailed {
                    what: "non-overlapping building footprint",
                    retries,
                });
            }
            continue;
        }
        buildings.push(candidate);
    }
    Ok(buildings)
}

fn place_users(
    cfg: &WorldGenConfig,
    buildings: &[Building],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GroundUser>, WorldError> {
    let mut users = Vec::with_capacity(cfg.user_count);
    let mut retries = 0;
    while users.len() < cfg.user_count {
        let x = rng.gen_range(0.0..=cfg.side_xy);
        let y = rng.gen_range(0.0..=cfg.side_xy);
        if buildings.iter().any(|b| b.footprint_contains(x, y)) {
            retries += 1;
            if retries > cfg.max_retries {
                return Err(WorldError::PlacementFailed {
                    what: "user position outside building footprints",
                    retries,
                });
            }
            continue;
        }
        users.push(GroundUser::new(users.len(), x, y, cfg.demand_bits));
    }
    Ok(users)
}

/// True iff `p` lies inside some building's closed footprint at or below its
/// roof.
pub fn point_in_building(env: &EnvironmentMap, p: &Vec3) -> bool {
    env.buildings
        .iter()
        .any(|b| b.footprint_contains(p.x, p.y) && p.z <= b.height)
}

/// Slab test: does the closed segment `p0 -> p1` intersect the closed box
/// `[x_min, x_max] x [y_min, y_max] x [0, height]`?
pub fn segment_intersects_box(p0: &Vec3, p1: &Vec3, b: &Building) -> bool {
    let mut t_enter: f64 = 0.0;
    let mut t_exit: f64 = 1.0;
    let axes = [
        (p0.x, p1.x - p0.x, b.x_min, b.x_max),
        (p0.y, p1.y - p0.y, b.y_min, b.y_max),
        (p0.z, p1.z - p0.z, 0.0, b.height),
    ];
    for (origin, dir, lo, hi) in axes {
        if dir.abs() < 1e-300 {
            if origin < lo || origin > hi {
                return false;
            }
            continue;
        }
        let t0 = (lo - origin) / dir;
        let t1 = (hi - origin) / dir;
        let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return false;
        }
    }
    true
}

/// Line-of-sight flag between two points: 1 when no building obstructs the
/// segment, 0 otherwise.
pub fn line_of_sight(env: &EnvironmentMap, p0: &Vec3, p1: &Vec3) -> u8 {
    if env
        .buildings
        .iter()
        .any(|b| segment_intersects_box(p0, p1, b))
    {
        0
    } else {
        1
    }
}

/// Cone coverage radius at altitude `z` for half-beamwidth `beta`:
/// `z / cos(beta)`.
pub fn coverage_radius(z: f64, beta: f64) -> Result<f64, WorldError> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&beta) {
        return Err(WorldError::BetaOutOfRange(beta));
    }
    Ok(z / beta.cos())
}

/// Geometric sensing: report every grid cell whose center lies within the
/// sensing disc and under a building footprint, with the true building
/// height. The sensor is ideal; occlusion and noise are not modeled.
pub fn sense(
    env: &EnvironmentMap,
    uav: &Vec3,
    beta_sen: f64,
    grid: &GridGeometry,
    slot: usize,
) -> Result<SensingReport, WorldError> {
    let radius = coverage_radius(uav.z, beta_sen)?;
    let mut cells = Vec::new();
    // Only cells inside the disc's bounding square can qualify.
    let r_lo = ((uav.x - radius) / grid.cell_size).floor().max(0.0) as usize;
    let r_hi = (((uav.x + radius) / grid.cell_size).ceil() as usize).min(grid.rows);
    let c_lo = ((uav.y - radius) / grid.cell_size).floor().max(0.0) as usize;
    let c_hi = (((uav.y + radius) / grid.cell_size).ceil() as usize).min(grid.cols);
    for row in r_lo..r_hi {
        for col in c_lo..c_hi {
            let (cx, cy) = grid.cell_center(row, col);
            let dx = cx - uav.x;
            let dy = cy - uav.y;
            if dx * dx + dy * dy > radius * radius {
                continue;
            }
            if let Some(b) = env.buildings.iter().find(|b| b.footprint_contains(cx, cy)) {
                cells.push(SensedCell {
                    row,
                    col,
                    height: b.height,
                });
            }
        }
    }
    Ok(SensingReport { slot, cells })
}
