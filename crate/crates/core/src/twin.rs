//! Digital-twin layer: the reconstructed occupancy grid, pre-action safety
//! gating, planning-time line-of-sight prediction, and training-environment
//! spawning.
//!
//! The twin only ever knows what sensing reported. Unknown cells are treated
//! as free for planning; that stays safe as long as the sensing radius
//! exceeds the per-slot displacement, which the config loader warns about
//! when violated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    self, coverage_radius, segment_intersects_box, Building, EnvironmentMap, GridGeometry,
    SensingReport, Vec3, WorldError, WorldGenConfig,
};

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("sensed cell ({row}, {col}) outside {rows}x{cols} grid")]
    CellOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Knowledge state of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    FreeObserved,
    Occupied { height: f64 },
}

/// The reconstructed occupancy grid of sensed building heights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualEnv {
    pub grid: GridGeometry,
    cells: Vec<CellState>,
    revision: u64,
}

impl VirtualEnv {
    pub fn new(grid: GridGeometry) -> Self {
        Self {
            cells: vec![CellState::Unknown; grid.n_cells()],
            grid,
            revision: 0,
        }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn cell(&self, row: usize, col: usize) -> CellState {
        self.cells[row * self.grid.cols + col]
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    /// Fold one sensing report into the grid: reported cells become
    /// occupied, in-disc unreported cells become observed-free, everything
    /// else is untouched. Occupied cells never revert. The revision
    /// advances on every call, identical content or not.
    pub fn apply_report(
        &mut self,
        report: &SensingReport,
        uav: &Vec3,
        beta_sen: f64,
    ) -> Result<(), TwinError> {
        for c in &report.cells {
            if c.row >= self.grid.rows || c.col >= self.grid.cols {
                return Err(TwinError::CellOutOfRange {
                    row: c.row,
                    col: c.col,
                    rows: self.grid.rows,
                    cols: self.grid.cols,
                });
            }
        }
        let radius = coverage_radius(uav.z, beta_sen)?;
        let r2 = radius * radius;
        let r_lo = ((uav.x - radius) / self.grid.cell_size).floor().max(0.0) as usize;
        let r_hi = (((uav.x + radius) / self.grid.cell_size).ceil() as usize).min(self.grid.rows);
        let c_lo = ((uav.y - radius) / self.grid.cell_size).floor().max(0.0) as usize;
        let c_hi = (((uav.y + radius) / self.grid.cell_size).ceil() as usize).min(self.grid.cols);
        for row in r_lo..r_hi {
            for col in c_lo..c_hi {
                let (cx, cy) = self.grid.cell_center(row, col);
                let dx = cx - uav.x;
                let dy = cy - uav.y;
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let slot = &mut self.cells[row * self.grid.cols + col];
                if matches!(slot, CellState::Unknown) {
                    *slot = CellState::FreeObserved;
                }
            }
        }
        for c in &report.cells {
            self.cells[c.row * self.grid.cols + c.col] = CellState::Occupied { height: c.height };
        }
        self.revision += 1;
        Ok(())
    }

    /// The solid box represented by an occupied cell.
    fn cell_box(&self, row: usize, col: usize, height: f64) -> Building {
        Building {
            x_min: row as f64 * self.grid.cell_size,
            x_max: (row + 1) as f64 * self.grid.cell_size,
            y_min: col as f64 * self.grid.cell_size,
            y_max: (col + 1) as f64 * self.grid.cell_size,
            height,
        }
    }

    /// Line-of-sight verdict against the reconstructed grid only; unknown
    /// cells count as free. Exact slab tests against each occupied cell box.
    pub fn predict_los(&self, uav: &Vec3, gu: &Vec3) -> u8 {
        for row in 0..self.grid.rows {
            for col in 0..self.grid.cols {
                if let CellState::Occupied { height } = self.cell(row, col) {
                    if segment_intersects_box(uav, gu, &self.cell_box(row, col, height)) {
                        return 0;
                    }
                }
            }
        }
        1
    }

    /// Does the swept segment cross any occupied column below its sensed
    /// height? Samples at half-cell spacing so a full-speed slot step cannot
    /// tunnel through a cell.
    pub fn segment_hits_occupied(&self, p0: &Vec3, p1: &Vec3) -> bool {
        let length = p0.distance(p1);
        let step = self.grid.cell_size / 2.0;
        let n = (length / step).ceil().max(1.0) as usize;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let x = p0.x + (p1.x - p0.x) * t;
            let y = p0.y + (p1.y - p0.y) * t;
            let z = p0.z + (p1.z - p0.z) * t;
            if x < 0.0
                || y < 0.0
                || x >= self.grid.rows as f64 * self.grid.cell_size
                || y >= self.grid.cols as f64 * self.grid.cell_size
            {
                continue;
            }
            let (row, col) = self.grid.cell_of(x, y);
            if let CellState::Occupied { height } = self.cell(row, col) {
                if z <= height {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SafetyReason {
    None,
    BuildingCollision,
    OutOfBounds,
}

/// Outcome of the pre-action check; `safe` iff `reason == None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    safe: bool,
    reason: SafetyReason,
}

impl SafetyVerdict {
    pub fn safe() -> Self {
        Self {
            safe: true,
            reason: SafetyReason::None,
        }
    }

    pub fn unsafe_because(reason: SafetyReason) -> Self {
        debug_assert!(reason != SafetyReason::None);
        Self {
            safe: false,
            reason,
        }
    }

    pub fn is_safe(&self) -> bool {
        self.safe
    }

    pub fn reason(&self) -> SafetyReason {
        self.reason
    }
}

/// Flight-volume limits for the boundary check: the mission square plus the
/// flight ceiling (which may sit below the scene ceiling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionBounds {
    pub side_xy: f64,
    pub max_flight_alt: f64,
}

impl MissionBounds {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0.0..=self.side_xy).contains(&p.x)
            && (0.0..=self.side_xy).contains(&p.y)
            && (0.0..=self.max_flight_alt).contains(&p.z)
    }
}

/// Kinematic update rule: one slot of straight flight at velocity `v` with
/// vertical angle from the z-axis and horizontal angle in the xy-plane.
pub fn predict_next_position(pos: &Vec3, a: &crate::mdp::FlightAction, delta_s: f64) -> Vec3 {
    Vec3::new(
        pos.x + a.velocity * a.psi_ver.sin() * a.psi_hor.cos() * delta_s,
        pos.y + a.velocity * a.psi_ver.sin() * a.psi_hor.sin() * delta_s,
        pos.z + a.velocity * a.psi_ver.cos() * delta_s,
    )
}

/// Pre-action safety check. The verdict is computed against the twin's
/// knowledge; when `env` is supplied the true buildings are checked as well
/// (exact slab tests), which is how the simulator enforces physics for
/// moves the twin had no way to predict.
pub fn safety_gate(
    ve: &VirtualEnv,
    env: Option<&EnvironmentMap>,
    pos: &Vec3,
    action: &crate::mdp::FlightAction,
    bounds: &MissionBounds,
    delta_s: f64,
) -> SafetyVerdict {
    let predicted = predict_next_position(pos, action, delta_s);
    if !bounds.contains(&predicted) {
        return SafetyVerdict::unsafe_because(SafetyReason::OutOfBounds);
    }
    if ve.segment_hits_occupied(pos, &predicted) {
        return SafetyVerdict::unsafe_because(SafetyReason::BuildingCollision);
    }
    if let Some(env) = env {
        if env
            .buildings
            .iter()
            .any(|b| segment_intersects_box(pos, &predicted, b))
        {
            return SafetyVerdict::unsafe_because(SafetyReason::BuildingCollision);
        }
    }
    SafetyVerdict::safe()
}

/// Spawn a fresh training environment; distinct seeds give distinct layouts.
pub fn spawn_training_ve(cfg: &WorldGenConfig, seed: u64) -> Result<EnvironmentMap, WorldError> {
    world::generate_environment(cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::FlightAction;
    use crate::world::{generate_environment, sense, SensedCell};

    fn grid20() -> GridGeometry {
        GridGeometry::new(200.0, 20, 20)
    }

    fn report_of(cells: Vec<SensedCell>) -> SensingReport {
        SensingReport { slot: 1, cells }
    }

    #[test]
    fn apply_report_marks_cells() {
        let mut ve = VirtualEnv::new(grid20());
        let uav = Vec3::new(100.0, 100.0, 40.0);
        let beta = std::f64::consts::FRAC_PI_6;
        ve.apply_report(&report_of(vec![]), &uav, beta).unwrap();
        // All in-disc cells observed free, nothing else touched.
        let radius = coverage_radius(40.0, beta).unwrap();
        let mut free = 0;
        for row in 0..20 {
            for col in 0..20 {
                let (cx, cy) = ve.grid.cell_center(row, col);
                let inside = (cx - 100.0).hypot(cy - 100.0) <= radius;
                match ve.cell(row, col) {
                    CellState::FreeObserved => {
                        assert!(inside);
                        free += 1;
                    }
                    CellState::Unknown => assert!(!inside),
                    CellState::Occupied { .. } => panic!("no occupancy reported"),
                }
            }
        }
        assert!(free > 0);
        assert_eq!(ve.revision(), 1);

        ve.apply_report(
            &report_of(vec![SensedCell {
                row: 10,
                col: 11,
                height: 35.0,
            }]),
            &uav,
            beta,
        )
        .unwrap();
        assert_eq!(ve.cell(10, 11), CellState::Occupied { height: 35.0 });
        assert_eq!(ve.revision(), 2);
    }

    #[test]
    fn apply_report_idempotent_content_but_not_revision() {
        let mut ve = VirtualEnv::new(grid20());
        let uav = Vec3::new(100.0, 100.0, 40.0);
        let beta = std::f64::consts::FRAC_PI_6;
        let report = report_of(vec![SensedCell {
            row: 9,
            col: 9,
            height: 22.0,
        }]);
        ve.apply_report(&report, &uav, beta).unwrap();
        let cells_after_one: Vec<CellState> = ve.cells().to_vec();
        ve.apply_report(&report, &uav, beta).unwrap();
        assert_eq!(ve.cells(), &cells_after_one[..]);
        assert_eq!(ve.revision(), 2);
    }

    #[test]
    fn apply_report_rejects_out_of_range() {
        let mut ve = VirtualEnv::new(grid20());
        let uav = Vec3::new(100.0, 100.0, 40.0);
        let err = ve.apply_report(
            &report_of(vec![SensedCell {
                row: 99,
                col: 0,
                height: 10.0,
            }]),
            &uav,
            std::f64::consts::FRAC_PI_6,
        );
        assert!(err.is_err());
    }

    #[test]
    fn occupied_never_reverts() {
        let mut ve = VirtualEnv::new(grid20());
        let uav = Vec3::new(100.0, 100.0, 40.0);
        let beta = std::f64::consts::FRAC_PI_6;
        ve.apply_report(
            &report_of(vec![SensedCell {
                row: 10,
                col: 10,
                height: 30.0,
            }]),
            &uav,
            beta,
        )
        .unwrap();
        // Later report without that cell: stays occupied.
        ve.apply_report(&report_of(vec![]), &uav, beta).unwrap();
        assert_eq!(ve.cell(10, 10), CellState::Occupied { height: 30.0 });
    }

    #[test]
    fn predict_next_position_eq1() {
        let pos = Vec3::new(0.0, 0.0, 100.0);
        let level = FlightAction::new(40.0, std::f64::consts::FRAC_PI_2, 0.0);
        let next = predict_next_position(&pos, &level, 1.2);
        assert!((next.x - 48.0).abs() < 1e-9);
        assert!(next.y.abs() < 1e-9);
        assert!((next.z - 100.0).abs() < 1e-9);

        let climb = FlightAction::new(10.0, 0.0, 1.0);
        let next = predict_next_position(&pos, &climb, 1.2);
        assert!((next.z - 112.0).abs() < 1e-9);
        assert!((next.x - 0.0).abs() < 1e-9);

        let hold = FlightAction::new(0.0, 1.0, 1.0);
        let next = predict_next_position(&pos, &hold, 1.2);
        assert_eq!(next, pos);
    }

    #[test]
    fn gate_bounds_and_collision() {
        let ve = VirtualEnv::new(grid20());
        let bounds = MissionBounds {
            side_xy: 200.0,
            max_flight_alt: 55.0,
        };
        let pos = Vec3::new(190.0, 100.0, 40.0);
        let east = FlightAction::new(20.0, std::f64::consts::FRAC_PI_2, 0.0);
        let verdict = safety_gate(&ve, None, &pos, &east, &bounds, 1.2);
        assert!(!verdict.is_safe());
        assert_eq!(verdict.reason(), SafetyReason::OutOfBounds);

        let mut ve = VirtualEnv::new(grid20());
        ve.apply_report(
            &report_of(vec![SensedCell {
                row: 11,
                col: 10,
                height: 50.0,
            }]),
            &Vec3::new(100.0, 105.0, 40.0),
            std::f64::consts::FRAC_PI_6,
        )
        .unwrap();
        // Crossing the occupied column at z = 40 is vetoed...
        let pos = Vec3::new(100.0, 105.0, 40.0);
        let verdict = safety_gate(&ve, None, &pos, &east, &bounds, 1.2);
        assert!(!verdict.is_safe());
        assert_eq!(verdict.reason(), SafetyReason::BuildingCollision);
        // ...but flying above the sensed roof is fine.
        let high = Vec3::new(100.0, 105.0, 51.0);
        let verdict = safety_gate(&ve, None, &high, &east, &bounds, 1.2);
        assert!(verdict.is_safe());
    }

    #[test]
    fn gate_checks_ground_truth_when_supplied() {
        let ve = VirtualEnv::new(grid20()); // twin knows nothing
        let env = EnvironmentMap {
            side_xy: 200.0,
            max_alt: 60.0,
            buildings: vec![Building {
                x_min: 110.0,
                x_max: 130.0,
                y_min: 95.0,
                y_max: 115.0,
                height: 50.0,
            }],
            users: vec![],
            bs_position: Vec3::new(0.0, 0.0, 10.0),
        };
        let bounds = MissionBounds {
            side_xy: 200.0,
            max_flight_alt: 55.0,
        };
        let pos = Vec3::new(100.0, 105.0, 40.0);
        let east = FlightAction::new(20.0, std::f64::consts::FRAC_PI_2, 0.0);
        assert!(safety_gate(&ve, None, &pos, &east, &bounds, 1.2).is_safe());
        let verdict = safety_gate(&ve, Some(&env), &pos, &east, &bounds, 1.2);
        assert!(!verdict.is_safe());
    }

    #[test]
    fn predict_los_optimistic_then_blocked() {
        let mut ve = VirtualEnv::new(grid20());
        let uav = Vec3::new(50.0, 105.0, 40.0);
        let gu = Vec3::new(150.0, 105.0, 0.0);
        assert_eq!(ve.predict_los(&uav, &gu), 1);
        ve.apply_report(
            &report_of(vec![SensedCell {
                row: 10,
                col: 10,
                height: 45.0,
            }]),
            &Vec3::new(100.0, 105.0, 40.0),
            std::f64::consts::FRAC_PI_6,
        )
        .unwrap();
        assert_eq!(ve.predict_los(&uav, &gu), 0);
    }

    #[test]
    fn predict_los_matches_ground_truth_after_full_sensing() {
        // Grid-aligned buildings so the reconstructed cell boxes tile the
        // true footprints exactly.
        let env = EnvironmentMap {
            side_xy: 200.0,
            max_alt: 60.0,
            buildings: vec![
                Building {
                    x_min: 40.0,
                    x_max: 80.0,
                    y_min: 60.0,
                    y_max: 100.0,
                    height: 45.0,
                },
                Building {
                    x_min: 120.0,
                    x_max: 160.0,
                    y_min: 120.0,
                    y_max: 150.0,
                    height: 30.0,
                },
            ],
            users: vec![],
            bs_position: Vec3::new(0.0, 0.0, 10.0),
        };
        let grid = grid20();
        let mut ve = VirtualEnv::new(grid);
        let beta = std::f64::consts::FRAC_PI_6;
        // Sweep the map so every building is fully sensed.
        for i in 0..10 {
            for j in 0..10 {
                let uav = Vec3::new(10.0 + 20.0 * i as f64, 10.0 + 20.0 * j as f64, 50.0);
                let report = sense(&env, &uav, beta, &grid, 0).unwrap();
                ve.apply_report(&report, &uav, beta).unwrap();
            }
        }
        let mut rng = crate::seeding::rng_from_seed(31);
        use rand::Rng;
        for _ in 0..500 {
            let uav = Vec3::new(
                rng.gen_range(0.0..200.0),
                rng.gen_range(0.0..200.0),
                rng.gen_range(5.0..55.0),
            );
            let gu = Vec3::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0), 0.0);
            if uav.distance(&gu) < 1e-6 {
                continue;
            }
            assert_eq!(
                ve.predict_los(&uav, &gu),
                crate::world::line_of_sight(&env, &uav, &gu),
                "uav {uav:?} gu {gu:?}"
            );
        }
    }

    #[test]
    fn spawn_training_ve_distinct_and_reproducible() {
        let cfg = WorldGenConfig::default();
        let a = spawn_training_ve(&cfg, 1).unwrap();
        let b = spawn_training_ve(&cfg, 1).unwrap();
        let c = spawn_training_ve(&cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.buildings.len(), cfg.building_count);
        let _ = generate_environment(&cfg, 3).unwrap();
    }
}
