//! Observation tensors and service-target selection.

use serde::{Deserialize, Serialize};

use crate::scheduler::Schedule;
use crate::twin::{CellState, VirtualEnv};
use crate::world::{coverage_radius, GridGeometry, GroundUser, Vec3};

use super::RewardWeights;

/// The two stacked observation matrices. Values are stored as f32 because
/// replay buffers hold hundreds of thousands of these; all math that
/// produces them runs in f64 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTensor {
    pub rows: usize,
    pub cols: usize,
    pub s1: Vec<f32>,
    pub s2: Vec<f32>,
}

impl StateTensor {
    pub fn s1_f64(&self) -> Vec<f64> {
        self.s1.iter().map(|&v| v as f64).collect()
    }

    pub fn s2_f64(&self) -> Vec<f64> {
        self.s2.iter().map(|&v| v as f64).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.s1.iter().chain(self.s2.iter()).all(|v| v.is_finite())
    }
}

/// Service matrix: summed attractive potentials of unserved users (priority
/// weights descending in schedule order), normalized by `K * J_dp`, with the
/// communication disc overwritten to the normalized altitude.
pub fn build_s1(
    users: &[GroundUser],
    schedule: &Schedule,
    uav: &Vec3,
    grid: &GridGeometry,
    weights: &RewardWeights,
    beta_com: f64,
    max_alt: f64,
) -> Vec<f64> {
    let k = users.len();
    let mut out = vec![0.0; grid.n_cells()];
    if k > 0 {
        // Priority weight by schedule position: K for the first listed user
        // down to 1 for the last; served users contribute nothing.
        let mut mu = vec![0.0; k];
        for (rank, &user_idx) in schedule.order.iter().enumerate() {
            mu[user_idx] = (k - rank) as f64;
        }
        let norm = k as f64 * weights.j_dp;
        for row in 0..grid.rows {
            for col in 0..grid.cols {
                let (cx, cy) = grid.cell_center(row, col);
                let mut potential = 0.0;
                for user in users {
                    if user.served {
                        continue;
                    }
                    let d = (cx - user.position.x).hypot(cy - user.position.y);
                    if d <= weights.j_dp {
                        potential += mu[user.id] * (d - weights.j_dp);
                    }
                }
                out[row * grid.cols + col] = potential / norm;
            }
        }
    }
    overwrite_disc(&mut out, uav, grid, beta_com, max_alt);
    out
}

/// Obstacle matrix: sensed building heights normalized by the scene
/// ceiling, with the sensing disc overwritten to the normalized altitude.
pub fn build_s2(
    ve: &VirtualEnv,
    uav: &Vec3,
    grid: &GridGeometry,
    beta_sen: f64,
    max_alt: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_cells()];
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            if let CellState::Occupied { height } = ve.cell(row, col) {
                out[row * grid.cols + col] = height / max_alt;
            }
        }
    }
    overwrite_disc(&mut out, uav, grid, beta_sen, max_alt);
    out
}

fn overwrite_disc(out: &mut [f64], uav: &Vec3, grid: &GridGeometry, beta: f64, max_alt: f64) {
    let radius = match coverage_radius(uav.z, beta) {
        Ok(r) => r,
        Err(_) => return,
    };
    let r2 = radius * radius;
    let value = uav.z / max_alt;
    let r_lo = ((uav.x - radius) / grid.cell_size).floor().max(0.0) as usize;
    let r_hi = (((uav.x + radius) / grid.cell_size).ceil() as usize).min(grid.rows);
    let c_lo = ((uav.y - radius) / grid.cell_size).floor().max(0.0) as usize;
    let c_hi = (((uav.y + radius) / grid.cell_size).ceil() as usize).min(grid.cols);
    for row in r_lo..r_hi {
        for col in c_lo..c_hi {
            let (cx, cy) = grid.cell_center(row, col);
            let dx = cx - uav.x;
            let dy = cy - uav.y;
            if dx * dx + dy * dy <= r2 {
                out[row * grid.cols + col] = value;
            }
        }
    }
}

/// First unserved user in schedule order: the current navigation goal.
pub fn navigation_target(schedule: &Schedule, users: &[GroundUser]) -> Option<usize> {
    schedule
        .order
        .iter()
        .copied()
        .find(|&idx| !users[idx].served)
}

/// Whom to serve this slot: the schedule's first unserved user if it is
/// within communication range, otherwise the nearest unserved user in
/// range, otherwise nobody.
pub fn select_service_target(
    schedule: &Schedule,
    users: &[GroundUser],
    uav: &Vec3,
    d_com: f64,
) -> Option<usize> {
    let first = navigation_target(schedule, users)?;
    if uav.distance(&users[first].position) <= d_com {
        return Some(first);
    }
    let mut best: Option<(usize, f64)> = None;
    for user in users.iter().filter(|u| !u.served) {
        let d = uav.distance(&user.position);
        if d <= d_com && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((user.id, d));
        }
    }
    best.map(|(id, _)| id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::VirtualEnv;
    use crate::world::SensedCell;
    use approx::assert_relative_eq;

    fn users_at(points: &[(f64, f64)]) -> Vec<GroundUser> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GroundUser::new(i, x, y, 1.0e6))
            .collect()
    }

    fn grid20() -> GridGeometry {
        GridGeometry::new(200.0, 20, 20)
    }

    #[test]
    fn s1_potential_matches_hand_value() {
        // Ten users far apart; probe the cell holding the top-priority one.
        // Raw potential at the user position: K * (0 - J_dp) = -500; the
        // cell center sits 5*sqrt(2) m away, so use the exact distance.
        let mut pts = vec![(105.0, 105.0)];
        for i in 0..9 {
            pts.push((5.0 + 20.0 * i as f64, 5.0));
        }
        let users = users_at(&pts);
        let schedule = Schedule::identity(10);
        let weights = RewardWeights::default();
        let grid = grid20();
        let uav = Vec3::new(195.0, 195.0, 1.0); // tiny disc far away
        let s1 = build_s1(&users, &schedule, &uav, &grid, &weights, 0.1, 60.0);
        let cell_center_d = 0.0f64.hypot(0.0); // user sits exactly on (105,105)?
        let _ = cell_center_d;
        // Cell (10, 10) has center (105, 105): distance 0 to user 0.
        let raw = 10.0 * (0.0 - 50.0);
        assert_relative_eq!(
            s1[10 * 20 + 10],
            raw / (10.0 * 50.0),
            epsilon = 1e-9
        );
        assert_relative_eq!(s1[10 * 20 + 10], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn s1_zero_far_from_users_and_disc() {
        let users = users_at(&[(5.0, 5.0)]);
        let schedule = Schedule::identity(1);
        let weights = RewardWeights::default();
        let grid = grid20();
        let uav = Vec3::new(15.0, 15.0, 10.0);
        let s1 = build_s1(&users, &schedule, &uav, &grid, &weights, 0.5, 60.0);
        // A corner cell far from the user and outside the disc.
        assert_eq!(s1[19 * 20 + 19], 0.0);
    }

    #[test]
    fn s1_served_users_contribute_zero() {
        let mut users = users_at(&[(105.0, 105.0)]);
        users[0].served = true;
        let schedule = Schedule::identity(1);
        let weights = RewardWeights::default();
        let grid = grid20();
        let uav = Vec3::new(15.0, 15.0, 10.0);
        let s1 = build_s1(&users, &schedule, &uav, &grid, &weights, 0.5, 60.0);
        assert_eq!(s1[10 * 20 + 10], 0.0);
    }

    #[test]
    fn s1_disc_overwrites_with_normalized_altitude() {
        let users = users_at(&[(105.0, 105.0)]);
        let schedule = Schedule::identity(1);
        let weights = RewardWeights::default();
        let grid = grid20();
        let uav = Vec3::new(105.0, 105.0, 30.0);
        let s1 = build_s1(
            &users,
            &schedule,
            &uav,
            &grid,
            &weights,
            std::f64::consts::FRAC_PI_4,
            60.0,
        );
        assert_relative_eq!(s1[10 * 20 + 10], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn s2_heights_and_disc() {
        let grid = grid20();
        let mut ve = VirtualEnv::new(grid);
        let sensor = Vec3::new(15.0, 15.0, 30.0);
        ve.apply_report(
            &crate::world::SensingReport {
                slot: 1,
                cells: vec![SensedCell {
                    row: 18,
                    col: 18,
                    height: 60.0,
                }],
            },
            &sensor,
            std::f64::consts::FRAC_PI_6,
        )
        .unwrap();
        let uav = Vec3::new(15.0, 15.0, 30.0);
        let s2 = build_s2(&ve, &uav, &grid, std::f64::consts::FRAC_PI_6, 60.0);
        // Occupied cell outside the disc keeps its normalized height.
        assert_relative_eq!(s2[18 * 20 + 18], 1.0);
        // The UAV's own cell carries the normalized altitude.
        assert_relative_eq!(s2[1 * 20 + 1], 0.5);
        // All-unknown elsewhere: zero.
        assert_eq!(s2[10 * 20 + 18], 0.0);
    }

    #[test]
    fn service_target_priority_rules() {
        let users = users_at(&[(100.0, 100.0), (60.0, 60.0), (180.0, 180.0)]);
        let schedule = Schedule {
            order: vec![0, 1, 2],
        };
        let uav = Vec3::new(55.0, 55.0, 30.0);
        // First unserved (0) is ~70 m away; user 1 is ~8 m away. With range
        // 100 the priority rule still picks user 0.
        assert_eq!(
            select_service_target(&schedule, &users, &uav, 100.0),
            Some(0)
        );
        // With range 40 user 0 is out of reach; nearest in range is 1.
        assert_eq!(select_service_target(&schedule, &users, &uav, 40.0), Some(1));
        // Range too small for anyone.
        assert_eq!(select_service_target(&schedule, &users, &uav, 5.0), None);

        let mut served = users.clone();
        for u in &mut served {
            u.served = true;
        }
        assert_eq!(select_service_target(&schedule, &served, &uav, 1e9), None);
        assert_eq!(navigation_target(&schedule, &served), None);
    }
}
