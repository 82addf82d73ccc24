//! Link-budget computation for the BS-UAV and UAV-GU links.
//!
//! Large-scale fading is free-space path loss plus a LoS/NLoS shadowing
//! constant; small-scale fading is Rician (LoS) or Rayleigh (NLoS) with unit
//! mean power. Only power gains enter the rate equation, so the model works
//! in `|h|^2 = 10^(-LSF/10) * |SSF|^2` directly. All internal math is in
//! watts; dBm appears only at the config boundary.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("invalid channel params: {0}")]
    InvalidParams(String),
}

/// Physical-layer constants for both hops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub f_c_hz: f64,
    pub bandwidth_hz: f64,
    /// BS transmit power, watts.
    pub p_b_w: f64,
    /// UAV transmit power, watts.
    pub p_u_w: f64,
    /// AWGN power, watts.
    pub noise_w: f64,
    pub gamma_los_db: f64,
    pub gamma_nlos_db: f64,
    pub rician_k_db: f64,
    pub light_speed: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            f_c_hz: 2.0e9,
            bandwidth_hz: 1.0e7,
            p_b_w: dbm_to_watts(40.0),
            p_u_w: dbm_to_watts(10.0),
            noise_w: dbm_to_watts(-75.0),
            gamma_los_db: 0.1,
            gamma_nlos_db: 21.0,
            rician_k_db: 15.0,
            light_speed: 3.0e8,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, v) in [
            ("f_c_hz", self.f_c_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("p_b_w", self.p_b_w),
            ("p_u_w", self.p_u_w),
            ("noise_w", self.noise_w),
            ("light_speed", self.light_speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.gamma_nlos_db <= self.gamma_los_db {
            return Err(ChannelError::InvalidParams(format!(
                "gamma_nlos_db ({}) must exceed gamma_los_db ({})",
                self.gamma_nlos_db, self.gamma_los_db
            )));
        }
        Ok(())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One realized link: geometry, fading draws, and the resulting rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub distance: f64,
    pub los_flag: u8,
    pub lsf_db: f64,
    pub ssf_mag2: f64,
    pub gain_h_mag2: f64,
    pub rate_bps: f64,
}

/// Free-space path loss in dB:
/// `20 log10(d) + 20 log10(f_c) + 20 log10(4 pi / c)`.
pub fn free_space_path_loss_db(d: f64, f_c_hz: f64, light_speed: f64) -> Result<f64, ChannelError> {
    if d <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(d));
    }
    Ok(20.0 * d.log10()
        + 20.0 * f_c_hz.log10()
        + 20.0 * (4.0 * std::f64::consts::PI / light_speed).log10())
}

/// Path loss plus the LoS or NLoS shadowing constant.
pub fn large_scale_fading_db(
    d: f64,
    f_c_hz: f64,
    los: bool,
    params: &ChannelParams,
) -> Result<f64, ChannelError> {
    let pl = free_space_path_loss_db(d, f_c_hz, params.light_speed)?;
    Ok(pl + if los {
        params.gamma_los_db
    } else {
        params.gamma_nlos_db
    })
}

/// Draw one small-scale power gain `|SSF|^2` with unit mean.
///
/// LoS: Rician with K from `rician_k_db`, `SSF = sqrt(K/(K+1)) +
/// sqrt(1/(K+1)) CN(0,1)`. NLoS: Rayleigh, `SSF ~ CN(0,1)`.
pub fn sample_small_scale<R: Rng + ?Sized>(los: bool, params: &ChannelParams, rng: &mut R) -> f64 {
    // CN(0,1): each component N(0, 1/2).
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    if los {
        let k = db_to_linear(params.rician_k_db);
        let mean = (k / (k + 1.0)).sqrt();
        let diffuse = (1.0 / (k + 1.0)).sqrt();
        let h_re = mean + diffuse * scale * re;
        let h_im = diffuse * scale * im;
        h_re * h_re + h_im * h_im
    } else {
        let h_re = scale * re;
        let h_im = scale * im;
        h_re * h_re + h_im * h_im
    }
}

/// Shannon rate `B log2(1 + p g / N0)` in bits per second.
pub fn link_rate(p_tx_w: f64, gain_h_mag2: f64, params: &ChannelParams) -> f64 {
    params.bandwidth_hz * (1.0 + p_tx_w * gain_h_mag2 / params.noise_w).log2()
}

/// Relay bottleneck: the effective rate is the smaller hop rate.
pub fn effective_rate(r_bu: f64, r_uk: f64) -> f64 {
    r_bu.min(r_uk)
}

/// Data volume delivered in one service sub-slot.
pub fn slot_data(r_eff_bps: f64, delta2_s: f64) -> f64 {
    r_eff_bps * delta2_s
}

/// Channel model with an optional frozen-fading test mode that pins
/// `|SSF|^2 = 1` for deterministic golden values.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub params: ChannelParams,
    pub freeze_fading: bool,
}

impl ChannelModel {
    pub fn new(params: ChannelParams, freeze_fading: bool) -> Self {
        Self {
            params,
            freeze_fading,
        }
    }

    /// Assemble a full link budget for one hop at distance `d`.
    pub fn build_link<R: Rng + ?Sized>(
        &self,
        d: f64,
        los: bool,
        p_tx_w: f64,
        rng: &mut R,
    ) -> Result<LinkBudget, ChannelError> {
        let lsf_db = large_scale_fading_db(d, self.params.f_c_hz, los, &self.params)?;
        let ssf_mag2 = if self.freeze_fading {
            1.0
        } else {
            sample_small_scale(los, &self.params, rng)
        };
        let gain_h_mag2 = 10f64.powf(-lsf_db / 10.0) * ssf_mag2;
        let rate_bps = link_rate(p_tx_w, gain_h_mag2, &self.params);
        Ok(LinkBudget {
            distance: d,
            los_flag: los as u8,
            lsf_db,
            ssf_mag2,
            gain_h_mag2,
            rate_bps,
        })
    }

    /// BS-UAV hop; always LoS.
    pub fn bs_uav_link<R: Rng + ?Sized>(
        &self,
        d: f64,
        rng: &mut R,
    ) -> Result<LinkBudget, ChannelError> {
        self.build_link(d, true, self.params.p_b_w, rng)
    }

    /// UAV-GU hop with the physical LoS flag.
    pub fn uav_gu_link<R: Rng + ?Sized>(
        &self,
        d: f64,
        los: bool,
        rng: &mut R,
    ) -> Result<LinkBudget, ChannelError> {
        self.build_link(d, los, self.params.p_u_w, rng)
    }
}
