//! Radio propagation: path losses, LoS probability, directional antenna gain,
//! backhaul capacity and the power-for-rate coefficients.
//!
//! Everything here works in linear units (W, Hz, m). dB values only appear in
//! [`ChannelParams`] fields and are converted at the point of use.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};

/// Tolerance (rad) used when deciding whether a user sits inside an ABS LoS cone.
pub const ELEVATION_TOL: f64 = 1e-9;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Radio constants. Defaults are the reference simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Carrier frequency of the access links (Hz).
    pub fc: f64,
    /// Speed of light (m/s).
    pub c: f64,
    /// Environment constants of the LoS probability curve.
    pub kappa: f64,
    pub zeta: f64,
    /// Excess path loss for LoS / NLoS air-to-ground links (dB).
    pub psi_los_db: f64,
    pub psi_nlos_db: f64,
    /// Thermal noise density (W/Hz).
    pub n0: f64,
    /// Receiver noise figure (dB), folded into the effective noise density.
    pub noise_figure_db: f64,
    /// Access bandwidth of every BS (Hz).
    pub b_access: f64,
    /// Total backhaul bandwidth shared by the ABSs (Hz).
    pub w_backhaul: f64,
    /// MBS transmit power on the backhaul (W).
    pub p0_mbs: f64,
    /// Minimum LoS probability for an ABS association.
    pub los_threshold: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Linear ABS antenna gain outside the main lobe.
    pub side_lobe_gain: f64,
    /// User equipment transmit power (W), only used for cross-tier interference.
    pub ue_tx_power: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            fc: 2e9,
            c: 3e8,
            kappa: 9.61,
            zeta: 0.16,
            psi_los_db: 1.0,
            psi_nlos_db: 20.0,
            n0: 1e-20,
            noise_figure_db: 10.0,
            b_access: 4e7,
            w_backhaul: 4e8,
            p0_mbs: 10.0,
            los_threshold: 0.9,
            z_min: 10.0,
            z_max: 600.0,
            side_lobe_gain: 0.0,
            ue_tx_power: 0.1,
        }
    }
}

impl ChannelParams {
    /// Checks every field, reporting the first offending one by name.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fc", self.fc),
            ("c", self.c),
            ("kappa", self.kappa),
            ("zeta", self.zeta),
            ("n0", self.n0),
            ("b_access", self.b_access),
            ("w_backhaul", self.w_backhaul),
            ("z_min", self.z_min),
            ("z_max", self.z_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("channel.{name}"), format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("psi_los_db", self.psi_los_db),
            ("psi_nlos_db", self.psi_nlos_db),
            ("noise_figure_db", self.noise_figure_db),
            ("p0_mbs", self.p0_mbs),
            ("side_lobe_gain", self.side_lobe_gain),
            ("ue_tx_power", self.ue_tx_power),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("channel.{name}"), format!("must be non-negative, got {v}")));
            }
        }
        if !(self.los_threshold > 0.0 && self.los_threshold < 1.0) {
            return Err(Error::config(
                "channel.los_threshold",
                format!("must lie in (0, 1), got {}", self.los_threshold),
            ));
        }
        if self.z_min >= self.z_max {
            return Err(Error::config(
                "channel.z_min",
                format!("must be below z_max ({} >= {})", self.z_min, self.z_max),
            ));
        }
        let geom = self.geometry();
        if !(geom.b > 0.0 && geom.b < PI / 2.0) {
            return Err(Error::config(
                "channel.los_threshold",
                format!("minimum elevation {} rad falls outside (0, pi/2)", geom.b),
            ));
        }
        Ok(())
    }

    /// N0 scaled by the noise figure.
    pub fn effective_n0(&self) -> f64 {
        self.n0 * db_to_linear(self.noise_figure_db)
    }

    /// `(4 pi fc / c)^2`, the distance-free part of the Friis loss.
    pub fn fspl_constant(&self) -> f64 {
        let k = 4.0 * PI * self.fc / self.c;
        k * k
    }

    pub fn geometry(&self) -> GeometryConstants {
        min_elevation(self)
    }
}

/// Constants derived from the LoS threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    /// Minimum elevation angle (rad) that guarantees `P(LoS) >= a`.
    pub b: f64,
    /// `1 - 1/sin^2(b)`; negative for any `b` in (0, pi/2).
    pub v: f64,
    /// Main-lobe beamwidth (rad), `2(pi/2 - b)`.
    pub theta_b: f64,
    /// Boresight gain (linear).
    pub g0: f64,
}

impl GeometryConstants {
    /// Largest horizontal radius covered from altitude `z` (`z / tan b`).
    pub fn cone_radius(&self, z: f64) -> f64 {
        z * (-self.v).sqrt()
    }

    /// Lowest altitude that covers horizontal radius `r`.
    pub fn min_altitude(&self, r: f64) -> f64 {
        r / (-self.v).sqrt()
    }
}

/// Probability of a line-of-sight ABS link at elevation `theta` (rad).
pub fn p_los(theta: f64, params: &ChannelParams) -> f64 {
    let deg = theta.to_degrees();
    1.0 / (1.0 + params.kappa * (-params.zeta * (deg - params.kappa)).exp())
}

/// Inverts the LoS curve at the threshold `a`.
pub fn min_elevation(params: &ChannelParams) -> GeometryConstants {
    let a = params.los_threshold;
    let b = -PI / (180.0 * params.zeta) * ((1.0 - a) / (params.kappa * a)).ln()
        + PI * params.kappa / 180.0;
    let v = 1.0 - 1.0 / b.sin().powi(2);
    let theta_b = 2.0 * (PI / 2.0 - b);
    let theta_b_deg = theta_b.to_degrees();
    GeometryConstants {
        b,
        v,
        theta_b,
        g0: 30000.0 / (theta_b_deg * theta_b_deg),
    }
}

/// Whether a user at `user` sees `abs` at or above the minimum elevation.
pub fn in_los_cone(abs: &Point3, user: &Point2, geom: &GeometryConstants) -> bool {
    abs.elevation_from(user) >= geom.b - ELEVATION_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossKind {
    AbsLos,
    AbsNlos,
    MbsUser,
    Backhaul,
    UserUser,
}

/// Average path loss as a linear power ratio (>= 1 at any practical range).
pub fn path_loss_linear(kind: PathLossKind, d: f64, params: &ChannelParams) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!("distance must be positive, got {d}")));
    }
    Ok(match kind {
        PathLossKind::AbsLos => params.fspl_constant() * db_to_linear(params.psi_los_db) * d * d,
        PathLossKind::AbsNlos => params.fspl_constant() * db_to_linear(params.psi_nlos_db) * d * d,
        // 15.2 + 37.6 log10(d)
        PathLossKind::MbsUser => 10f64.powf(1.52) * d.powf(3.76),
        // 61.4 + 20 log10(d) at 28 GHz
        PathLossKind::Backhaul => 10f64.powf(6.14) * d * d,
        // 28 + 40 log10(d)
        PathLossKind::UserUser => 10f64.powf(2.8) * d.powi(4),
    })
}

/// Backhaul capacity (bit/s) of an ABS at distance `d` from the MBS when the
/// backhaul band is split equally among `abs_count` ABSs.
pub fn backhaul_capacity(d: f64, abs_count: usize, params: &ChannelParams) -> Result<f64> {
    if abs_count == 0 {
        return Err(Error::invalid("backhaul capacity needs at least one ABS"));
    }
    let h = path_loss_linear(PathLossKind::Backhaul, d, params)?;
    let w = params.w_backhaul;
    let snr = params.p0_mbs / (h * params.effective_n0() * w);
    Ok(w / abs_count as f64 * (1.0 + snr).log2())
}

/// `D = P0 / (10^6.14 N0' W)`: the backhaul constraint reads `L d^2 <= D`.
pub fn backhaul_budget(params: &ChannelParams) -> f64 {
    params.p0_mbs / (10f64.powf(6.14) * params.effective_n0() * params.w_backhaul)
}

/// `L = 2^(J load / W) - 1` for an aggregate uncached load (bit/s).
pub fn backhaul_load_factor(load: f64, abs_count: usize, params: &ChannelParams) -> f64 {
    (abs_count as f64 * load / params.w_backhaul).exp2() - 1.0
}

/// Power per unit path gain needed to carry `eta` bit/s over a fraction
/// `beta` of the access band: `(2^(eta/(B beta)) - 1) N0' B beta`.
pub fn rate_power_factor(eta: f64, beta: f64, params: &ChannelParams) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!("bandwidth fraction must lie in (0, 1], got {beta}")));
    }
    let bw = params.b_access * beta;
    Ok(((eta / bw).exp2() - 1.0) * params.effective_n0() * bw)
}

/// Which tier serves a link when computing its required power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServingBs {
    /// ABS with the given antenna gain towards the user.
    Abs { gain: f64 },
    /// MBS at the given 2D distance, omni-directional antenna.
    Mbs { distance: f64 },
}

/// For an ABS: the coefficient `A` (W/m^2) such that the required power is
/// `A d^2`. For the MBS: the required power itself (W).
pub fn power_coefficient(
    eta: f64,
    bs: ServingBs,
    beta: f64,
    params: &ChannelParams,
) -> Result<f64> {
    let spectral = rate_power_factor(eta, beta, params)?;
    match bs {
        ServingBs::Abs { gain } => {
            if !(gain > 0.0) {
                return Err(Error::invalid(format!("antenna gain must be positive, got {gain}")));
            }
            Ok(params.fspl_constant() * db_to_linear(params.psi_los_db) / gain * spectral)
        }
        ServingBs::Mbs { distance } => {
            let h = path_loss_linear(PathLossKind::MbsUser, distance, params)?;
            Ok(h * spectral)
        }
    }
}

/// Directional ABS antenna gain at elevation `theta` (rad).
pub fn antenna_gain(theta: f64, geom: &GeometryConstants, params: &ChannelParams) -> f64 {
    let off_boresight = (PI / 2.0 - theta).abs();
    if off_boresight <= geom.theta_b / 2.0 + 1e-12 {
        geom.g0
    } else {
        params.side_lobe_gain
    }
}

/// Achieved Shannon rate (bit/s) over `beta` of the access band.
pub fn shannon_rate(beta: f64, sinr: f64, params: &ChannelParams) -> f64 {
    params.b_access * beta * (1.0 + sinr).log2()
}
