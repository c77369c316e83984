//! Bandwidth split among the users of one base station.
//!
//! Each user needs `P_i(beta) = c_i beta (2^(k_i/beta) - 1)` watts, with
//! `k_i = eta_i / B` and `c_i = h_i N0' B` (`h_i` path loss over antenna
//! gain). Every `P_i` is convex and decreasing, so the budget `sum beta = 1`
//! binds. Stationarity gives `c_i phi(k_i / beta_i) = mu` with
//! `phi(t) = 2^t (t ln 2 - 1) + 1`, which is increasing in `t`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};

pub const BETA_FLOOR: f64 = 1e-6;
const OUTER_ITERS: usize = 200;
const INNER_ITERS: usize = 100;

/// One link to be served: rate demand and path factor `h / g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDemand {
    pub eta: f64,
    pub path_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthAllocation {
    pub beta: Vec<f64>,
    /// `1 - sum beta`.
    pub residual: f64,
}

/// Power (W) to carry `eta` over `beta` of the access band on a link with
/// path factor `h / g`.
pub fn link_power(link: &LinkDemand, beta: f64, params: &ChannelParams) -> f64 {
    let bw = params.b_access * beta;
    link.path_factor * params.effective_n0() * bw * ((link.eta / bw).exp2() - 1.0)
}

/// Total power of an allocation.
pub fn total_link_power(links: &[LinkDemand], beta: &[f64], params: &ChannelParams) -> f64 {
    links.iter().zip(beta).map(|(l, &b)| link_power(l, b, params)).sum()
}

/// Optimal split of one BS's band among `links`.
pub fn refine_bandwidth(links: &[LinkDemand], params: &ChannelParams) -> Result<BandwidthAllocation> {
    if links.is_empty() {
        return Err(Error::invalid("bandwidth refinement needs at least one user"));
    }
    for (i, l) in links.iter().enumerate() {
        if !(l.eta > 0.0 && l.eta.is_finite() && l.path_factor > 0.0 && l.path_factor.is_finite()) {
            return Err(Error::invalid(format!("link {i} has a non-positive or non-finite demand/coefficient")));
        }
    }
    if links.len() == 1 {
        return Ok(BandwidthAllocation { beta: vec![1.0], residual: 0.0 });
    }
    let b = params.b_access;
    let k: Vec<f64> = links.iter().map(|l| l.eta / b).collect();
    let ln_c: Vec<f64> = links.iter().map(|l| (l.path_factor * params.effective_n0() * b).ln()).collect();

    // beta_i(mu) in [floor, 1] maps to ln mu in [ln c + ln phi(k), ln c + ln phi(k/floor)]
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (ki, lc) in k.iter().zip(&ln_c) {
        lo = lo.min(lc + ln_phi(*ki));
        hi = hi.max(lc + ln_phi(ki / BETA_FLOOR));
    }
    lo -= 1.0;
    hi += 1.0;
    let betas = |ln_mu: f64| -> Vec<f64> {
        k.iter()
            .zip(&ln_c)
            .map(|(ki, lc)| (ki / inv_ln_phi(ln_mu - lc)).clamp(BETA_FLOOR, 1.0))
            .collect()
    };
    // sum beta decreases in mu
    for _ in 0..OUTER_ITERS {
        let mid = 0.5 * (lo + hi);
        if betas(mid).iter().sum::<f64>() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mut beta = betas(0.5 * (lo + hi));
    let total: f64 = beta.iter().sum();
    for v in &mut beta {
        *v /= total;
    }
    let residual = 1.0 - beta.iter().sum::<f64>();
    Ok(BandwidthAllocation { beta, residual })
}

/// `ln phi(t)` for `t > 0`, accurate at both ends.
fn ln_phi(t: f64) -> f64 {
    let u = t * LN_2;
    if u < 1e-3 {
        (u * u * (0.5 + u * (1.0 / 3.0 + u / 8.0))).ln()
    } else if u < 30.0 {
        (u * u.exp() - u.exp_m1()).ln()
    } else {
        // phi = e^u (u - 1 + e^-u)
        u + (u - 1.0 + (-u).exp()).ln()
    }
}

/// `d ln phi / dt = (ln 2)^2 t 2^t / phi(t)`.
fn d_ln_phi(t: f64) -> f64 {
    let u = t * LN_2;
    let ln_num = 2.0 * LN_2.ln() + t.ln() + u;
    (ln_num - ln_phi(t)).exp()
}

/// Solves `ln phi(t) = target` for `t > 0`.
fn inv_ln_phi(target: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while ln_phi(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return hi;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..INNER_ITERS {
        let f = ln_phi(t) - target;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let step = f / d_ln_phi(t);
        let mut next = t - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        t = next;
    }
    t
}

/// Equal split, the starting point the refinement improves on.
pub fn equal_share(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
