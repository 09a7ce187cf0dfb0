//! Line-of-sight radio model: distances, path-loss gains, Shannon capacities
//! and the secrecy-capacity metric.
//!
//! The air-to-ground link (UE to UAV) uses a path-loss exponent of 2, the
//! ground-to-ground wiretap link (UE to eavesdropper) an exponent of 4. Both
//! share the same reference gain at 1 m. Noise power only ever appears through
//! the ratio `zeta0 / sigma^2`, so it is carried as a single linear SNR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let p = Position3 { x, y, z };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate in {self:?}")));
        }
        if self.z < 0.0 {
            return Err(Error::Domain(format!("negative height z = {}", self.z)));
        }
        Ok(())
    }

    pub fn horizontal_distance(&self, other: &Position3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Linear SNR at the 1 m reference distance.
    pub zeta0_over_sigma2: f64,
    /// Peak UE transmit power in Watts.
    pub p_max: f64,
    /// Upper bounds (L_x, L_y) of the UAV ground projection, meters.
    pub bounds: (f64, f64),
}

impl ChannelParams {
    pub fn new(zeta0_over_sigma2: f64, p_max: f64, bounds: (f64, f64)) -> Result<Self> {
        let params = ChannelParams {
            zeta0_over_sigma2,
            p_max,
            bounds,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta0_over_sigma2.is_finite() && self.zeta0_over_sigma2 > 0.0) {
            return Err(Error::config(
                "zeta0_over_sigma2",
                format!("must be finite and > 0, got {}", self.zeta0_over_sigma2),
            ));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::config(
                "p_max",
                format!("must be finite and > 0, got {}", self.p_max),
            ));
        }
        let (lx, ly) = self.bounds;
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::config(
                "bounds",
                format!("both bounds must be finite and > 0, got ({lx}, {ly})"),
            ));
        }
        Ok(())
    }
}

pub fn distance(a: &Position3, b: &Position3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn check_distance(d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("distance must be finite and > 0, got {d}")))
    }
}

fn check_power(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("power must be finite and >= 0, got {p}")))
    }
}

/// Air-to-ground gain `zeta0 / d^2`.
pub fn a2g_gain(d_u: f64, zeta0: f64) -> Result<f64> {
    check_distance(d_u)?;
    Ok(zeta0 / (d_u * d_u))
}

/// Ground-to-ground gain `zeta0 / d^4`.
pub fn g2g_gain(d_j: f64, zeta0: f64) -> Result<f64> {
    check_distance(d_j)?;
    let d2 = d_j * d_j;
    Ok(zeta0 / (d2 * d2))
}

/// Received SNR at the UAV, which doubles as the per-slot reward.
pub fn snr_ue(p: f64, d_u: f64, params: &ChannelParams) -> Result<f64> {
    check_power(p)?;
    Ok(p * a2g_gain(d_u, params.zeta0_over_sigma2)?)
}

pub fn snr_eve(p: f64, d_j: f64, params: &ChannelParams) -> Result<f64> {
    check_power(p)?;
    Ok(p * g2g_gain(d_j, params.zeta0_over_sigma2)?)
}

/// Legitimate uplink capacity in bits/s/Hz.
pub fn capacity_ue(p: f64, d_u: f64, params: &ChannelParams) -> Result<f64> {
    Ok(snr_ue(p, d_u, params)?.ln_1p() / std::f64::consts::LN_2)
}

/// Wiretap capacity at the eavesdropper in bits/s/Hz.
pub fn capacity_eve(p: f64, d_j: f64, params: &ChannelParams) -> Result<f64> {
    Ok(snr_eve(p, d_j, params)?.ln_1p() / std::f64::consts::LN_2)
}

/// `log2(1 + snr)`; the capacity implied by an SNR reward.
pub fn capacity_from_snr(snr: f64) -> f64 {
    snr.ln_1p() / std::f64::consts::LN_2
}

pub fn secrecy_rate_per_slot(c_u: f64, c_j: f64) -> f64 {
    (c_u - c_j).max(0.0)
}

/// Time-averaged positive part of `c_u - c_j` over the slot sequence.
pub fn secrecy_capacity(per_slot: &[(f64, f64)]) -> Result<f64> {
    if per_slot.is_empty() {
        return Err(Error::Argument(
            "secrecy capacity needs at least one slot".into(),
        ));
    }
    let total: f64 = per_slot
        .iter()
        .map(|&(c_u, c_j)| secrecy_rate_per_slot(c_u, c_j))
        .sum();
    Ok(total / per_slot.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64) -> ChannelParams {
        ChannelParams::new(k, 1.0, (100.0, 100.0)).unwrap()
    }

    fn pos(x: f64, y: f64, z: f64) -> Position3 {
        Position3::new(x, y, z).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&pos(0., 0., 0.), &pos(3., 4., 0.)), 5.0);
        assert_eq!(distance(&pos(1., 2., 3.), &pos(1., 2., 3.)), 0.0);
        assert!((distance(&pos(0., 0., 0.), &pos(1., 1., 1.)) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gain_examples() {
        assert_eq!(a2g_gain(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(a2g_gain(2.0, 1.0).unwrap(), 0.25);
        assert!((a2g_gain(10.0, 4.0).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(g2g_gain(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(g2g_gain(2.0, 1.0).unwrap(), 0.0625);
        assert!((g2g_gain(10.0, 1.0).unwrap() - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_distance_is_a_domain_error() {
        assert!(matches!(a2g_gain(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(g2g_gain(0.0, 1.0), Err(Error::Domain(_))));
        assert!(capacity_ue(1.0, 0.0, &params(1.0)).is_err());
    }

    #[test]
    fn capacity_examples() {
        // k * p / d^2 = 1 and 3
        let p = params(4.0);
        assert_eq!(capacity_ue(1.0, 2.0, &p).unwrap(), 1.0);
        assert_eq!(capacity_ue(3.0, 2.0, &p).unwrap(), 2.0);
        assert_eq!(capacity_ue(0.0, 2.0, &p).unwrap(), 0.0);
        // k * p / d^4 = 1
        let p = params(16.0);
        assert_eq!(capacity_eve(1.0, 2.0, &p).unwrap(), 1.0);
        assert_eq!(capacity_eve(0.0, 2.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn eve_matches_ue_when_d_j_pow4_equals_d_u_pow2() {
        let p = params(1e4);
        let d_u: f64 = 9.0;
        let d_j = 3.0;
        assert_eq!(
            capacity_eve(0.7, d_j, &p).unwrap(),
            capacity_ue(0.7, d_u, &p).unwrap()
        );
    }

    #[test]
    fn secrecy_examples() {
        assert_eq!(secrecy_rate_per_slot(3.0, 1.0), 2.0);
        assert_eq!(secrecy_rate_per_slot(1.0, 3.0), 0.0);
        assert_eq!(secrecy_rate_per_slot(2.0, 2.0), 0.0);
        assert_eq!(secrecy_capacity(&[(3., 1.), (1., 3.)]).unwrap(), 1.0);
        assert_eq!(secrecy_capacity(&[(2., 2.)]).unwrap(), 0.0);
        assert_eq!(secrecy_capacity(&[(5., 1.); 3]).unwrap(), 4.0);
        assert!(matches!(secrecy_capacity(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn params_validation() {
        assert!(ChannelParams::new(0.0, 1.0, (1.0, 1.0)).is_err());
        assert!(ChannelParams::new(1.0, -1.0, (1.0, 1.0)).is_err());
        assert!(ChannelParams::new(1.0, 1.0, (0.0, 1.0)).is_err());
        assert!(Position3::new(0.0, 0.0, -1.0).is_err());
        assert!(Position3::new(f64::NAN, 0.0, 0.0).is_err());
    }
}
