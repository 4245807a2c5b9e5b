//! Schwarzschild background: lapse, escape velocity, the conserved quantity of
//! characteristics and the asymptotic speed of escaping ones.

use crate::error::{HloError, Result};
use serde::{Deserialize, Serialize};

/// Black-hole mass and boundary radius, in geometric units (c = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mass: f64,
    pub r_star: f64,
}

impl Background {
    pub fn new(mass: f64, r_star: f64) -> Result<Self> {
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err(HloError::Domain(format!("mass must be >= 0, got {mass}")));
        }
        if !(r_star > 2.0 * mass) || !r_star.is_finite() {
            return Err(HloError::Domain(format!(
                "r_star must exceed the horizon 2M = {}, got {r_star}",
                2.0 * mass
            )));
        }
        Ok(Background { mass, r_star })
    }

    /// Flat background (M = 0) with the boundary at `r_star`.
    pub fn flat(r_star: f64) -> Self {
        Background { mass: 0.0, r_star }
    }

    /// Domain of outer communication: the boundary is pushed to the horizon
    /// guard radius. Combine with a trace whose positive part vanishes so that
    /// no boundary credit is available.
    pub fn outer_domain(mass: f64) -> Result<Self> {
        let h = 2.0 * mass;
        Background::new(mass, h + default_guard(mass).max(1e-9 * h.max(1.0)))
    }

    pub fn horizon(&self) -> f64 {
        2.0 * self.mass
    }

    pub fn check_radius(&self, r: f64) -> Result<()> {
        if r > 2.0 * self.mass && r.is_finite() {
            Ok(())
        } else {
            Err(HloError::Domain(format!("radius {r} is not outside the horizon 2M = {}", 2.0 * self.mass)))
        }
    }

    pub fn lapse(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(lapse_unchecked(self.mass, r))
    }

    pub fn escape_velocity(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok((2.0 * self.mass / r).sqrt())
    }

    pub fn conserved_c(&self, r: f64, u: f64) -> Result<f64> {
        self.check_radius(r)?;
        if !(u.abs() < 1.0) {
            return Err(HloError::Domain(format!("|u| must be < 1, got {u}")));
        }
        Ok(conserved_c_unchecked(self.mass, r, u))
    }

    /// Weight (1 - 2M/r)^-2 of the potential and the conserved variable.
    pub fn weight(&self, r: f64) -> f64 {
        let l = lapse_unchecked(self.mass, r);
        1.0 / (l * l)
    }

    /// Escape velocity squared at the boundary.
    pub fn ue2_star(&self) -> f64 {
        if self.mass == 0.0 {
            return 0.0;
        }
        2.0 * self.mass / self.r_star
    }

    /// Action rate of waiting at the boundary with boundary velocity `phi`:
    /// -(phi_+^2 - uE*^2) / (2 (1 - uE*^2)).
    pub fn stay_rate(&self, phi: f64) -> f64 {
        let e = self.ue2_star();
        let q = phi.max(0.0);
        -0.5 * (q * q - e) / (1.0 - e)
    }

    /// Static profile with conserved quantity `c`: u(r)^2 = C + (1 - C) 2M/r.
    pub fn static_speed(&self, c: f64, r: f64) -> f64 {
        (c + (1.0 - c) * 2.0 * self.mass / r).max(0.0).sqrt()
    }
}

/// Default horizon guard, 1e-12 * max(1, 2M).
pub fn default_guard(mass: f64) -> f64 {
    1e-12 * (2.0 * mass).max(1.0)
}

pub(crate) fn lapse_unchecked(m: f64, r: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else {
        (r - 2.0 * m) / r
    }
}

pub(crate) fn conserved_c_unchecked(m: f64, r: f64, u: f64) -> f64 {
    if m == 0.0 {
        return u * u;
    }
    // (u^2 r - 2M) / (r - 2M), written to keep 1 - u^2 intact near |u| = 1
    1.0 - (1.0 - u) * (1.0 + u) * r / (r - 2.0 * m)
}

/// Limit speed sqrt(C) of an escaping characteristic.
pub fn asymptotic_velocity(c: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&c) {
        return Err(HloError::Domain(format!("asymptotic velocity needs C in [0,1), got {c}")));
    }
    Ok(c.sqrt())
}
