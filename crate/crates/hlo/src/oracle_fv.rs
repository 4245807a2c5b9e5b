//! First-order Godunov reference solver for the conservation form
//! d/dt (L^-2 u) + d/dr g(u, r) = 0 with L = 1 - 2M/r and
//! g = ((u^2 - 1)/L + 1)/2, which reduces to Burgers for M = 0.

use crate::error::{HloError, Result};
use crate::field::{midpoints, PiecewiseField};
use crate::forcing::BoundaryTrace;
use crate::geometry::{lapse_unchecked, Background};
use crate::potential::{Potential, SchwPotential};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n_cells: usize,
    /// Courant number in (0, 1).
    pub cfl: f64,
}

impl FvGrid {
    pub fn new(r_min: f64, r_max: f64, n_cells: usize, cfl: f64) -> Result<Self> {
        let g = FvGrid { r_min, r_max, n_cells, cfl };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_max > self.r_min) || !self.r_min.is_finite() || !self.r_max.is_finite() || self.n_cells == 0 {
            return Err(HloError::Config(format!("bad finite-volume grid [{}, {}] with {} cells", self.r_min, self.r_max, self.n_cells)));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(HloError::Cfl { dt: f64::NAN, limit: self.cfl });
        }
        Ok(())
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        midpoints(self.r_min, self.r_max, self.n_cells)
    }

    fn edges(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.r_min + self.dr() * i as f64).collect()
    }

    /// Exact cell averages of flat data whose origin is r_min.
    pub fn averages_flat(&self, u0: &Potential) -> Vec<f64> {
        let e = self.edges();
        let o = self.r_min;
        e.windows(2).map(|w| (u0.value(w[1] - o) - u0.value(w[0] - o)) / (w[1] - w[0])).collect()
    }

    /// Cell values of u whose conserved averages are exact for W.
    pub fn averages_schw(&self, w: &SchwPotential) -> Vec<f64> {
        let m = w.bg.mass;
        let e = self.edges();
        self.centers()
            .iter()
            .zip(e.windows(2))
            .map(|(c, w2)| {
                let l = lapse_unchecked(m, *c);
                l * l * (w.value(w2[1]) - w.value(w2[0])) / (w2[1] - w2[0])
            })
            .collect()
    }
}

/// Godunov flux of f(u) = a u^2 + b, a > 0, minimal at u = 0.
#[inline]
fn godunov(ul: f64, ur: f64, f: impl Fn(f64) -> f64) -> f64 {
    if ul <= ur {
        if ul > 0.0 {
            f(ul)
        } else if ur < 0.0 {
            f(ur)
        } else {
            f(0.0)
        }
    } else {
        f(ul).max(f(ur))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FvRun {
    pub u: PiecewiseField,
    pub steps: usize,
    /// Integral of the conserved variable at the start and end.
    pub mass_initial: f64,
    pub mass_final: f64,
    /// Time integrals of the flux through r_min and r_max.
    pub flux_in: f64,
    pub flux_out: f64,
    /// Discrete entropy sum (m^2 dr) after each step.
    pub entropy: Vec<f64>,
}

/// Evolves cell values u0 from t = 0 to t_end. The left ghost cell holds
/// phi_+(t); the right one copies the last cell.
pub fn fv_solve(bg: &Background, u0: &[f64], bc: &dyn BoundaryTrace, t_end: f64, grid: FvGrid) -> Result<PiecewiseField> {
    Ok(fv_run(bg, u0, bc, 0.0, t_end, grid)?.u)
}

pub fn fv_run(bg: &Background, u0: &[f64], bc: &dyn BoundaryTrace, t0: f64, t_end: f64, grid: FvGrid) -> Result<FvRun> {
    grid.validate()?;
    let n = grid.n_cells;
    if u0.len() != n {
        return Err(HloError::Config(format!("{} initial values for {} cells", u0.len(), n)));
    }
    if !(t_end > t0) {
        return Err(HloError::Config(format!("need t_end > t0, got {t_end} <= {t0}")));
    }
    if let Some(x) = u0.iter().find(|x| !(x.abs() < 1.0)) {
        return Err(HloError::Domain(format!("initial velocity {x} is not in (-1, 1)")));
    }
    let m = bg.mass;
    if m > 0.0 && grid.r_min <= 2.0 * m {
        return Err(HloError::Config(format!("grid starts at {} inside the horizon", grid.r_min)));
    }
    let dr = grid.dr();
    let centers = grid.centers();
    let faces = grid.edges();
    let lc: Vec<f64> = centers.iter().map(|&r| lapse_unchecked(m, r)).collect();
    let lf: Vec<f64> = faces.iter().map(|&r| lapse_unchecked(m, r)).collect();
    let mut u = u0.to_vec();
    let mut q: Vec<f64> = u.iter().zip(&lc).map(|(u, l)| u / (l * l)).collect();
    let mass_initial = q.iter().sum::<f64>() * dr;
    let mut flux = vec![0.0; n + 1];
    let (mut flux_in, mut flux_out) = (0.0, 0.0);
    let mut entropy = Vec::new();
    let mut t = t0;
    let mut steps = 0;
    let breaks = bc.breakpoints(t0, t_end);
    let mut next_break = 0;
    while t < t_end {
        let phi = bc.phi(t).max(0.0);
        let speed = u
            .iter()
            .zip(&lc)
            .map(|(u, l)| (u * l).abs())
            .fold(phi * lf[0], f64::max)
            .max(1e-3);
        let mut dt = grid.cfl * dr / speed;
        while next_break < breaks.len() && breaks[next_break] <= t {
            next_break += 1;
        }
        let stop = breaks.get(next_break).copied().unwrap_or(t_end).min(t_end);
        if t + dt >= stop {
            dt = stop - t;
        }
        if speed * dt > dr {
            return Err(HloError::Cfl { dt, limit: dr / speed });
        }
        for i in 0..=n {
            let ul = if i == 0 { phi } else { u[i - 1] };
            let ur = if i == n { u[n - 1] } else { u[i] };
            let l = lf[i];
            flux[i] = godunov(ul, ur, |v| 0.5 * ((v * v - 1.0) / l + 1.0));
        }
        let k = dt / dr;
        for i in 0..n {
            q[i] -= k * (flux[i + 1] - flux[i]);
            u[i] = q[i] * lc[i] * lc[i];
        }
        flux_in += dt * flux[0];
        flux_out += dt * flux[n];
        entropy.push(q.iter().map(|x| x * x).sum::<f64>() * dr);
        t = if dt == stop - t { stop } else { t + dt };
        steps += 1;
        if u.iter().any(|x| !x.is_finite() || x.abs() >= 1.0) {
            return Err(HloError::Numerical(format!("finite-volume state left (-1, 1) at t = {t}")));
        }
    }
    Ok(FvRun {
        u: PiecewiseField::new(grid.r_min, centers, u)?,
        steps,
        mass_initial,
        mass_final: q.iter().sum::<f64>() * dr,
        flux_in,
        flux_out,
        entropy,
    })
}
