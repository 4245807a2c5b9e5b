//! Initial data and their potentials.
//!
//! Initial velocities are piecewise linear in space (piecewise constant is the
//! common case). The flat potential is U0(y) = int_0^y u0, which is then
//! piecewise quadratic and can be minimized exactly piece by piece. The
//! exterior potential carries the weight (1 - 2M/r)^-2.

use crate::error::{HloError, Result};
use crate::geometry::Background;
use serde::{Deserialize, Serialize};

/// u(x) = a[i] + b[i] (x - knots[i]) on [knots[i], knots[i+1]); the last
/// piece extends to infinity and must be constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub knots: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl VelocityProfile {
    pub fn new(knots: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = VelocityProfile::free(knots, a, b)?;
        for i in 0..p.knots.len() {
            let end = p.knots.get(i + 1).copied().unwrap_or(p.knots[i]);
            for x in [p.knots[i], end] {
                let v = p.a[i] + p.b[i] * (x - p.knots[i]);
                if !(v.abs() < 1.0) {
                    return Err(HloError::Config(format!("initial velocity {v} at {x} is not in (-1, 1)")));
                }
            }
        }
        Ok(p)
    }

    /// Same layout without the speed bound; for flat problems posed on the
    /// whole line.
    pub fn free(knots: Vec<f64>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != a.len() || a.len() != b.len() {
            return Err(HloError::Config("profile needs equally many knots, values and slopes".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HloError::Config("profile knots must be strictly increasing".into()));
        }
        if *b.last().unwrap() != 0.0 {
            return Err(HloError::Config("the unbounded last piece must have constant velocity".into()));
        }
        if a.iter().chain(&b).chain(&knots).any(|v| !v.is_finite()) {
            return Err(HloError::Config("profile entries must be finite".into()));
        }
        Ok(VelocityProfile { knots, a, b })
    }

    pub fn constant(origin: f64, c: f64) -> Result<Self> {
        VelocityProfile::new(vec![origin], vec![c], vec![0.0])
    }

    /// Piecewise-constant profile: `values[i]` on [edges[i], edges[i+1]), the
    /// last value extending to infinity.
    pub fn cells(edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        VelocityProfile::new(edges, values, vec![0.0; n])
    }

    /// Linear velocity a + b (x - origin) on [origin, end), constant `tail`
    /// afterwards.
    pub fn linear(origin: f64, end: f64, a: f64, b: f64, tail: f64) -> Result<Self> {
        VelocityProfile::new(vec![origin, end], vec![a, tail], vec![b, 0.0])
    }

    /// From potential values at knots (linear interpolation) plus the slope
    /// beyond the last knot.
    pub fn from_potential_knots(knots: &[f64], values: &[f64], slope: f64) -> Result<Self> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(HloError::Config("potential needs matching knots and values".into()));
        }
        let mut a: Vec<f64> = knots.windows(2).zip(values.windows(2)).map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0])).collect();
        a.push(slope);
        VelocityProfile::cells(knots.to_vec(), a)
    }

    pub fn origin(&self) -> f64 {
        self.knots[0]
    }

    pub fn piece(&self, x: f64) -> usize {
        self.knots.partition_point(|&k| k <= x).saturating_sub(1)
    }

    pub fn piece_end(&self, i: usize) -> f64 {
        self.knots.get(i + 1).copied().unwrap_or(f64::INFINITY)
    }

    pub fn velocity(&self, x: f64) -> f64 {
        let i = self.piece(x);
        self.a[i] + self.b[i] * (x - self.knots[i])
    }

    /// Velocity beyond the last knot.
    pub fn tail(&self) -> f64 {
        *self.a.last().unwrap()
    }

    /// Total variation including jumps between pieces.
    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        for i in 0..self.knots.len() {
            if i + 1 < self.knots.len() {
                let end = self.a[i] + self.b[i] * (self.knots[i + 1] - self.knots[i]);
                tv += (self.b[i] * (self.knots[i + 1] - self.knots[i])).abs();
                tv += (self.a[i + 1] - end).abs();
            }
        }
        tv
    }

    pub fn max_speed(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.knots.len() {
            m = m.max(self.a[i].abs());
            if i + 1 < self.knots.len() {
                m = m.max((self.a[i] + self.b[i] * (self.knots[i + 1] - self.knots[i])).abs());
            }
        }
        m
    }
}

/// Flat potential U0(y) = int_origin^y u0, exact and piecewise quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub profile: VelocityProfile,
    cum: Vec<f64>,
}

impl Potential {
    pub fn new(profile: VelocityProfile) -> Self {
        let mut cum = vec![0.0];
        for i in 0..profile.knots.len() - 1 {
            let l = profile.knots[i + 1] - profile.knots[i];
            cum.push(cum[i] + profile.a[i] * l + 0.5 * profile.b[i] * l * l);
        }
        Potential { profile, cum }
    }

    pub fn value(&self, y: f64) -> f64 {
        let p = &self.profile;
        let i = p.piece(y);
        let d = y - p.knots[i];
        self.cum[i] + p.a[i] * d + 0.5 * p.b[i] * d * d
    }

    /// Asymptotic slope of U0 (the p of the class U_p).
    pub fn extrapolation_slope(&self) -> f64 {
        self.profile.tail()
    }

    /// liminf U0(x)/x > p, decided on the extrapolation slope.
    pub fn in_class(&self, p: f64) -> bool {
        self.extrapolation_slope() > p
    }

    /// Exact minimizers of y -> U0(y) + (x - y)^2/(2 tau) over y in [lo, hi]:
    /// returns (y, value) with ties broken toward the largest y.
    pub fn argmin_quadratic(&self, x: f64, tau: f64, lo: f64, hi: f64) -> (f64, f64) {
        let p = &self.profile;
        let obj = |y: f64| self.value(y) + (x - y) * (x - y) / (2.0 * tau);
        let mut best = (lo, obj(lo));
        let consider = |y: f64, best: &mut (f64, f64)| {
            let v = obj(y);
            if v < best.1 - 1e-15 * (1.0 + v.abs()) || (v <= best.1 + 1e-15 * (1.0 + v.abs()) && y > best.0) {
                *best = (y, v);
            }
        };
        let first = p.piece(lo);
        let last = if hi.is_finite() { p.piece(hi) } else { p.knots.len() - 1 };
        for i in first..=last {
            let s = p.knots[i].max(lo);
            let e = p.piece_end(i).min(hi);
            if s > e {
                continue;
            }
            let curv = p.b[i] + 1.0 / tau;
            if curv > 0.0 {
                let y = (x / tau - p.a[i] + p.b[i] * p.knots[i]) / curv;
                let y = y.clamp(s, e);
                if y.is_finite() {
                    consider(y, &mut best);
                }
            }
            consider(s, &mut best);
            if e.is_finite() {
                consider(e, &mut best);
            }
        }
        best
    }
}

impl Potential {
    /// Exact minimum of y -> U0(y) + q y over [lo, hi] (hi finite), ties
    /// toward the largest y.
    pub fn argmin_linear(&self, q: f64, lo: f64, hi: f64) -> (f64, f64) {
        let p = &self.profile;
        let obj = |y: f64| self.value(y) + q * y;
        let mut best = (lo, obj(lo));
        let consider = |y: f64, best: &mut (f64, f64)| {
            let v = obj(y);
            if v < best.1 - 1e-15 * (1.0 + v.abs()) || (v <= best.1 + 1e-15 * (1.0 + v.abs()) && y > best.0) {
                *best = (y, v);
            }
        };
        for i in p.piece(lo)..=p.piece(hi) {
            let s = p.knots[i].max(lo);
            let e = p.piece_end(i).min(hi);
            if s > e {
                continue;
            }
            if p.b[i] > 0.0 {
                let y = (p.knots[i] - (p.a[i] + q) / p.b[i]).clamp(s, e);
                consider(y, &mut best);
            }
            consider(s, &mut best);
            consider(e, &mut best);
        }
        best
    }
}

/// Which additive normalization of the exterior potential is used. All
/// variants share the derivative (1 - 2M/r)^-2 u0(r).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PotentialVariant {
    /// -int_r^inf w u0; requires compactly supported data.
    Integrable,
    /// Static profile with asymptotic speed p plus the integrable remainder.
    Asymptotic { p: f64 },
    /// int_{r*}^r w u0.
    FromBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ExteriorProfile {
    Linear(VelocityProfile),
    /// u(r) = sign * sqrt(C + (1 - C) 2M/r), the stationary solution with
    /// conserved quantity C.
    Static { c: f64, sign: f64 },
}

const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn gauss8<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..8 {
        s += GL_W[k] * f(m + h * GL_X[k]);
    }
    s * h
}

/// Exterior potential W(r) with weight (1 - 2M/r)^-2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchwPotential {
    pub bg: Background,
    pub profile: ExteriorProfile,
    pub variant: PotentialVariant,
    offset: f64,
    nodes: Vec<f64>,
    cum: Vec<f64>,
}

impl SchwPotential {
    pub fn new(bg: Background, profile: ExteriorProfile, variant: PotentialVariant) -> Result<Self> {
        let mut w = SchwPotential { bg, profile, variant, offset: 0.0, nodes: vec![], cum: vec![] };
        match &w.profile {
            ExteriorProfile::Linear(p) => {
                if (p.origin() - bg.r_star).abs() > 1e-12 * bg.r_star.max(1.0) {
                    return Err(HloError::Config(format!(
                        "exterior profile must start at r* = {}, starts at {}",
                        bg.r_star,
                        p.origin()
                    )));
                }
                w.nodes = p.knots.clone();
                let mut cum = vec![0.0];
                for i in 0..p.knots.len() - 1 {
                    let v = cum[i] + w.linear_piece_integral(p, i, p.knots[i], p.knots[i + 1]);
                    cum.push(v);
                }
                w.cum = cum;
            }
            ExteriorProfile::Static { c, .. } => {
                if !(*c < 1.0) {
                    return Err(HloError::Config("static profile needs C < 1".into()));
                }
                let h = 2.0 * bg.mass;
                let mut r = bg.r_star;
                let mut nodes = vec![r];
                let mut cum = vec![0.0];
                let f = |x: f64| w.integrand(x);
                while r < 1e9 * bg.r_star.max(1.0) {
                    let next = r + 0.02 * (r - h) + 1e-3;
                    let v = cum.last().unwrap() + gauss8(&f, r, next);
                    nodes.push(next);
                    cum.push(v);
                    r = next;
                }
                w.nodes = nodes;
                w.cum = cum;
            }
        }
        w.offset = w.compute_offset()?;
        Ok(w)
    }

    fn integrand(&self, r: f64) -> f64 {
        self.bg.weight(r) * self.velocity(r)
    }

    pub fn velocity(&self, r: f64) -> f64 {
        match &self.profile {
            ExteriorProfile::Linear(p) => p.velocity(r),
            ExteriorProfile::Static { c, sign } => sign * self.bg.static_speed(*c, r),
        }
    }

    /// Antiderivatives of w and w r in s = r - 2M.
    fn g0(&self, r: f64) -> f64 {
        let m = self.bg.mass;
        if m == 0.0 {
            return r;
        }
        let s = r - 2.0 * m;
        s + 4.0 * m * s.ln() - 4.0 * m * m / s
    }

    fn g1(&self, r: f64) -> f64 {
        let m = self.bg.mass;
        if m == 0.0 {
            return 0.5 * r * r;
        }
        let s = r - 2.0 * m;
        0.5 * s * s + 6.0 * m * s + 12.0 * m * m * s.ln() - 8.0 * m * m * m / s
    }

    fn linear_piece_integral(&self, p: &VelocityProfile, i: usize, lo: f64, hi: f64) -> f64 {
        let (a, b, k) = (p.a[i], p.b[i], p.knots[i]);
        let mut v = (a - b * k) * (self.g0(hi) - self.g0(lo));
        if b != 0.0 {
            v += b * (self.g1(hi) - self.g1(lo));
        }
        v
    }

    fn from_boundary(&self, r: f64) -> f64 {
        match &self.profile {
            ExteriorProfile::Linear(p) => {
                let i = p.piece(r);
                self.cum[i] + self.linear_piece_integral(p, i, p.knots[i], r)
            }
            ExteriorProfile::Static { .. } => {
                let j = self.nodes.partition_point(|&x| x <= r).saturating_sub(1);
                let f = |x: f64| self.integrand(x);
                let base = self.cum[j];
                let start = self.nodes[j];
                if r - start <= 0.03 * (start - 2.0 * self.bg.mass) + 2e-3 {
                    base + gauss8(&f, start, r)
                } else {
                    // beyond the table: chunked quadrature
                    let mut acc = base;
                    let mut x = start;
                    while x < r {
                        let nx = (x + 0.02 * (x - 2.0 * self.bg.mass) + 1e-3).min(r);
                        acc += gauss8(&f, x, nx);
                        x = nx;
                    }
                    acc
                }
            }
        }
    }

    fn compute_offset(&self) -> Result<f64> {
        match self.variant {
            PotentialVariant::FromBoundary => Ok(0.0),
            PotentialVariant::Integrable => match &self.profile {
                ExteriorProfile::Linear(p) if p.tail() == 0.0 => Ok(-self.cum.last().copied().unwrap_or(0.0)),
                _ => Err(HloError::NotIntegrable("integrable variant needs data vanishing beyond the last knot".into())),
            },
            PotentialVariant::Asymptotic { p } => match &self.profile {
                ExteriorProfile::Static { c, sign } if (sign * c.max(0.0).sqrt() - p).abs() < 1e-14 => Ok(0.0),
                ExteriorProfile::Linear(prof) if self.bg.mass == 0.0 && prof.tail() == p => {
                    let end = *prof.knots.last().unwrap();
                    Ok(-(self.cum.last().copied().unwrap_or(0.0) - p * (end - self.bg.r_star)))
                }
                _ => Err(HloError::NotIntegrable(format!(
                    "data minus the static profile with asymptotic speed {p} is not integrable"
                ))),
            },
        }
    }

    /// W(r).
    pub fn value(&self, r: f64) -> f64 {
        self.offset + self.from_boundary(r)
    }

    pub fn value_at_boundary(&self) -> f64 {
        self.offset
    }
}
