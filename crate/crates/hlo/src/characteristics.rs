//! Characteristics of the Burgers–Schwarzschild equation,
//! r' = (1 - 2M/r) u,  u' = (M/r^2)(u^2 - 1).
//!
//! Internally the state is (delta, eta) with delta = r - 2M and u = tanh(eta).
//! In these variables eta' = -M/r^2 and delta' = (delta/r) tanh(eta), and the
//! conserved quantity C = 1 - r sech^2(eta)/delta stays well conditioned all
//! the way down to the horizon guard. A third component accumulates the
//! curvature term P = int 2M/(r - 2M) dt used by the action functional.

use crate::error::{HloError, Result};
use crate::geometry::{conserved_c_unchecked, default_guard, Background};
use serde::{Deserialize, Serialize};

/// A point (t, r, u) on a characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharState {
    pub t: f64,
    pub r: f64,
    pub u: f64,
}

impl CharState {
    pub fn new(t: f64, r: f64, u: f64) -> Self {
        CharState { t, r, u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    BoundedInfall,
    SubEscapeReturn,
    Escaping,
    StaticFlat,
}

impl Classification {
    /// Sign test on C together with the initial direction.
    pub fn from_c(mass: f64, c: f64, u0: f64) -> Self {
        if mass == 0.0 {
            Classification::StaticFlat
        } else if c < 0.0 {
            if u0 > 0.0 {
                Classification::SubEscapeReturn
            } else {
                Classification::BoundedInfall
            }
        } else if u0 >= 0.0 {
            Classification::Escaping
        } else {
            Classification::BoundedInfall
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::BoundedInfall => "bounded_infall",
            Classification::SubEscapeReturn => "sub_escape_return",
            Classification::Escaping => "escaping",
            Classification::StaticFlat => "static_flat",
        }
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcEnd {
    TimeReached,
    Absorbed,
    Target,
    RadiusWindow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharArc {
    /// Samples in increasing time order.
    pub states: Vec<CharState>,
    /// Cumulative P term at each sample, measured from the earliest sample.
    pub p_cum: Vec<f64>,
    pub c: f64,
    pub classification: Classification,
    pub end: ArcEnd,
    /// Largest |C - C0| over the samples.
    pub max_drift: f64,
}

impl CharArc {
    pub fn first(&self) -> CharState {
        self.states[0]
    }

    pub fn last(&self) -> CharState {
        *self.states.last().expect("arc has samples")
    }

    pub fn duration(&self) -> f64 {
        self.last().t - self.first().t
    }

    /// Total curvature term over the arc.
    pub fn p_total(&self) -> f64 {
        *self.p_cum.last().unwrap_or(&0.0)
    }

    /// CSV rows `t,r,u,c` for the arc.
    pub fn to_csv_rows(&self) -> Vec<[f64; 4]> {
        self.states.iter().map(|s| [s.t, s.r, s.u, self.c]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Horizon guard; `None` uses 1e-12 * max(1, 2M).
    pub guard: Option<f64>,
    /// Re-project eta onto the level set of C after each accepted step.
    pub project: bool,
    /// Arcs leaving r > r_max stop with `ArcEnd::RadiusWindow`.
    pub r_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-11,
            atol: 1e-13,
            max_step: 50.0,
            guard: None,
            project: true,
            r_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Y {
    pub d: f64,
    pub e: f64,
    pub p: f64,
}

impl Y {
    fn axpy(self, h: f64, k: &[(f64, Y)]) -> Y {
        let mut out = self;
        for &(a, ki) in k {
            out.d += h * a * ki.d;
            out.e += h * a * ki.e;
            out.p += h * a * ki.p;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    pub tau: f64,
    pub y: Y,
    pub f: Y,
}

/// Stopping rules for a raw run; `tau` is elapsed time in the integration
/// direction.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stop {
    pub tau_max: f64,
    /// Stop when delta crosses this value (not counting the start point).
    pub target: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Run {
    pub nodes: Vec<Node>,
    pub last: Node,
    pub end: ArcEnd,
}

/// Result of shooting an arc with a fixed initial velocity.
#[derive(Debug, Clone)]
pub enum Shot {
    Hit(CharArc),
    /// The arc never reached the target; carries the arc and the closest
    /// radius it came to the target.
    Miss { arc: CharArc, closest: f64 },
}

/// Endpoint of a shot: where and when it stopped, the accumulated P term
/// and the conserved quantity.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Lean {
    pub t: f64,
    pub r: f64,
    pub p: f64,
    pub c: f64,
    pub end: ArcEnd,
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Cubic Hermite interpolation of one component on [t0, t0 + h].
#[inline]
pub(crate) fn hermite(th: f64, h: f64, y0: f64, f0: f64, y1: f64, f1: f64) -> f64 {
    let t2 = th * th;
    let t3 = t2 * th;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + th) * h * f0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * f1
}

#[inline]
fn hermite_slope(th: f64, h: f64, y0: f64, f0: f64, y1: f64, f1: f64) -> f64 {
    let t2 = th * th;
    ((6.0 * t2 - 6.0 * th) * y0 + (3.0 * t2 - 4.0 * th + 1.0) * h * f0 + (-6.0 * t2 + 6.0 * th) * y1 + (3.0 * t2 - 2.0 * th) * h * f1)
        / h
}

/// Adaptive integrator bound to a background.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub bg: Background,
    pub cfg: IntegratorConfig,
}

impl Integrator {
    pub fn new(bg: Background) -> Self {
        Integrator { bg, cfg: IntegratorConfig::default() }
    }

    pub fn with_config(bg: Background, cfg: IntegratorConfig) -> Self {
        Integrator { bg, cfg }
    }

    pub fn guard(&self) -> f64 {
        self.cfg.guard.unwrap_or_else(|| default_guard(self.bg.mass))
    }

    fn m(&self) -> f64 {
        self.bg.mass
    }

    pub(crate) fn to_y(&self, r: f64, u: f64) -> Y {
        Y { d: r - 2.0 * self.m(), e: u.atanh(), p: 0.0 }
    }

    pub(crate) fn radius(&self, y: &Y) -> f64 {
        y.d + 2.0 * self.m()
    }

    /// Conserved quantity from internal variables.
    pub(crate) fn c_of(&self, y: &Y) -> f64 {
        let m = self.m();
        if m == 0.0 {
            let u = y.e.tanh();
            return u * u;
        }
        let ch = y.e.cosh();
        1.0 - (y.d + 2.0 * m) / (ch * ch * y.d)
    }

    #[inline]
    fn rhs(&self, s: f64, y: &Y) -> Y {
        let m = self.m();
        let r = y.d + 2.0 * m;
        Y { d: s * y.d / r * y.e.tanh(), e: -s * m / (r * r), p: 2.0 * m / y.d }
    }

    fn project(&self, y: &mut Y, c0: f64) {
        let u = y.e.tanh();
        if u.abs() < 0.3 {
            return;
        }
        let r = self.radius(y);
        let arg = r / ((1.0 - c0) * y.d);
        if arg > 1.0 {
            y.e = y.e.signum() * arg.sqrt().acosh();
        }
    }

    fn dp_step(&self, s: f64, y: &Y, k1: &Y, h: f64) -> (Y, Y, f64) {
        let k2 = self.rhs(s, &y.axpy(h, &[(A21, *k1)]));
        let k3 = self.rhs(s, &y.axpy(h, &[(A31, *k1), (A32, k2)]));
        let k4 = self.rhs(s, &y.axpy(h, &[(A41, *k1), (A42, k2), (A43, k3)]));
        let k5 = self.rhs(s, &y.axpy(h, &[(A51, *k1), (A52, k2), (A53, k3), (A54, k4)]));
        let k6 = self.rhs(s, &y.axpy(h, &[(A61, *k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]));
        let yn = y.axpy(h, &[(B1, *k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
        if !(yn.d > 0.0) || !yn.e.is_finite() {
            return (yn, Y::default(), f64::INFINITY);
        }
        let k7 = self.rhs(s, &yn);
        let err = Y::default().axpy(h, &[(E1, *k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)]);
        let rt = self.cfg.rtol;
        let at = self.cfg.atol;
        let sd = at + rt * y.d.abs().max(yn.d.abs());
        let se = at + rt * (1.0 + y.e.abs().max(yn.e.abs()));
        let sp = at + rt * y.p.abs().max(yn.p.abs()).max(1.0);
        let norm = ((err.d / sd).powi(2) + (err.e / se).powi(2) + (err.p / sp).powi(2)) / 3.0;
        (yn, k7, norm.sqrt())
    }

    /// Raw adaptive run in the direction `s` (= +1 forward, -1 backward).
    pub(crate) fn run(&self, s: f64, y0: Y, stop: Stop, record: bool) -> Result<Run> {
        let m = self.m();
        if m == 0.0 {
            return Ok(self.run_flat(s, y0, stop, record));
        }
        let guard = self.guard();
        let d_max = self.cfg.r_max - 2.0 * m;
        let c0 = self.c_of(&y0);
        let mut cur = Node { tau: 0.0, y: y0, f: self.rhs(s, &y0) };
        let mut nodes = Vec::new();
        if record {
            nodes.push(cur);
        }
        let mut h = (0.05 * y0.d.max(1e-6)).min(self.cfg.max_step).min(stop.tau_max.max(1e-300));
        let mut steps = 0usize;
        if stop.tau_max <= 0.0 {
            return Ok(Run { nodes, last: cur, end: ArcEnd::TimeReached });
        }
        loop {
            steps += 1;
            if steps > self.cfg.max_steps {
                return Err(HloError::StepRejected { t: cur.tau, r: self.radius(&cur.y) });
            }
            let remaining = stop.tau_max - cur.tau;
            let last_step = h >= remaining;
            let hh = if last_step { remaining } else { h };
            let (mut yn, mut fnew, err) = self.dp_step(s, &cur.y, &cur.f, hh);
            if !(err <= 1.0) {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.1) } else { 0.1 };
                h = hh * fac;
                if h < 1e-14 * (1.0 + cur.tau.abs()) {
                    return Err(HloError::StepRejected { t: cur.tau, r: self.radius(&cur.y) });
                }
                continue;
            }
            if self.cfg.project {
                let before = yn.e;
                self.project(&mut yn, c0);
                if yn.e != before {
                    fnew = self.rhs(s, &yn);
                }
            }
            let tau_new = if last_step { stop.tau_max } else { cur.tau + hh };
            let next = Node { tau: tau_new, y: yn, f: fnew };
            // target crossing
            if let Some(dt) = stop.target {
                if let Some(tau_e) = self.crossing(&cur, &next, dt) {
                    let hit = self.land(s, &cur, next.tau, tau_e, dt);
                    if record {
                        nodes.push(hit);
                    }
                    return Ok(Run { nodes, last: hit, end: ArcEnd::Target });
                }
            }
            if record {
                nodes.push(next);
            }
            cur = next;
            if cur.y.d < guard {
                return Ok(Run { nodes, last: cur, end: ArcEnd::Absorbed });
            }
            if cur.y.d > d_max {
                return Ok(Run { nodes, last: cur, end: ArcEnd::RadiusWindow });
            }
            if last_step {
                return Ok(Run { nodes, last: cur, end: ArcEnd::TimeReached });
            }
            let fac = if err > 0.0 { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
            h = (hh * fac).min(self.cfg.max_step);
        }
    }

    fn run_flat(&self, s: f64, y0: Y, stop: Stop, record: bool) -> Run {
        let u = y0.e.tanh();
        let v = s * u;
        let guard = self.guard();
        let make = |tau: f64| Node { tau, y: Y { d: y0.d + v * tau, e: y0.e, p: 0.0 }, f: Y { d: v, e: 0.0, p: 0.0 } };
        let mut tau_end = stop.tau_max;
        let mut end = ArcEnd::TimeReached;
        let mut exact_d = None;
        if let Some(dt) = stop.target {
            if v != 0.0 && y0.d != dt {
                let te = (dt - y0.d) / v;
                if te > 0.0 && te <= tau_end {
                    tau_end = te;
                    end = ArcEnd::Target;
                    exact_d = Some(dt);
                }
            }
        }
        if v < 0.0 {
            let tg = (guard - y0.d) / v;
            if tg > 0.0 && tg < tau_end {
                tau_end = tg;
                end = ArcEnd::Absorbed;
                exact_d = None;
            }
        }
        if v > 0.0 && self.cfg.r_max.is_finite() {
            let tw = (self.cfg.r_max - y0.d) / v;
            if tw > 0.0 && tw < tau_end {
                tau_end = tw;
                end = ArcEnd::RadiusWindow;
                exact_d = None;
            }
        }
        let mut last = make(tau_end);
        if let Some(d) = exact_d {
            last.y.d = d;
        }
        let nodes = if record { vec![make(0.0), last] } else { Vec::new() };
        Run { nodes, last, end }
    }

    /// First crossing of delta = dt inside (a, b], including a double
    /// crossing around an interior extremum.
    fn crossing(&self, a: &Node, b: &Node, dt: f64) -> Option<f64> {
        let h = b.tau - a.tau;
        if h <= 0.0 {
            return None;
        }
        let g = |th: f64| hermite(th, h, a.y.d, a.f.d, b.y.d, b.f.d) - dt;
        let gs = |th: f64| hermite_slope(th, h, a.y.d, a.f.d, b.y.d, b.f.d);
        let ga = a.y.d - dt;
        let gb = b.y.d - dt;
        let (lo, hi) = if ga != 0.0 && (gb == 0.0 || ga.signum() != gb.signum()) {
            (0.0, 1.0)
        } else {
            if a.f.d.signum() == b.f.d.signum() {
                return None;
            }
            let s0 = gs(0.0).signum();
            let (mut l, mut r) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (l + r);
                if gs(mid).signum() == s0 {
                    l = mid;
                } else {
                    r = mid;
                }
            }
            let ext = 0.5 * (l + r);
            let ge = g(ext);
            if ga != 0.0 {
                if ge == 0.0 || ge.signum() != ga.signum() {
                    (0.0, ext)
                } else {
                    return None;
                }
            } else if ge != 0.0 && (gb == 0.0 || gb.signum() != ge.signum()) {
                (ext, 1.0)
            } else {
                return None;
            }
        };
        let (mut lo, mut hi) = (lo, hi);
        let s_lo = g(lo).signum();
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid);
            if gm != 0.0 && gm.signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(a.tau + hi * h)
    }

    /// Re-integrate from `a` to the event time with a single precise step and
    /// Newton-correct the time so that delta = dt.
    fn land(&self, s: f64, a: &Node, b_tau: f64, tau_e: f64, dt: f64) -> Node {
        let mut te = tau_e;
        for _ in 0..4 {
            let (y, _, _) = self.dp_step(s, &a.y, &a.f, te - a.tau);
            let f = self.rhs(s, &y);
            if f.d == 0.0 {
                break;
            }
            let corr = (y.d - dt) / f.d;
            let next = (te - corr).clamp(a.tau, b_tau);
            let moved = (next - te).abs();
            te = next;
            if moved <= 1e-15 * (1.0 + te.abs()) {
                break;
            }
        }
        let (mut y, _, _) = self.dp_step(s, &a.y, &a.f, te - a.tau);
        y.d = dt;
        let f = self.rhs(s, &y);
        Node { tau: te, y, f }
    }

    fn run_to_arc(&self, t0: f64, s: f64, y0: Y, u_init: f64, run: &Run) -> CharArc {
        let m = self.m();
        let c0 = self.c_of(&y0);
        let mut states = Vec::with_capacity(run.nodes.len());
        let mut p_cum = Vec::with_capacity(run.nodes.len());
        let mut drift: f64 = 0.0;
        for n in &run.nodes {
            let u = if m == 0.0 { u_init } else { n.y.e.tanh() };
            states.push(CharState { t: t0 + s * n.tau, r: n.y.d + 2.0 * m, u });
            p_cum.push(n.y.p);
            drift = drift.max((self.c_of(&n.y) - c0).abs());
        }
        if s < 0.0 {
            states.reverse();
            p_cum.reverse();
            let total = p_cum[0];
            for p in p_cum.iter_mut() {
                *p = total - *p;
            }
        }
        let u0 = states[0].u;
        CharArc {
            states,
            p_cum,
            c: c0,
            classification: Classification::from_c(m, c0, u0),
            end: run.end,
            max_drift: drift,
        }
    }

    fn check_state(&self, st: &CharState) -> Result<()> {
        self.bg.check_radius(st.r)?;
        if !(st.u.abs() < 1.0) {
            return Err(HloError::Domain(format!("|u| must be < 1, got {}", st.u)));
        }
        Ok(())
    }

    /// Advance a state by `dt` (either sign) with adaptive substeps.
    pub fn step_characteristic(&self, st: CharState, dt: f64) -> Result<CharState> {
        self.check_state(&st)?;
        if dt.abs() > self.cfg.max_step {
            return Err(HloError::Domain(format!("|dt| = {} exceeds max step {}", dt.abs(), self.cfg.max_step)));
        }
        let s = if dt >= 0.0 { 1.0 } else { -1.0 };
        let y0 = self.to_y(st.r, st.u);
        let run = self.run(s, y0, Stop { tau_max: dt.abs(), target: None }, false)?;
        if run.end == ArcEnd::Absorbed {
            return Err(HloError::Numerical(format!("absorbed at the horizon guard at t = {}", st.t + s * run.last.tau)));
        }
        let y = run.last.y;
        let u = if self.m() == 0.0 { st.u } else { y.e.tanh() };
        Ok(CharState { t: st.t + dt, r: self.radius(&y), u })
    }

    /// Integrate from `s0` to `t_end` (either direction), stopping early at the
    /// horizon guard or the radius window.
    pub fn integrate_arc(&self, s0: CharState, t_end: f64) -> Result<CharArc> {
        self.check_state(&s0)?;
        let s = if t_end >= s0.t { 1.0 } else { -1.0 };
        let y0 = self.to_y(s0.r, s0.u);
        let run = self.run(s, y0, Stop { tau_max: (t_end - s0.t).abs(), target: None }, true)?;
        Ok(self.run_to_arc(s0.t, s, y0, s0.u, &run))
    }

    /// Shoot from `from = (t, r)` with velocity `u_init` until the arc first
    /// reaches `to_r` or `t_horizon` (either direction) passes.
    pub fn shoot_to_radius(&self, from: (f64, f64), to_r: f64, u_init: f64, t_horizon: f64) -> Result<Shot> {
        let st = CharState::new(from.0, from.1, u_init);
        self.check_state(&st)?;
        self.bg.check_radius(to_r)?;
        let s = if t_horizon >= from.0 { 1.0 } else { -1.0 };
        let y0 = self.to_y(from.1, u_init);
        let dt = to_r - 2.0 * self.m();
        let run = self.run(s, y0, Stop { tau_max: (t_horizon - from.0).abs(), target: Some(dt) }, true)?;
        let arc = self.run_to_arc(from.0, s, y0, u_init, &run);
        if run.end == ArcEnd::Target {
            Ok(Shot::Hit(arc))
        } else {
            let closest = arc.states.iter().map(|x| (x.r - to_r).abs()).fold(f64::INFINITY, f64::min);
            Ok(Shot::Miss { arc, closest })
        }
    }

    /// Endpoint-only version of `shoot_to_radius` (no samples kept).
    pub(crate) fn shoot_lean(&self, t: f64, r: f64, u: f64, to_r: f64, t_horizon: f64) -> Result<Lean> {
        let s = if t_horizon >= t { 1.0 } else { -1.0 };
        let y0 = self.to_y(r, u);
        let stop = Stop { tau_max: (t_horizon - t).abs(), target: Some(to_r - 2.0 * self.m()) };
        let run = self.run(s, y0, stop, false)?;
        let y = run.last.y;
        Ok(Lean { t: t + s * run.last.tau, r: self.radius(&y), p: y.p, c: self.c_of(&y0), end: run.end })
    }

    /// Radius reached at elapsed time `tau` from (r0, eta) without touching
    /// `floor` (returns None if the arc reaches the floor or the guard first).
    fn arrival(&self, r0: f64, eta: f64, tau: f64, floor: f64) -> Result<Option<f64>> {
        let y0 = Y { d: r0 - 2.0 * self.m(), e: eta, p: 0.0 };
        let target = floor - 2.0 * self.m();
        let run = self.run(1.0, y0, Stop { tau_max: tau, target: Some(target) }, false)?;
        Ok(match run.end {
            ArcEnd::TimeReached | ArcEnd::RadiusWindow => Some(self.radius(&run.last.y)),
            _ => None,
        })
    }

    /// Outgoing and ingoing light-cone radii at time t from (t0, r0); the
    /// ingoing branch is floored at the horizon.
    pub fn light_cone(&self, t0: f64, r0: f64, t: f64) -> (f64, f64) {
        light_cone_radii(self.bg.mass, t0, r0, t)
    }

    /// The characteristic from (t0, r0) to (t1, r1) that stays above r* in
    /// between, found by bisection on the departure rapidity.
    pub fn connect(&self, t0: f64, r0: f64, t1: f64, r1: f64) -> Result<CharArc> {
        if !(t1 > t0) {
            return Err(HloError::Domain(format!("connect needs t0 < t1, got {t0} >= {t1}")));
        }
        let floor = self.bg.r_star;
        if r0 < floor || r1 < floor {
            return Err(HloError::Domain(format!("connect endpoints must be >= r* = {floor}")));
        }
        let tau = t1 - t0;
        let unreachable = || HloError::Unreachable { t0, r0, t1, r1 };
        if self.m() == 0.0 {
            let u = (r1 - r0) / tau;
            if u.abs() >= 1.0 {
                return Err(unreachable());
            }
            return self.integrate_arc(CharState::new(t0, r0, u), t1);
        }
        let (rp, _) = self.light_cone(t0, r0, t1);
        if r1 >= rp {
            return Err(unreachable());
        }
        let emax = 18.0;
        let arr = |e: f64| -> Result<f64> { Ok(self.arrival(r0, e, tau, floor)?.unwrap_or(f64::NEG_INFINITY)) };
        let (mut lo, mut hi) = (-emax, emax);
        let mut f_hi = arr(hi)? - r1;
        let mut f_lo = arr(lo)? - r1;
        if f_hi < 0.0 || f_lo > 0.0 {
            return Err(unreachable());
        }
        let tol = 1e-10;
        let mut best = if f_hi.abs() < f_lo.abs() { hi } else { lo };
        let mut side = 0i32;
        for _ in 0..200 {
            // Illinois regula falsi once both ends are finite, bisection otherwise
            let mid = if f_lo.is_finite() && f_hi.is_finite() && f_hi != f_lo {
                let x = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                if x > lo && x < hi {
                    x
                } else {
                    0.5 * (lo + hi)
                }
            } else {
                0.5 * (lo + hi)
            };
            let fm = arr(mid)? - r1;
            best = mid;
            if fm.abs() <= tol || (hi - lo) < 1e-15 {
                let arc = self.integrate_arc(CharState::new(t0, r0, mid.tanh()), t1)?;
                return Ok(arc);
            }
            if fm < 0.0 {
                lo = mid;
                f_lo = fm;
                if side == -1 && f_hi.is_finite() {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = mid;
                f_hi = fm;
                if side == 1 && f_lo.is_finite() {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        Err(HloError::Bisection(format!(
            "connect ({t0}, {r0}) -> ({t1}, {r1}) stalled at rapidity {best}"
        )))
    }

    /// Departure velocity of the connecting characteristic only.
    pub fn connect_velocity(&self, t0: f64, r0: f64, t1: f64, r1: f64) -> Result<(f64, f64)> {
        let arc = self.connect(t0, r0, t1, r1)?;
        Ok((arc.first().u, arc.last().u))
    }

    /// Time for a sub-escape arc leaving r0 with u0 > 0 to come back to r0.
    pub fn round_trip_time(&self, r0: f64, u0: f64) -> Result<f64> {
        let ue = self.bg.escape_velocity(r0)?;
        if !(u0 > 0.0 && u0 < ue) {
            return Err(HloError::Domain(format!("round trip needs 0 < u0 < u_E = {ue}, got {u0}")));
        }
        let y0 = self.to_y(r0, u0);
        let c = self.c_of(&y0);
        // generous horizon: the apex is at 2M(1 - 1/C)
        let apex = 2.0 * self.m() * (1.0 - 1.0 / c);
        let tmax = 100.0 * apex.max(1.0) * (1.0 + 1.0 / (1.0 - c).sqrt()) + 1e3;
        let run = self.run(1.0, y0, Stop { tau_max: tmax, target: Some(y0.d) }, false)?;
        if run.end != ArcEnd::Target {
            return Err(HloError::Numerical(format!("round trip from r0={r0}, u0={u0} did not return")));
        }
        Ok(run.last.tau)
    }
}

/// Ingoing and outgoing light cone radii from (t0, r0) at time t, solving
/// (r - r0) + 2M ln((r - 2M)/(r0 - 2M)) = +-(t - t0).
pub fn light_cone_radii(m: f64, t0: f64, r0: f64, t: f64) -> (f64, f64) {
    let dt = (t - t0).abs();
    if dt == 0.0 {
        return (r0, r0);
    }
    if m == 0.0 {
        return (r0 + dt, r0 - dt);
    }
    let solve = |rhs: f64| -> f64 {
        // g(s) = s - s0 + 2M ln(s/s0), s = r - 2M; increasing in s
        let s0 = r0 - 2.0 * m;
        let g = |s: f64| s - s0 + 2.0 * m * (s / s0).ln() - rhs;
        let mut lo = s0 * (-(dt + s0) / (2.0 * m)).exp().max(1e-300);
        let mut hi = s0 + dt + 1.0;
        while g(lo) > 0.0 {
            lo *= 1e-3;
            if lo < 1e-300 {
                return 2.0 * m;
            }
        }
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        2.0 * m + 0.5 * (lo + hi)
    };
    (solve(dt), solve(-dt))
}

/// Lower bound 4M u0 (1 - u0^2) / (uE^2 - u0^2) on the duration of a round
/// trip starting at r0 with speed u0 below the escape velocity.
pub fn return_time_bound(bg: &Background, r0: f64, u0: f64) -> Result<f64> {
    let ue = bg.escape_velocity(r0)?;
    if !(u0 > 0.0 && u0 < ue) {
        return Err(HloError::Domain(format!("return-time bound needs 0 < u0 < u_E = {ue}, got {u0}")));
    }
    Ok(4.0 * bg.mass * u0 * (1.0 - u0 * u0) / (ue * ue - u0 * u0))
}

/// Funnel of characteristics from (t0, r0) for the given initial velocities,
/// integrated up to `t_end`.
pub fn funnel(integ: &Integrator, t0: f64, r0: f64, velocities: &[f64], t_end: f64) -> Result<Vec<CharArc>> {
    use rayon::prelude::*;
    velocities
        .par_iter()
        .map(|&u| integ.integrate_arc(CharState::new(t0, r0, u), t_end))
        .collect()
}

/// Conserved quantity evaluated from public (r, u).
pub fn conserved_c_of_state(bg: &Background, st: &CharState) -> f64 {
    conserved_c_unchecked(bg.mass, st.r, st.u)
}
