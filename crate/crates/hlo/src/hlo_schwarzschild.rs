//! Variational solver outside r* for M > 0.
//!
//! The action of a path is W(chi(t0)) + K + P - B, where K and P are the
//! kinetic and curvature terms while the path is above r* and B is the
//! boundary credit while it sits at r*. Along a characteristic K = C tau / 2
//! with C the conserved quantity, and P is integrated with the arc.
//!
//! The cost of reaching (b, r*) is a value function V on a time lattice,
//! built by forward dynamic programming over three moves: arrive from the
//! initial line, stay at r*, or make an excursion r* -> r* along a returning
//! characteristic. A point (t1, r1) is then solved by shooting backward
//! characteristics parameterized by the terminal velocity u1.

use crate::characteristics::{hermite, ArcEnd, CharArc, CharState, Integrator, Shot};
use crate::error::{HloError, Result};
use crate::field::PiecewiseField;
use crate::forcing::BoundaryTrace;
use crate::geometry::Background;
use crate::potential::SchwPotential;
use crate::transport::{DensityField, Origin, Traced};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const TIE: f64 = 1e-12;
/// Integration noise in a point action.
const NOISE: f64 = 1e-9;
const INVPHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionBreakdown {
    /// Initial potential at the foot.
    pub w: f64,
    /// Kinetic term above r*.
    pub k: f64,
    /// Curvature term above r*.
    pub p: f64,
    /// Boundary credit at r*.
    pub b: f64,
    pub total: f64,
}

impl ActionBreakdown {
    pub fn new(w: f64, k: f64, p: f64, b: f64) -> Self {
        ActionBreakdown { w, k, p, b, total: w + k + p - b }
    }
}

/// Piece of a path: a stay at r* or a characteristic above it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "segment", rename_all = "snake_case")]
pub enum Segment {
    Boundary { t0: f64, t1: f64 },
    Characteristic { arc: CharArc },
}

impl Segment {
    fn start(&self, r_star: f64) -> (f64, f64) {
        match self {
            Segment::Boundary { t0, .. } => (*t0, r_star),
            Segment::Characteristic { arc } => (arc.first().t, arc.first().r),
        }
    }

    fn end(&self, r_star: f64) -> (f64, f64) {
        match self {
            Segment::Boundary { t1, .. } => (*t1, r_star),
            Segment::Characteristic { arc } => (arc.last().t, arc.last().r),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchwPath {
    pub segments: Vec<Segment>,
    pub breakdown: ActionBreakdown,
}

/// B over [a, b] at r*: 1/2 int (phi_+^2 - e*)/(1 - e*) with e* = u_E(r*)^2.
pub fn boundary_credit(bg: &Background, bc: &dyn BoundaryTrace, a: f64, b: f64) -> f64 {
    let e = bg.ue2_star();
    0.5 * (bc.integral_phi_plus_sq(a, b) - e * (b - a)) / (1.0 - e)
}

/// Action of an explicit path. `w` is the initial potential; without it the
/// path is scored without initial data (boundary-to-boundary actions).
pub fn action_of_path(
    bg: &Background,
    segments: &[Segment],
    bc: &dyn BoundaryTrace,
    w: Option<&SchwPotential>,
) -> Result<ActionBreakdown> {
    let rs = bg.r_star;
    let first = segments.first().ok_or_else(|| HloError::Domain("empty path".into()))?;
    for pair in segments.windows(2) {
        let (ta, ra) = pair[0].end(rs);
        let (tb, rb) = pair[1].start(rs);
        if (ta - tb).abs() > 1e-8 * (1.0 + ta.abs()) || (ra - rb).abs() > 1e-7 * (1.0 + ra.abs()) {
            return Err(HloError::Domain(format!("path breaks between ({ta}, {ra}) and ({tb}, {rb})")));
        }
    }
    let (_, r_start) = first.start(rs);
    let mut acc = ActionBreakdown { w: w.map(|w| w.value(r_start)).unwrap_or(0.0), ..Default::default() };
    for seg in segments {
        match seg {
            Segment::Boundary { t0, t1 } => {
                if t1 < t0 {
                    return Err(HloError::Domain(format!("boundary segment runs backward: [{t0}, {t1}]")));
                }
                acc.b += boundary_credit(bg, bc, *t0, *t1);
            }
            Segment::Characteristic { arc } => {
                if arc.end == ArcEnd::Absorbed {
                    return Err(HloError::Numerical("path segment reaches the horizon guard".into()));
                }
                if arc.states.iter().any(|s| s.r < rs - 1e-7 * (1.0 + rs)) {
                    return Err(HloError::Domain("characteristic segment dips below r*".into()));
                }
                acc.k += 0.5 * arc.c * arc.duration();
                acc.p += arc.p_total();
            }
        }
    }
    Ok(ActionBreakdown::new(acc.w, acc.k, acc.p, acc.b))
}

/// Minimal K + P of an excursion r* -> r* of given duration, tabulated over
/// the apex radius. Zero in the flat case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcursionTable {
    pub taus: Vec<f64>,
    pub costs: Vec<f64>,
    /// dE/dtau = -C/2 at each entry.
    pub slopes: Vec<f64>,
    /// Departure speed at r* for each entry.
    pub speeds: Vec<f64>,
}

impl ExcursionTable {
    pub fn build(integ: &Integrator, tau_max: f64) -> Result<Self> {
        let bg = integ.bg;
        let e = bg.ue2_star();
        let mut t = ExcursionTable { taus: vec![0.0], costs: vec![0.0], slopes: vec![0.5 * e / (1.0 - e)], speeds: vec![0.0] };
        if bg.mass == 0.0 {
            return Ok(t);
        }
        let (m, rs) = (bg.mass, bg.r_star);
        let d_star = rs - 2.0 * m;
        let mut z = 1e-6;
        while z < 1e14 {
            let c = -2.0 * m / (d_star * (1.0 + z));
            let ub = (c * (1.0 - e) + e).max(0.0).sqrt();
            let shot = integ.shoot_lean(0.0, rs, ub, rs, 1e15)?;
            if shot.end != ArcEnd::Target {
                break;
            }
            let tau = shot.t;
            if tau > *t.taus.last().unwrap() {
                t.taus.push(tau);
                t.costs.push(0.5 * c * tau + shot.p);
                t.slopes.push(-0.5 * c);
                t.speeds.push(ub);
            }
            if tau > tau_max {
                break;
            }
            z *= 1.15;
        }
        Ok(t)
    }

    pub fn max_tau(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    fn locate(&self, tau: f64) -> (usize, f64) {
        let n = self.taus.len();
        let i = self.taus.partition_point(|&x| x <= tau).clamp(1, n - 1);
        let (a, b) = (self.taus[i - 1], self.taus[i]);
        (i, (tau - a) / (b - a))
    }

    /// E(tau) by cubic Hermite interpolation; linear extrapolation with the
    /// last slope beyond the table.
    pub fn cost(&self, tau: f64) -> f64 {
        let n = self.taus.len();
        if n < 2 {
            return 0.0;
        }
        if tau >= self.taus[n - 1] {
            return self.costs[n - 1] + self.slopes[n - 1] * (tau - self.taus[n - 1]);
        }
        let (i, th) = self.locate(tau);
        let h = self.taus[i] - self.taus[i - 1];
        hermite(th, h, self.costs[i - 1], self.slopes[i - 1], self.costs[i], self.slopes[i])
    }

    /// Departure speed whose round trip lasts about `tau`.
    pub fn departure_speed(&self, tau: f64) -> f64 {
        if self.taus.len() < 2 {
            return 0.0;
        }
        let (i, th) = self.locate(tau);
        self.speeds[i - 1] + th.clamp(0.0, 1.0) * (self.speeds[i] - self.speeds[i - 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwConfig {
    /// Upper bound on the lattice spacing of the boundary value function.
    pub max_lattice_step: f64,
    /// The spacing is refined until the window has at least this many nodes...
    pub min_lattice_nodes: usize,
    /// ...but never beyond this many (breakpoints of the trace come on top).
    pub max_lattice_nodes: usize,
    /// Terminal rapidities scanned per point.
    pub scan: usize,
    /// Local minima of the scan refined by golden section.
    pub refine: usize,
    /// Scan range in rapidity.
    pub rapidity_max: f64,
    /// Corner candidates at trace breakpoints are tried when there are at
    /// most this many breakpoints in the window.
    pub corner_limit: usize,
}

impl Default for SchwConfig {
    fn default() -> Self {
        SchwConfig {
            max_lattice_step: 1.0 / 16.0,
            min_lattice_nodes: 512,
            max_lattice_nodes: 4096,
            scan: 161,
            refine: 4,
            rapidity_max: 5.0,
            corner_limit: 64,
        }
    }
}

fn lattice(bc: &dyn BoundaryTrace, t0: f64, t1: f64, marks: &[f64], cfg: &SchwConfig) -> Vec<f64> {
    let span = t1 - t0;
    let step = cfg.max_lattice_step.min(span / cfg.min_lattice_nodes as f64).max(span / cfg.max_lattice_nodes as f64);
    let mut nodes = vec![t0, t1];
    // absolute lattice, so windows sharing times share nodes
    let k0 = (t0 / step).floor() as i64 + 1;
    let k1 = (t1 / step).ceil() as i64 - 1;
    for k in k0..=k1 {
        nodes.push(k as f64 * step);
    }
    nodes.extend(bc.breakpoints(t0, t1));
    nodes.extend(marks.iter().copied());
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps = 1e-12 * (1.0 + t0.abs().max(t1.abs()));
    let mut out: Vec<f64> = Vec::with_capacity(nodes.len());
    for x in nodes {
        if x < t0 || x > t1 {
            continue;
        }
        match out.last_mut() {
            Some(last) if x - *last <= eps => {
                // keep exact endpoints and breakpoints over lattice multiples
                if x == t1 || *last != t0 {
                    *last = x;
                }
            }
            _ => out.push(x),
        }
    }
    *out.last_mut().unwrap() = t1;
    out[0] = t0;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "move", rename_all = "snake_case")]
pub enum Back {
    /// Start at (t0, r*).
    Corner,
    /// Arrival from the initial line with this velocity.
    Init { u: f64 },
    Stay,
    Excursion { from: usize },
}

/// V(s) on a lattice: cheapest way to be at (s, r*).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    /// Stay rate on [nodes[j], nodes[j+1]).
    pub rates: Vec<f64>,
    pub back: Vec<Back>,
}

impl BoundaryValue {
    fn segment(&self, b: f64) -> usize {
        self.nodes.partition_point(|&s| s <= b).saturating_sub(1).min(self.rates.len() - 1)
    }

    /// V(b) = V(s_j) plus staying from the lattice node below b.
    pub fn at(&self, b: f64) -> f64 {
        let j = self.segment(b);
        self.values[j] + self.rates[j] * (b - self.nodes[j]).max(0.0)
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Candidate minimizer at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchwMinimizer {
    pub r: f64,
    /// Terminal velocity, which is u(t1, r).
    pub velocity: f64,
    /// Conserved quantity of the arriving characteristic.
    pub c: f64,
    pub action: f64,
    /// W at the foot, or V at the exit time.
    pub prior: f64,
    /// K and P of the final characteristic.
    pub k: f64,
    pub p: f64,
    pub foot: Option<f64>,
    pub exit_time: Option<f64>,
}

impl Traced for SchwMinimizer {
    fn origin(&self) -> Origin {
        match self.exit_time {
            Some(b) => Origin::Boundary { exit_time: b },
            None => Origin::InitialLine { foot: self.foot.unwrap_or(f64::NAN) },
        }
    }

    fn endpoint(&self) -> f64 {
        self.r
    }
}

fn golden<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INVPHI * (b - a);
    let mut d = a + INVPHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INVPHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INVPHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Indices of local minima of a sampled function, cheapest first.
fn local_minima(vals: &[f64], keep: usize) -> Vec<usize> {
    let n = vals.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&k| {
            vals[k].is_finite() && (k == 0 || vals[k] <= vals[k - 1]) && (k + 1 == n || vals[k] <= vals[k + 1])
        })
        .collect();
    idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
    idx.truncate(keep);
    idx
}

/// Initial data of an IVBP.
#[derive(Clone, Copy)]
pub struct InitialData<'a> {
    pub w: &'a SchwPotential,
    pub v0: &'a DensityField,
}

/// Solver for one window [t0, t1]: the boundary value function is built once
/// and then read by every point evaluation.
pub struct SchwSolver<'a> {
    pub integ: Integrator,
    pub bc: &'a dyn BoundaryTrace,
    pub init: Option<InitialData<'a>>,
    pub t0: f64,
    pub t1: f64,
    pub cfg: SchwConfig,
    pub excursions: ExcursionTable,
    pub value: BoundaryValue,
    breakpoints: Vec<f64>,
}

impl<'a> SchwSolver<'a> {
    pub fn new(
        bg: Background,
        bc: &'a dyn BoundaryTrace,
        init: Option<InitialData<'a>>,
        t0: f64,
        t1: f64,
        cfg: SchwConfig,
    ) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(HloError::Config(format!("need t0 < t1, got t0 = {t0}, t1 = {t1}")));
        }
        if let Some(d) = &init {
            if d.w.bg != bg {
                return Err(HloError::Config("initial potential lives on a different background".into()));
            }
        }
        let integ = Integrator::new(bg);
        let excursions = ExcursionTable::build(&integ, t1 - t0)?;
        let breakpoints = bc.breakpoints(t0, t1);
        let mut s = SchwSolver {
            integ,
            bc,
            init,
            t0,
            t1,
            cfg,
            excursions,
            value: BoundaryValue { nodes: vec![], values: vec![], rates: vec![], back: vec![] },
            breakpoints,
        };
        s.value = s.build_value()?;
        Ok(s)
    }

    pub fn bg(&self) -> Background {
        self.integ.bg
    }

    fn rs(&self) -> f64 {
        self.integ.bg.r_star
    }

    /// Cheapest arrival at (s, r*) straight from the initial line.
    fn arrival_from_initial(&self, s: f64) -> Result<(f64, f64)> {
        let Some(init) = self.init else {
            return Ok((f64::INFINITY, 0.0));
        };
        let rs = self.rs();
        let cost = |eta: f64| -> f64 {
            let u = eta.tanh();
            match self.integ.shoot_lean(s, rs, u, rs, self.t0) {
                Ok(l) if l.end == ArcEnd::TimeReached => init.w.value(l.r) + 0.5 * l.c * (s - self.t0) + l.p,
                _ => f64::INFINITY,
            }
        };
        let n = 64;
        let emax = self.cfg.rapidity_max;
        let etas: Vec<f64> = (0..n).map(|k| -emax + emax * (k as f64 + 0.5) / n as f64).collect();
        let vals: Vec<f64> = etas.iter().map(|&e| cost(e)).collect();
        let mut best = (f64::INFINITY, 0.0);
        for k in local_minima(&vals, 2) {
            let lo = if k == 0 { -emax } else { etas[k - 1] };
            let hi = if k + 1 == n { 0.0 } else { etas[k + 1] };
            let (e, v) = golden(cost, lo, hi, 1e-12);
            let (e, v) = if vals[k] < v { (etas[k], vals[k]) } else { (e, v) };
            if v < best.0 {
                best = (v, e.tanh());
            }
        }
        Ok(best)
    }

    fn build_value(&self) -> Result<BoundaryValue> {
        let bg = self.bg();
        let nodes = lattice(self.bc, self.t0, self.t1, &[], &self.cfg);
        let n = nodes.len();
        let rates: Vec<f64> = nodes.windows(2).map(|w| bg.stay_rate(self.bc.phi(0.5 * (w[0] + w[1])))).collect();
        let arrivals: Vec<(f64, f64)> = if self.init.is_some() {
            nodes[1..].par_iter().map(|&s| self.arrival_from_initial(s)).collect::<Result<_>>()?
        } else {
            vec![(f64::INFINITY, 0.0); n - 1]
        };
        let mut values = vec![0.0; n];
        let mut back = vec![Back::Corner; n];
        values[0] = self.init.map(|d| d.w.value_at_boundary()).unwrap_or(0.0);
        let excursions = bg.mass > 0.0;
        for j in 1..n {
            let mut best = values[j - 1] + rates[j - 1] * (nodes[j] - nodes[j - 1]);
            let mut how = Back::Stay;
            let (a, u) = arrivals[j - 1];
            if a < best {
                best = a;
                how = Back::Init { u };
            }
            if excursions {
                for i in 0..j - 1 {
                    let v = values[i] + self.excursions.cost(nodes[j] - nodes[i]);
                    if v < best {
                        best = v;
                        how = Back::Excursion { from: i };
                    }
                }
            }
            values[j] = best;
            back[j] = how;
        }
        Ok(BoundaryValue { nodes, values, rates, back })
    }

    /// Action of the backward characteristic from (t1, r1) with terminal
    /// velocity u1, continued into the value function.
    pub fn candidate(&self, r1: f64, u1: f64) -> SchwMinimizer {
        let rs = self.rs();
        let mut out = SchwMinimizer {
            r: r1,
            velocity: u1,
            c: f64::NAN,
            action: f64::INFINITY,
            prior: f64::INFINITY,
            k: 0.0,
            p: 0.0,
            foot: None,
            exit_time: None,
        };
        let Ok(l) = self.integ.shoot_lean(self.t1, r1, u1, rs, self.t0) else {
            return out;
        };
        out.c = l.c;
        out.p = l.p;
        match l.end {
            ArcEnd::Target => {
                let b = l.t.max(self.t0);
                out.exit_time = Some(b);
                out.prior = self.value.at(b);
                out.k = 0.5 * l.c * (self.t1 - b);
            }
            ArcEnd::TimeReached => {
                out.foot = Some(l.r);
                out.prior = self.init.map(|d| d.w.value(l.r)).unwrap_or(f64::INFINITY);
                out.k = 0.5 * l.c * (self.t1 - self.t0);
            }
            _ => return out,
        }
        out.action = out.prior + out.k + out.p;
        out
    }

    fn consider(best: &mut SchwMinimizer, cand: SchwMinimizer) {
        if !cand.action.is_finite() {
            return;
        }
        if !best.action.is_finite() {
            *best = cand;
            return;
        }
        let tol = TIE * (1.0 + cand.action.abs().max(best.action.abs()));
        if cand.action < best.action - tol || (cand.action <= best.action + tol && cand.velocity < best.velocity) {
            *best = cand;
        }
    }

    /// Minimizer at (t1, r1).
    pub fn minimize(&self, r1: f64) -> Result<SchwMinimizer> {
        let bg = self.bg();
        let rs = self.rs();
        if r1 < rs {
            return Err(HloError::Domain(format!("radius {r1} is below r* = {rs}")));
        }
        let r1 = r1.max(rs + 1e-9 * (1.0 + rs));
        let n = self.cfg.scan.max(3);
        let emax = self.cfg.rapidity_max;
        let etas: Vec<f64> = (0..n).map(|k| -emax + 2.0 * emax * k as f64 / (n - 1) as f64).collect();
        let cands: Vec<SchwMinimizer> = etas.iter().map(|&e| self.candidate(r1, e.tanh())).collect();
        let vals: Vec<f64> = cands.iter().map(|c| c.action).collect();
        let mut best = self.candidate(r1, 0.0);
        best.action = f64::INFINITY;
        for c in &cands {
            Self::consider(&mut best, *c);
        }
        for k in local_minima(&vals, self.cfg.refine) {
            let lo = etas[k.saturating_sub(1)];
            let hi = etas[(k + 1).min(n - 1)];
            let (e, _) = golden(|e| self.candidate(r1, e.tanh()).action, lo, hi, 1e-13);
            Self::consider(&mut best, self.candidate(r1, e.tanh()));
        }
        // Exits inside a cell leave r* with speed phi_+ of that cell; exact
        // candidates win over scanned ones within integration noise.
        let mut exact = best;
        exact.action = f64::INFINITY;
        let e_star = bg.ue2_star();
        let e1 = 2.0 * bg.mass / r1;
        let mut phis: Vec<f64> = Vec::new();
        let mut edges = vec![self.t0];
        edges.extend(self.breakpoints.iter().copied());
        for &s in &edges {
            let q = self.bc.phi(s).max(0.0);
            if q > 0.0 && !phis.contains(&q) {
                phis.push(q);
            }
        }
        for q in phis {
            let c = (q * q - e_star) / (1.0 - e_star);
            let u2 = c * (1.0 - e1) + e1;
            if u2 > 0.0 && u2 < 1.0 {
                let u = u2.sqrt();
                Self::consider(&mut exact, self.candidate(r1, u));
                Self::consider(&mut exact, self.candidate(r1, -u));
            }
        }
        // Exits exactly at a breakpoint (or at t0).
        if edges.len() <= self.cfg.corner_limit + 1 {
            for &s in &edges {
                if let Ok(arc) = self.integ.connect(s, rs, self.t1, r1) {
                    if arc.first().u >= 0.0 {
                        Self::consider(&mut exact, self.candidate(r1, arc.last().u));
                    }
                }
            }
        }
        if exact.action <= best.action + NOISE * (1.0 + best.action.abs()) {
            best = exact;
        }
        if !best.action.is_finite() {
            return Err(HloError::Unreachable { t0: self.t0, r0: rs, t1: self.t1, r1 });
        }
        Ok(best)
    }

    /// Solves on a radius grid.
    pub fn solve(&self, rs_grid: &[f64]) -> Result<SchwSolution> {
        let rs = self.rs();
        if rs_grid.is_empty() || rs_grid.iter().any(|r| !(*r >= rs) || !r.is_finite()) || rs_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HloError::Config(format!("radius grid must be increasing, finite and >= r* = {rs}")));
        }
        let mins: Vec<SchwMinimizer> = rs_grid.par_iter().map(|&r| self.minimize(r)).collect::<Result<_>>()?;
        let v_vals: Vec<f64> = mins
            .iter()
            .map(|m| match m.origin() {
                Origin::Boundary { exit_time } => self.bc.psi(exit_time),
                Origin::InitialLine { foot } => self.init.map(|d| d.v0.at(foot)).unwrap_or(f64::NAN),
            })
            .collect();
        Ok(SchwSolution {
            t0: self.t0,
            t1: self.t1,
            u: PiecewiseField::new(rs, rs_grid.to_vec(), mins.iter().map(|m| m.velocity).collect())?,
            v: PiecewiseField::new(rs, rs_grid.to_vec(), v_vals)?,
            potential: mins.iter().map(|m| m.action).collect(),
            conserved: mins.iter().map(|m| m.c).collect(),
            minimizers: mins,
        })
    }

    fn excursion_arc(&self, a: f64, b: f64) -> Result<CharArc> {
        let rs = self.rs();
        let tau = b - a;
        let ue = self.bg().escape_velocity(rs)?;
        let guess = self.excursions.departure_speed(tau).clamp(1e-300, ue);
        // refine the departure rapidity so that the round trip lasts tau
        let trip = |u: f64| -> f64 {
            match self.integ.shoot_lean(a, rs, u, rs, a + 1e15) {
                Ok(l) if l.end == ArcEnd::Target => l.t - a,
                _ => f64::INFINITY,
            }
        };
        let (mut lo, mut hi) = (guess * 0.5, (guess * 2.0).min(ue * (1.0 - 1e-15)));
        while trip(lo) > tau && lo > 1e-300 {
            lo *= 0.5;
        }
        while trip(hi) < tau && hi < ue * (1.0 - 1e-15) {
            hi = 0.5 * (hi + ue);
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if trip(mid) < tau {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        match self.integ.shoot_to_radius((a, rs), rs, 0.5 * (lo + hi), a + 2.0 * tau + 1.0)? {
            Shot::Hit(arc) => Ok(arc),
            Shot::Miss { .. } => Err(HloError::Numerical(format!("excursion over [{a}, {b}] did not return"))),
        }
    }

    /// Path realizing V at lattice node j.
    fn path_to_node(&self, j: usize, out: &mut Vec<Segment>) -> Result<()> {
        let s = self.value.nodes[j];
        match self.value.back[j] {
            Back::Corner => {}
            Back::Stay => {
                self.path_to_node(j - 1, out)?;
                out.push(Segment::Boundary { t0: self.value.nodes[j - 1], t1: s });
            }
            Back::Excursion { from } => {
                self.path_to_node(from, out)?;
                out.push(Segment::Characteristic { arc: self.excursion_arc(self.value.nodes[from], s)? });
            }
            Back::Init { u } => {
                let arc = self.integ.integrate_arc(CharState::new(s, self.rs(), u), self.t0)?;
                out.push(Segment::Characteristic { arc });
            }
        }
        Ok(())
    }

    /// Full path of a minimizer, with its recomputed action.
    pub fn path(&self, m: &SchwMinimizer) -> Result<SchwPath> {
        let rs = self.rs();
        let mut segs = Vec::new();
        let last = match m.exit_time {
            Some(b) => {
                let j = self.value.segment(b);
                self.path_to_node(j, &mut segs)?;
                if b > self.value.nodes[j] {
                    segs.push(Segment::Boundary { t0: self.value.nodes[j], t1: b });
                }
                match self.integ.shoot_to_radius((self.t1, m.r), rs, m.velocity, self.t0)? {
                    Shot::Hit(arc) => arc,
                    Shot::Miss { arc, .. } => arc,
                }
            }
            None => self.integ.integrate_arc(CharState::new(self.t1, m.r, m.velocity), self.t0)?,
        };
        segs.push(Segment::Characteristic { arc: last });
        // merge consecutive stays
        let mut merged: Vec<Segment> = Vec::with_capacity(segs.len());
        for s in segs {
            if let (Some(Segment::Boundary { t1, .. }), Segment::Boundary { t1: e, .. }) = (merged.last_mut(), &s) {
                *t1 = *e;
                continue;
            }
            merged.push(s);
        }
        if merged.is_empty() || matches!(merged[0], Segment::Boundary { .. }) {
            // path starts at (t0, r*)
        }
        let breakdown = action_of_path(&self.bg(), &merged, self.bc, self.init.map(|d| d.w))?;
        Ok(SchwPath { segments: merged, breakdown })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchwSolution {
    pub t0: f64,
    pub t1: f64,
    pub u: PiecewiseField,
    pub v: PiecewiseField,
    pub potential: Vec<f64>,
    /// Conserved quantity of the arriving characteristic.
    pub conserved: Vec<f64>,
    pub minimizers: Vec<SchwMinimizer>,
}

impl SchwSolution {
    /// Rows (r, u, v, U, C).
    pub fn rows(&self) -> Vec<[f64; 5]> {
        (0..self.u.len())
            .map(|i| [self.u.xs[i], self.u.values[i], self.v.values[i], self.potential[i], self.conserved[i]])
            .collect()
    }
}

/// Solves the IVBP on (t0, t1] with the default configuration.
pub fn solve_ivbp_schw(
    bg: &Background,
    u0: &SchwPotential,
    v0: &DensityField,
    bc: &dyn BoundaryTrace,
    t0: f64,
    t1: f64,
    rs: &[f64],
) -> Result<SchwSolution> {
    let init = InitialData { w: u0, v0 };
    SchwSolver::new(*bg, bc, Some(init), t0, t1, SchwConfig::default())?.solve(rs)
}

/// S^{t0,t1}: cheapest path from (t0, r*) to (t1, r*).
pub fn boundary_action(bg: &Background, bc: &dyn BoundaryTrace, t0: f64, t1: f64) -> Result<f64> {
    boundary_action_with(bg, bc, t0, t1, &SchwConfig::default())
}

pub fn boundary_action_with(bg: &Background, bc: &dyn BoundaryTrace, t0: f64, t1: f64, cfg: &SchwConfig) -> Result<f64> {
    Ok(SchwSolver::new(*bg, bc, None, t0, t1, *cfg)?.value.last())
}

/// S^{s, t_end} for every lattice node s of [t_start, t_end], by one
/// backward pass. `marks` are forced into the lattice. Returns (nodes, S).
pub fn boundary_action_profile(
    bg: &Background,
    bc: &dyn BoundaryTrace,
    t_start: f64,
    t_end: f64,
    marks: &[f64],
    cfg: &SchwConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t_end > t_start) {
        return Err(HloError::Config(format!("need t_start < t_end, got {t_start} >= {t_end}")));
    }
    let integ = Integrator::new(*bg);
    let table = ExcursionTable::build(&integ, t_end - t_start)?;
    let nodes = lattice(bc, t_start, t_end, marks, cfg);
    let n = nodes.len();
    let rates: Vec<f64> = nodes.windows(2).map(|w| bg.stay_rate(bc.phi(0.5 * (w[0] + w[1])))).collect();
    let mut g = vec![0.0; n];
    for j in (0..n - 1).rev() {
        let mut best = g[j + 1] + rates[j] * (nodes[j + 1] - nodes[j]);
        if bg.mass > 0.0 {
            for k in j + 2..n {
                best = best.min(g[k] + table.cost(nodes[k] - nodes[j]));
            }
        }
        g[j] = best;
    }
    Ok((nodes, g))
}

/// Global solution at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalSchwPoint {
    pub u: f64,
    pub v: f64,
    /// Last departure time from r*.
    pub t_star: f64,
    pub c: f64,
    pub value: f64,
    pub converged: bool,
    /// Look-back of the last solve.
    pub lookback: f64,
}

/// Look-back doubling settings for the global solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullbackConfig {
    pub max_lookback: f64,
    /// Two consecutive look-backs agree when u and t_star differ by less.
    pub tol: f64,
    pub solver: SchwConfig,
}

impl Default for PullbackConfig {
    fn default() -> Self {
        PullbackConfig { max_lookback: 4096.0, tol: 1e-7, solver: SchwConfig::default() }
    }
}

fn same(a: &SchwMinimizer, b: &SchwMinimizer, tol: f64) -> bool {
    match (a.exit_time, b.exit_time) {
        (Some(x), Some(y)) => (a.velocity - b.velocity).abs() <= tol && (x - y).abs() <= tol * (1.0 + x.abs()),
        _ => false,
    }
}

/// Global solution at (t, r): boundary-only paths over [t - L, t] with L
/// doubled from `lookback` until (u, t_star) stop changing.
pub fn global_solution_schw(bg: &Background, bc: &dyn BoundaryTrace, t: f64, r: f64, lookback: f64) -> Result<GlobalSchwPoint> {
    global_solution_schw_with(bg, bc, t, r, lookback, &PullbackConfig::default())
}

pub fn global_solution_schw_with(
    bg: &Background,
    bc: &dyn BoundaryTrace,
    t: f64,
    r: f64,
    lookback: f64,
    cfg: &PullbackConfig,
) -> Result<GlobalSchwPoint> {
    let (u, v, mins, lb, converged) = global_field_schw_with(bg, bc, t, &[r], lookback, cfg)?;
    let m = mins[0];
    Ok(GlobalSchwPoint {
        u: u.values[0],
        v: v.values[0],
        t_star: m.exit_time.unwrap_or(t - lb),
        c: m.c,
        value: m.action,
        converged,
        lookback: lb,
    })
}

/// Global solution on a grid; convergence requires every point to settle.
/// Returns (u, v, minimizers, final look-back, converged).
pub fn global_field_schw_with(
    bg: &Background,
    bc: &dyn BoundaryTrace,
    t: f64,
    rs: &[f64],
    lookback: f64,
    cfg: &PullbackConfig,
) -> Result<(PiecewiseField, PiecewiseField, Vec<SchwMinimizer>, f64, bool)> {
    if !(lookback > 0.0) {
        return Err(HloError::Config(format!("look-back must be positive, got {lookback}")));
    }
    let mut l = lookback;
    let mut prev: Option<SchwSolution> = None;
    loop {
        let solver = SchwSolver::new(*bg, bc, None, t - l, t, cfg.solver)?;
        let sol = match solver.solve(rs) {
            Ok(s) => Some(s),
            Err(HloError::Unreachable { .. }) => None,
            Err(e) => return Err(e),
        };
        if let (Some(p), Some(s)) = (&prev, &sol) {
            if p.minimizers.iter().zip(&s.minimizers).all(|(a, b)| same(a, b, cfg.tol)) {
                let s = sol.unwrap();
                return Ok((s.u, s.v, s.minimizers, l, true));
            }
        }
        if 2.0 * l > cfg.max_lookback {
            return match sol.or(prev) {
                Some(s) => Ok((s.u, s.v, s.minimizers, l, false)),
                None => Err(HloError::WindowExhausted { searched: l }),
            };
        }
        if sol.is_some() {
            prev = sol;
        }
        l *= 2.0;
    }
}
