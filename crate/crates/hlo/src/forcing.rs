//! Boundary data (phi, psi): deterministic traces and stationary, seeded,
//! random-access processes. Every trace is piecewise constant on cells, so
//! integrals of phi_+^2 are exact cell sums.

use crate::error::{HloError, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// |phi| never exceeds this value.
pub const PHI_CLIP: f64 = 0.95;

/// One constancy cell [start, end) of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: i64,
    pub start: f64,
    pub end: f64,
    pub phi: f64,
    pub psi: f64,
}

impl Cell {
    pub fn phi_plus_sq(&self) -> f64 {
        let q = self.phi.max(0.0);
        q * q
    }
}

/// Right-continuous, piecewise-constant boundary data.
pub trait BoundaryTrace: Send + Sync {
    fn index_of(&self, t: f64) -> i64;
    fn cell_at(&self, index: i64) -> Cell;

    fn cell(&self, t: f64) -> Cell {
        self.cell_at(self.index_of(t))
    }

    fn phi(&self, t: f64) -> f64 {
        self.cell(t).phi
    }

    fn psi(&self, t: f64) -> f64 {
        self.cell(t).psi
    }

    /// int_a^b phi_+^2, exact cell sum.
    fn integral_phi_plus_sq(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        default_integral(self, a, b)
    }

    /// Cell boundaries strictly inside (a, b).
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if !(b > a) {
            return out;
        }
        let mut k = self.index_of(a);
        loop {
            let c = self.cell_at(k);
            if c.end >= b || !c.end.is_finite() {
                break;
            }
            if c.end > a {
                out.push(c.end);
            }
            k += 1;
        }
        out
    }

    fn description(&self) -> String;
}

/// Finite list of knots with constant extension on both sides. Cell `i`
/// covers [knots[i-1], knots[i]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTrace {
    pub knots: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl PiecewiseTrace {
    pub fn new(knots: Vec<f64>, phi: Vec<f64>, psi: Vec<f64>) -> Result<Self> {
        if phi.len() != knots.len() + 1 || psi.len() != phi.len() {
            return Err(HloError::Config("trace needs len(phi) = len(psi) = len(knots) + 1".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HloError::Config("trace knots must be strictly increasing".into()));
        }
        if phi.iter().any(|p| !(p.abs() < 1.0)) {
            return Err(HloError::Config("boundary velocities must lie in (-1, 1)".into()));
        }
        Ok(PiecewiseTrace { knots, phi, psi })
    }

    pub fn constant(phi: f64, psi: f64) -> Self {
        PiecewiseTrace { knots: vec![], phi: vec![phi], psi: vec![psi] }
    }
}

impl BoundaryTrace for PiecewiseTrace {
    fn index_of(&self, t: f64) -> i64 {
        self.knots.partition_point(|&k| k <= t) as i64
    }

    fn cell_at(&self, index: i64) -> Cell {
        let n = self.knots.len() as i64;
        let i = index.clamp(0, n);
        let start = if i == 0 { f64::NEG_INFINITY } else { self.knots[i as usize - 1] };
        let end = if i == n { f64::INFINITY } else { self.knots[i as usize] };
        Cell { index: i, start, end, phi: self.phi[i as usize], psi: self.psi[i as usize] }
    }

    fn description(&self) -> String {
        format!("deterministic piecewise trace with {} knots", self.knots.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    TwoPoint { a: f64, b: f64, p_a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessKind {
    IidPiecewiseConstant {
        cell: f64,
        marginal: Marginal,
    },
    /// Piecewise-constant sampling of a stationary Ornstein–Uhlenbeck process
    /// at cell resolution: an AR(1) chain with coefficient exp(-rate * cell).
    DiscreteOu {
        cell: f64,
        mean: f64,
        rate: f64,
        volatility: f64,
    },
    /// Equal-length levels repeated with the given period.
    PeriodicDeterministic {
        period: f64,
        levels: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PsiMode {
    /// Uniform cell values from a separate stream.
    Independent { lo: f64, hi: f64 },
    /// psi equals phi cell by cell.
    Coupled,
    Constant { value: f64 },
}

impl Default for PsiMode {
    fn default() -> Self {
        PsiMode::Independent { lo: 0.0, hi: 1.0 }
    }
}

/// Seeded stationary boundary process with shift semantics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    pub seed: u64,
    #[serde(default)]
    pub psi: PsiMode,
    /// Time shift s: the shifted process at t is the original at t + s.
    #[serde(default)]
    pub shift: f64,
}

const STREAM_PHI: u64 = 1;
const STREAM_PSI: u64 = 2;
const STREAM_PHASE: u64 = 3;
const STREAM_OU: u64 = 4;

/// Uniform [0,1) value attached to (seed, stream, index), by random access into
/// a ChaCha keystream.
fn hashed_uniform(seed: u64, stream: u64, index: i64, slot: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let pos = (index as i128 + (1i128 << 62)) as u128;
    rng.set_word_pos(pos * 4 + 2 * slot as u128);
    let x = rng.next_u64();
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn hashed_normal(seed: u64, stream: u64, index: i64) -> f64 {
    let u1 = 1.0 - hashed_uniform(seed, stream, index, 0);
    let u2 = hashed_uniform(seed, stream, index, 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl ProcessSpec {
    pub fn new(kind: ProcessKind, seed: u64) -> Self {
        ProcessSpec { kind, seed, psi: PsiMode::default(), shift: 0.0 }
    }

    /// phi identically q (a one-level periodic process).
    pub fn constant(q: f64, seed: u64) -> Self {
        ProcessSpec::new(ProcessKind::PeriodicDeterministic { period: 1.0, levels: vec![q] }, seed)
    }

    pub fn with_psi(mut self, psi: PsiMode) -> Self {
        self.psi = psi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HloError::Config(m.to_string()));
        match &self.kind {
            ProcessKind::IidPiecewiseConstant { cell, marginal } => {
                if !(*cell > 0.0) {
                    return bad("cell length must be positive");
                }
                match marginal {
                    Marginal::Uniform { lo, hi } if !(hi >= lo) => return bad("uniform marginal needs lo <= hi"),
                    Marginal::TwoPoint { p_a, .. } if !(0.0..=1.0).contains(p_a) => {
                        return bad("two-point marginal needs p_a in [0,1]")
                    }
                    _ => {}
                }
            }
            ProcessKind::DiscreteOu { cell, rate, volatility, .. } => {
                if !(*cell > 0.0 && *rate > 0.0 && *volatility >= 0.0) {
                    return bad("discrete_ou needs cell > 0, rate > 0, volatility >= 0");
                }
            }
            ProcessKind::PeriodicDeterministic { period, levels } => {
                if !(*period > 0.0) || levels.is_empty() {
                    return bad("periodic process needs period > 0 and at least one level");
                }
                if levels.iter().any(|l| !(l.abs() < 1.0)) {
                    return bad("periodic levels must lie in (-1, 1)");
                }
            }
        }
        Ok(())
    }

    /// The shifted process theta^s.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.shift += s;
        out
    }

    fn cell_len(&self) -> f64 {
        match &self.kind {
            ProcessKind::IidPiecewiseConstant { cell, .. } | ProcessKind::DiscreteOu { cell, .. } => *cell,
            ProcessKind::PeriodicDeterministic { period, levels } => period / levels.len() as f64,
        }
    }

    /// Random phase in [0, cell) so that cell boundaries are stationary.
    fn phase(&self) -> f64 {
        match &self.kind {
            ProcessKind::PeriodicDeterministic { .. } => 0.0,
            _ => self.cell_len() * hashed_uniform(self.seed, STREAM_PHASE, 0, 0),
        }
    }

    fn offset(&self) -> f64 {
        self.phase() + self.shift
    }

    fn cell_start(&self, k: i64, off: f64) -> f64 {
        k as f64 * self.cell_len() - off
    }

    fn raw_phi(&self, k: i64) -> f64 {
        let v = match &self.kind {
            ProcessKind::IidPiecewiseConstant { marginal, .. } => {
                let x = hashed_uniform(self.seed, STREAM_PHI, k, 0);
                match marginal {
                    Marginal::Uniform { lo, hi } => lo + (hi - lo) * x,
                    Marginal::TwoPoint { a, b, p_a } => {
                        if x < *p_a {
                            *a
                        } else {
                            *b
                        }
                    }
                }
            }
            ProcessKind::DiscreteOu { cell, mean, rate, volatility } => {
                let a = (-rate * cell).exp();
                let sd = volatility / (2.0 * rate).sqrt();
                let innov = sd * (1.0 - a * a).sqrt();
                let terms = if a > 0.0 { ((1e-17f64).ln() / a.ln()).ceil().max(1.0) as i64 } else { 1 };
                let mut x = 0.0;
                let mut w = 1.0;
                for j in 0..terms {
                    x += w * hashed_normal(self.seed, STREAM_OU, k - j);
                    w *= a;
                }
                mean + innov * x
            }
            ProcessKind::PeriodicDeterministic { levels, .. } => levels[k.rem_euclid(levels.len() as i64) as usize],
        };
        v.clamp(-PHI_CLIP, PHI_CLIP)
    }

    fn raw_psi(&self, k: i64, phi: f64) -> f64 {
        match self.psi {
            PsiMode::Independent { lo, hi } => lo + (hi - lo) * hashed_uniform(self.seed, STREAM_PSI, k, 0),
            PsiMode::Coupled => phi,
            PsiMode::Constant { value } => value,
        }
    }

    /// Second moment E phi_+^2 when it is known in closed form.
    pub fn mean_phi_plus_sq(&self) -> Option<f64> {
        match &self.kind {
            ProcessKind::IidPiecewiseConstant { marginal: Marginal::Uniform { lo, hi }, .. } => {
                let (lo, hi) = (lo.max(-PHI_CLIP), hi.min(PHI_CLIP));
                let a = lo.max(0.0);
                if hi <= a || hi <= lo {
                    return Some(if lo > 0.0 { lo * lo } else { 0.0 });
                }
                Some((hi.powi(3) - a.powi(3)) / (3.0 * (hi - lo)))
            }
            ProcessKind::IidPiecewiseConstant { marginal: Marginal::TwoPoint { a, b, p_a }, .. } => {
                Some(p_a * a.max(0.0).powi(2) + (1.0 - p_a) * b.max(0.0).powi(2))
            }
            ProcessKind::PeriodicDeterministic { levels, .. } => {
                Some(levels.iter().map(|l| l.max(0.0).powi(2)).sum::<f64>() / levels.len() as f64)
            }
            ProcessKind::DiscreteOu { .. } => None,
        }
    }

    pub fn sample(&self, t: f64) -> (f64, f64) {
        let c = self.cell(t);
        (c.phi, c.psi)
    }
}

impl BoundaryTrace for ProcessSpec {
    fn index_of(&self, t: f64) -> i64 {
        let off = self.offset();
        let mut k = ((t + off) / self.cell_len()).floor() as i64;
        // make the index consistent with cell_start rounding
        if t < self.cell_start(k, off) {
            k -= 1;
        } else if t >= self.cell_start(k + 1, off) {
            k += 1;
        }
        k
    }

    fn cell_at(&self, index: i64) -> Cell {
        let off = self.offset();
        let phi = self.raw_phi(index);
        Cell {
            index,
            start: self.cell_start(index, off),
            end: self.cell_start(index + 1, off),
            phi,
            psi: self.raw_psi(index, phi),
        }
    }

    fn integral_phi_plus_sq(&self, a: f64, b: f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        if let ProcessKind::PeriodicDeterministic { period, .. } = &self.kind {
            // whole periods in closed form
            let n = ((b - a) / period).floor();
            if n >= 2.0 {
                let per: f64 = self.mean_phi_plus_sq().unwrap() * period;
                let a2 = a + n * period;
                return n * per + default_integral(self, a2, b);
            }
        }
        default_integral(self, a, b)
    }

    fn description(&self) -> String {
        let kind = match &self.kind {
            ProcessKind::IidPiecewiseConstant { .. } => "iid_piecewise_constant",
            ProcessKind::DiscreteOu { .. } => "discrete_ou",
            ProcessKind::PeriodicDeterministic { .. } => "periodic_deterministic",
        };
        format!("seeded-random {kind} (seed {})", self.seed)
    }
}

fn default_integral<T: BoundaryTrace + ?Sized>(tr: &T, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let mut k = tr.index_of(a);
    let mut acc = 0.0;
    loop {
        let c = tr.cell_at(k);
        let lo = c.start.max(a);
        let hi = c.end.min(b);
        if hi > lo {
            acc += c.phi_plus_sq() * (hi - lo);
        }
        if c.end >= b {
            break;
        }
        k += 1;
    }
    acc
}

/// sqrt of the time average of phi_+^2 over [0, horizon].
pub fn empirical_q(trace: &dyn BoundaryTrace, horizon: f64) -> f64 {
    (trace.integral_phi_plus_sq(0.0, horizon) / horizon).sqrt()
}

/// Rows (t, phi, psi) at every cell start in [a, b] plus the endpoints.
pub fn trace_rows(trace: &dyn BoundaryTrace, a: f64, b: f64) -> Vec<[f64; 3]> {
    let mut ts = vec![a];
    ts.extend(trace.breakpoints(a, b));
    ts.push(b);
    ts.into_iter().map(|t| [t, trace.phi(t), trace.psi(t)]).collect()
}
