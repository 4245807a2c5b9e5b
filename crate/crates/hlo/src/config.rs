//! Run configuration: a JSON document (see schemas/config.schema.json), the
//! shipped presets and the hash that names each run directory.

use crate::error::{HloError, Result};
use crate::ergodics::InitialPotential;
use crate::field::PiecewiseField;
use crate::forcing::{BoundaryTrace, PiecewiseTrace, ProcessKind, ProcessSpec, PsiMode};
use crate::geometry::Background;
use crate::potential::{ExteriorProfile, Potential, PotentialVariant, SchwPotential, VelocityProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    /// Seeded stationary process; the seed comes from the run.
    Process {
        process: ProcessKind,
        #[serde(default)]
        psi: PsiMode,
    },
    /// Deterministic piecewise-constant trace.
    Trace { knots: Vec<f64>, phi: Vec<f64>, psi: Vec<f64> },
}

/// Initial velocity profile; positions are distances from the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    /// `values[i]` on [edges[i], edges[i+1]), the last value extending out.
    Cells { edges: Vec<f64>, values: Vec<f64> },
    /// a[i] + b[i] (x - knots[i]) on [knots[i], knots[i+1]).
    Linear { knots: Vec<f64>, a: Vec<f64>, b: Vec<f64> },
    /// Stationary profile sign * sqrt(C + (1 - C) 2M/r) (M > 0 only).
    Static { c: f64, sign: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub velocity: ProfileConfig,
    #[serde(default)]
    pub variant: VariantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

/// Normalization of the exterior potential (ignored for flat runs).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantConfig {
    Integrable,
    Asymptotic { p: f64 },
    #[default]
    FromBoundary,
}

impl From<VariantConfig> for PotentialVariant {
    fn from(v: VariantConfig) -> Self {
        match v {
            VariantConfig::Integrable => PotentialVariant::Integrable,
            VariantConfig::Asymptotic { p } => PotentialVariant::Asymptotic { p },
            VariantConfig::FromBoundary => PotentialVariant::FromBoundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub t0: f64,
    pub t1: f64,
    /// Length of the evaluation window measured from the boundary.
    pub window: f64,
    pub n_grid: usize,
    /// Courant number of the finite-volume oracle.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsConfig {
    pub r0: f64,
    pub t0: f64,
    pub t_end: f64,
    pub velocities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    pub spans: Vec<f64>,
    /// Positions (x for flat runs, r otherwise) where u(0, .) of the global
    /// solution is reported.
    #[serde(default)]
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractConfig {
    pub lookbacks: Vec<f64>,
    pub window: f64,
    pub n_grid: usize,
    /// Start of the coincidence check, by default the deepest look-back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_deep: Option<f64>,
    /// Further data for the coincidence check, solved from -t_deep together
    /// with `initial`.
    #[serde(default)]
    pub others: Vec<InitialConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub background: Background,
    pub seed: u64,
    pub forcing: ForcingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristics: Option<CharacteristicsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodic: Option<ErgodicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attract: Option<AttractConfig>,
}

/// Boundary forcing built from a config.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Process(ProcessSpec),
    Trace(PiecewiseTrace),
}

impl Forcing {
    pub fn trace(&self) -> &dyn BoundaryTrace {
        match self {
            Forcing::Process(p) => p,
            Forcing::Trace(t) => t,
        }
    }

    pub fn process(&self) -> Result<&ProcessSpec> {
        match self {
            Forcing::Process(p) => Ok(p),
            Forcing::Trace(_) => Err(HloError::Config("this command needs a stationary process as forcing".into())),
        }
    }
}

fn field(path: &str, e: HloError) -> HloError {
    HloError::Config(format!("{path}: {e}"))
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(HloError::Config(format!("{path}: must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HloError::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| HloError::Config(format!("unknown preset {name:?}; known: {}", preset_names().join(", "))))?;
        RunConfig::from_json(text)
    }

    pub fn validate(&self) -> Result<()> {
        let bg = self.background()?;
        self.forcing().map_err(|e| field("forcing", e))?;
        if let Some(init) = &self.initial {
            self.initial_potential(init).map_err(|e| field("initial", e))?;
            self.initial_density(init).map_err(|e| field("initial.density", e))?;
        }
        if let Some(s) = &self.solve {
            if !(s.t1 > s.t0) {
                return Err(HloError::Config(format!("solve: need t0 < t1, got {} >= {}", s.t0, s.t1)));
            }
            positive("solve.window", s.window)?;
            if s.n_grid == 0 {
                return Err(HloError::Config("solve.n_grid: must be at least 1".into()));
            }
            if !(s.cfl > 0.0 && s.cfl < 1.0) {
                return Err(HloError::Config(format!("solve.cfl: must lie in (0, 1), got {}", s.cfl)));
            }
        }
        if let Some(c) = &self.characteristics {
            bg.check_radius(c.r0).map_err(|e| field("characteristics.r0", e))?;
            if c.velocities.iter().any(|u| !(u.abs() < 1.0)) {
                return Err(HloError::Config("characteristics.velocities: must lie in (-1, 1)".into()));
            }
            if !(c.t_end > c.t0) {
                return Err(HloError::Config("characteristics: need t0 < t_end".into()));
            }
        }
        if let Some(e) = &self.ergodic {
            if e.spans.is_empty() || e.spans.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(HloError::Config("ergodic.spans: must be nonempty and increasing".into()));
            }
            for (i, s) in e.spans.iter().enumerate() {
                positive(&format!("ergodic.spans[{i}]"), *s)?;
            }
            for (i, r) in e.radii.iter().enumerate() {
                if !(*r > self.origin() && r.is_finite()) {
                    return Err(HloError::Config(format!("ergodic.radii[{i}]: must lie beyond the boundary {}, got {r}", self.origin())));
                }
            }
        }
        if let Some(a) = &self.attract {
            positive("attract.window", a.window)?;
            if a.lookbacks.is_empty() || a.n_grid == 0 {
                return Err(HloError::Config("attract: need look-backs and a nonempty grid".into()));
            }
            for (i, l) in a.lookbacks.iter().enumerate() {
                positive(&format!("attract.lookbacks[{i}]"), *l)?;
            }
            if let Some(t) = a.t_deep {
                positive("attract.t_deep", t)?;
            }
            for (i, o) in a.others.iter().enumerate() {
                self.initial_potential(o).map_err(|e| field(&format!("attract.others[{i}]"), e))?;
            }
        }
        Ok(())
    }

    pub fn background(&self) -> Result<Background> {
        Background::new(self.background.mass, self.background.r_star).map_err(|e| field("background", e))
    }

    pub fn is_flat(&self) -> bool {
        self.background.mass == 0.0
    }

    /// Where distances from the boundary start: 0 for flat runs, r* otherwise.
    pub fn origin(&self) -> f64 {
        if self.is_flat() {
            0.0
        } else {
            self.background.r_star
        }
    }

    pub fn forcing(&self) -> Result<Forcing> {
        match &self.forcing {
            ForcingConfig::Process { process, psi } => {
                let spec = ProcessSpec::new(process.clone(), self.seed).with_psi(psi.clone());
                spec.validate()?;
                Ok(Forcing::Process(spec))
            }
            ForcingConfig::Trace { knots, phi, psi } => Ok(Forcing::Trace(PiecewiseTrace::new(knots.clone(), phi.clone(), psi.clone())?)),
        }
    }

    fn profile(&self, p: &ProfileConfig) -> Result<VelocityProfile> {
        let o = self.origin();
        let shift = |v: &[f64]| v.iter().map(|x| x + o).collect::<Vec<_>>();
        match p {
            ProfileConfig::Cells { edges, values } => VelocityProfile::cells(shift(edges), values.clone()),
            ProfileConfig::Linear { knots, a, b } => VelocityProfile::new(shift(knots), a.clone(), b.clone()),
            ProfileConfig::Static { .. } => Err(HloError::Config("static profiles need M > 0".into())),
        }
    }

    pub fn initial_potential(&self, init: &InitialConfig) -> Result<InitialPotential> {
        let bg = self.background()?;
        if self.is_flat() {
            return Ok(InitialPotential::Flat(Potential::new(self.profile(&init.velocity)?)));
        }
        let profile = match &init.velocity {
            ProfileConfig::Static { c, sign } => ExteriorProfile::Static { c: *c, sign: *sign },
            p => ExteriorProfile::Linear(self.profile(p)?),
        };
        Ok(InitialPotential::Schw(SchwPotential::new(bg, profile, init.variant.into())?))
    }

    pub fn initial_density(&self, init: &InitialConfig) -> Result<PiecewiseField> {
        let o = self.origin();
        match &init.density {
            None => PiecewiseField::new(o, vec![o], vec![0.0]),
            Some(d) => {
                if d.edges.len() != d.values.len() || d.edges.is_empty() {
                    return Err(HloError::Config("density needs as many edges as values".into()));
                }
                PiecewiseField::new(o, d.edges.iter().map(|x| x + o).collect(), d.values.clone())
            }
        }
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Shipped presets (name, JSON).
pub const PRESETS: &[(&str, &str)] = &[
    ("flat-riemann", include_str!("../presets/flat-riemann.json")),
    ("schw-infall", include_str!("../presets/schw-infall.json")),
    ("schw-steady", include_str!("../presets/schw-steady.json")),
    ("flat-constant-q", include_str!("../presets/flat-constant-q.json")),
    ("flat-iid", include_str!("../presets/flat-iid.json")),
    ("schw-corollary3", include_str!("../presets/schw-corollary3.json")),
    ("characteristics", include_str!("../presets/characteristics.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}
