//! Ergodic diagnostics for stationary boundary forcing: action rate rho,
//! asymptotic speed theta, pullback attraction and coincidence of solutions
//! started from different data.

use crate::error::{HloError, Result};
use crate::field::{agreement_radius, midpoints, proximity_metric, PiecewiseField};
use crate::forcing::ProcessSpec;
use crate::geometry::Background;
use crate::hlo_flat::{global_field_flat, global_solution_flat_with, solve_ivbp_flat, DEFAULT_MAX_LOOKBACK};
use crate::hlo_schwarzschild::{
    boundary_action_profile, global_field_schw_with, InitialData, PullbackConfig, SchwConfig, SchwSolver,
};
use crate::potential::{Potential, SchwPotential};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractionRecord {
    pub lookback: f64,
    pub d: f64,
    /// Agreement radius, capped at the window.
    pub agreement_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    /// (span, S/span) over nested windows ending at 0.
    pub rho_estimates: Vec<(f64, f64)>,
    pub rho_hat: f64,
    /// Coefficient of 1/span in the fit.
    pub fit_slope: f64,
    /// RMS residual of the fit.
    pub fit_residual: f64,
    pub theta_hat: f64,
    /// rho_hat < 0, the precondition for a stationary global solution.
    pub global_solution_expected: bool,
    pub note: String,
    pub attraction_records: Vec<AttractionRecord>,
    /// (r, u(0, r)).
    pub asymptotic_records: Vec<(f64, f64)>,
}

/// Tolerance under which rho_hat counts as zero.
pub const RHO_ZERO: f64 = 1e-9;

/// Least squares y = a + b x; returns (a, b, rms residual).
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    if xs.len() == 1 {
        return (ys[0], 0.0, 0.0);
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, (rss / n).sqrt())
}

/// S^{-span, 0}/span for each span from one backward pass, and the fit
/// S/span = rho + c/span over the three largest spans.
pub fn estimate_rho(bg: &Background, spec: &ProcessSpec, spans: &[f64]) -> Result<ErgodicReport> {
    estimate_rho_with(bg, spec, spans, &SchwConfig::default())
}

pub fn estimate_rho_with(bg: &Background, spec: &ProcessSpec, spans: &[f64], cfg: &SchwConfig) -> Result<ErgodicReport> {
    spec.validate()?;
    if spans.is_empty() || spans.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || spans.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(HloError::Config(format!("spans must be positive and increasing, got {spans:?}")));
    }
    let max = *spans.last().unwrap();
    let marks: Vec<f64> = spans.iter().map(|s| -s).collect();
    let (nodes, g) = boundary_action_profile(bg, spec, -max, 0.0, &marks, cfg)?;
    let mut estimates = Vec::with_capacity(spans.len());
    for &s in spans {
        let j = nodes.partition_point(|&x| x < -s);
        let j = if j > 0 && (nodes[j - 1] + s).abs() < (nodes[j] + s).abs() { j - 1 } else { j };
        estimates.push((s, g[j] / s));
    }
    let tail = &estimates[estimates.len().saturating_sub(3)..];
    let xs: Vec<f64> = tail.iter().map(|e| 1.0 / e.0).collect();
    let ys: Vec<f64> = tail.iter().map(|e| e.1).collect();
    let (rho, slope, residual) = fit_line(&xs, &ys);
    let negative = rho < -RHO_ZERO;
    let note = if negative {
        "rho_hat < 0: a stationary global solution is expected".to_string()
    } else {
        "rho_hat >= 0: no global solution guaranteed".to_string()
    };
    Ok(ErgodicReport {
        rho_estimates: estimates,
        rho_hat: rho,
        fit_slope: slope,
        fit_residual: residual,
        theta_hat: if negative { (-2.0 * rho).sqrt() } else { 0.0 },
        global_solution_expected: negative,
        note,
        attraction_records: vec![],
        asymptotic_records: vec![],
    })
}

/// Initial potential for a pullback run; the flat one lives on x > 0 at the
/// starting time, the relativistic one on r > r*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InitialPotential {
    Flat(Potential),
    Schw(SchwPotential),
}

/// Evaluation grid of an attraction experiment: midpoints of `n` cells over
/// a window of length `window` measured from the boundary.
pub fn window_grid(bg: &Background, window: f64, n: usize) -> Vec<f64> {
    let origin = if bg.mass == 0.0 { 0.0 } else { bg.r_star };
    midpoints(origin, origin + window, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullbackResult {
    pub records: Vec<AttractionRecord>,
    /// The reference global solution at t = 0.
    pub global: PiecewiseField,
    pub global_converged: bool,
    pub warnings: Vec<String>,
}

fn class_warnings(bg: &Background, spec: &ProcessSpec, w: &InitialPotential) -> Vec<String> {
    let mut out = Vec::new();
    match w {
        InitialPotential::Flat(p) => {
            if let Some(m) = spec.mean_phi_plus_sq() {
                let q = m.sqrt();
                if !p.in_class(-q) {
                    out.push(format!("initial potential is outside the attraction class for q = {q}"));
                }
            }
        }
        InitialPotential::Schw(p) => {
            if p.bg != *bg {
                out.push("initial potential lives on a different background".into());
            }
            let tail = p.velocity(1e9 * bg.r_star);
            if !(0.0..1.0).contains(&tail) {
                out.push(format!("asymptotic speed {tail} is outside [0, 1); attraction needs rho < -p^2/2"));
            }
        }
    }
    out
}

fn record(lookback: f64, a: &PiecewiseField, b: &PiecewiseField) -> Result<AttractionRecord> {
    let cap = a.xs.last().copied().unwrap_or(a.origin) - a.origin;
    let radius = agreement_radius(a, b)?.map(|r| r.min(cap)).unwrap_or(0.0);
    Ok(AttractionRecord { lookback, d: proximity_metric(a, b)?, agreement_radius: radius })
}

fn zero_density(origin: f64) -> PiecewiseField {
    PiecewiseField { origin, xs: vec![origin], values: vec![0.0] }
}

/// u(0, .) of the IVBP started at -lookback with potential w.
pub fn pulled_back_field(bg: &Background, spec: &ProcessSpec, w: &InitialPotential, lookback: f64, grid: &[f64]) -> Result<PiecewiseField> {
    match w {
        InitialPotential::Flat(p) => Ok(solve_ivbp_flat(p, &zero_density(0.0), spec, -lookback, 0.0, grid)?.u),
        InitialPotential::Schw(p) => {
            let v0 = zero_density(bg.r_star);
            let init = InitialData { w: p, v0: &v0 };
            Ok(SchwSolver::new(*bg, spec, Some(init), -lookback, 0.0, SchwConfig::default())?.solve(grid)?.u)
        }
    }
}

/// Global solution u(0, .) on a grid, with its convergence flag.
pub fn global_field(bg: &Background, spec: &ProcessSpec, grid: &[f64], cfg: &PullbackConfig) -> Result<(PiecewiseField, bool)> {
    if bg.mass == 0.0 {
        Ok((global_field_flat(spec, 0.0, grid, DEFAULT_MAX_LOOKBACK)?.0, true))
    } else {
        let start = 16.0_f64.min(cfg.max_lookback);
        let (u, _, _, _, converged) = global_field_schw_with(bg, spec, 0.0, grid, start, cfg)?;
        Ok((u, converged))
    }
}

/// For each look-back T, compares at t = 0 the IVBP from -T with data w
/// against the global solution on a window of the given length.
pub fn pullback_experiment(
    bg: &Background,
    spec: &ProcessSpec,
    w: &InitialPotential,
    window: f64,
    lookbacks: &[f64],
    n_grid: usize,
) -> Result<PullbackResult> {
    spec.validate()?;
    let grid = window_grid(bg, window, n_grid);
    let (global, converged) = global_field(bg, spec, &grid, &PullbackConfig::default())?;
    let records = lookbacks
        .par_iter()
        .map(|&t| record(t, &pulled_back_field(bg, spec, w, t, &grid)?, &global))
        .collect::<Result<Vec<_>>>()?;
    Ok(PullbackResult { records, global, global_converged: converged, warnings: class_warnings(bg, spec, w) })
}

/// u(0, r) of the global solution at the given radii (distances from the
/// boundary in the flat case).
pub fn asymptotic_velocity_experiment(bg: &Background, spec: &ProcessSpec, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    if bg.mass == 0.0 {
        radii
            .par_iter()
            .map(|&x| Ok((x, global_solution_flat_with(spec, 0.0, x, DEFAULT_MAX_LOOKBACK)?.u)))
            .collect()
    } else {
        let cfg = PullbackConfig::default();
        radii
            .par_iter()
            .map(|&r| {
                let (u, _, _, _, converged) = global_field_schw_with(bg, spec, 0.0, &[r], 16.0, &cfg)?;
                if !converged {
                    return Err(HloError::WindowExhausted { searched: cfg.max_lookback });
                }
                Ok((r, u.values[0]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    /// (i, j, d) for every pair of data.
    pub pairs: Vec<(usize, usize, f64)>,
    pub coincide: bool,
    pub warnings: Vec<String>,
}

/// Solves from -t_deep with every datum and checks pairwise
/// d <= exp(-window) among the fields at t = 0.
pub fn coincidence_check(
    bg: &Background,
    spec: &ProcessSpec,
    ws: &[InitialPotential],
    t_deep: f64,
    window: f64,
    n_grid: usize,
) -> Result<CoincidenceReport> {
    spec.validate()?;
    let grid = window_grid(bg, window, n_grid);
    let fields = ws.par_iter().map(|w| pulled_back_field(bg, spec, w, t_deep, &grid)).collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            pairs.push((i, j, proximity_metric(&fields[i], &fields[j])?));
        }
    }
    let bound = (-window).exp();
    Ok(CoincidenceReport {
        coincide: pairs.iter().all(|p| p.2 <= bound),
        pairs,
        warnings: ws.iter().flat_map(|w| class_warnings(bg, spec, w)).collect(),
    })
}
