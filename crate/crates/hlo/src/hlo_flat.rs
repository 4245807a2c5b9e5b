//! Flat (M = 0) Hopf–Lax–Oleinik solver on the half line x > 0.
//!
//! The action of a path is U0(y) + kinetic energy - 1/2 int phi_+^2 over the
//! time spent at x = 0. Every minimizer is either a straight segment from the
//! initial line, or a segment to the boundary, a wait there, and a segment
//! out. With piecewise-constant boundary data and piecewise-quadratic U0 both
//! families are minimized exactly, cell by cell.

use crate::error::{HloError, Result};
use crate::field::PiecewiseField;
use crate::forcing::{BoundaryTrace, Cell};
use crate::potential::Potential;
use crate::transport::{DensityField, Origin, Traced};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative tolerance under which two actions count as tied.
const TIE: f64 = 1e-13;

/// Default bound on how far back `global_solution_flat` looks.
pub const DEFAULT_MAX_LOOKBACK: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimizerKind {
    InteriorSegment,
    BoundaryPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatMinimizer {
    pub kind: MinimizerKind,
    /// (time, position) where the path starts.
    pub departure_point: (f64, f64),
    /// Last time at the boundary (boundary paths only).
    pub boundary_exit_time: Option<f64>,
    /// Entry time a of the waiting interval [a, b] (boundary paths only).
    pub boundary_entry_time: Option<f64>,
    pub action: f64,
    /// Terminal slope, which is u(t, x).
    pub velocity: f64,
    pub x: f64,
}

impl Traced for FlatMinimizer {
    fn origin(&self) -> Origin {
        match self.boundary_exit_time {
            Some(b) => Origin::Boundary { exit_time: b },
            None => Origin::InitialLine { foot: self.departure_point.1 },
        }
    }

    fn endpoint(&self) -> f64 {
        self.x
    }
}

fn better(value: f64, velocity: f64, best: &FlatMinimizer) -> bool {
    let tol = TIE * (1.0 + value.abs().max(best.action.abs()));
    value < best.action - tol || (value <= best.action + tol && velocity < best.velocity)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatSolution {
    pub t0: f64,
    pub t: f64,
    pub u: PiecewiseField,
    pub v: PiecewiseField,
    /// U(t, x) on the grid.
    pub potential: Vec<f64>,
    pub minimizers: Vec<FlatMinimizer>,
}

impl FlatSolution {
    /// Rows (x, u, v, U) for CSV output.
    pub fn rows(&self) -> Vec<[f64; 4]> {
        (0..self.u.len()).map(|i| [self.u.xs[i], self.u.values[i], self.v.values[i], self.potential[i]]).collect()
    }
}

/// Boundary cells clipped to [t0, t], with Psi(s) = 1/2 int_t0^s phi_+^2 at
/// each cell start and the running minimum m(s_j) of V0(a) + Psi(a).
struct Slab {
    cells: Vec<Cell>,
    psi_start: Vec<f64>,
    m_start: Vec<(f64, f64)>,
}

fn slab(u0: &Potential, bc: &dyn BoundaryTrace, t0: f64, t: f64) -> Result<Slab> {
    let mut edges = vec![t0];
    edges.extend(bc.breakpoints(t0, t));
    edges.push(t);
    let mut cells = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let mut c = bc.cell(w[0]);
        c.start = w[0];
        c.end = w[1];
        if !c.phi.is_finite() {
            return Err(HloError::NotIntegrable(format!("boundary velocity is not finite at t = {}", w[0])));
        }
        cells.push(c);
    }
    let mut psi_start = vec![0.0];
    for c in &cells {
        psi_start.push(psi_start.last().unwrap() + 0.5 * c.phi_plus_sq() * (c.end - c.start));
    }
    // m(t0) = f(t0) = V0(t0) = U0(0) = 0, attained with a = t0.
    let mut m_start = vec![(0.0, t0)];
    for (j, c) in cells.iter().enumerate() {
        let (mj, aj) = m_start[j];
        let (w, a) = cell_min(u0, t0, c, psi_start[j], c.end);
        m_start.push(if w < mj { (w, a) } else { (mj, aj) });
    }
    Ok(Slab { cells, psi_start, m_start })
}

/// min over a in [s_j, bhat] of V0(a) + Psi(a), with its argmin a.
fn cell_min(u0: &Potential, t0: f64, c: &Cell, psi_sj: f64, bhat: f64) -> (f64, f64) {
    let q = c.phi.max(0.0);
    let sj = c.start;
    let base = psi_sj - 0.5 * q * q * sj;
    let mut best = (f64::INFINITY, sj);
    let mut take = |v: f64, a: f64| {
        if v < best.0 {
            best = (v, a);
        }
    };
    // y <= q (s_j - t0): a = s_j.
    let y1 = q * (sj - t0);
    if sj > t0 {
        let (_, v) = u0.argmin_quadratic(0.0, sj - t0, 0.0, y1);
        take(v + 0.5 * q * q * sj + base, sj);
    } else {
        take(0.5 * q * q * sj + base, sj);
    }
    // q (s_j - t0) <= y <= q (bhat - t0): a = t0 + y / q.
    let y3 = q * (bhat - t0);
    if q > 0.0 && y3 > y1 {
        let (y, v) = u0.argmin_linear(q, y1, y3);
        take(v + 0.5 * q * q * t0 + base, t0 + y / q);
    }
    // y >= q (bhat - t0): a = bhat.
    if bhat > t0 {
        let (_, v) = u0.argmin_quadratic(0.0, bhat - t0, y3, f64::INFINITY);
        take(v + 0.5 * q * q * bhat + base, bhat);
    }
    best
}

fn solve_point(u0: &Potential, v0: &DensityField, bc: &dyn BoundaryTrace, s: &Slab, t0: f64, t: f64, x: f64) -> (FlatMinimizer, f64) {
    let tau = t - t0;
    let (y, val) = u0.argmin_quadratic(x, tau, 0.0, f64::INFINITY);
    let mut best = FlatMinimizer {
        kind: MinimizerKind::InteriorSegment,
        departure_point: (t0, y),
        boundary_exit_time: None,
        boundary_entry_time: None,
        action: val,
        velocity: (x - y) / tau,
        x,
    };
    let mut v = v0.at(y);
    for (j, c) in s.cells.iter().enumerate() {
        let q = c.phi.max(0.0);
        let b = if q > 0.0 { (t - x / q).clamp(c.start, c.end) } else { c.start };
        if !(b < t) {
            continue;
        }
        let (w, a) = cell_min(u0, t0, c, s.psi_start[j], b);
        let (m, a) = if s.m_start[j].0 <= w { s.m_start[j] } else { (w, a) };
        let psi_b = s.psi_start[j] + 0.5 * q * q * (b - c.start);
        let value = m - psi_b + x * x / (2.0 * (t - b));
        let vel = x / (t - b);
        if better(value, vel, &best) {
            let foot = if a > t0 { u0.argmin_quadratic(0.0, a - t0, 0.0, f64::INFINITY).0 } else { 0.0 };
            best = FlatMinimizer {
                kind: MinimizerKind::BoundaryPath,
                departure_point: (t0, foot),
                boundary_exit_time: Some(b),
                boundary_entry_time: Some(a),
                action: value,
                velocity: vel,
                x,
            };
            v = bc.psi(b);
        }
    }
    (best, v)
}

fn check_grid(xs: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(HloError::Config("grid must be positive, finite and strictly increasing".into()));
    }
    Ok(())
}

/// Solves the initial-boundary value problem on (t0, t] and samples u, v and
/// U at `xs`. `u0` must start at x = 0.
pub fn solve_ivbp_flat(
    u0: &Potential,
    v0: &DensityField,
    bc: &dyn BoundaryTrace,
    t0: f64,
    t: f64,
    xs: &[f64],
) -> Result<FlatSolution> {
    if !(t > t0) || !t0.is_finite() || !t.is_finite() {
        return Err(HloError::Config(format!("need t0 < t, got t0 = {t0}, t = {t}")));
    }
    if u0.profile.origin() != 0.0 {
        return Err(HloError::Config("flat initial data must start at x = 0".into()));
    }
    check_grid(xs)?;
    let s = slab(u0, bc, t0, t)?;
    let pts: Vec<(FlatMinimizer, f64)> = xs.par_iter().map(|&x| solve_point(u0, v0, bc, &s, t0, t, x)).collect();
    if pts.iter().any(|(m, _)| !m.action.is_finite() || !m.velocity.is_finite()) {
        return Err(HloError::Numerical("non-finite action in flat solver".into()));
    }
    let u = PiecewiseField::new(0.0, xs.to_vec(), pts.iter().map(|p| p.0.velocity).collect())?;
    let v = PiecewiseField::new(0.0, xs.to_vec(), pts.iter().map(|p| p.1).collect())?;
    let potential = pts.iter().map(|p| p.0.action).collect();
    let minimizers = pts.into_iter().map(|p| p.0).collect();
    Ok(FlatSolution { t0, t, u, v, potential, minimizers })
}

/// Value of the global solution at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPoint {
    pub u: f64,
    pub v: f64,
    pub t_star: f64,
    /// min_s F(t, x, s).
    pub value: f64,
    /// Earliest boundary time inspected.
    pub searched_back_to: f64,
}

/// Global solution at (t, x): minimizes F(s) = x^2/(2(t-s)) + 1/2 int_s^t
/// phi_+^2 over s < t and returns the smallest minimizer.
pub fn global_solution_flat(bc: &dyn BoundaryTrace, t: f64, x: f64) -> Result<GlobalPoint> {
    global_solution_flat_with(bc, t, x, DEFAULT_MAX_LOOKBACK)
}

/// As `global_solution_flat` with an explicit bound on the look-back.
///
/// Cells are visited backward from t. For s below a cell start c,
/// F(s) >= 1/2 int_c^t phi_+^2, so the walk stops as soon as that integral
/// exceeds the best value found.
pub fn global_solution_flat_with(bc: &dyn BoundaryTrace, t: f64, x: f64, max_lookback: f64) -> Result<GlobalPoint> {
    if !(x > 0.0) || !x.is_finite() || !t.is_finite() {
        return Err(HloError::Domain(format!("global solution needs x > 0 and finite t, got x = {x}, t = {t}")));
    }
    let floor = t - max_lookback;
    let mut k = bc.index_of(t);
    if bc.cell_at(k).start >= t {
        k -= 1;
    }
    let mut acc = 0.0;
    let mut best = (f64::INFINITY, t);
    let mut lo;
    loop {
        let c = bc.cell_at(k);
        let hi = c.end.min(t);
        lo = c.start.max(floor);
        let q = c.phi.max(0.0);
        let s = if q > 0.0 { (t - x / q).clamp(lo, hi) } else { lo };
        if s < t {
            let value = x * x / (2.0 * (t - s)) + acc + 0.5 * q * q * (hi - s);
            if value <= best.0 + TIE * (1.0 + value.abs()) {
                best = (value.min(best.0), s);
            }
        }
        acc += 0.5 * q * q * (hi - lo);
        if acc > best.0 + TIE * (1.0 + best.0.abs()) {
            break;
        }
        if lo <= floor {
            return Err(HloError::WindowExhausted { searched: max_lookback });
        }
        k -= 1;
    }
    let (value, t_star) = best;
    Ok(GlobalPoint { u: x / (t - t_star), v: bc.psi(t_star), t_star, value, searched_back_to: lo })
}

/// The global solution sampled on a grid: (u, v, t_star per point).
pub fn global_field_flat(bc: &dyn BoundaryTrace, t: f64, xs: &[f64], max_lookback: f64) -> Result<(PiecewiseField, PiecewiseField, Vec<f64>)> {
    check_grid(xs)?;
    let pts: Vec<GlobalPoint> = xs.par_iter().map(|&x| global_solution_flat_with(bc, t, x, max_lookback)).collect::<Result<_>>()?;
    let u = PiecewiseField::new(0.0, xs.to_vec(), pts.iter().map(|p| p.u).collect())?;
    let v = PiecewiseField::new(0.0, xs.to_vec(), pts.iter().map(|p| p.v).collect())?;
    Ok((u, v, pts.iter().map(|p| p.t_star).collect()))
}

/// Solution of the free problem whose initial data live on [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MovingBoundarySolution {
    pub t: f64,
    pub phi0: f64,
    pub phi1: f64,
    /// Grid points inside [phi0, phi1].
    pub xs: Vec<f64>,
    pub u: Vec<f64>,
    /// Minimizing foot y(t, x).
    pub feet: Vec<f64>,
}

/// Minimizes y in [0, 1] -> U0(y) + (x - y)^2/(2t) at each x; the solution is
/// reported between the two free boundaries phi0(t) and phi1(t).
pub fn solve_moving_boundary(u0: &Potential, t: f64, xs: &[f64]) -> Result<MovingBoundarySolution> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(HloError::Config(format!("need t > 0, got {t}")));
    }
    if u0.profile.origin() != 0.0 {
        return Err(HloError::Config("initial data must start at 0".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(HloError::Config("grid must be strictly increasing".into()));
    }
    let foot = |x: f64| u0.argmin_quadratic(x, t, 0.0, 1.0).0;
    let reach = 1.0 + t * (u0.profile.max_speed() + 1.0);
    // y(t, .) is nondecreasing, so each free boundary is a single switch.
    let switch = |pred: &dyn Fn(f64) -> bool| {
        let (mut lo, mut hi) = (-reach, 1.0 + reach);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pred(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
                break;
            }
        }
        lo
    };
    let phi0 = switch(&|x| foot(x) == 0.0);
    let phi1 = switch(&|x| foot(x) < 1.0);
    let inside: Vec<f64> = xs.iter().copied().filter(|&x| x >= phi0 && x <= phi1).collect();
    let feet: Vec<f64> = inside.iter().map(|&x| foot(x)).collect();
    let u = inside.iter().zip(&feet).map(|(&x, &y)| (x - y) / t).collect();
    Ok(MovingBoundarySolution { t, phi0, phi1, xs: inside, u, feet })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::midpoints;
    use crate::forcing::PiecewiseTrace;
    use crate::potential::VelocityProfile;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn zero_v() -> DensityField {
        PiecewiseField::new(0.0, vec![0.0], vec![0.0]).unwrap()
    }

    #[test]
    fn constant_state_with_inactive_boundary() {
        let u0 = Potential::new(VelocityProfile::constant(0.0, 0.4).unwrap());
        let bc = PiecewiseTrace::constant(-0.5, 0.0);
        let xs = midpoints(0.0, 5.0, 50);
        let sol = solve_ivbp_flat(&u0, &zero_v(), &bc, 0.0, 2.0, &xs).unwrap();
        for (x, u) in xs.iter().zip(&sol.u.values) {
            // Rarefaction from the corner behind the front x = 0.4 t.
            let exact = if *x < 0.8 { x / 2.0 } else { 0.4 };
            assert_abs_diff_eq!(*u, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_inflow_into_rest_state() {
        let u0 = Potential::new(VelocityProfile::constant(0.0, 0.0).unwrap());
        let q = 0.6;
        let bc = PiecewiseTrace::constant(q, 3.0);
        let xs = midpoints(0.0, 4.0, 400);
        let sol = solve_ivbp_flat(&u0, &zero_v(), &bc, 1.0, 6.0, &xs).unwrap();
        let front = q * 5.0 / 2.0;
        for (i, x) in xs.iter().enumerate() {
            let (u, v) = if *x < front { (q, 3.0) } else { (0.0, 0.0) };
            assert_abs_diff_eq!(sol.u.values[i], u, epsilon = 1e-12);
            assert_abs_diff_eq!(sol.v.values[i], v, epsilon = 1e-12);
        }
    }

    #[test]
    fn riemann_shock_moves_at_mean_speed() {
        let (ul, ur) = (0.7, 0.3);
        let u0 = Potential::new(VelocityProfile::cells(vec![0.0, 1.0], vec![ul, ur]).unwrap());
        let bc = PiecewiseTrace::constant(-0.2, 0.0);
        let t = 1.5;
        let xs = midpoints(0.0, 4.0, 4000);
        let sol = solve_ivbp_flat(&u0, &zero_v(), &bc, 0.0, t, &xs).unwrap();
        let jumps = sol.u.downward_jumps(0.2);
        assert_eq!(jumps.len(), 1);
        assert_abs_diff_eq!(jumps[0], 1.0 + 0.5 * (ul + ur) * t, epsilon = 1e-3);
    }

    #[test]
    fn boundary_minimizer_records_exit_time() {
        let u0 = Potential::new(VelocityProfile::constant(0.0, 0.0).unwrap());
        let bc = PiecewiseTrace::constant(0.5, 1.0);
        let sol = solve_ivbp_flat(&u0, &zero_v(), &bc, 0.0, 10.0, &[1.0]).unwrap();
        let m = sol.minimizers[0];
        assert_eq!(m.kind, MinimizerKind::BoundaryPath);
        assert_abs_diff_eq!(m.boundary_exit_time.unwrap(), 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.action, -0.125 * 8.0 + 1.0 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let u0 = Potential::new(VelocityProfile::constant(0.0, 0.0).unwrap());
        let bc = PiecewiseTrace::constant(0.5, 1.0);
        assert!(solve_ivbp_flat(&u0, &zero_v(), &bc, 1.0, 1.0, &[1.0]).is_err());
        assert!(solve_ivbp_flat(&u0, &zero_v(), &bc, 0.0, 1.0, &[0.0, 1.0]).is_err());
        let shifted = Potential::new(VelocityProfile::constant(1.0, 0.0).unwrap());
        assert!(solve_ivbp_flat(&shifted, &zero_v(), &bc, 0.0, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn global_constant_forcing() {
        let q = 0.45;
        let bc = PiecewiseTrace::constant(q, 2.0);
        for x in [0.01, 1.0, 30.0] {
            let g = global_solution_flat(&bc, 3.0, x).unwrap();
            assert_abs_diff_eq!(g.u, q, epsilon = 1e-12);
            assert_abs_diff_eq!(g.t_star, 3.0 - x / q, epsilon = 1e-12);
            assert_eq!(g.v, 2.0);
        }
    }

    #[test]
    fn global_window_exhaustion() {
        let bc = PiecewiseTrace::new(vec![0.0], vec![0.0, 0.5], vec![0.0, 0.0]).unwrap();
        // phi_+ vanishes before t = 0, F keeps decreasing into the past.
        assert!(matches!(global_solution_flat_with(&bc, 1.0, 10.0, 50.0), Err(HloError::WindowExhausted { .. })));
        assert!(global_solution_flat_with(&bc, 1.0, 0.1, 50.0).is_ok());
    }

    #[test]
    fn global_smallest_minimizer_on_ties() {
        // Both cells behind t = 0 propose s = -1 with the same value.
        let bc = PiecewiseTrace::new(vec![-1.0], vec![0.5, 0.0], vec![1.0, 2.0]).unwrap();
        let g = global_solution_flat(&bc, 0.0, 0.2).unwrap();
        assert_abs_diff_eq!(g.t_star, -1.0, epsilon = 1e-12);
        assert_eq!(g.v, 2.0);
    }

    #[test]
    fn moving_boundary_rest_and_translation() {
        let xs = midpoints(-1.0, 3.0, 80);
        let rest = Potential::new(VelocityProfile::constant(0.0, 0.0).unwrap());
        let s = solve_moving_boundary(&rest, 0.7, &xs).unwrap();
        // Free boundaries are bisection switches of a tie-broken argmin.
        assert_abs_diff_eq!(s.phi0, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.phi1, 1.0, epsilon = 1e-7);
        assert!(s.u.iter().all(|u| u.abs() < 1e-14));
        let c = 0.3;
        let moving = Potential::new(VelocityProfile::constant(0.0, c).unwrap());
        let s = solve_moving_boundary(&moving, 2.0, &xs).unwrap();
        assert_abs_diff_eq!(s.phi0, c * 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.phi1, 1.0 + c * 2.0, epsilon = 1e-7);
        assert!(s.u.iter().all(|u| (u - c).abs() < 1e-12));
    }

    #[test]
    fn moving_boundary_compressive_before_shock() {
        let u0 = Potential::new(VelocityProfile::free(vec![0.0, 1.0], vec![1.0, -1.0], vec![-2.0, 0.0]).unwrap());
        let xs = midpoints(0.0, 1.0, 100);
        let s = solve_moving_boundary(&u0, 0.25, &xs).unwrap();
        assert_abs_diff_eq!(s.phi0, 0.25, epsilon = 1e-7);
        assert_abs_diff_eq!(s.phi1, 0.75, epsilon = 1e-7);
        for (x, u) in s.xs.iter().zip(&s.u) {
            assert_abs_diff_eq!(*u, 2.0 - 4.0 * x, epsilon = 1e-12);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-0.9f64..0.9, 4),
            prop::collection::vec(-0.9f64..0.9, 4),
            prop::collection::vec(0.2f64..1.0, 3),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn entropy_and_monotone_minimizers((vals, phis, gaps) in instance()) {
            let u0 = Potential::new(VelocityProfile::cells(vec![0.0, 1.0, 2.0, 3.0], vals).unwrap());
            let mut knots = vec![0.3];
            for g in &gaps { knots.push(knots.last().unwrap() + g); }
            let bc = PiecewiseTrace::new(knots[..3].to_vec(), phis, vec![0.0; 4]).unwrap();
            let xs = midpoints(0.0, 5.0, 500);
            let sol = solve_ivbp_flat(&u0, &zero_v(), &bc, 0.0, 2.0, &xs).unwrap();
            // Feet move right and exit times move earlier as x grows.
            for w in sol.minimizers.windows(2) {
                match (w[0].boundary_exit_time, w[1].boundary_exit_time) {
                    (None, None) => prop_assert!(w[1].departure_point.1 >= w[0].departure_point.1 - 1e-12),
                    (Some(b0), Some(b1)) => prop_assert!(b1 <= b0 + 1e-12),
                    _ => {}
                }
            }
            // Increases are bounded by the steepest fan, so jumps go down.
            for (w, x) in sol.u.values.windows(2).zip(xs.windows(2)) {
                prop_assert!(w[1] - w[0] <= (x[1] - x[0]) * (1.0 / x[0]).max(0.5) + 1e-9);
            }
        }
    }
}
