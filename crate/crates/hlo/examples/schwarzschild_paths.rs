//! Schwarzschild solver: a static outgoing profile under constant forcing,
//! with the action of each minimizing path split into its terms.

use schwarzschild_hlo::field::PiecewiseField;
use schwarzschild_hlo::forcing::PiecewiseTrace;
use schwarzschild_hlo::hlo_schwarzschild::{InitialData, SchwConfig, SchwSolver, Segment};
use schwarzschild_hlo::potential::{ExteriorProfile, PotentialVariant, SchwPotential};
use schwarzschild_hlo::{Background, Result};

fn main() -> Result<()> {
    let bg = Background::new(1.0, 4.0)?;
    let w = SchwPotential::new(bg, ExteriorProfile::Static { c: 0.62, sign: 1.0 }, PotentialVariant::FromBoundary)?;
    let v0 = PiecewiseField::new(4.0, vec![4.0], vec![1.0])?;
    let bc = PiecewiseTrace::constant(0.9, 2.0);
    let solver = SchwSolver::new(bg, &bc, Some(InitialData { w: &w, v0: &v0 }), 0.0, 5.0, SchwConfig::default())?;
    let rs = [4.5, 6.0, 9.0, 14.0, 20.0];
    let sol = solver.solve(&rs)?;
    for (row, m) in sol.rows().iter().zip(&sol.minimizers) {
        let path = solver.path(m)?;
        let b = path.breakdown;
        let stays = path.segments.iter().filter(|s| matches!(s, Segment::Boundary { .. })).count();
        println!(
            "r = {:5.1}  u = {:.6} (static {:.6})  v = {:.1}  C = {:.6}  W {:+.4} K {:+.4} P {:+.4} B {:.4}  stays {stays}",
            row[0],
            row[1],
            bg.static_speed(0.62, row[0]),
            row[2],
            row[4],
            b.w,
            b.k,
            b.p,
            b.b
        );
    }
    Ok(())
}
