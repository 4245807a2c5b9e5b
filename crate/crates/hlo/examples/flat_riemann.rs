//! Flat initial-boundary value problem: a Riemann step fed by a constant
//! boundary velocity, with the density transported along minimizers.

use schwarzschild_hlo::field::{midpoints, PiecewiseField};
use schwarzschild_hlo::forcing::PiecewiseTrace;
use schwarzschild_hlo::hlo_flat::{solve_ivbp_flat, MinimizerKind};
use schwarzschild_hlo::potential::{Potential, VelocityProfile};
use schwarzschild_hlo::Result;

fn main() -> Result<()> {
    let u0 = Potential::new(VelocityProfile::cells(vec![0.0, 1.0], vec![0.8, 0.2])?);
    let v0 = PiecewiseField::new(0.0, vec![0.0, 1.0], vec![2.0, 3.0])?;
    let bc = PiecewiseTrace::constant(0.8, 1.0);
    let xs = midpoints(0.0, 3.0, 30);
    let sol = solve_ivbp_flat(&u0, &v0, &bc, 0.0, 1.0, &xs)?;
    for (row, m) in sol.rows().iter().zip(&sol.minimizers) {
        let kind = if m.kind == MinimizerKind::BoundaryPath { "boundary" } else { "initial" };
        println!("x = {:.2}  u = {:.4}  v = {:.1}  U = {:+.5}  from {kind}", row[0], row[1], row[2], row[3]);
    }
    println!("shocks near {:?}", sol.u.downward_jumps(1e-2));
    Ok(())
}
