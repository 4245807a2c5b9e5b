//! Free problem with data on [0, 1]: the support edges and the solution
//! before the shock forms from u0 = 1 - 2x.

use schwarzschild_hlo::field::linspace;
use schwarzschild_hlo::hlo_flat::solve_moving_boundary;
use schwarzschild_hlo::potential::{Potential, VelocityProfile};
use schwarzschild_hlo::Result;

fn main() -> Result<()> {
    let u0 = Potential::new(VelocityProfile::free(vec![0.0, 1.0], vec![1.0, -1.0], vec![-2.0, 0.0])?);
    let t = 0.25;
    let sol = solve_moving_boundary(&u0, t, &linspace(-1.0, 2.0, 60))?;
    println!("support at t = {t}: [{:.4}, {:.4}]", sol.phi0, sol.phi1);
    for ((x, u), y) in sol.xs.iter().zip(&sol.u).zip(&sol.feet) {
        // characteristics from y: x = y + (1 - 2y) t
        let closed = 1.0 - 2.0 * (x - t) / (1.0 - 2.0 * t);
        println!("x = {x:+.3}  u = {u:+.6}  foot {y:.4}  closed form {closed:+.6}");
    }
    Ok(())
}
