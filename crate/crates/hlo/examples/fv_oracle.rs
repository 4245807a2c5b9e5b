//! Finite-volume reference against the variational solution under grid
//! refinement, with the discrete conservation check.

use schwarzschild_hlo::field::{l1_distance, PiecewiseField};
use schwarzschild_hlo::forcing::PiecewiseTrace;
use schwarzschild_hlo::hlo_flat::solve_ivbp_flat;
use schwarzschild_hlo::oracle_fv::{fv_run, FvGrid};
use schwarzschild_hlo::potential::{Potential, VelocityProfile};
use schwarzschild_hlo::{Background, Result};

fn main() -> Result<()> {
    let u0 = Potential::new(VelocityProfile::cells(vec![0.0, 1.0, 2.5], vec![0.7, -0.3, 0.4])?);
    let bc = PiecewiseTrace::new(vec![0.5], vec![0.6, -0.2], vec![1.0, 0.0])?;
    let v0 = PiecewiseField::new(0.0, vec![0.0], vec![0.0])?;
    for n in [250, 500, 1000, 2000] {
        let grid = FvGrid::new(0.0, 5.0, n, 0.9)?;
        let run = fv_run(&Background::flat(1.0), &grid.averages_flat(&u0), &bc, 0.0, 1.5, grid)?;
        let exact = solve_ivbp_flat(&u0, &v0, &bc, 0.0, 1.5, &grid.centers())?;
        let defect = (run.mass_final - run.mass_initial) - (run.flux_in - run.flux_out);
        println!("n = {n:>5}: L1 = {:.4e}, steps {}, conservation defect {defect:.1e}", l1_distance(&exact.u, &run.u)?, run.steps);
    }
    Ok(())
}
