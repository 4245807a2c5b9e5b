//! Pullback attraction in the flat model: solutions started further in the
//! past agree with the global solution on a growing window.

use schwarzschild_hlo::ergodics::{coincidence_check, pullback_experiment, InitialPotential};
use schwarzschild_hlo::forcing::{Marginal, ProcessKind, ProcessSpec};
use schwarzschild_hlo::potential::{Potential, VelocityProfile};
use schwarzschild_hlo::{Background, Result};

fn main() -> Result<()> {
    let bg = Background::flat(1.0);
    let spec = ProcessSpec::new(ProcessKind::IidPiecewiseConstant { cell: 1.0, marginal: Marginal::Uniform { lo: 0.0, hi: 0.8 } }, 7);
    let w = InitialPotential::Flat(Potential::new(VelocityProfile::cells(vec![0.0, 2.0, 5.0], vec![0.3, -0.2, 0.1])?));
    let res = pullback_experiment(&bg, &spec, &w, 10.0, &[5.0, 10.0, 20.0, 40.0, 80.0], 200)?;
    for r in &res.records {
        println!("look-back {:>5}: d = {:.3e}, agreement radius {:.3}", r.lookback, r.d, r.agreement_radius);
    }
    let other = InitialPotential::Flat(Potential::new(VelocityProfile::constant(0.0, 0.0)?));
    let rep = coincidence_check(&bg, &spec, &[w, other], 160.0, 10.0, 200)?;
    println!("two data coincide on the window after 160 time units: {}", rep.coincide);
    Ok(())
}
