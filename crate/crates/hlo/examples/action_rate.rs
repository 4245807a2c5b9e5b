//! Action rate rho and asymptotic speed theta for a constant and an iid
//! boundary process, flat and around a mass.

use schwarzschild_hlo::ergodics::estimate_rho;
use schwarzschild_hlo::forcing::{Marginal, ProcessKind, ProcessSpec};
use schwarzschild_hlo::{Background, Result};

fn main() -> Result<()> {
    let spans = [50.0, 100.0, 200.0];
    let iid = ProcessSpec::new(ProcessKind::IidPiecewiseConstant { cell: 1.0, marginal: Marginal::Uniform { lo: 0.0, hi: 0.8 } }, 7);
    let strong = ProcessSpec::new(ProcessKind::IidPiecewiseConstant { cell: 1.0, marginal: Marginal::Uniform { lo: 0.6, hi: 0.95 } }, 7);
    let cases = [
        ("flat, phi = 0.5", Background::flat(1.0), ProcessSpec::constant(0.5, 1)),
        ("flat, iid uniform(0, 0.8)", Background::flat(1.0), iid),
        ("M = 1, r* = 4, phi = 0.9", Background::new(1.0, 4.0)?, ProcessSpec::constant(0.9, 1)),
        ("M = 1, r* = 4, iid uniform(0.6, 0.95)", Background::new(1.0, 4.0)?, strong),
    ];
    for (label, bg, spec) in cases {
        let r = estimate_rho(&bg, &spec, &spans)?;
        println!("{label}: rho_hat = {:+.6}, theta_hat = {:.6}  ({})", r.rho_hat, r.theta_hat, r.note);
        for (span, s) in &r.rho_estimates {
            println!("    S/span at span {span:>5}: {s:+.6}");
        }
    }
    Ok(())
}
