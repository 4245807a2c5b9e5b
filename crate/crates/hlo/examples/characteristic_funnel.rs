//! Characteristics leaving r0 = 6 around a mass M = 1, with their conserved
//! quantity and classification.

use schwarzschild_hlo::characteristics::{funnel, light_cone_radii, Integrator};
use schwarzschild_hlo::{Background, Result};

fn main() -> Result<()> {
    let bg = Background::new(1.0, 3.0)?;
    let integ = Integrator::new(bg);
    let velocities: Vec<f64> = (-9..=9).map(|k| k as f64 / 10.0).collect();
    println!("escape velocity at r0: {:.6}", bg.escape_velocity(6.0)?);
    for arc in funnel(&integ, 0.0, 6.0, &velocities, 40.0)? {
        let (a, b) = (arc.first(), arc.last());
        println!(
            "u0 = {:+.1}  C = {:+.4}  {:<18} ends at t = {:7.3}, r = {:9.4}  drift {:.1e}",
            a.u,
            arc.c,
            arc.classification.as_str(),
            b.t,
            b.r,
            arc.max_drift
        );
    }
    let (out, inn) = light_cone_radii(bg.mass, 0.0, 6.0, 10.0);
    println!("light cone at t = 10: r in [{inn:.4}, {out:.4}]");
    Ok(())
}
