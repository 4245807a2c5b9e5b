//! Passive transport of the integrated density v along minimizers: v takes
//! the initial value at the foot of the minimizer, or the boundary value psi
//! at its last exit time (right-hand representative).

use crate::error::{HloError, Result};
use crate::field::PiecewiseField;
use crate::forcing::BoundaryTrace;

/// Cadlag density samples; `at` gives the right-continuous step value.
pub type DensityField = PiecewiseField;

/// Where a minimizer comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Origin {
    InitialLine { foot: f64 },
    Boundary { exit_time: f64 },
}

pub trait Traced {
    fn origin(&self) -> Origin;
    /// Radius (or x) of the evaluation point.
    fn endpoint(&self) -> f64;
}

/// v on `grid` from a minimizer map over the same grid.
pub fn transport_density<M: Traced>(
    v0: &DensityField,
    trace: &dyn BoundaryTrace,
    minimizers: &[M],
    grid: &[f64],
) -> Result<DensityField> {
    if minimizers.len() != grid.len() || minimizers.iter().zip(grid).any(|(m, &x)| m.endpoint() != x) {
        return Err(HloError::GridMismatch("minimizer map does not match the requested grid".into()));
    }
    let values = minimizers
        .iter()
        .map(|m| match m.origin() {
            Origin::InitialLine { foot } => v0.at(foot),
            Origin::Boundary { exit_time } => trace.psi(exit_time),
        })
        .collect();
    PiecewiseField::new(v0.origin, grid.to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::PiecewiseTrace;

    struct M(Origin, f64);
    impl Traced for M {
        fn origin(&self) -> Origin {
            self.0
        }
        fn endpoint(&self) -> f64 {
            self.1
        }
    }

    #[test]
    fn constant_data_stay_constant() {
        let v0 = PiecewiseField::new(0.0, vec![0.0, 1.0], vec![2.0, 2.0]).unwrap();
        let tr = PiecewiseTrace::constant(0.3, 2.0);
        let ms = vec![M(Origin::InitialLine { foot: 0.4 }, 1.0), M(Origin::Boundary { exit_time: -3.0 }, 2.0)];
        let v = transport_density(&v0, &tr, &ms, &[1.0, 2.0]).unwrap();
        assert_eq!(v.values, vec![2.0, 2.0]);
        assert!(transport_density(&v0, &tr, &ms, &[1.0, 2.5]).is_err());
    }

    #[test]
    fn boundary_value_is_right_limit() {
        let v0 = PiecewiseField::new(0.0, vec![0.0], vec![0.0]).unwrap();
        let tr = PiecewiseTrace::new(vec![1.0], vec![0.2, 0.4], vec![5.0, 7.0]).unwrap();
        let ms = vec![M(Origin::Boundary { exit_time: 1.0 }, 0.5)];
        let v = transport_density(&v0, &tr, &ms, &[0.5]).unwrap();
        assert_eq!(v.values, vec![7.0]);
    }
}
