//! Sampled solution fields and the proximity metric between them.

use crate::error::{HloError, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Values on an increasing grid; at a shock the stored value is the right
/// limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseField {
    /// Left end of the domain (0 for the half line, r* for the exterior).
    pub origin: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseField {
    pub fn new(origin: f64, xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(HloError::GridMismatch(format!("{} grid points but {} values", xs.len(), values.len())));
        }
        Ok(PiecewiseField { origin, xs, values })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Value of the sample at or immediately left of x (right-continuous
    /// step reconstruction).
    pub fn at(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&g| g <= x);
        self.values[i.saturating_sub(1)]
    }

    /// Total variation of the samples.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Grid points where the field drops by more than `jump`.
    pub fn downward_jumps(&self, jump: f64) -> Vec<f64> {
        self.xs
            .windows(2)
            .zip(self.values.windows(2))
            .filter(|(_, v)| v[0] - v[1] > jump)
            .map(|(x, _)| 0.5 * (x[0] + x[1]))
            .collect()
    }
}

/// L1 distance with the midpoint-cell weights of the grid of `a`.
pub fn l1_distance(a: &PiecewiseField, b: &PiecewiseField) -> Result<f64> {
    if a.xs != b.xs {
        return Err(HloError::GridMismatch("fields live on different grids".into()));
    }
    let n = a.xs.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..n {
        let left = if i == 0 { a.xs[0] } else { 0.5 * (a.xs[i - 1] + a.xs[i]) };
        let right = if i + 1 == n { a.xs[n - 1] } else { 0.5 * (a.xs[i] + a.xs[i + 1]) };
        acc += (right - left) * (a.values[i] - b.values[i]).abs();
    }
    Ok(acc)
}

/// Relative equality used by the proximity metric.
pub fn agree(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()))
}

/// Radius of the agreement prefix: distance from the origin to the last grid
/// point before the first disagreement. `None` when the fields already differ
/// at the first sample, `Some(inf)` when they agree everywhere.
pub fn agreement_radius(h1: &PiecewiseField, h2: &PiecewiseField) -> Result<Option<f64>> {
    if h1.xs != h2.xs || h1.origin != h2.origin {
        return Err(HloError::GridMismatch("fields must share grid and origin".into()));
    }
    match h1.values.iter().zip(&h2.values).position(|(a, b)| !agree(*a, *b)) {
        None => Ok(Some(f64::INFINITY)),
        Some(0) => Ok(None),
        Some(i) => Ok(Some(h1.xs[i - 1] - h1.origin)),
    }
}

/// d(h1, h2) = exp(-r): 0 for identical fields, 1 with no agreement at the
/// origin.
pub fn proximity_metric(h1: &PiecewiseField, h2: &PiecewiseField) -> Result<f64> {
    Ok(match agreement_radius(h1, h2)? {
        None => 1.0,
        Some(r) if r.is_infinite() => 0.0,
        Some(r) => (-r).exp(),
    })
}

/// Float formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a header row plus numeric rows.
pub fn write_csv<P: AsRef<Path>, R: AsRef<[f64]>>(path: P, header: &[&str], rows: &[R]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let line: Vec<String> = r.as_ref().iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

/// Uniform grid with `n` cells on [a, b]; returns the cell midpoints.
pub fn midpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..n).map(|i| a + (i as f64 + 0.5) * h).collect()
}

/// Uniform grid of `n + 1` nodes on [a, b].
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..=n).map(|i| a + i as f64 * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(vals: &[f64]) -> PiecewiseField {
        let xs: Vec<f64> = (1..=vals.len()).map(|i| i as f64).collect();
        PiecewiseField::new(0.0, xs, vals.to_vec()).unwrap()
    }

    #[test]
    fn metric_examples() {
        let a = field(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(proximity_metric(&a, &a).unwrap(), 0.0);
        let b = field(&[0.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(proximity_metric(&a, &b).unwrap(), 1.0);
        let c = field(&[1.0, 2.0, 3.0, 9.0, 9.0]);
        assert!((proximity_metric(&a, &c).unwrap() - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tolerance_is_relative() {
        let a = field(&[1e6, 1.0]);
        let b = field(&[1e6 + 1e-4, 1.0 + 1e-10]);
        assert_eq!(proximity_metric(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn step_lookup_is_right_continuous() {
        let a = field(&[1.0, 2.0, 3.0]);
        assert_eq!(a.at(2.0), 2.0);
        assert_eq!(a.at(2.5), 2.0);
        assert_eq!(a.at(0.5), 1.0);
    }

    #[test]
    fn formatting_has_17_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn l1_of_constant_offset() {
        let xs = midpoints(0.0, 1.0, 10);
        let a = PiecewiseField::new(0.0, xs.clone(), vec![0.0; 10]).unwrap();
        let b = PiecewiseField::new(0.0, xs, vec![1.0; 10]).unwrap();
        assert!((l1_distance(&a, &b).unwrap() - 0.9).abs() < 1e-12);
    }
}
