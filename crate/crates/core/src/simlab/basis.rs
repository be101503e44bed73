//! Simulation bases on the 20-point grid.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;

use crate::datagrid::GridAxis;
use crate::error::{Error, Result};

pub const GRID_LEN: usize = 20;
pub const N_BASIS: usize = 8;

/// Clamped cubic knot vector with one interior knot at 0.5.
pub const KNOTS: [f64; 9] = [0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0];
pub const SPLINE_ORDER: usize = 4;

/// Trigonometric function number `j` (one-based) before orthonormalization:
/// `−√2 cos(π(j+1)s)` for odd `j`, `√2 sin(πjs)` for even `j`.
pub fn trig_raw(j: usize, s: f64) -> f64 {
    let jf = j as f64;
    if j % 2 == 1 {
        -SQRT_2 * (PI * (jf + 1.0) * s).cos()
    } else {
        SQRT_2 * (PI * jf * s).sin()
    }
}

/// Modified Gram–Schmidt under the weighted inner product, keeping column
/// order and the sign of each column's projection onto its raw direction.
pub fn gram_schmidt(raw: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    let ip = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(weights).map(|((x, y), w)| x * y * w).sum() };
    let mut out = raw.clone();
    for c in 0..out.ncols() {
        let original = ip(raw.column(c).as_slice(), raw.column(c).as_slice()).sqrt();
        for prev in 0..c {
            let r = ip(out.column(prev).as_slice(), out.column(c).as_slice());
            let q = out.column(prev).clone_owned();
            out.column_mut(c).axpy(-r, &q, 1.0);
        }
        let norm = ip(out.column(c).as_slice(), out.column(c).as_slice()).sqrt();
        if !(norm > 1e-10 * original.max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidInput(format!(
                "basis column {} is linearly dependent on the grid",
                c + 1
            )));
        }
        out.column_mut(c).scale_mut(1.0 / norm);
    }
    Ok(out)
}

/// Raw trigonometric columns `ψ_1..ψ_count` evaluated on `points`.
pub fn trig_columns(points: &[f64], count: usize) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), count, |r, c| trig_raw(c + 1, points[r]))
}

/// Eight trigonometric columns, orthonormalized on `axis`.
pub fn trig_psi(axis: &GridAxis) -> Result<DMatrix<f64>> {
    gram_schmidt(&trig_columns(axis.points(), N_BASIS), axis.weights())
}

/// All B-spline basis functions of the given order on `knots` at `s`, by the
/// Cox–de Boor recursion. The right end of the knot span is included in the
/// last nonempty interval.
pub fn bspline_basis(knots: &[f64], order: usize, s: f64) -> Vec<f64> {
    let last = *knots.last().expect("knot vector is nonempty");
    let intervals = knots.len() - 1;
    let mut n: Vec<f64> = (0..intervals)
        .map(|i| {
            let (a, b) = (knots[i], knots[i + 1]);
            let inside = a <= s && s < b;
            let right_end = s == last && a < b && b == last;
            if inside || right_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for p in 1..order {
        let next: Vec<f64> = (0..intervals - p)
            .map(|i| {
                let mut v = 0.0;
                let d1 = knots[i + p] - knots[i];
                if d1 > 0.0 {
                    v += (s - knots[i]) / d1 * n[i];
                }
                let d2 = knots[i + p + 1] - knots[i + 1];
                if d2 > 0.0 {
                    v += (knots[i + p + 1] - s) / d2 * n[i + 1];
                }
                v
            })
            .collect();
        n = next;
    }
    n
}

/// First three cubic B-splines on [`KNOTS`].
pub fn bspline_columns(points: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(points.len(), 3);
    for (r, &s) in points.iter().enumerate() {
        let b = bspline_basis(&KNOTS, SPLINE_ORDER, s);
        for c in 0..3 {
            m[(r, c)] = b[c];
        }
    }
    m
}

/// `[B_1, B_2, B_3, ψ_1..ψ_5]` orthonormalized on `axis`.
pub fn build_phi(axis: &GridAxis) -> Result<DMatrix<f64>> {
    let b = bspline_columns(axis.points());
    let t = trig_columns(axis.points(), 5);
    let raw = DMatrix::from_fn(axis.len(), N_BASIS, |r, c| if c < 3 { b[(r, c)] } else { t[(r, c - 3)] });
    gram_schmidt(&raw, axis.weights())
}

/// Grid and both bases.
#[derive(Debug, Clone)]
pub struct SimBasis {
    pub grid: GridAxis,
    /// `20 × 8`, columns `ψ_j`.
    pub psi: DMatrix<f64>,
    /// `20 × 8`, columns `φ_k`.
    pub phi: DMatrix<f64>,
}

impl SimBasis {
    pub fn new() -> Result<Self> {
        let grid = GridAxis::uniform(GRID_LEN)?;
        let psi = trig_psi(&grid)?;
        let phi = build_phi(&grid)?;
        Ok(Self { grid, psi, phi })
    }
}
