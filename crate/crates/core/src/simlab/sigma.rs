//! Score covariance `Σ` (64 × 64) and its largest admissible off-diagonals.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use super::basis::N_BASIS;
use super::vmatrix::VMatrix;
use crate::error::{Error, Result};

const DIM: usize = N_BASIS * N_BASIS;
const BISECTION_TOL: f64 = 1e-9;
const SHRINK: f64 = 1.0 - 1e-6;

/// Flat index of `χ_{jk}` (one-based `j`, `k`) in `vec(V)`.
pub const fn flat(j: usize, k: usize) -> usize {
    (j - 1) * N_BASIS + (k - 1)
}

/// `(χ_12, χ_21)`, `(χ_11, χ_22)`, `(χ_13, χ_31)`.
pub const TRIPLE_PAIRS: [(usize, usize); 3] = [(flat(1, 2), flat(2, 1)), (flat(1, 1), flat(2, 2)), (flat(1, 3), flat(3, 1))];

/// Which off-diagonal covariances of `Σ` are nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffDiagonal {
    /// Diagonal `Σ`: weak separability holds.
    H0,
    /// `cov(χ_12, χ_21)` set to the given value.
    Single(f64),
    /// The three pairs of [`TRIPLE_PAIRS`] at their common largest scale.
    Triple,
}

impl OffDiagonal {
    /// Row label for rejection tables.
    pub fn label(&self) -> String {
        match self {
            OffDiagonal::H0 => "H0".into(),
            OffDiagonal::Single(c) => format!("cov12_21={c}"),
            OffDiagonal::Triple => "triple".into(),
        }
    }
}

/// Pair sets searched by [`max_pd_cov`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSet {
    Single,
    Triple,
}

fn diagonal_sigma(v: &VMatrix) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.vec()))
}

fn with_pairs(v: &VMatrix, pairs: &[(usize, usize)], values: &[f64]) -> DMatrix<f64> {
    let mut s = diagonal_sigma(v);
    for (&(a, b), &c) in pairs.iter().zip(values) {
        s[(a, b)] = c;
        s[(b, a)] = c;
    }
    s
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    Cholesky::new(m.clone()).is_some()
}

/// Supremum of `c ∈ [0, hi]` with `pd(c)`, assuming `pd` is monotone.
fn bisect(hi: f64, pd: impl Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    if pd(hi) {
        return hi;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn pair_sup(v: &VMatrix, pair: (usize, usize)) -> f64 {
    let d = v.vec();
    let bound = (d[pair.0] * d[pair.1]).sqrt();
    if !(bound > 0.0) {
        return 0.0;
    }
    bisect(bound, |c| is_pd(&with_pairs(v, &[pair], &[c])))
}

/// Covariances of the three pairs at the largest common fraction of their
/// single-pair maxima keeping `Σ` positive definite.
pub fn triple_covariances(v: &VMatrix) -> [f64; 3] {
    let sups = TRIPLE_PAIRS.map(|p| pair_sup(v, p));
    let f = bisect(1.0, |f| {
        let vals = sups.map(|s| f * s);
        is_pd(&with_pairs(v, &TRIPLE_PAIRS, &vals))
    });
    sups.map(|s| f * SHRINK * s)
}

/// Largest positive `cov(χ_12, χ_21)` keeping `Σ` positive definite, found
/// by bisection and pulled back by a relative `1e-6`. For [`PairSet::Triple`]
/// the `(χ_12, χ_21)` entry of [`triple_covariances`] is returned.
pub fn max_pd_cov(v: &VMatrix, pairs: PairSet) -> f64 {
    match pairs {
        PairSet::Single => pair_sup(v, TRIPLE_PAIRS[0]) * SHRINK,
        PairSet::Triple => triple_covariances(v)[0],
    }
}

/// `Σ` with diagonal `vec(V)` and the requested off-diagonals.
pub fn assemble_sigma(v: &VMatrix, spec: &OffDiagonal) -> Result<DMatrix<f64>> {
    let s = match *spec {
        OffDiagonal::H0 => diagonal_sigma(v),
        OffDiagonal::Single(c) => {
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("covariance {c} is not finite")));
            }
            with_pairs(v, &TRIPLE_PAIRS[..1], &[c])
        }
        OffDiagonal::Triple => with_pairs(v, &TRIPLE_PAIRS, &triple_covariances(v)),
    };
    debug_assert_eq!(s.nrows(), DIM);
    if !is_pd(&s) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::super::vmatrix::{build_v, sim_gamma, sim_lambda, Variant};
    use super::*;

    #[test]
    fn flat_indices() {
        assert_eq!(TRIPLE_PAIRS, [(1, 8), (0, 9), (2, 16)]);
    }

    #[test]
    fn h0_is_diagonal() {
        let v = build_v(Variant::V1).unwrap();
        let s = assemble_sigma(&v, &OffDiagonal::H0).unwrap();
        assert_eq!(s, DMatrix::from_diagonal(&s.diagonal()));
    }

    #[test]
    fn single_pair_bounds() {
        let v = build_v(Variant::V1).unwrap();
        assert!(assemble_sigma(&v, &OffDiagonal::Single(0.065)).is_ok());
        assert!(matches!(
            assemble_sigma(&v, &OffDiagonal::Single(1.0)),
            Err(Error::NotPositiveDefinite)
        ));
        let (l, g) = (sim_lambda(), sim_gamma());
        let closed = (l[0] * g[1] * l[1] * g[0]).sqrt();
        assert!((max_pd_cov(&v, PairSet::Single) - closed).abs() < 1e-6);
    }

    #[test]
    fn zero_diagonal_gives_zero() {
        let v = VMatrix::from_matrix(Variant::V1, DMatrix::zeros(8, 8)).unwrap();
        assert_eq!(max_pd_cov(&v, PairSet::Single), 0.0);
    }

    #[test]
    fn triple_is_admissible() {
        for variant in [Variant::V1, Variant::V2] {
            let v = build_v(variant).unwrap();
            let t = triple_covariances(&v);
            assert!(t.iter().all(|&c| c > 0.0));
            assert!(assemble_sigma(&v, &OffDiagonal::Triple).is_ok());
            // disjoint pairs: each reaches its own maximum
            assert!((t[0] - max_pd_cov(&v, PairSet::Single)).abs() < 1e-6);
        }
    }
}
