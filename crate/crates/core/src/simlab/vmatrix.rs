//! Score-variance matrices `V = [var χ_jk]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::N_BASIS;
use crate::error::{Error, Result};

/// Tilt toward the first temporal component in the rank-two variant.
pub const V2_TILT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    V1,
    V2,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::V1 => "V1",
            Variant::V2 => "V2",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "V1" => Ok(Variant::V1),
            "V2" => Ok(Variant::V2),
            _ => Err(Error::InvalidInput(format!("unknown variant {s:?}"))),
        }
    }
}

fn softmax_profile(rate: f64) -> [f64; N_BASIS] {
    let total: f64 = (1..=N_BASIS).map(|j| (rate * j as f64).exp()).sum();
    let mut out = [0.0; N_BASIS];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (rate * (9.0 - (j + 1) as f64)).exp() / total;
    }
    out
}

/// Spatial eigenvalues `λ_j = e^{1.2(9−j)} / ∑ e^{1.2j′}`.
pub fn sim_lambda() -> [f64; N_BASIS] {
    softmax_profile(1.2)
}

/// Temporal eigenvalues `γ_k = e^{1.6(9−k)} / ∑ e^{1.6k′}`.
pub fn sim_gamma() -> [f64; N_BASIS] {
    softmax_profile(1.6)
}

/// `8 × 8` nonnegative matrix of score variances with row sums `λ` and
/// column sums `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VMatrix {
    pub variant: Variant,
    values: DMatrix<f64>,
}

impl VMatrix {
    /// Custom matrix, e.g. for degenerate checks. Entries must be finite and
    /// nonnegative.
    pub fn from_matrix(variant: Variant, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != N_BASIS || values.ncols() != N_BASIS {
            return Err(Error::Dimension(format!(
                "V must be {N_BASIS}×{N_BASIS}, got {}×{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput("V entries must be finite and nonnegative".into()));
        }
        Ok(Self { variant, values })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }

    /// Row-major `vec(V)`, the diagonal of `Σ`.
    pub fn vec(&self) -> Vec<f64> {
        (0..N_BASIS)
            .flat_map(|j| (0..N_BASIS).map(move |k| (j, k)))
            .map(|(j, k)| self.values[(j, k)])
            .collect()
    }
}

/// Rank-one `V1 = λγᵀ`, or rank-two `V2` whose first two rows are `λ_j u`
/// and last six `λ_j w`, with `u = (1−τ)γ + τe_1` and `w` fixed by the
/// column sums.
pub fn build_v(variant: Variant) -> Result<VMatrix> {
    let lambda = sim_lambda();
    let gamma = sim_gamma();
    let values = match variant {
        Variant::V1 => DMatrix::from_fn(N_BASIS, N_BASIS, |j, k| lambda[j] * gamma[k]),
        Variant::V2 => {
            let u: Vec<f64> = (0..N_BASIS)
                .map(|k| (1.0 - V2_TILT) * gamma[k] + if k == 0 { V2_TILT } else { 0.0 })
                .collect();
            let head = lambda[0] + lambda[1];
            let tail: f64 = lambda[2..].iter().sum();
            let w: Vec<f64> = (0..N_BASIS).map(|k| (gamma[k] - head * u[k]) / tail).collect();
            if let Some((k, wk)) = w.iter().enumerate().find(|(_, x)| **x < 0.0) {
                return Err(Error::InvalidInput(format!("V2 construction gives w[{k}] = {wk} < 0")));
            }
            DMatrix::from_fn(N_BASIS, N_BASIS, |j, k| lambda[j] * if j < 2 { u[k] } else { w[k] })
        }
    };
    VMatrix::from_matrix(variant, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_eigenvalues() {
        // direct closed-form evaluation
        let denom_l: f64 = (1..=8).map(|j| (1.2 * j as f64).exp()).sum();
        let denom_g: f64 = (1..=8).map(|j| (1.6 * j as f64).exp()).sum();
        assert!((sim_lambda()[0] - (1.2f64 * 8.0).exp() / denom_l).abs() < 1e-15);
        assert!((sim_gamma()[0] - (1.6f64 * 8.0).exp() / denom_g).abs() < 1e-15);
        assert!((sim_lambda()[0] - 0.6989).abs() < 1e-4);
        assert!((sim_gamma()[0] - 0.7981).abs() < 1e-4);
        assert!((sim_lambda().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    fn rank(m: &DMatrix<f64>) -> usize {
        let sv = m.clone().svd(false, false).singular_values;
        sv.iter().filter(|&&s| s > 1e-12).count()
    }

    #[test]
    fn margins_and_rank() {
        let (l, g) = (sim_lambda(), sim_gamma());
        for (variant, r) in [(Variant::V1, 1), (Variant::V2, 2)] {
            let v = build_v(variant).unwrap();
            for j in 0..8 {
                assert!((v.values().row(j).sum() - l[j]).abs() < 1e-12);
                assert!((v.values().column(j).sum() - g[j]).abs() < 1e-12);
            }
            assert_eq!(rank(v.values()), r);
        }
    }

    #[test]
    fn v2_row_blocks_are_proportional() {
        let v = build_v(Variant::V2).unwrap();
        let l = sim_lambda();
        for j in 3..8 {
            for k in 0..8 {
                assert!((v.get(j, k) / l[j] - v.get(2, k) / l[2]).abs() < 1e-12);
            }
        }
        for k in 0..8 {
            assert!((v.get(1, k) / l[1] - v.get(0, k) / l[0]).abs() < 1e-12);
        }
        assert_eq!(v.vec().len(), 64);
    }
}
