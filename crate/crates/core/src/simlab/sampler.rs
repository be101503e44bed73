//! Score samplers and surface synthesis.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basis::SimBasis;
use crate::datagrid::MultiwayDataset;
use crate::error::{Error, Result};

/// Degrees of freedom of the multivariate `t` scores.
pub const T_DOF: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Normal,
    /// Multivariate `t` with 6 degrees of freedom, scaled to covariance `Σ`.
    T6,
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Distribution::Normal => "normal",
            Distribution::T6 => "t6",
        })
    }
}

/// Box–Muller standard normals over any uniform source. The second variate
/// of each pair is cached.
pub struct BoxMuller<'a, R: Rng> {
    rng: &'a mut R,
    cached: Option<f64>,
}

impl<'a, R: Rng> BoxMuller<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { rng, cached: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.cached.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// `n × dim` matrix of score vectors with covariance `Σ`.
///
/// Normal rows are `L z`; `t` rows are `L z / √(u/4)` with `u` a sum of six
/// squared standard normals, so that the covariance is again `Σ`.
pub fn sample_scores<R: Rng>(sigma: &DMatrix<f64>, dist: Distribution, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let l = Cholesky::new(sigma.clone()).ok_or(Error::NotPositiveDefinite)?.l();
    let dim = sigma.nrows();
    let mut normals = BoxMuller::new(rng);
    let mut out = DMatrix::zeros(n, dim);
    for i in 0..n {
        let z = DVector::from_fn(dim, |_, _| normals.sample());
        let mut x = &l * z;
        if dist == Distribution::T6 {
            let u: f64 = (0..T_DOF).map(|_| normals.sample().powi(2)).sum();
            x /= (u / (T_DOF as f64 - 2.0)).sqrt();
        }
        out.row_mut(i).copy_from(&x.transpose());
    }
    Ok(out)
}

/// Surfaces `X_i = ψ · mat(χ_i) · φᵀ` on the basis grid.
pub fn synthesize_surfaces(scores: &DMatrix<f64>, basis: &SimBasis) -> Result<MultiwayDataset> {
    let (p, k) = (basis.psi.ncols(), basis.phi.ncols());
    if scores.ncols() != p * k {
        return Err(Error::Dimension(format!(
            "expected {} score columns, got {}",
            p * k,
            scores.ncols()
        )));
    }
    let n = scores.nrows();
    let (ns, nt) = (basis.psi.nrows(), basis.phi.nrows());
    let phi_t = basis.phi.transpose();
    let mut values = Vec::with_capacity(n * ns * nt);
    for i in 0..n {
        let chi = DMatrix::from_fn(p, k, |j, c| scores[(i, j * k + c)]);
        let x = &basis.psi * chi * &phi_t;
        for s in 0..ns {
            values.extend((0..nt).map(|t| x[(s, t)]));
        }
    }
    MultiwayDataset::new(n, basis.grid.clone(), basis.grid.clone(), values)
}
