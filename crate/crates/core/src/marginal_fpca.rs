//! Marginal covariance estimation and product FPCA.
//!
//! The marginal kernels are `C_S(s,u) = (1/n) ∑_i ∫ R_i(s,t) R_i(u,t) dt` and
//! `C_T(t,v) = (1/n) ∑_i ∫ R_i(s,t) R_i(s,v) ds`, with `R_i = X_i − X̄`.
//! Integrals become quadrature sums, so eigenfunctions are orthonormal under
//! the axis weights: we diagonalize `W^{1/2} C W^{1/2}` and map back.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::datagrid::{CenteredDataset, GridAxis};
use crate::error::{Error, Result};

/// Eigenvalues at or below this fraction of the leading one count as zero
/// when forming FVE denominators.
pub const FVE_RANK_TOL: f64 = 1e-12;
/// Implied-sum truncation: components above this fraction of the leading
/// eigenvalue enter the Θ corrections.
pub const TRUNCATION_TOL: f64 = 1e-10;
/// Relative eigengap below which a near-degeneracy warning is raised.
pub const EIGENGAP_TOL: f64 = 1e-8;

const CLIP_TOL: f64 = 1e-12;

/// Marginal eigenvalues and weighted-orthonormal eigenvectors of both axes.
#[derive(Debug, Clone)]
pub struct MarginalEigenSystem {
    lambda: Vec<f64>,
    gamma: Vec<f64>,
    psi: DMatrix<f64>,
    phi: DMatrix<f64>,
    s_weights: Vec<f64>,
    t_weights: Vec<f64>,
    warnings: Vec<String>,
}

impl MarginalEigenSystem {
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `|S| × P_max`, columns `ψ̂_j`.
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// `|T| × K_max`, columns `φ̂_k`.
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn p_max(&self) -> usize {
        self.lambda.len()
    }

    pub fn k_max(&self) -> usize {
        self.gamma.len()
    }

    pub fn s_weights(&self) -> &[f64] {
        &self.s_weights
    }

    pub fn t_weights(&self) -> &[f64] {
        &self.t_weights
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Number of components per axis treated as nonzero in FVE denominators.
    pub fn numerical_rank(&self) -> (usize, usize) {
        (
            count_above(&self.lambda, FVE_RANK_TOL),
            count_above(&self.gamma, FVE_RANK_TOL),
        )
    }

    /// Truncation bounds `(M_S, M_T)` for the implied sums.
    pub fn truncation(&self) -> (usize, usize) {
        (
            count_above(&self.lambda, TRUNCATION_TOL),
            count_above(&self.gamma, TRUNCATION_TOL),
        )
    }

    /// Copy with the sign of `ψ̂_j` reversed.
    pub fn with_flipped_psi(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.psi.column_mut(j).neg_mut();
        out
    }

    /// Copy with the sign of `φ̂_k` reversed.
    pub fn with_flipped_phi(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.phi.column_mut(k).neg_mut();
        out
    }

    /// Reorient every retained eigenvector so that its weighted inner
    /// product with the matching column of `reference` is nonnegative.
    pub(crate) fn align_to(&mut self, reference: &MarginalEigenSystem, p: usize, k: usize) {
        for j in 0..p.min(self.p_max()).min(reference.p_max()) {
            align_column(&mut self.psi, j, &reference.psi, &self.s_weights);
        }
        for c in 0..k.min(self.k_max()).min(reference.k_max()) {
            align_column(&mut self.phi, c, &reference.phi, &self.t_weights);
        }
    }
}

fn align_column(m: &mut DMatrix<f64>, j: usize, reference: &DMatrix<f64>, w: &[f64]) {
    let ip: f64 = (0..m.nrows())
        .map(|r| w[r] * m[(r, j)] * reference[(r, j)])
        .sum();
    if ip < 0.0 {
        m.column_mut(j).neg_mut();
    }
}

fn count_above(values: &[f64], rel: f64) -> usize {
    let lead = values.first().copied().unwrap_or(0.0);
    if lead <= 0.0 {
        return 0;
    }
    values.iter().take_while(|&&v| v > rel * lead).count()
}

/// Row-major residual block of subject `i` as an `|S| × |T|` matrix.
fn residual_matrix(c: &CenteredDataset, i: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(c.s_axis().len(), c.t_axis().len(), c.residual(i))
}

/// Estimated marginal covariance matrices `(Ĉ_S, Ĉ_T)` with the other
/// axis's quadrature weights absorbed.
pub fn marginal_covariances(c: &CenteredDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let (ns, nt, n) = (c.s_axis().len(), c.t_axis().len(), c.n());
    let sw: Vec<f64> = c.s_axis().weights().iter().map(|w| w.sqrt()).collect();
    let tw: Vec<f64> = c.t_axis().weights().iter().map(|w| w.sqrt()).collect();

    // wide: |S| × n|T|, columns scaled by √w_t; tall: n|S| × |T|, rows by √w_s
    let mut wide = DMatrix::<f64>::zeros(ns, n * nt);
    let mut tall = DMatrix::<f64>::zeros(n * ns, nt);
    for i in 0..n {
        let r = c.residual(i);
        for s in 0..ns {
            for t in 0..nt {
                let v = r[s * nt + t];
                wide[(s, i * nt + t)] = v * tw[t];
                tall[(i * ns + s, t)] = v * sw[s];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    let c_s = symmetrize(&wide * wide.transpose() * inv_n);
    let c_t = symmetrize(tall.transpose() * &tall * inv_n);
    (c_s, c_t)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

struct AxisEigen {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    warnings: Vec<String>,
}

fn axis_eigen(c: &DMatrix<f64>, axis: &GridAxis, name: &'static str) -> Result<AxisEigen> {
    let m = axis.len();
    if c.nrows() != m || c.ncols() != m {
        return Err(Error::Dimension(format!(
            "{name}-covariance is {}×{} but the axis has {m} points",
            c.nrows(),
            c.ncols()
        )));
    }
    let scale = c.amax();
    if (c - c.transpose()).amax() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(format!("{name}-covariance is not symmetric")));
    }
    let root: Vec<f64> = axis.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |r, q| root[r] * c[(r, q)] * root[q]);
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen(format!("{name}-axis eigensolver did not converge")))?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let lead = eig.eigenvalues[order[0]].max(0.0);

    let keep = m;
    let mut values = Vec::with_capacity(keep);
    let mut vectors = DMatrix::zeros(m, keep);
    for (col, &src) in order.iter().take(keep).enumerate() {
        let mut value = eig.eigenvalues[src];
        if value < 0.0 {
            if value < -CLIP_TOL * lead {
                return Err(Error::InvalidInput(format!(
                    "{name}-covariance is not positive semidefinite (eigenvalue {value:e})"
                )));
            }
            value = 0.0;
        }
        values.push(value);
        let mut v: DVector<f64> = eig.eigenvectors.column(src).component_div(&DVector::from_column_slice(&root));
        if leading_coordinate_negative(v.as_slice()) {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }

    let mut warnings = Vec::new();
    let nonzero = count_above(&values, TRUNCATION_TOL);
    for j in 1..nonzero {
        if values[j - 1] - values[j] < EIGENGAP_TOL * lead {
            warnings.push(format!(
                "near-degenerate eigengap: {name} components {} and {}",
                j,
                j + 1
            ));
        }
    }
    Ok(AxisEigen {
        values,
        vectors,
        warnings,
    })
}

/// True when the largest-magnitude coordinate (first on ties) is negative.
fn leading_coordinate_negative(v: &[f64]) -> bool {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    v.get(best).is_some_and(|x| *x < 0.0)
}

/// Eigendecompose both marginal covariances. Every component of each axis
/// is kept; `n` only has to be positive. A marginal kernel pools `n − 1`
/// independent residuals over the whole other axis, so its rank is not
/// bounded by `n − 1` and no sample-size cap is applied.
pub fn eigendecompose_marginals(
    c_s: &DMatrix<f64>,
    c_t: &DMatrix<f64>,
    s_axis: &GridAxis,
    t_axis: &GridAxis,
    n: usize,
) -> Result<MarginalEigenSystem> {
    if n == 0 {
        return Err(Error::TooFewSubjects);
    }
    let s = axis_eigen(c_s, s_axis, "s")?;
    let t = axis_eigen(c_t, t_axis, "t")?;
    let mut warnings = s.warnings;
    warnings.extend(t.warnings);
    Ok(MarginalEigenSystem {
        lambda: s.values,
        gamma: t.values,
        psi: s.vectors,
        phi: t.vectors,
        s_weights: s_axis.weights().to_vec(),
        t_weights: t_axis.weights().to_vec(),
        warnings,
    })
}

/// Covariances and eigendecomposition in one step.
pub fn marginal_fpca(c: &CenteredDataset) -> Result<MarginalEigenSystem> {
    let (c_s, c_t) = marginal_covariances(c);
    eigendecompose_marginals(&c_s, &c_t, c.s_axis(), c.t_axis(), c.n())
}

/// Marginal projection scores `χ̂_{i,jk}` and their second moments `η̂_{jk}`.
#[derive(Debug, Clone)]
pub struct ScoreArray {
    n: usize,
    p: usize,
    k: usize,
    chi: Vec<f64>,
    eta: Vec<f64>,
}

impl ScoreArray {
    /// Build from raw scores laid out `[subject][j][k]`.
    pub fn from_raw(n: usize, p: usize, k: usize, chi: Vec<f64>) -> Result<Self> {
        if chi.len() != n * p * k {
            return Err(Error::Dimension(format!(
                "expected {n}×{p}×{k} scores, got {}",
                chi.len()
            )));
        }
        let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        let mut eta = vec![0.0; p * k];
        for i in 0..n {
            for (e, x) in eta.iter_mut().zip(&chi[i * p * k..(i + 1) * p * k]) {
                *e += x * x;
            }
        }
        eta.iter_mut().for_each(|e| *e *= inv_n);
        Ok(Self { n, p, k, chi, eta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn chi(&self, i: usize, j: usize, k: usize) -> f64 {
        self.chi[(i * self.p + j) * self.k + k]
    }

    pub fn eta(&self, j: usize, k: usize) -> f64 {
        self.eta[j * self.k + k]
    }

    /// Scores of subject `i` as a row-major `P × K` block.
    pub fn subject(&self, i: usize) -> &[f64] {
        &self.chi[i * self.p * self.k..(i + 1) * self.p * self.k]
    }

    /// Leading `p × k` corner of the score array.
    pub fn truncated(&self, p: usize, k: usize) -> Result<Self> {
        if p > self.p || k > self.k {
            return Err(Error::InvalidInput(format!(
                "requested {p}×{k} scores from a {}×{} array",
                self.p, self.k
            )));
        }
        let mut chi = Vec::with_capacity(self.n * p * k);
        for i in 0..self.n {
            for j in 0..p {
                chi.extend((0..k).map(|c| self.chi(i, j, c)));
            }
        }
        Self::from_raw(self.n, p, k, chi)
    }
}

/// Weighted double contraction `χ̂_{i,jk} = ∑_s ∑_t R_i(s,t) w_s ψ̂_j(s) w_t φ̂_k(t)`.
pub fn marginal_scores(
    c: &CenteredDataset,
    eig: &MarginalEigenSystem,
    p: usize,
    k: usize,
) -> Result<ScoreArray> {
    if p > eig.p_max() || k > eig.k_max() {
        return Err(Error::InvalidInput(format!(
            "requested (P, K) = ({p}, {k}) exceeds retained ranks ({}, {})",
            eig.p_max(),
            eig.k_max()
        )));
    }
    let psi_w = DMatrix::from_fn(eig.psi.nrows(), p, |r, j| eig.s_weights[r] * eig.psi[(r, j)]);
    let phi_w = DMatrix::from_fn(eig.phi.nrows(), k, |r, q| eig.t_weights[r] * eig.phi[(r, q)]);
    let psi_wt = psi_w.transpose();
    let chi: Vec<f64> = (0..c.n())
        .into_par_iter()
        .flat_map_iter(|i| {
            let block = &psi_wt * residual_matrix(c, i) * &phi_w;
            // row-major P × K
            let mut out = Vec::with_capacity(p * k);
            for j in 0..p {
                out.extend((0..k).map(|q| block[(j, q)]));
            }
            out
        })
        .collect();
    ScoreArray::from_raw(c.n(), p, k, chi)
}

/// Scores out to the numerical rank of each axis.
pub fn full_scores(c: &CenteredDataset, eig: &MarginalEigenSystem) -> Result<ScoreArray> {
    let (p, k) = eig.numerical_rank();
    marginal_scores(c, eig, p, k)
}

/// `FVE_S(P) = ∑_{j≤P} λ̂_j / ∑_j λ̂_j` over numerically nonzero components.
pub fn fve_s(eig: &MarginalEigenSystem, p: usize) -> f64 {
    let r = eig.numerical_rank().0;
    ratio(&eig.lambda[..r], p)
}

/// `FVE_T(K)`, the temporal analogue of [`fve_s`].
pub fn fve_t(eig: &MarginalEigenSystem, k: usize) -> f64 {
    let r = eig.numerical_rank().1;
    ratio(&eig.gamma[..r], k)
}

fn ratio(values: &[f64], upto: usize) -> f64 {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    (values.iter().take(upto).sum::<f64>() / total).min(1.0)
}

/// Joint FVE from full-rank scores: share of `∑ η̂_{jk}` in the leading
/// `P × K` block.
pub fn fve_joint(scores: &ScoreArray, p: usize, k: usize) -> f64 {
    let mut total = 0.0;
    let mut part = 0.0;
    for j in 0..scores.p() {
        for q in 0..scores.k() {
            let e = scores.eta(j, q);
            total += e;
            if j < p && q < k {
                part += e;
            }
        }
    }
    if total <= 0.0 {
        0.0
    } else {
        (part / total).min(1.0)
    }
}

/// Outcome of the 90/95 FVE selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PkSelection {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Marginal threshold that produced the choice (0.90 or 0.95).
    pub threshold: f64,
    pub fve_joint: f64,
}

fn smallest_reaching(curve: impl Fn(usize) -> f64, max: usize, threshold: f64) -> usize {
    (1..=max).find(|&c| curve(c) >= threshold).unwrap_or(max).max(1)
}

/// Choose `(P_n, K_n)`: smallest marginal counts reaching 90% each; keep
/// them if the joint FVE reaches 90%, otherwise use the 95% marginal counts.
pub fn select_pk(eig: &MarginalEigenSystem, scores: &ScoreArray) -> PkSelection {
    let (rs, rt) = eig.numerical_rank();
    let pick = |threshold: f64| {
        let p = smallest_reaching(|p| fve_s(eig, p), rs, threshold);
        let k = smallest_reaching(|k| fve_t(eig, k), rt, threshold);
        PkSelection {
            p,
            k,
            threshold,
            fve_joint: fve_joint(scores, p, k),
        }
    };
    let first = pick(0.90);
    if first.fve_joint >= 0.90 {
        first
    } else {
        pick(0.95)
    }
}

/// FVE summary at a requested `(P, K)` plus the automatic selection.
#[derive(Debug, Clone, Serialize)]
pub struct FveReport {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub fve_joint: f64,
    pub fve_s: f64,
    pub fve_t: f64,
    /// `FVE_S(P)` for `P = 0..=rank`.
    pub fve_s_curve: Vec<f64>,
    /// `FVE_T(K)` for `K = 0..=rank`.
    pub fve_t_curve: Vec<f64>,
    pub chosen: PkSelection,
    pub thresholds: [f64; 2],
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn fve(eig: &MarginalEigenSystem, scores: &ScoreArray, p: usize, k: usize) -> FveReport {
    let (rs, rt) = eig.numerical_rank();
    FveReport {
        p,
        k,
        fve_joint: fve_joint(scores, p, k),
        fve_s: fve_s(eig, p),
        fve_t: fve_t(eig, k),
        fve_s_curve: (0..=rs).map(|c| fve_s(eig, c)).collect(),
        fve_t_curve: (0..=rt).map(|c| fve_t(eig, c)).collect(),
        chosen: select_pk(eig, scores),
        thresholds: [0.90, 0.95],
        lambda: eig.lambda.clone(),
        gamma: eig.gamma.clone(),
        warnings: eig.warnings.clone(),
    }
}
