//! Plug-in estimates of the covariance `Θ` of the stacked `T_n`.
//!
//! Each stacked entry is a sum of terms whose per-subject contributions are
//! products of scores, so `Θ[u,v]` is a fourth moment of the scores. The
//! influence route forms per-subject sums `Y_i(u)` first; the nine-case
//! route expands every pair of terms into explicit fourth moments `β̂` and
//! is kept as a slow, independent check.

use nalgebra::DMatrix;

use super::terms::{influence_values, Factor, Term, TermDecomposition};
use crate::error::{Error, Result};
use crate::marginal_fpca::ScoreArray;

/// Symmetric `m × m` estimate of `Θ`.
#[derive(Debug, Clone)]
pub struct ThetaMatrix {
    matrix: DMatrix<f64>,
    truncation: (usize, usize),
}

impl ThetaMatrix {
    pub fn new(matrix: DMatrix<f64>, truncation: (usize, usize)) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!(
                "Θ must be square, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix, truncation })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Implied-sum bounds `(M_S, M_T)` used to build the estimate.
    pub fn truncation(&self) -> (usize, usize) {
        self.truncation
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `tr(Θ²)`, the squared Frobenius norm of a symmetric matrix.
    pub fn trace_sq(&self) -> f64 {
        self.matrix.iter().map(|x| x * x).sum()
    }
}

/// `Θ̂[u,v] = (1/n) ∑_i Y_i(u) Y_i(v)` with `Y_i(u)` the summed influence
/// values of the terms of entry `u`.
pub fn theta_influence(scores: &ScoreArray, decomp: &TermDecomposition) -> Result<ThetaMatrix> {
    let n = scores.n();
    let m = decomp.len();
    let truncation = decomp.truncation();
    let mut y = DMatrix::<f64>::zeros(n, m);
    for (u, terms) in decomp.terms().iter().enumerate() {
        for term in terms {
            let g = influence_values(scores, term, truncation)?;
            for (i, gi) in g.into_iter().enumerate() {
                y[(i, u)] += gi;
            }
        }
    }
    let mut theta = y.tr_mul(&y);
    if n > 0 {
        theta /= n as f64;
    }
    // exact symmetry regardless of the multiplication kernel
    let theta = (&theta + theta.transpose()) * 0.5;
    ThetaMatrix::new(theta, truncation)
}

/// Empirical fourth moment `β̂ = (1/n) ∑_i χ̂_{i,a1 b1} χ̂_{i,a2 b2} χ̂_{i,a3 b3} χ̂_{i,a4 b4}`.
fn beta(scores: &ScoreArray, idx: [(usize, usize); 4]) -> f64 {
    let n = scores.n();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|i| idx.iter().map(|&(a, b)| scores.chi(i, a, b)).product::<f64>())
        .sum();
    total / n as f64
}

/// `E[g_p g_q] / (coef_p coef_q)` for two terms, by case.
fn case_moment(scores: &ScoreArray, p: &Term, q: &Term, m_s: usize, m_t: usize) -> Result<f64> {
    use Factor::{Identity as Id, Pair};
    let value = match (p.s, p.t, q.s, q.t) {
        // Case 1: all four sides explicit
        (Pair(j1, j1b), Pair(k1, k1b), Pair(j2, j2b), Pair(k2, k2b)) => {
            beta(scores, [(j1, k1), (j1b, k1b), (j2, k2), (j2b, k2b)])
        }
        // Case 2: identity on the first s-side
        (Id, Pair(k1, k1b), Pair(j2, j2b), Pair(k2, k2b)) => (0..m_s)
            .map(|m| beta(scores, [(m, k1), (m, k1b), (j2, k2), (j2b, k2b)]))
            .sum(),
        // Case 3: identity on the first t-side
        (Pair(j1, j1b), Id, Pair(j2, j2b), Pair(k2, k2b)) => (0..m_t)
            .map(|m| beta(scores, [(j1, m), (j1b, m), (j2, k2), (j2b, k2b)]))
            .sum(),
        // Case 4: identity on the second s-side
        (Pair(j1, j1b), Pair(k1, k1b), Id, Pair(k2, k2b)) => (0..m_s)
            .map(|m| beta(scores, [(j1, k1), (j1b, k1b), (m, k2), (m, k2b)]))
            .sum(),
        // Case 5: identity on the second t-side
        (Pair(j1, j1b), Pair(k1, k1b), Pair(j2, j2b), Id) => (0..m_t)
            .map(|m| beta(scores, [(j1, k1), (j1b, k1b), (j2, m), (j2b, m)]))
            .sum(),
        // Case 6: both s-sides identity
        (Id, Pair(k1, k1b), Id, Pair(k2, k2b)) => {
            let mut acc = 0.0;
            for m in 0..m_s {
                for m2 in 0..m_s {
                    acc += beta(scores, [(m, k1), (m, k1b), (m2, k2), (m2, k2b)]);
                }
            }
            acc
        }
        // Case 7: first s-side and second t-side identity
        (Id, Pair(k1, k1b), Pair(j2, j2b), Id) => {
            let mut acc = 0.0;
            for m in 0..m_s {
                for m2 in 0..m_t {
                    acc += beta(scores, [(m, k1), (m, k1b), (j2, m2), (j2b, m2)]);
                }
            }
            acc
        }
        // Case 8: first t-side and second s-side identity
        (Pair(j1, j1b), Id, Id, Pair(k2, k2b)) => {
            let mut acc = 0.0;
            for m in 0..m_t {
                for m2 in 0..m_s {
                    acc += beta(scores, [(j1, m), (j1b, m), (m2, k2), (m2, k2b)]);
                }
            }
            acc
        }
        // Case 9: both t-sides identity
        (Pair(j1, j1b), Id, Pair(j2, j2b), Id) => {
            let mut acc = 0.0;
            for m in 0..m_t {
                for m2 in 0..m_t {
                    acc += beta(scores, [(j1, m), (j1b, m), (j2, m2), (j2b, m2)]);
                }
            }
            acc
        }
        _ => {
            return Err(Error::InvalidInput(
                "a term needs at least one explicit pair".into(),
            ))
        }
    };
    Ok(value)
}

fn check_term(scores: &ScoreArray, term: &Term, m_s: usize, m_t: usize) -> Result<()> {
    let in_range = |f: Factor, limit: usize| match f {
        Factor::Pair(a, b) => a < limit && b < limit,
        Factor::Identity => true,
    };
    if m_s > scores.p() || m_t > scores.k() || !in_range(term.s, scores.p()) || !in_range(term.t, scores.k()) {
        return Err(Error::InvalidInput(format!(
            "term {term:?} with truncation ({m_s}, {m_t}) exceeds available scores"
        )));
    }
    Ok(())
}

/// Slow reference estimate of `Θ` by literal enumeration of the nine
/// combinations of explicit and identity sides.
pub fn theta_ninecase(scores: &ScoreArray, decomp: &TermDecomposition) -> Result<ThetaMatrix> {
    let (m_s, m_t) = decomp.truncation();
    for term in decomp.terms().iter().flatten() {
        check_term(scores, term, m_s, m_t)?;
    }
    let m = decomp.len();
    let mut theta = DMatrix::<f64>::zeros(m, m);
    for u in 0..m {
        for v in u..m {
            let mut acc = 0.0;
            for p in &decomp.terms()[u] {
                for q in &decomp.terms()[v] {
                    acc += p.coef * q.coef * case_moment(scores, p, q, m_s, m_t)?;
                }
            }
            theta[(u, v)] = acc;
            theta[(v, u)] = acc;
        }
    }
    ThetaMatrix::new(theta, (m_s, m_t))
}
