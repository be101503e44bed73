//! Linearization of each `T_n` entry into trace terms.
//!
//! Replacing estimated eigenfunctions by their first-order expansions turns
//! `T_n(j,k,j′,k′)` into a sum of traces `tr[(A_1 ⊗̃ A_2) Z_n]`, where each
//! `A` is either a rank-one pair `e_a ⊗ e_b` or the identity. Same-`j`
//! entries pick up two `φ̂` corrections and same-`k` entries two `ψ̂`
//! corrections, with eigengap reciprocals as coefficients.

use serde::Serialize;

use super::tn::{quadruples, QuadrupleIndex};
use crate::error::{Error, Result};
use crate::marginal_fpca::{MarginalEigenSystem, ScoreArray, EIGENGAP_TOL};

/// One side of a term: a rank-one pair `e_a ⊗ e_b` or the identity, whose
/// contraction sums over every retained component of that axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Factor {
    Identity,
    Pair(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub s: Factor,
    pub t: Factor,
    pub coef: f64,
}

/// How [`term_decomposition`] reacts to a near-tie among leading
/// eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GapPolicy {
    /// Fail with an error naming the pair.
    Strict,
    /// Warn, and drop correction terms whose coefficient is not finite.
    #[default]
    Lenient,
}

#[derive(Debug, Clone)]
pub struct TermDecomposition {
    p: usize,
    k: usize,
    m_s: usize,
    m_t: usize,
    index: Vec<QuadrupleIndex>,
    terms: Vec<Vec<Term>>,
    warnings: Vec<String>,
}

impl TermDecomposition {
    pub fn dims(&self) -> (usize, usize) {
        (self.p, self.k)
    }

    /// Implied-sum bounds `(M_S, M_T)`.
    pub fn truncation(&self) -> (usize, usize) {
        (self.m_s, self.m_t)
    }

    pub fn index(&self) -> &[QuadrupleIndex] {
        &self.index
    }

    /// Terms of each stacked entry, aligned with [`Self::index`].
    pub fn terms(&self) -> &[Vec<Term>] {
        &self.terms
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Assemble from explicit parts; used to test the Θ estimators on
    /// hand-made term lists.
    pub fn from_terms(
        p: usize,
        k: usize,
        truncation: (usize, usize),
        terms: Vec<Vec<Term>>,
    ) -> Result<Self> {
        let index = quadruples(p, k);
        if index.len() != terms.len() {
            return Err(Error::Dimension(format!(
                "{} term lists for {} entries",
                terms.len(),
                index.len()
            )));
        }
        Ok(Self {
            p,
            k,
            m_s: truncation.0,
            m_t: truncation.1,
            index,
            terms,
            warnings: Vec::new(),
        })
    }
}

fn check_gaps(
    values: &[f64],
    upto: usize,
    axis: &'static str,
    policy: GapPolicy,
    warnings: &mut Vec<String>,
) -> Result<()> {
    let lead = values.first().copied().unwrap_or(0.0);
    for j in 1..upto.min(values.len()) {
        if values[j - 1] - values[j] < EIGENGAP_TOL * lead {
            match policy {
                GapPolicy::Strict => {
                    return Err(Error::Eigengap {
                        axis,
                        first: j,
                        second: j + 1,
                    })
                }
                GapPolicy::Lenient => warnings.push(format!(
                    "near-degenerate eigengap between {axis} components {j} and {}",
                    j + 1
                )),
            }
        }
    }
    Ok(())
}

/// Term lists for every ordered quadruple of the leading `P × K` block,
/// with plug-in `η̂`, `λ̂` and `γ̂` coefficients.
pub fn term_decomposition(
    eig: &MarginalEigenSystem,
    scores: &ScoreArray,
    p: usize,
    k: usize,
    policy: GapPolicy,
) -> Result<TermDecomposition> {
    if p * k < 2 {
        return Err(Error::NothingToTest);
    }
    if p > scores.p() || k > scores.k() || p > eig.p_max() || k > eig.k_max() {
        return Err(Error::InvalidInput(format!(
            "(P, K) = ({p}, {k}) exceeds the available components"
        )));
    }
    let mut warnings = Vec::new();
    check_gaps(eig.lambda(), p, "s", policy, &mut warnings)?;
    check_gaps(eig.gamma(), k, "t", policy, &mut warnings)?;

    let (m_s, m_t) = eig.truncation();
    let (m_s, m_t) = (m_s.min(scores.p()), m_t.min(scores.k()));
    let lambda = eig.lambda();
    let gamma = eig.gamma();
    let index = quadruples(p, k);
    let mut dropped = 0usize;
    let terms = index
        .iter()
        .map(|q| {
            let (j, c, j2, c2) = (q.j, q.k, q.j2, q.k2);
            if j != j2 && c != c2 {
                return vec![Term {
                    s: Factor::Pair(j, j2),
                    t: Factor::Pair(c, c2),
                    coef: 1.0,
                }];
            }
            let mut out = Vec::with_capacity(3);
            let corrections = if j == j2 {
                out.push(Term {
                    s: Factor::Pair(j, j),
                    t: Factor::Pair(c, c2),
                    coef: 1.0,
                });
                [
                    Term {
                        s: Factor::Identity,
                        t: Factor::Pair(c, c2),
                        coef: scores.eta(j, c2) / (gamma[c] - gamma[c2]),
                    },
                    Term {
                        s: Factor::Identity,
                        t: Factor::Pair(c2, c),
                        coef: scores.eta(j, c) / (gamma[c2] - gamma[c]),
                    },
                ]
            } else {
                out.push(Term {
                    s: Factor::Pair(j, j2),
                    t: Factor::Pair(c, c),
                    coef: 1.0,
                });
                [
                    Term {
                        s: Factor::Pair(j2, j),
                        t: Factor::Identity,
                        coef: scores.eta(j, c) / (lambda[j2] - lambda[j]),
                    },
                    Term {
                        s: Factor::Pair(j, j2),
                        t: Factor::Identity,
                        coef: scores.eta(j2, c) / (lambda[j] - lambda[j2]),
                    },
                ]
            };
            for t in corrections {
                if t.coef.is_finite() {
                    out.push(t);
                } else {
                    dropped += 1;
                }
            }
            out
        })
        .collect();
    if dropped > 0 {
        warnings.push(format!(
            "{dropped} correction terms dropped for non-finite eigengap coefficients"
        ));
    }
    Ok(TermDecomposition {
        p,
        k,
        m_s,
        m_t,
        index,
        terms,
        warnings,
    })
}

fn check_factor(f: Factor, limit: usize, axis: &str) -> Result<()> {
    if let Factor::Pair(a, b) = f {
        if a >= limit || b >= limit {
            return Err(Error::InvalidInput(format!(
                "{axis}-pair ({a}, {b}) outside the {limit} available scores"
            )));
        }
    }
    Ok(())
}

/// Per-subject contribution `g_i` of one term, with identity sides summed
/// over the first `M_S` (or `M_T`) components.
pub fn influence_values(scores: &ScoreArray, term: &Term, truncation: (usize, usize)) -> Result<Vec<f64>> {
    let (m_s, m_t) = truncation;
    if m_s > scores.p() || m_t > scores.k() {
        return Err(Error::InvalidInput(format!(
            "truncation ({m_s}, {m_t}) exceeds available scores ({}, {})",
            scores.p(),
            scores.k()
        )));
    }
    if term.s == Factor::Identity && term.t == Factor::Identity {
        return Err(Error::InvalidInput("a term needs at least one explicit pair".into()));
    }
    check_factor(term.s, scores.p(), "s")?;
    check_factor(term.t, scores.k(), "t")?;
    let coef = term.coef;
    let g = (0..scores.n())
        .map(|i| {
            let x = match (term.s, term.t) {
                (Factor::Pair(a, b), Factor::Pair(c, d)) => scores.chi(i, a, c) * scores.chi(i, b, d),
                (Factor::Identity, Factor::Pair(c, d)) => {
                    (0..m_s).map(|m| scores.chi(i, m, c) * scores.chi(i, m, d)).sum()
                }
                (Factor::Pair(a, b), Factor::Identity) => {
                    (0..m_t).map(|m| scores.chi(i, a, m) * scores.chi(i, b, m)).sum()
                }
                (Factor::Identity, Factor::Identity) => unreachable!(),
            };
            coef * x
        })
        .collect();
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagrid::{center, GridAxis, MultiwayDataset};
    use crate::marginal_fpca::{full_scores, marginal_fpca};

    fn small_scores() -> ScoreArray {
        // n = 2, P = K = 2
        ScoreArray::from_raw(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 0.5, -1.0, 2.0, -3.0]).unwrap()
    }

    #[test]
    fn explicit_pair_pairs_s_with_t() {
        let s = small_scores();
        let term = Term {
            s: Factor::Pair(0, 1),
            t: Factor::Pair(0, 1),
            coef: 1.0,
        };
        let g = influence_values(&s, &term, (2, 2)).unwrap();
        // χ_{i,11} χ_{i,22}
        assert_eq!(g, vec![1.0 * 4.0, 0.5 * -3.0]);
    }

    #[test]
    fn identity_side_unrolls() {
        let s = small_scores();
        let term = Term {
            s: Factor::Identity,
            t: Factor::Pair(0, 1),
            coef: 1.0,
        };
        let g = influence_values(&s, &term, (2, 2)).unwrap();
        assert_eq!(g, vec![1.0 * 2.0 + 3.0 * 4.0, -0.5 + 2.0 * -3.0]);
        let term = Term {
            s: Factor::Pair(1, 0),
            t: Factor::Identity,
            coef: 2.0,
        };
        let g = influence_values(&s, &term, (2, 2)).unwrap();
        assert_eq!(g, vec![2.0 * (3.0 * 1.0 + 4.0 * 2.0), 2.0 * (2.0 * 0.5 + 3.0)]);
    }

    #[test]
    fn zero_coefficient_and_bounds() {
        let s = small_scores();
        let term = Term {
            s: Factor::Pair(0, 1),
            t: Factor::Identity,
            coef: 0.0,
        };
        assert!(influence_values(&s, &term, (2, 2)).unwrap().iter().all(|&g| g == 0.0));
        assert!(influence_values(&s, &term, (3, 2)).is_err());
        let far = Term {
            s: Factor::Pair(0, 2),
            t: Factor::Pair(0, 0),
            coef: 1.0,
        };
        assert!(influence_values(&s, &far, (2, 2)).is_err());
    }

    fn fitted() -> (MarginalEigenSystem, ScoreArray) {
        let (n, ns, nt) = (12, 5, 4);
        let values = (0..n * ns * nt)
            .map(|x| ((x * x) as f64 * 0.731).sin() + 0.3 * (x as f64 * 0.19).cos())
            .collect();
        let d = MultiwayDataset::new(n, GridAxis::uniform(ns).unwrap(), GridAxis::uniform(nt).unwrap(), values)
            .unwrap();
        let c = center(&d).unwrap();
        let eig = marginal_fpca(&c).unwrap();
        let s = full_scores(&c, &eig).unwrap();
        (eig, s)
    }

    #[test]
    fn three_cases() {
        let (eig, s) = fitted();
        let d = term_decomposition(&eig, &s, 2, 2, GapPolicy::Strict).unwrap();
        let lam = eig.lambda();
        let gam = eig.gamma();
        for (q, terms) in d.index().iter().zip(d.terms()) {
            match (q.j == q.j2, q.k == q.k2) {
                (false, false) => {
                    assert_eq!(terms.len(), 1);
                    assert_eq!(terms[0].coef, 1.0);
                }
                (true, false) => {
                    assert_eq!(terms.len(), 3);
                    let (j, k, k2) = (q.j, q.k, q.k2);
                    assert_eq!(terms[1].coef, s.eta(j, k2) / (gam[k] - gam[k2]));
                    assert_eq!(terms[2].coef, s.eta(j, k) / (gam[k2] - gam[k]));
                    assert_eq!(terms[1].s, Factor::Identity);
                }
                (false, true) => {
                    assert_eq!(terms.len(), 3);
                    let (j, j2, k) = (q.j, q.j2, q.k);
                    assert_eq!(terms[1].coef, s.eta(j, k) / (lam[j2] - lam[j]));
                    assert_eq!(terms[2].coef, s.eta(j2, k) / (lam[j] - lam[j2]));
                    assert_eq!(terms[1].t, Factor::Identity);
                }
                (true, true) => unreachable!(),
            }
        }
    }

    #[test]
    fn strict_policy_rejects_ties() {
        let axis = GridAxis::new(vec![0.0, 1.0, 2.0], vec![1.0; 3]).unwrap();
        let c = nalgebra::DMatrix::identity(3, 3);
        let eig = crate::marginal_fpca::eigendecompose_marginals(&c, &c, &axis, &axis, 10).unwrap();
        let s = ScoreArray::from_raw(3, 3, 3, (0..27).map(|x| x as f64).collect()).unwrap();
        let err = term_decomposition(&eig, &s, 2, 2, GapPolicy::Strict).unwrap_err();
        assert!(matches!(err, Error::Eigengap { axis: "s", first: 1, second: 2 }));
        let lenient = term_decomposition(&eig, &s, 2, 2, GapPolicy::Lenient).unwrap();
        assert!(!lenient.warnings().is_empty());
        // exact ties: only the leading term of each same-index entry remains
        assert!(lenient.terms().iter().all(|t| t.len() == 1));
    }
}
