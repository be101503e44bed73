use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::marginal_fpca::ScoreArray;

/// Index `(j, k, j′, k′)` of one cross-moment, zero-based, with
/// `j·K + k < j′·K + k′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct QuadrupleIndex {
    pub j: usize,
    pub k: usize,
    pub j2: usize,
    pub k2: usize,
}

impl fmt::Display for QuadrupleIndex {
    /// One-based, as usually written.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.j + 1, self.k + 1, self.j2 + 1, self.k2 + 1)
    }
}

/// All ordered quadruples for a `P × K` truncation, in stacking order.
pub fn quadruples(p: usize, k: usize) -> Vec<QuadrupleIndex> {
    let pk = p * k;
    let mut out = Vec::with_capacity(pk * pk.saturating_sub(1) / 2);
    for a in 0..pk {
        for b in a + 1..pk {
            out.push(QuadrupleIndex {
                j: a / k,
                k: a % k,
                j2: b / k,
                k2: b % k,
            });
        }
    }
    out
}

/// Stacked `T_n` values.
#[derive(Debug, Clone)]
pub struct TnVector {
    p: usize,
    k: usize,
    values: Vec<f64>,
    index: Vec<QuadrupleIndex>,
}

impl TnVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self) -> &[QuadrupleIndex] {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.p, self.k)
    }

    /// `T_n(j,k,j′,k′)` for either ordering of the two pairs.
    pub fn get(&self, j: usize, k: usize, j2: usize, k2: usize) -> Option<f64> {
        let pk = self.p * self.k;
        let (mut a, mut b) = (j * self.k + k, j2 * self.k + k2);
        if j >= self.p || j2 >= self.p || k >= self.k || k2 >= self.k || a == b {
            return None;
        }
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let pos = a * (2 * pk - a - 1) / 2 + (b - a - 1);
        self.values.get(pos).copied()
    }
}

/// `n^{-1/2} ∑_i χ̂_{i,jk} χ̂_{i,j′k′}` for one pair of score indices, in
/// whichever order they are given.
pub fn tn_entry(scores: &ScoreArray, j: usize, k: usize, j2: usize, k2: usize) -> f64 {
    let n = scores.n();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = (0..n).map(|i| scores.chi(i, j, k) * scores.chi(i, j2, k2)).sum();
    sum / (n as f64).sqrt()
}

/// Stacked `T_n` over every ordered quadruple of the leading `P × K` block.
pub fn tn_vector(scores: &ScoreArray, p: usize, k: usize) -> Result<TnVector> {
    if p * k < 2 {
        return Err(Error::NothingToTest);
    }
    if p > scores.p() || k > scores.k() {
        return Err(Error::InvalidInput(format!(
            "scores cover {}×{}, need {p}×{k}",
            scores.p(),
            scores.k()
        )));
    }
    let index = quadruples(p, k);
    let values = index
        .iter()
        .map(|q| tn_entry(scores, q.j, q.k, q.j2, q.k2))
        .collect();
    Ok(TnVector {
        p,
        k,
        values,
        index,
    })
}

/// `S_n`, the sum of squares of the stacked `T_n`.
pub fn sn_statistic(t: &TnVector) -> f64 {
    t.values.iter().map(|v| v * v).sum()
}

#[cfg(test)]
fn from_parts(p: usize, k: usize, values: Vec<f64>) -> TnVector {
    TnVector {
        p,
        k,
        index: quadruples(p, k),
        values,
    }
}
