//! Empirical bootstrap for the null law of `S_n`.
//!
//! Subjects are resampled with replacement and the whole estimation
//! pipeline is rerun. Each resampled eigenfunction is sign-aligned with its
//! original, and the replicate statistic is centred at the original `T_n`:
//! `S_n* = ∑ (T_n* − T_n)²`. `(P, K)` stay at their original values.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datagrid::{center, MultiwayDataset};
use crate::error::{Error, Result};
use crate::marginal_fpca::{full_scores, marginal_covariances, eigendecompose_marginals, TRUNCATION_TOL};
use crate::weaksep_test::{tn_vector, Analysis};

/// Retries allowed per replicate when a resample is rank deficient.
pub const MAX_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    /// Number of replicates `B`.
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0x5EED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub p_value: f64,
    /// `S_n*` in replicate order.
    pub statistics: Vec<f64>,
}

/// `candidate`, or its negation when its weighted inner product with
/// `reference` is negative. Ties keep the candidate.
pub fn align_sign(candidate: &[f64], reference: &[f64], weights: &[f64]) -> Vec<f64> {
    let ip: f64 = candidate
        .iter()
        .zip(reference)
        .zip(weights)
        .map(|((c, r), w)| c * r * w)
        .sum();
    if ip < 0.0 {
        candidate.iter().map(|c| -c).collect()
    } else {
        candidate.to_vec()
    }
}

/// `S_n*` for one resample given by subject `indices`, or `None` when the
/// resample cannot support the original `(P, K)`.
pub fn replicate_statistic(data: &MultiwayDataset, analysis: &Analysis, indices: &[usize]) -> Result<Option<f64>> {
    let (p, k) = (analysis.p, analysis.k);
    let sample = data.select_subjects(indices)?;
    let centered = center(&sample)?;
    let (c_s, c_t) = marginal_covariances(&centered);
    let mut eig = match eigendecompose_marginals(&c_s, &c_t, centered.s_axis(), centered.t_axis(), centered.n()) {
        Ok(e) => e,
        Err(Error::InvalidInput(_)) | Err(Error::Eigen(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    // rank collapse, judged both within the resample and against the
    // original scale (a resample of one subject is zero up to rounding)
    let (m_s, m_t) = eig.truncation();
    if m_s < p
        || m_t < k
        || eig.lambda()[p - 1] <= TRUNCATION_TOL * analysis.eig.lambda()[0]
        || eig.gamma()[k - 1] <= TRUNCATION_TOL * analysis.eig.gamma()[0]
    {
        return Ok(None);
    }
    eig.align_to(&analysis.eig, p, k);
    let scores = full_scores(&centered, &eig)?;
    let tn = tn_vector(&scores, p, k)?;
    let s = tn
        .values()
        .iter()
        .zip(analysis.tn.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(Some(s))
}

/// Share of replicate statistics strictly larger than `sn`.
pub fn pvalue_from_statistics(sn: f64, statistics: &[f64]) -> f64 {
    if statistics.is_empty() {
        return 1.0;
    }
    statistics.iter().filter(|&&s| s > sn).count() as f64 / statistics.len() as f64
}

fn replicate_rng(seed: u64, replicate: usize, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 | ((attempt as u64) << 48));
    rng
}

/// Bootstrap p-value for an analysed sample. Replicates run in parallel;
/// each owns an RNG stream derived from the seed and its index.
pub fn bootstrap_pvalue(data: &MultiwayDataset, analysis: &Analysis, cfg: &BootstrapConfig) -> Result<BootstrapOutcome> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    let n = data.n();
    let statistics = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..=MAX_RETRIES {
                let mut rng = replicate_rng(cfg.seed, b, attempt);
                let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                if let Some(s) = replicate_statistic(data, analysis, &indices)? {
                    return Ok(s);
                }
            }
            Err(Error::DegenerateResample {
                replicate: b,
                attempts: MAX_RETRIES + 1,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapOutcome {
        p_value: pvalue_from_statistics(analysis.sn, &statistics),
        statistics,
    })
}

/// Write replicate statistics as `replicate,S_n_star`.
pub fn write_statistics_csv<W: Write>(statistics: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replicate", "S_n_star"])?;
    for (b, s) in statistics.iter().enumerate() {
        out.write_record([b.to_string(), format!("{s:e}")])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagrid::GridAxis;
    use crate::weaksep_test::{analyze, PkRule};

    fn data(n: usize) -> MultiwayDataset {
        let (ns, nt) = (5, 4);
        let values = (0..n * ns * nt)
            .map(|x| ((x as f64) * 0.771).sin() + ((x * x) as f64 * 0.013).cos())
            .collect();
        MultiwayDataset::new(n, GridAxis::uniform(ns).unwrap(), GridAxis::uniform(nt).unwrap(), values).unwrap()
    }

    #[test]
    fn align_sign_rules() {
        let w = [0.5, 0.5];
        assert_eq!(align_sign(&[-1.0, 2.0], &[1.0, -2.0], &w), vec![1.0, -2.0]);
        assert_eq!(align_sign(&[1.0, -2.0], &[1.0, -2.0], &w), vec![1.0, -2.0]);
        assert_eq!(align_sign(&[1.0, 0.0], &[0.0, 1.0], &w), vec![1.0, 0.0]);
    }

    #[test]
    fn identity_resample_reproduces_tn() {
        let d = data(10);
        let a = analyze(&d, PkRule::Fixed(2, 2)).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let s = replicate_statistic(&d, &a, &idx).unwrap().unwrap();
        assert_eq!(s, 0.0);
        assert_eq!(pvalue_from_statistics(a.sn, &[s]), 0.0);
    }

    #[test]
    fn deterministic_and_on_lattice() {
        let d = data(12);
        let a = analyze(&d, PkRule::Fixed(2, 2)).unwrap();
        let cfg = BootstrapConfig { replicates: 40, seed: 9 };
        let x = bootstrap_pvalue(&d, &a, &cfg).unwrap();
        let y = bootstrap_pvalue(&d, &a, &cfg).unwrap();
        assert_eq!(x.statistics, y.statistics);
        assert_eq!(x.p_value.to_bits(), y.p_value.to_bits());
        assert_eq!((x.p_value * 40.0).fract(), 0.0);
        let mut buf = Vec::new();
        write_statistics_csv(&x.statistics, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 41);
    }

    #[test]
    fn collapsed_resample_is_rejected() {
        let d = data(10);
        let a = analyze(&d, PkRule::Fixed(2, 2)).unwrap();
        // a single repeated subject leaves nothing after centring
        let idx = [3; 10];
        assert_eq!(replicate_statistic(&d, &a, &idx).unwrap(), None);
    }
}
