//! The weak-separability test.
//!
//! Under the null the marginal projection scores `χ_{jk}` are mutually
//! uncorrelated, so every cross-moment `T_n(j,k,j′,k′)` is centred. The test
//! statistic `S_n` is the sum of their squares and is referred either to a
//! moment-matched `β χ²_d` law built from a plug-in `Θ̂`, or to an
//! empirical bootstrap.

mod gamma;
mod mixture;
mod terms;
mod theta;
mod tn;

pub use gamma::{ln_gamma, regularized_gamma_q};
pub use mixture::{chi2_mixture_pvalue, welch_satterthwaite};
pub use terms::{influence_values, term_decomposition, Factor, GapPolicy, Term, TermDecomposition};
pub use theta::{theta_influence, theta_ninecase, ThetaMatrix};
pub use tn::{quadruples, sn_statistic, tn_entry, tn_vector, QuadrupleIndex, TnVector};


use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_pvalue, BootstrapConfig, BootstrapOutcome};
use crate::datagrid::{center, CenteredDataset, MultiwayDataset};
use crate::error::{Error, Result};
use crate::marginal_fpca::{full_scores, marginal_fpca, select_pk, MarginalEigenSystem, PkSelection, ScoreArray};

/// How `(P_n, K_n)` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PkRule {
    /// The 90/95 FVE rule.
    #[default]
    Fve,
    Fixed(usize, usize),
}

/// Estimator used for `Θ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaRoute {
    #[default]
    Influence,
    NineCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Chi2,
    Bootstrap(BootstrapConfig),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TestOptions {
    pub method: Method,
    pub pk: PkRule,
    pub theta: ThetaRoute,
}

/// Everything computed from one sample before a null approximation is
/// applied.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub centered: CenteredDataset,
    pub eig: MarginalEigenSystem,
    /// Scores out to the numerical rank of each axis.
    pub scores_full: ScoreArray,
    pub p: usize,
    pub k: usize,
    /// Present when the FVE rule chose `(p, k)`.
    pub selection: Option<PkSelection>,
    pub tn: TnVector,
    pub sn: f64,
    pub warnings: Vec<String>,
}

/// Centre, decompose, choose `(P, K)` and form `T_n`, `S_n`.
pub fn analyze(data: &MultiwayDataset, rule: PkRule) -> Result<Analysis> {
    let centered = center(data)?;
    let eig = marginal_fpca(&centered)?;
    analyze_with(centered, eig, rule)
}

/// As [`analyze`], from an already computed eigensystem.
pub fn analyze_with(centered: CenteredDataset, eig: MarginalEigenSystem, rule: PkRule) -> Result<Analysis> {
    let scores_full = full_scores(&centered, &eig)?;
    let (p, k, selection) = match rule {
        PkRule::Fve => {
            let sel = select_pk(&eig, &scores_full);
            (sel.p, sel.k, Some(sel))
        }
        PkRule::Fixed(p, k) => (p, k, None),
    };
    if p * k < 2 {
        return Err(Error::NothingToTest);
    }
    if p > scores_full.p() || k > scores_full.k() {
        return Err(Error::InvalidInput(format!(
            "(P, K) = ({p}, {k}) exceeds the numerical rank ({}, {})",
            scores_full.p(),
            scores_full.k()
        )));
    }
    let tn = tn_vector(&scores_full, p, k)?;
    let sn = sn_statistic(&tn);
    let warnings = eig.warnings().to_vec();
    Ok(Analysis {
        centered,
        eig,
        scores_full,
        p,
        k,
        selection,
        tn,
        sn,
        warnings,
    })
}

/// Serialized outcome of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `"chi2-mixture"` or `"bootstrap"`.
    pub method: String,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "S_n")]
    pub s_n: f64,
    pub trace_theta: Option<f64>,
    pub trace_theta_sq: Option<f64>,
    pub beta: Option<f64>,
    pub d: Option<f64>,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_replicates: Option<usize>,
    pub warnings: Vec<String>,
}

/// `Θ̂` for an analysed sample.
pub fn estimate_theta(analysis: &Analysis, route: ThetaRoute) -> Result<(ThetaMatrix, Vec<String>)> {
    let decomp = term_decomposition(
        &analysis.eig,
        &analysis.scores_full,
        analysis.p,
        analysis.k,
        GapPolicy::Lenient,
    )?;
    let theta = match route {
        ThetaRoute::Influence => theta_influence(&analysis.scores_full, &decomp)?,
        ThetaRoute::NineCase => theta_ninecase(&analysis.scores_full, &decomp)?,
    };
    Ok((theta, decomp.warnings().to_vec()))
}

/// χ²-mixture p-value for an analysed sample.
pub fn chi2_test(analysis: &Analysis, route: ThetaRoute) -> Result<TestResult> {
    let (theta, extra) = estimate_theta(analysis, route)?;
    let (beta, d) = welch_satterthwaite(&theta)?;
    let p_value = chi2_mixture_pvalue(analysis.sn, beta, d)?;
    let mut warnings = analysis.warnings.clone();
    warnings.extend(extra);
    Ok(TestResult {
        method: "chi2-mixture".into(),
        p: analysis.p,
        k: analysis.k,
        s_n: analysis.sn,
        trace_theta: Some(theta.trace()),
        trace_theta_sq: Some(theta.trace_sq()),
        beta: Some(beta),
        d: Some(d),
        p_value,
        bootstrap_replicates: None,
        warnings,
    })
}

/// Full test on raw data.
pub fn run_test(data: &MultiwayDataset, options: &TestOptions) -> Result<TestResult> {
    if data.n() < 3 {
        return Err(Error::InvalidInput(format!(
            "the test needs at least three subjects, got {}",
            data.n()
        )));
    }
    let analysis = analyze(data, options.pk)?;
    match options.method {
        Method::Chi2 => chi2_test(&analysis, options.theta),
        Method::Bootstrap(cfg) => bootstrap_test(data, &analysis, &cfg).map(|(r, _)| r),
    }
}

/// Bootstrap p-value for an analysed sample, with the replicate statistics.
pub fn bootstrap_test(
    data: &MultiwayDataset,
    analysis: &Analysis,
    cfg: &BootstrapConfig,
) -> Result<(TestResult, BootstrapOutcome)> {
    let boot = bootstrap_pvalue(data, analysis, cfg)?;
    let result = TestResult {
        method: "bootstrap".into(),
        p: analysis.p,
        k: analysis.k,
        s_n: analysis.sn,
        trace_theta: None,
        trace_theta_sq: None,
        beta: None,
        d: None,
        p_value: boot.p_value,
        bootstrap_replicates: Some(cfg.replicates),
        warnings: analysis.warnings.clone(),
    };
    Ok((result, boot))
}
