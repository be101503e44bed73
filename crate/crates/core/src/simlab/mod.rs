//! Simulation design for size and power studies.
//!
//! Scores `χ_i` are drawn from `N(0, Σ)` or a scaled multivariate `t_6`,
//! where `diag Σ = vec(V)` and chosen off-diagonals break weak
//! separability. Surfaces are `X_i = ∑ χ_{i,jk} ψ_j(s) φ_k(t)` on a
//! 20-point grid, and each trial is tested at level `α`.

mod basis;
mod sampler;
mod scenario;
mod sigma;
mod vmatrix;

pub use basis::{
    bspline_basis, bspline_columns, build_phi, gram_schmidt, trig_columns, trig_psi, trig_raw, SimBasis, GRID_LEN,
    KNOTS, N_BASIS, SPLINE_ORDER,
};
pub use sampler::{sample_scores, synthesize_surfaces, BoxMuller, Distribution, T_DOF};
pub use scenario::{
    run_row, run_scenario, run_study, standard_pk_rules, trial_data, trial_rng, CellResult, PkChoice, RejectionTable,
    RunSettings, ScenarioRow, SimulationScenario, StudySpec, TableRow, TestMethod, DEFAULT_SEED, GENERATOR,
};
pub use sigma::{assemble_sigma, flat, max_pd_cov, triple_covariances, OffDiagonal, PairSet, TRIPLE_PAIRS};
pub use vmatrix::{build_v, sim_gamma, sim_lambda, VMatrix, Variant, V2_TILT};
