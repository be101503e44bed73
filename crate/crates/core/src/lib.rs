//! Weak-separability testing for multi-way functional data on dense grids.
//!
//! Data are `n` surfaces `X_i(s, t)` sampled on a spatial and a temporal
//! grid. The covariance is weakly separable when the projections of
//! `X − μ` onto products of marginal eigenfunctions `ψ_j ⊗ φ_k` are mutually
//! uncorrelated. [`weaksep_test::run_test`] tests this from a sample; the
//! [`simlab`] module reproduces the standard simulation design.
//!
//! ```no_run
//! use weaksep::datagrid::{load_dataset, Format};
//! use weaksep::weaksep_test::{run_test, TestOptions};
//!
//! let data = load_dataset("surfaces.mwfd", Format::Binary)?;
//! let result = run_test(&data, &TestOptions::default())?;
//! println!("p = {}", result.p_value);
//! # Ok::<(), weaksep::Error>(())
//! ```

pub mod bootstrap;
pub mod datagrid;
mod error;
pub mod marginal_fpca;
pub mod plv;
pub mod simlab;
pub mod weaksep_test;

pub use error::{Error, Result};
