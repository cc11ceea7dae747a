//! Pooling F and chi-square test statistics across multiply imputed datasets.
//!
//! The crate covers the whole impute → analyze → pool loop:
//!
//! * [`specfun`]: incomplete beta/gamma, F and chi-square CDFs with real df,
//!   and per-imputation random streams.
//! * [`analyzers`]: Welch's ANOVA, one-way ANOVA and Levene's test.
//! * [`mixedmodel`]: ML fit of a repeated-measures model with unstructured
//!   covariance and Type-III Wald F tests.
//! * [`imputer`]: Bayesian regression imputation of one numeric column.
//! * [`pooling`]: Rubin's rule and the fractional-F / chi-square combiners,
//!   with adapters for Welch, Type-III F and likelihood-ratio results.
//! * [`cli`], [`table`], [`pipeline`]: CSV tables, the bundled example runs and
//!   the calibration harness used by the `mipool` binary.

pub mod analyzers;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod frame;
pub mod imputer;
pub mod mixedmodel;
pub mod pipeline;
pub mod pooling;
pub mod specfun;
pub mod table;

pub use error::{Error, Result};
