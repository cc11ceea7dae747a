//! Combining rules for tests computed on multiply imputed datasets.
//!
//! * [`rubin_scalar`]: Rubin's rule for a scalar estimate and its variance.
//! * [`combine_f_fractional`]: F tests reported as numerator/denominator mean
//!   squares, pooled through harmonic-mean precision terms.
//! * [`combine_chisq`]: chi-square statistics, treated as mean squares with
//!   unit expectation (`s = Λ/ν`).
//! * [`welch_to_fractional`], [`sfa_transform`], [`lrt_record`]: adapters
//!   that turn Welch, Type-III F and likelihood-ratio results into records
//!   the two combiners accept.

use std::fmt;

use crate::analyzers::{FractionalFRecord, WelchResult};
use crate::error::{Error, Result};
use crate::specfun::{chisq_pvalue, f_pvalue, Probability};

/// Rubin's-rule summary of a scalar estimand.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledScalar {
    pub q_bar: f64,
    pub w_bar: f64,
    pub b: f64,
    pub t_total: f64,
    /// Reference t df; infinite when the between-imputation variance is zero.
    pub nu_m: f64,
    pub m: usize,
}

impl PooledScalar {
    /// Two-sided p-value for `H0: Q = q0` against the `t(nu_m)` reference.
    pub fn p_value(&self, q0: f64) -> Result<Probability> {
        let t = (q0 - self.q_bar) / self.t_total.sqrt();
        if self.nu_m.is_infinite() {
            // t(inf) = N(0,1); t^2 ~ chi-square(1)
            return chisq_pvalue(t * t, 1.0);
        }
        f_pvalue(t * t, 1.0, self.nu_m)
    }
}

/// Rubin's rule: `T = W̄ + (1 + 1/M) B`,
/// `ν_M = (M-1) [1 + W̄ / ((1 + 1/M) B)]^2`.
pub fn rubin_scalar(estimates: &[f64], variances: &[f64]) -> Result<PooledScalar> {
    if estimates.len() != variances.len() {
        return Err(Error::InvalidArgument(format!(
            "{} estimates but {} variances",
            estimates.len(),
            variances.len()
        )));
    }
    let m = estimates.len();
    if m < 2 {
        return Err(Error::InsufficientImputations(m));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("variance {v} must be >= 0")));
    }
    let mf = m as f64;
    let q_bar = estimates.iter().sum::<f64>() / mf;
    let w_bar = variances.iter().sum::<f64>() / mf;
    let b = estimates.iter().map(|q| (q - q_bar).powi(2)).sum::<f64>() / (mf - 1.0);
    let inflated = (1.0 + 1.0 / mf) * b;
    let t_total = w_bar + inflated;
    let nu_m = if inflated > 0.0 {
        (mf - 1.0) * (1.0 + w_bar / inflated).powi(2)
    } else {
        f64::INFINITY
    };
    Ok(PooledScalar {
        q_bar,
        w_bar,
        b,
        t_total,
        nu_m,
        m,
    })
}

/// Harmonic-mean precision summaries of a set of mean squares:
/// `a = mean(1/s)`, `b_term = mean(1/(ν s^2))`, `c = var(1/s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionTriple {
    pub a: f64,
    pub b_term: f64,
    pub c: f64,
}

impl PrecisionTriple {
    /// Pooled df `2a^2 / (2 b_term + (M+1) c / M)`.
    pub fn pooled_df(&self, m: usize) -> f64 {
        let mf = m as f64;
        2.0 * self.a * self.a / (2.0 * self.b_term + (mf + 1.0) * self.c / mf)
    }
}

pub fn precision_triple(mean_squares: &[f64], dfs: &[f64], m: usize) -> Result<PrecisionTriple> {
    if mean_squares.len() != m || dfs.len() != m {
        return Err(Error::InvalidArgument(format!(
            "expected {m} mean squares and dfs, got {} and {}",
            mean_squares.len(),
            dfs.len()
        )));
    }
    if m == 0 {
        return Err(Error::InsufficientImputations(0));
    }
    if let Some(v) = mean_squares
        .iter()
        .chain(dfs)
        .find(|v| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::InvalidArgument(format!(
            "mean squares and dfs must be > 0, got {v}"
        )));
    }
    let mf = m as f64;
    let a = mean_squares.iter().map(|s| 1.0 / s).sum::<f64>() / mf;
    let b_term = mean_squares
        .iter()
        .zip(dfs)
        .map(|(s, nu)| 1.0 / (nu * s * s))
        .sum::<f64>()
        / mf;
    let c = if m > 1 {
        mean_squares
            .iter()
            .map(|s| (1.0 / s - a).powi(2))
            .sum::<f64>()
            / (mf - 1.0)
    } else {
        0.0
    };
    Ok(PrecisionTriple { a, b_term, c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    F,
    ChiSq,
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatKind::F => f.write_str("F"),
            StatKind::ChiSq => f.write_str("ChiSq"),
        }
    }
}

/// A pooled test. `df_den` is present exactly when `kind` is F.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedTest {
    pub source: String,
    pub kind: StatKind,
    pub statistic: f64,
    pub df_num: f64,
    pub df_den: Option<f64>,
    pub p_value: Probability,
    pub m: usize,
}

fn single_source<'a, I>(sources: I) -> Result<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut it = sources.into_iter();
    let first = it.next().ok_or(Error::InsufficientImputations(0))?;
    if let Some(other) = it.find(|s| *s != first) {
        return Err(Error::InvalidArgument(format!(
            "records mix sources '{first}' and '{other}'"
        )));
    }
    Ok(first.to_string())
}

/// Pools fractional-form F tests: `F_MI = A_D / A_N` on `(r_N, r_D)` df.
pub fn combine_f_fractional(records: &[FractionalFRecord]) -> Result<CombinedTest> {
    let source = single_source(records.iter().map(|r| r.source.as_str()))?;
    let m = records.len();
    let num_ms: Vec<f64> = records.iter().map(|r| r.num_ms).collect();
    let num_df: Vec<f64> = records.iter().map(|r| r.num_df).collect();
    let den_ms: Vec<f64> = records.iter().map(|r| r.den_ms).collect();
    let den_df: Vec<f64> = records.iter().map(|r| r.den_df).collect();
    let num = precision_triple(&num_ms, &num_df, m)?;
    let den = precision_triple(&den_ms, &den_df, m)?;
    let statistic = den.a / num.a;
    let df_num = num.pooled_df(m);
    let df_den = den.pooled_df(m);
    Ok(CombinedTest {
        p_value: f_pvalue(statistic, df_num, df_den)?,
        source,
        kind: StatKind::F,
        statistic,
        df_num,
        df_den: Some(df_den),
        m,
    })
}

/// One imputation's chi-square statistic `Λ` on `df` degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSqRecord {
    pub source: String,
    pub lambda: f64,
    pub df: f64,
    pub imputation: usize,
}

impl ChiSqRecord {
    pub fn new(source: impl Into<String>, lambda: f64, df: f64, imputation: usize) -> Result<Self> {
        let source = source.into();
        if !(lambda >= 0.0 && lambda.is_finite()) || !(df > 0.0 && df.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "chi-square record '{source}' (imputation {imputation}): statistic {lambda}, df {df}"
            )));
        }
        Ok(ChiSqRecord {
            source,
            lambda,
            df,
            imputation,
        })
    }
}

/// How the pooled chi-square statistic is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChiSqScaling {
    /// `r / a`, compared against chi-square(`r`).
    #[default]
    Macro,
    /// `1 / a`, compared against chi-square(`r`).
    Text,
}

/// Pools chi-square statistics via precision terms on `s = Λ/ν`.
pub fn combine_chisq(records: &[ChiSqRecord], scaling: ChiSqScaling) -> Result<CombinedTest> {
    let source = single_source(records.iter().map(|r| r.source.as_str()))?;
    if let Some(r) = records.iter().find(|r| r.lambda <= 0.0) {
        return Err(Error::ZeroStatistic {
            source_label: r.source.clone(),
            imputation: r.imputation,
            row: None,
        });
    }
    let m = records.len();
    let ms: Vec<f64> = records.iter().map(|r| r.lambda / r.df).collect();
    let dfs: Vec<f64> = records.iter().map(|r| r.df).collect();
    let triple = precision_triple(&ms, &dfs, m)?;
    let r = triple.pooled_df(m);
    let statistic = match scaling {
        ChiSqScaling::Macro => r / triple.a,
        ChiSqScaling::Text => 1.0 / triple.a,
    };
    Ok(CombinedTest {
        p_value: chisq_pvalue(statistic, r)?,
        source,
        kind: StatKind::ChiSq,
        statistic,
        df_num: r,
        df_den: None,
        m,
    })
}

/// Splits a Welch F into numerator and denominator mean squares:
/// `den_ms = 1 + 2(k-2)/(3γ)` on γ df and `num_ms = F · den_ms` on `k-1` df.
pub fn welch_to_fractional(
    result: &WelchResult,
    source: &str,
    imputation: usize,
) -> Result<FractionalFRecord> {
    if result.k < 2 || !(result.gamma > 0.0) || !(result.f_value >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid Welch result: k={}, gamma={}, F={}",
            result.k, result.gamma, result.f_value
        )));
    }
    if result.f_value == 0.0 {
        return Err(Error::ZeroNumerator {
            source_label: source.to_string(),
        });
    }
    let k = result.k as f64;
    let den_ms = 1.0 + 2.0 * (k - 2.0) / (3.0 * result.gamma);
    FractionalFRecord::new(
        source,
        result.f_value * den_ms,
        k - 1.0,
        den_ms,
        result.gamma,
        imputation,
    )
}

/// Which shrinking factor the F→chi-square approximation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SfaVariant {
    /// `(2ν₂ + ν₁x/3 + ν₁ - 2) / (2ν₂ + 4ν₁x/3)`
    #[default]
    Macro,
    /// `(2ν₂ + ν₁x/3) / (2ν₂ + 4ν₁x/3)`
    Text,
}

/// Shrinking factor λ for an `F(ν₁, ν₂)` value `x`.
pub fn shrinking_factor(x: f64, nu1: f64, nu2: f64, variant: SfaVariant) -> f64 {
    let extra = match variant {
        SfaVariant::Macro => nu1 - 2.0,
        SfaVariant::Text => 0.0,
    };
    (2.0 * nu2 + nu1 * x / 3.0 + extra) / (2.0 * nu2 + 4.0 * nu1 * x / 3.0)
}

/// Maps an `F(ν₁, ν₂)` value to the chi-square(ν₁) statistic `λ ν₁ x`.
pub fn sfa_transform(
    source: &str,
    imputation: usize,
    f_value: f64,
    nu1: u32,
    nu2: f64,
    variant: SfaVariant,
) -> Result<ChiSqRecord> {
    if !(f_value >= 0.0 && f_value.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "F value must be >= 0, got {f_value}"
        )));
    }
    if nu1 < 1 || !(nu2 > 0.0 && nu2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid F df ({nu1}, {nu2})"
        )));
    }
    let nu1f = f64::from(nu1);
    let statistic = if f_value == 0.0 {
        0.0
    } else {
        shrinking_factor(f_value, nu1f, nu2, variant) * nu1f * f_value
    };
    if statistic < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "negative shrinking factor for F={f_value}, df=({nu1}, {nu2})"
        )));
    }
    ChiSqRecord::new(source, statistic, nu1f, imputation)
}

/// Likelihood-ratio statistic `2 (l_full - l_reduced)` as a chi-square record.
pub fn lrt_record(
    loglik_full: f64,
    loglik_reduced: f64,
    df: u32,
    source: &str,
    imputation: usize,
) -> Result<ChiSqRecord> {
    const SLACK: f64 = 1e-8;
    if df < 1 {
        return Err(Error::InvalidArgument("LRT df must be >= 1".into()));
    }
    if !(loglik_full.is_finite() && loglik_reduced.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite log-likelihoods {loglik_full}, {loglik_reduced}"
        )));
    }
    if loglik_full < loglik_reduced - SLACK {
        return Err(Error::NestingViolation {
            full: loglik_full,
            reduced: loglik_reduced,
        });
    }
    let lambda = (2.0 * (loglik_full - loglik_reduced)).max(0.0);
    ChiSqRecord::new(source, lambda, f64::from(df), imputation)
}
