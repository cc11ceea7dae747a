//! Special functions and distribution CDFs with real-valued degrees of freedom.
//!
//! The pooled tests produce non-integer (and sometimes sub-unit) degrees of
//! freedom, so everything here works on `f64` shape parameters. The incomplete
//! beta uses a modified-Lentz continued fraction with the usual symmetry
//! switch at `x = (a+1)/(a+b+2)`; the incomplete gamma switches from series to
//! continued fraction at `x = a+1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    /// Clamps tiny excursions caused by rounding; rejects NaN.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || !(-1e-12..=1.0 + 1e-12).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "probability out of range: {value}"
            )));
        }
        Ok(Probability(value.clamp(0.0, 1.0)))
    }

    fn clamped(value: f64) -> Self {
        Probability(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Upper-tail p-value from a CDF value. CDFs above `1 - 1e-15` report 0.
    pub fn upper_tail(cdf: Probability) -> Probability {
        if cdf.0 > 1.0 - 1e-15 {
            Probability(0.0)
        } else {
            Probability(1.0 - cdf.0)
        }
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl std::fmt::Display for Probability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn check_shape(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")))
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<Probability> {
    check_shape("a", a)?;
    check_shape("b", b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x must lie in [0,1], got {x}")));
    }
    Ok(Probability::clamped(inc_beta_split(x, 1.0 - x, a, b)))
}

/// `I_x(a,b)` given both `x` and `y = 1 - x`, so callers that know the
/// complement exactly do not lose it to cancellation.
fn inc_beta_split(x: f64, y: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(y, b, a) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn reg_inc_gamma_lower(x: f64, a: f64) -> Result<Probability> {
    check_shape("a", a)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(Probability::ZERO);
    }
    if x.is_infinite() {
        return Ok(Probability::ONE);
    }
    let p = if x < a + 1.0 {
        gamma_series(x, a)
    } else {
        1.0 - gamma_cf_upper(x, a)
    };
    Ok(Probability::clamped(p))
}

fn gamma_series(x: f64, a: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf_upper(x: f64, a: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// CDF of the F distribution with (possibly non-integer) `d1`, `d2`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<Probability> {
    check_shape("d1", d1)?;
    check_shape("d2", d2)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(Probability::ZERO);
    }
    if x.is_infinite() {
        return Ok(Probability::ONE);
    }
    let num = d1 * x;
    let den = num + d2;
    Ok(Probability::clamped(inc_beta_split(
        num / den,
        d2 / den,
        d1 / 2.0,
        d2 / 2.0,
    )))
}

/// CDF of the chi-square distribution with `k` (possibly non-integer) df.
pub fn chisq_cdf(x: f64, k: f64) -> Result<Probability> {
    check_shape("k", k)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    reg_inc_gamma_lower(x / 2.0, k / 2.0)
}

/// Upper-tail p-value of an F statistic.
pub fn f_pvalue(x: f64, d1: f64, d2: f64) -> Result<Probability> {
    Ok(Probability::upper_tail(f_cdf(x, d1, d2)?))
}

/// Upper-tail p-value of a chi-square statistic.
pub fn chisq_pvalue(x: f64, k: f64) -> Result<Probability> {
    Ok(Probability::upper_tail(chisq_cdf(x, k)?))
}

/// Finds `x` in `[lo, hi]` with `cdf(x) = p` by bisection. `cdf` must be
/// nondecreasing on the bracket.
pub fn quantile_bisect<F>(cdf: F, p: f64, mut lo: f64, mut hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<Probability>,
{
    if !(cdf(lo)?.value() <= p && cdf(hi)?.value() >= p) {
        return Err(Error::InvalidArgument(format!(
            "quantile {p} not bracketed by [{lo}, {hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid)?.value() < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A reproducible random stream keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, a counter-based generator: the stream id selects an
/// independent keystream, so draws from one stream never depend on how many
/// draws were taken from another.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn chisq(&mut self, df: f64) -> Result<f64> {
        check_shape("df", df)?;
        let dist = ChiSquared::new(df)
            .map_err(|e| Error::InvalidArgument(format!("chi-square df {df}: {e}")))?;
        Ok(dist.sample(&mut self.rng))
    }
}

/// Next standard-normal variate from `stream`.
pub fn draw_standard_normal(stream: &mut RngStream) -> f64 {
    stream.standard_normal()
}

/// One chi-square(`df`) variate from `stream`.
pub fn draw_chisq(stream: &mut RngStream, df: f64) -> Result<f64> {
    stream.chisq(df)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(close(ln_gamma(1.0), 0.0, 1e-14));
        assert!(close(ln_gamma(2.0), 0.0, 1e-14));
        assert!(close(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), 1e-14));
        // Γ(2.5) = 3√π/4
        assert!(close(
            ln_gamma(2.5),
            (0.75 * std::f64::consts::PI.sqrt()).ln(),
            1e-14
        ));
        assert!(close(ln_gamma(11.0), 3_628_800f64.ln(), 1e-12));
    }

    #[test]
    fn beta_boundaries_and_symmetry() {
        for &(a, b) in &[(0.3, 2.0), (1.0, 1.0), (5.0, 0.7), (100.0, 250.0)] {
            assert_eq!(reg_inc_beta(0.0, a, b).unwrap().value(), 0.0);
            assert_eq!(reg_inc_beta(1.0, a, b).unwrap().value(), 1.0);
        }
        for &a in &[0.1, 0.5, 1.0, 3.7, 40.0, 1e4] {
            assert!(close(reg_inc_beta(0.5, a, a).unwrap().value(), 0.5, 1e-12));
        }
    }

    #[test]
    fn beta_matches_closed_forms() {
        // I_x(a,1) = x^a; I_x(1,b) = 1-(1-x)^b
        for &x in &[0.01, 0.2, 0.5, 0.9] {
            for &a in &[0.3, 2.0, 7.5] {
                let v = reg_inc_beta(x, a, 1.0).unwrap().value();
                assert!(close(v, x.powf(a), 1e-13 * x.powf(a).max(1e-300) + 1e-15));
                let w = reg_inc_beta(x, 1.0, a).unwrap().value();
                assert!(close(w, 1.0 - (1.0 - x).powf(a), 1e-13));
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(reg_inc_beta(-0.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 1.0, f64::NAN).is_err());
        assert!(reg_inc_gamma_lower(-1.0, 1.0).is_err());
        assert!(reg_inc_gamma_lower(1.0, -2.0).is_err());
        assert!(f_cdf(-1.0, 1.0, 1.0).is_err());
        assert!(f_cdf(1.0, 0.0, 1.0).is_err());
        assert!(chisq_cdf(1.0, 0.0).is_err());
        let mut s = RngStream::new(1, 0);
        assert!(draw_chisq(&mut s, 0.0).is_err());
        assert!(draw_chisq(&mut s, -3.0).is_err());
    }

    #[test]
    fn gamma_closed_form_a1() {
        for &x in &[0.0, 1e-8, 0.3, 1.0, 2.0, 5.0, 30.0] {
            let v = reg_inc_gamma_lower(x, 1.0).unwrap().value();
            assert!(close(v, -(-x).exp_m1(), 1e-14), "x={x}");
        }
    }

    #[test]
    fn chisq_known_values() {
        let v = chisq_cdf(2.0, 2.0).unwrap().value();
        assert!(close(v, 1.0 - (-1.0f64).exp(), 1e-12));
        assert_eq!(chisq_cdf(0.0, 3.3).unwrap().value(), 0.0);
    }

    #[test]
    fn f_median_for_equal_df() {
        for &d in &[0.5, 1.0, 3.0, 10.0, 100.0, 2500.0] {
            assert!(close(f_cdf(1.0, d, d).unwrap().value(), 0.5, 1e-10));
        }
        assert_eq!(f_cdf(0.0, 2.0, 3.0).unwrap().value(), 0.0);
    }

    #[test]
    fn tiny_df_are_finite() {
        for &k in &[0.0077, 0.05, 0.2139] {
            for &x in &[1e-12, 1e-6, 0.37, 43.0] {
                let p = chisq_cdf(x, k).unwrap().value();
                assert!(p.is_finite() && (0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn upper_tail_reports_zero_near_one() {
        let p = Probability::upper_tail(Probability::new(1.0 - 1e-16).unwrap());
        assert_eq!(p.value(), 0.0);
        let q = Probability::upper_tail(Probability::new(0.75).unwrap());
        assert_eq!(q.value(), 0.25);
    }

    #[test]
    fn bisection_recovers_chisq_quantile() {
        let q = quantile_bisect(|x| chisq_cdf(x, 1.0), 0.95, 0.0, 100.0).unwrap();
        assert!(close(q, 3.841_458_820_694_124, 1e-9));
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: Vec<f64> = {
            let mut s = RngStream::new(1, 0);
            (0..20).map(|_| draw_standard_normal(&mut s)).collect()
        };
        let b: Vec<f64> = {
            let mut s = RngStream::new(1, 0);
            (0..20).map(|_| draw_standard_normal(&mut s)).collect()
        };
        let c: Vec<f64> = {
            let mut s = RngStream::new(1, 1);
            (0..20).map(|_| draw_standard_normal(&mut s)).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
