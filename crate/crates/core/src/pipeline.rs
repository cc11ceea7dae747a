//! End-to-end impute → analyze → pool runs: the two bundled examples and the
//! Monte Carlo calibration harness.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::analyzers::{group_summaries, levene_test, welch_anova, WelchResult};
use crate::cli::{f_result_table, tests3_result_table};
use crate::datasets;
use crate::error::{Error, Result};
use crate::frame::{LongTable, Term};
use crate::imputer::{delete_values, impute_monotone_reg_par, CompletedDataset, ImputationSpec};
use crate::mixedmodel::{build_design, fit_gls_unstructured, type3_tests, RepeatedDataset, Tests3Row};
use crate::pooling::{
    combine_chisq, combine_f_fractional, lrt_record, sfa_transform, welch_to_fractional,
    ChiSqScaling, CombinedTest, SfaVariant,
};
use crate::specfun::{Probability, RngStream};
use crate::table::{format_number, Cell, Precision, ResultTable};

pub const UPSIT_SEED: u64 = 1_305_417;
pub const GROWTH_SEED: u64 = 13_023_587;
pub const GROWTH_MODEL: &str = "Gender Age Gender*Age";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub m: usize,
    pub seed: u64,
    pub jobs: usize,
    pub chisq_scaling: ChiSqScaling,
    pub sfa_variant: SfaVariant,
}

impl RunConfig {
    pub fn new(m: usize, seed: u64) -> Self {
        RunConfig {
            m,
            seed,
            jobs: 1,
            chisq_scaling: ChiSqScaling::Macro,
            sfa_variant: SfaVariant::Macro,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if self.jobs < 1 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn welch_on(table: &LongTable) -> Result<WelchResult> {
    let groups = table.categorical("agegroup")?;
    let smell = table.numeric("smell")?;
    let pairs = groups
        .iter()
        .zip(smell)
        .map(|(g, y)| match (g, y) {
            (Some(g), Some(y)) => Ok((g.as_str(), *y)),
            _ => Err(Error::InvalidArgument("incomplete upsit row".into())),
        })
        .collect::<Result<Vec<_>>>()?;
    welch_anova(&group_summaries(pairs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsitReport {
    pub config: RunConfig,
    pub levene_p: Probability,
    pub complete: WelchResult,
    pub per_imputation: Vec<WelchResult>,
    pub pooled: CombinedTest,
}

/// Welch's ANOVA example: delete the first smell score in each age group,
/// impute, run Welch on each completed dataset and pool.
pub fn run_upsit(config: &RunConfig) -> Result<UpsitReport> {
    config.validate()?;
    let data = datasets::upsit()?;
    let pairs: Vec<(String, f64)> = data
        .categorical("agegroup")?
        .iter()
        .zip(data.numeric("smell")?)
        .map(|(g, y)| (g.clone().unwrap_or_default(), y.unwrap_or(f64::NAN)))
        .collect();
    let levene_p = levene_test(pairs)?;
    let complete = welch_on(&data)?;

    let missing = delete_values(&data, "smell", datasets::upsit_deletion_rule)?;
    let spec = ImputationSpec::new("smell", "agegroup", config.m, config.seed);
    let per_imputation = with_pool(config.jobs, || {
        let completed = impute_monotone_reg_par(&missing, &spec)?;
        completed
            .par_iter()
            .map(|c| welch_on(&c.table))
            .collect::<Result<Vec<_>>>()
    })?;
    let records = per_imputation
        .iter()
        .enumerate()
        .map(|(i, w)| welch_to_fractional(w, "agegroup", i + 1))
        .collect::<Result<Vec<_>>>()?;
    let pooled = combine_f_fractional(&records)?;
    Ok(UpsitReport {
        config: config.clone(),
        levene_p,
        complete,
        per_imputation,
        pooled,
    })
}

impl UpsitReport {
    pub fn render(&self, precision: Precision) -> Result<String> {
        let n = |x: f64| format_number(x, precision);
        let mut out = String::new();
        writeln!(out, "# upsit: Welch's ANOVA of smell by agegroup").unwrap();
        writeln!(out, "# imputations={} seed={}", self.config.m, self.config.seed).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "## complete data").unwrap();
        let complete = ResultTable {
            headers: ["Test", "DF", "Error DF", "F", "p-value"].map(String::from).to_vec(),
            rows: vec![vec![
                Cell::Text("Welch".into()),
                Cell::Num(self.complete.k as f64 - 1.0),
                Cell::Num(self.complete.gamma),
                Cell::Num(self.complete.f_value),
                Cell::Num(self.complete.p_value.value()),
            ]],
        };
        out.push_str(&complete.to_csv_string(precision)?);
        writeln!(out, "Levene p-value,{}", n(self.levene_p.value())).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "## multiple imputation").unwrap();
        out.push_str(&f_result_table(std::slice::from_ref(&self.pooled)).to_csv_string(precision)?);
        Ok(out)
    }
}

fn growth_repeated(table: &LongTable) -> Result<RepeatedDataset> {
    RepeatedDataset::from_long(table, "Person", "Age", "y", &["Gender"])
}

/// Effect df with full and reduced-model log-likelihoods.
type LoglikPair = (u32, f64, f64);

/// Type-III rows and likelihood-ratio inputs for one completed dataset.
fn analyze_growth(table: &LongTable, imputation: usize) -> Result<(Vec<Tests3Row>, Vec<LoglikPair>)> {
    let ds = growth_repeated(table)?;
    let terms = Term::parse_list(GROWTH_MODEL);
    let design = build_design(&ds, &terms)?;
    let fit = fit_gls_unstructured(&ds, &design)?;
    let rows = type3_tests(&fit, &design, imputation)?;
    let lrt = design
        .layout
        .effects
        .iter()
        .map(|e| {
            let reduced = design.without_effect(&e.term)?;
            let rfit = fit_gls_unstructured(&ds, &reduced)?;
            Ok((e.columns.len() as u32, fit.log_likelihood, rfit.log_likelihood))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, lrt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub config: RunConfig,
    pub complete: Vec<Tests3Row>,
    pub per_imputation: Vec<Vec<Tests3Row>>,
    /// Shrinking-factor route, one entry per effect.
    pub pooled_sfa: Vec<CombinedTest>,
    /// Likelihood-ratio route, one entry per effect.
    pub pooled_lrt: Vec<CombinedTest>,
}

impl GrowthReport {
    pub fn pooled(&self, effect: &str) -> Option<&CombinedTest> {
        self.pooled_sfa.iter().find(|t| t.source == effect)
    }
}

/// Repeated-measures example: delete seven age-14 measurements, impute,
/// fit the unstructured-covariance model on each completed dataset and pool
/// the Type-III tests through the shrinking-factor and likelihood-ratio
/// routes.
pub fn run_growth(config: &RunConfig) -> Result<GrowthReport> {
    config.validate()?;
    let data = datasets::growth()?;
    let (complete, _) = analyze_growth(&data, 0)?;

    let missing = delete_values(&data, "y", datasets::growth_deletion_rule)?;
    let spec = ImputationSpec::new("y", GROWTH_MODEL, config.m, config.seed);
    let analyses = with_pool(config.jobs, || {
        let completed: Vec<CompletedDataset> = impute_monotone_reg_par(&missing, &spec)?;
        completed
            .par_iter()
            .map(|c| analyze_growth(&c.table, c.imputation))
            .collect::<Result<Vec<_>>>()
    })?;

    let effects: Vec<String> = complete.iter().map(|r| r.effect.clone()).collect();
    let mut pooled_sfa = Vec::new();
    let mut pooled_lrt = Vec::new();
    for (e, effect) in effects.iter().enumerate() {
        let sfa = analyses
            .iter()
            .map(|(rows, _)| {
                let r = &rows[e];
                sfa_transform(effect, r.imputation, r.f_value, r.num_df, r.den_df, config.sfa_variant)
            })
            .collect::<Result<Vec<_>>>()?;
        pooled_sfa.push(combine_chisq(&sfa, config.chisq_scaling)?);
        let lrt = analyses
            .iter()
            .enumerate()
            .map(|(i, (_, lrt))| {
                let (df, full, reduced) = lrt[e];
                lrt_record(full, reduced, df, effect, i + 1)
            })
            .collect::<Result<Vec<_>>>()?;
        pooled_lrt.push(combine_chisq(&lrt, config.chisq_scaling)?);
    }
    Ok(GrowthReport {
        config: config.clone(),
        complete,
        per_imputation: analyses.into_iter().map(|(rows, _)| rows).collect(),
        pooled_sfa,
        pooled_lrt,
    })
}

impl GrowthReport {
    pub fn render(&self, precision: Precision) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "# growth: Type-III tests, unstructured covariance by Person (ML)").unwrap();
        writeln!(out, "# imputations={} seed={}", self.config.m, self.config.seed).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "## complete data").unwrap();
        let complete = ResultTable {
            headers: ["Effect", "NumDF", "DenDF", "FValue", "ProbF"].map(String::from).to_vec(),
            rows: self
                .complete
                .iter()
                .map(|r| {
                    Ok(vec![
                        Cell::Text(r.effect.clone()),
                        Cell::Int(r.num_df as usize),
                        Cell::Num(r.den_df),
                        Cell::Num(r.f_value),
                        Cell::Num(r.p_value()?.value()),
                    ])
                })
                .collect::<Result<_>>()?,
        };
        out.push_str(&complete.to_csv_string(precision)?);
        writeln!(out).unwrap();
        writeln!(out, "## multiple imputation (shrinking-factor approximation)").unwrap();
        out.push_str(&tests3_result_table(&self.pooled_sfa).to_csv_string(precision)?);
        writeln!(out).unwrap();
        writeln!(out, "## multiple imputation (likelihood ratio)").unwrap();
        out.push_str(&tests3_result_table(&self.pooled_lrt).to_csv_string(precision)?);
        Ok(out)
    }
}

/// Monte Carlo scenario for calibrating the pooled Welch test.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub group_sizes: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub missing_fraction: f64,
    pub replications: usize,
    pub m: usize,
    pub seed: u64,
    pub alpha: f64,
    pub jobs: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.group_sizes.len();
        if k < 2 || self.means.len() != k || self.sds.len() != k {
            return Err(Error::Config(format!(
                "need >= 2 groups with matching sizes/means/sds (got {}, {}, {})",
                k,
                self.means.len(),
                self.sds.len()
            )));
        }
        if self.group_sizes.iter().any(|&n| n < 3) {
            return Err(Error::Config("each group needs at least 3 subjects".into()));
        }
        if self.sds.iter().any(|s| !(*s > 0.0)) || self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("sds must be > 0 and means finite".into()));
        }
        if !(0.0..0.9).contains(&self.missing_fraction) {
            return Err(Error::Config("missing fraction must lie in [0, 0.9)".into()));
        }
        if self.replications < 1 || self.m < 1 || self.jobs < 1 {
            return Err(Error::Config("replications, m and jobs must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub complete_p: f64,
    pub pooled_p: f64,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub config: SimConfig,
    pub replications: Vec<Replication>,
}

impl SimReport {
    pub fn rejection_rate(&self) -> f64 {
        let alpha = self.config.alpha;
        self.replications.iter().filter(|r| r.pooled_p < alpha).count() as f64
            / self.replications.len() as f64
    }

    pub fn complete_rejection_rate(&self) -> f64 {
        let alpha = self.config.alpha;
        self.replications.iter().filter(|r| r.complete_p < alpha).count() as f64
            / self.replications.len() as f64
    }

    /// Binomial standard error of the pooled rejection rate.
    pub fn standard_error(&self) -> f64 {
        let p = self.rejection_rate();
        (p * (1.0 - p) / self.replications.len() as f64).sqrt()
    }

    pub fn render(&self, precision: Precision) -> Result<String> {
        let c = &self.config;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        writeln!(out, "# simulate: pooled Welch ANOVA rejection rate").unwrap();
        writeln!(
            out,
            "# groups={} means={} sds={} missing={} m={} seed={} alpha={}",
            c.group_sizes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "),
            list(&c.means),
            list(&c.sds),
            c.missing_fraction,
            c.m,
            c.seed,
            c.alpha
        )
        .unwrap();
        let table = ResultTable {
            headers: ["Analysis", "Replications", "Rejection rate", "Std error"]
                .map(String::from)
                .to_vec(),
            rows: vec![
                vec![
                    Cell::Text("MI pooled".into()),
                    Cell::Int(self.replications.len()),
                    Cell::Num(self.rejection_rate()),
                    Cell::Num(self.standard_error()),
                ],
                vec![
                    Cell::Text("complete data".into()),
                    Cell::Int(self.replications.len()),
                    Cell::Num(self.complete_rejection_rate()),
                    Cell::Num({
                        let p = self.complete_rejection_rate();
                        (p * (1.0 - p) / self.replications.len() as f64).sqrt()
                    }),
                ],
            ],
        };
        out.push_str(&table.to_csv_string(precision)?);
        Ok(out)
    }
}

fn replication_seed(seed: u64, rep: usize) -> u64 {
    // splitmix64 finalizer over (seed, replication)
    let mut z = seed ^ (rep as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn simulate_one(config: &SimConfig, rep: usize) -> Result<Replication> {
    let seed = replication_seed(config.seed, rep);
    let mut rng = RngStream::new(seed, 0);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut observed = Vec::new();
    for (g, ((&n, &mu), &sd)) in config
        .group_sizes
        .iter()
        .zip(&config.means)
        .zip(&config.sds)
        .enumerate()
    {
        for _ in 0..n {
            let y = mu + sd * rng.standard_normal();
            let miss = rng.uniform() < config.missing_fraction;
            labels.push(Some(format!("g{}", g + 1)));
            values.push(y);
            observed.push((!miss).then_some(y));
        }
    }
    let n_missing = observed.iter().filter(|v| v.is_none()).count();
    let complete = welch_anova(&group_summaries(
        labels.iter().zip(&values).map(|(l, y)| (l.as_deref().unwrap(), *y)),
    )?)?;

    let table = LongTable::new(vec![
        crate::frame::Column {
            name: "group".into(),
            data: crate::frame::ColumnData::Categorical(labels),
        },
        crate::frame::Column {
            name: "y".into(),
            data: crate::frame::ColumnData::Numeric(observed),
        },
    ])?;
    let spec = ImputationSpec::new("y", "group", config.m, seed);
    let records = crate::imputer::impute_monotone_reg(&table, &spec)?
        .iter()
        .map(|c| {
            let groups = c.table.categorical("group")?;
            let ys = c.table.numeric("y")?;
            let w = welch_anova(&group_summaries(
                groups
                    .iter()
                    .zip(ys)
                    .map(|(g, y)| (g.as_deref().unwrap_or(""), y.unwrap_or(f64::NAN))),
            )?)?;
            welch_to_fractional(&w, "group", c.imputation)
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = combine_f_fractional(&records)?;
    Ok(Replication {
        complete_p: complete.p_value.value(),
        pooled_p: pooled.p_value.value(),
        n_missing,
    })
}

/// Generates data, deletes responses completely at random, imputes, runs
/// Welch and pools, once per replication.
pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let replications = with_pool(config.jobs, || {
        (0..config.replications)
            .into_par_iter()
            .map(|r| simulate_one(config, r))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SimReport {
        config: config.clone(),
        replications,
    })
}
