//! Fixed-effects linear model for balanced repeated measures with an
//! unstructured within-subject covariance, fitted by maximum likelihood, and
//! Type-III Wald F tests on its effects.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::frame::{build_model_matrix, Column, ColumnData, DesignLayout, LongTable, Term};
use crate::specfun::{f_pvalue, Probability};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;

/// Complete, balanced repeated measures: every subject observed at every
/// occasion.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedDataset {
    pub subjects: Vec<String>,
    /// `n_subjects x n_occasions`.
    pub response: DMatrix<f64>,
    /// Subject-level categorical covariates, one value per subject.
    pub subject_factors: Vec<(String, Vec<String>)>,
    /// Occasion-level numeric covariates, one value per occasion.
    pub occasion_covariates: Vec<(String, Vec<f64>)>,
    pub response_name: String,
    pub subject_name: String,
}

impl RepeatedDataset {
    pub fn n_subjects(&self) -> usize {
        self.response.nrows()
    }

    pub fn n_occasions(&self) -> usize {
        self.response.ncols()
    }

    /// Reshapes a long table (one row per subject-occasion). Subjects keep
    /// first-appearance order; occasions are sorted by `occasion_col`.
    pub fn from_long(
        table: &LongTable,
        subject_col: &str,
        occasion_col: &str,
        response_col: &str,
        subject_factor_cols: &[&str],
    ) -> Result<Self> {
        let subject_cells: Vec<String> = (0..table.n_rows())
            .map(|r| {
                table.cell_text(subject_col, r).ok_or_else(|| {
                    Error::InvalidArgument(format!("subject missing on row {}", r + 1))
                })
            })
            .collect::<Result<_>>()?;
        let occ = table.numeric(occasion_col)?;
        let y = table.numeric(response_col)?;

        let mut subjects: Vec<String> = Vec::new();
        for s in &subject_cells {
            if !subjects.contains(s) {
                subjects.push(s.clone());
            }
        }
        let mut occasions: Vec<f64> = occ.iter().flatten().cloned().collect();
        occasions.sort_by(f64::total_cmp);
        occasions.dedup();

        let (ns, nt) = (subjects.len(), occasions.len());
        let mut response = DMatrix::from_element(ns, nt, f64::NAN);
        let mut factors: Vec<(String, Vec<Option<String>>)> = subject_factor_cols
            .iter()
            .map(|c| (c.to_string(), vec![None; ns]))
            .collect();
        for r in 0..table.n_rows() {
            let i = subjects.iter().position(|s| *s == subject_cells[r]).unwrap();
            let o = occ[r].ok_or_else(|| {
                Error::InvalidArgument(format!("occasion missing on row {}", r + 1))
            })?;
            let j = occasions.iter().position(|v| *v == o).unwrap();
            let v = y[r].ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "response missing for subject {} at {occasion_col}={o}",
                    subject_cells[r]
                ))
            })?;
            if !response[(i, j)].is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "subject {} has two rows at {occasion_col}={o}",
                    subject_cells[r]
                )));
            }
            response[(i, j)] = v;
            for (name, vals) in factors.iter_mut() {
                let cell = table.cell_text(name, r);
                match (&vals[i], cell) {
                    (_, None) => {
                        return Err(Error::InvalidArgument(format!(
                            "'{name}' missing on row {}",
                            r + 1
                        )))
                    }
                    (None, Some(c)) => vals[i] = Some(c),
                    (Some(prev), Some(c)) if *prev != c => {
                        return Err(Error::InvalidArgument(format!(
                            "'{name}' changes within subject {}",
                            subject_cells[r]
                        )))
                    }
                    _ => {}
                }
            }
        }
        if response.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument(
                "repeated measures are not complete and balanced".into(),
            ));
        }
        Ok(RepeatedDataset {
            subjects,
            response,
            subject_factors: factors
                .into_iter()
                .map(|(n, v)| (n, v.into_iter().map(Option::unwrap).collect()))
                .collect(),
            occasion_covariates: vec![(occasion_col.to_string(), occasions)],
            response_name: response_col.to_string(),
            subject_name: subject_col.to_string(),
        })
    }

    /// Subject-major long form (subject, factors, occasion covariates, response).
    pub fn to_long(&self) -> LongTable {
        let (ns, nt) = (self.n_subjects(), self.n_occasions());
        let mut cols = vec![Column {
            name: self.subject_name.clone(),
            data: ColumnData::Categorical(
                (0..ns * nt)
                    .map(|k| Some(self.subjects[k / nt].clone()))
                    .collect(),
            ),
        }];
        for (name, vals) in &self.subject_factors {
            cols.push(Column {
                name: name.clone(),
                data: ColumnData::Categorical(
                    (0..ns * nt).map(|k| Some(vals[k / nt].clone())).collect(),
                ),
            });
        }
        for (name, vals) in &self.occasion_covariates {
            cols.push(Column {
                name: name.clone(),
                data: ColumnData::Numeric((0..ns * nt).map(|k| Some(vals[k % nt])).collect()),
            });
        }
        cols.push(Column {
            name: self.response_name.clone(),
            data: ColumnData::Numeric(
                (0..ns * nt)
                    .map(|k| Some(self.response[(k / nt, k % nt)]))
                    .collect(),
            ),
        });
        LongTable::new(cols).expect("columns have equal length")
    }

    fn is_within(&self, term: &Term) -> bool {
        self.occasion_covariates
            .iter()
            .any(|(name, _)| term.involves(name))
    }
}

/// Per-subject design blocks plus the effect layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedDesign {
    pub layout: DesignLayout,
    /// One `n_occasions x p` block per subject.
    pub blocks: Vec<DMatrix<f64>>,
    /// Parallel to `layout.effects`: whether the effect varies within subject.
    pub within: Vec<bool>,
}

impl RepeatedDesign {
    pub fn n_columns(&self) -> usize {
        self.layout.n_columns()
    }

    /// Design with one effect's columns removed (the Type-III reduced model).
    pub fn without_effect(&self, term: &Term) -> Result<RepeatedDesign> {
        let idx = self
            .layout
            .effects
            .iter()
            .position(|e| &e.term == term)
            .ok_or_else(|| Error::ModelSpec(format!("effect '{term}' not in model")))?;
        let drop = self.layout.effects[idx].columns.clone();
        let width = drop.len();
        let keep: Vec<usize> = (0..self.n_columns()).filter(|c| !drop.contains(c)).collect();
        let mut layout = self.layout.clone();
        layout.column_names = keep.iter().map(|&c| self.layout.column_names[c].clone()).collect();
        layout.effects.remove(idx);
        for e in layout.effects.iter_mut() {
            if e.columns.start >= drop.end {
                e.columns = e.columns.start - width..e.columns.end - width;
            }
        }
        let mut within = self.within.clone();
        within.remove(idx);
        Ok(RepeatedDesign {
            layout,
            blocks: self.blocks.iter().map(|b| b.select_columns(&keep)).collect(),
            within,
        })
    }
}

/// Builds the reference-coded design (intercept plus `terms`) for every
/// subject.
pub fn build_design(dataset: &RepeatedDataset, terms: &[Term]) -> Result<RepeatedDesign> {
    let long = dataset.to_long();
    let rows: Vec<usize> = (0..long.n_rows()).collect();
    let (x, layout) = build_model_matrix(&long, terms, &rows)?;
    let nt = dataset.n_occasions();
    let blocks = (0..dataset.n_subjects())
        .map(|i| x.rows(i * nt, nt).into_owned())
        .collect();
    let within = layout
        .effects
        .iter()
        .map(|e| dataset.is_within(&e.term))
        .collect();
    Ok(RepeatedDesign {
        layout,
        blocks,
        within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceStructure {
    #[default]
    Unstructured,
    /// Heterogeneous variances, no correlation.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedFit {
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub log_likelihood: f64,
    pub beta_covariance: DMatrix<f64>,
    pub iterations: usize,
    /// Log-likelihood after each iteration.
    pub loglik_trace: Vec<f64>,
    pub n_subjects: usize,
    pub n_occasions: usize,
}

fn chol(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// Multivariate-normal log-likelihood of the residuals under `sigma`.
fn log_likelihood(residuals: &[DVector<f64>], sigma: &Cholesky<f64, Dyn>) -> f64 {
    let nt = sigma.l_dirty().nrows() as f64;
    let n = residuals.len() as f64;
    let log_det: f64 = 2.0 * sigma.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad: f64 = residuals.iter().map(|r| r.dot(&sigma.solve(r))).sum();
    -0.5 * n * nt * (2.0 * std::f64::consts::PI).ln() - 0.5 * n * log_det - 0.5 * quad
}

/// ML fit by alternating GLS for the coefficients and the residual
/// cross-product update for the covariance.
pub fn fit_gls_unstructured(dataset: &RepeatedDataset, design: &RepeatedDesign) -> Result<MixedFit> {
    fit_gls(dataset, design, CovarianceStructure::Unstructured)
}

pub fn fit_gls(
    dataset: &RepeatedDataset,
    design: &RepeatedDesign,
    structure: CovarianceStructure,
) -> Result<MixedFit> {
    let (ns, nt) = (dataset.n_subjects(), dataset.n_occasions());
    let p = design.n_columns();
    if design.blocks.len() != ns {
        return Err(Error::InvalidArgument(format!(
            "design has {} subject blocks for {ns} subjects",
            design.blocks.len()
        )));
    }
    if ns <= p {
        return Err(Error::InsufficientData(format!(
            "{ns} subjects for {p} fixed-effect columns"
        )));
    }
    let ys: Vec<DVector<f64>> = (0..ns)
        .map(|i| dataset.response.row(i).transpose())
        .collect();

    let gls = |sigma: &Cholesky<f64, Dyn>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let mut info = DMatrix::zeros(p, p);
        let mut score = DVector::zeros(p);
        for (x, y) in design.blocks.iter().zip(&ys) {
            let sx = sigma.solve(x);
            info += x.transpose() * &sx;
            score += sx.transpose() * y;
        }
        let info_chol = chol(&info).ok_or(Error::RankDeficient {
            rank: crate::frame::matrix_rank(&info),
            columns: p,
        })?;
        Ok((info_chol.solve(&score), info_chol.inverse()))
    };
    let residuals = |beta: &DVector<f64>| -> Vec<DVector<f64>> {
        design
            .blocks
            .iter()
            .zip(&ys)
            .map(|(x, y)| y - x * beta)
            .collect()
    };

    let mut sigma = DMatrix::<f64>::identity(nt, nt);
    let mut sigma_chol = chol(&sigma).expect("identity is positive definite");
    let mut beta = DVector::<f64>::zeros(p);
    let mut trace = Vec::new();
    let mut delta = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let (beta_new, _) = gls(&sigma_chol)?;
        let res = residuals(&beta_new);
        let mut sigma_new = DMatrix::zeros(nt, nt);
        for r in &res {
            sigma_new += r * r.transpose();
        }
        sigma_new /= ns as f64;
        if structure == CovarianceStructure::Diagonal {
            sigma_new = DMatrix::from_diagonal(&sigma_new.diagonal());
        }
        let chol_new = chol(&sigma_new).ok_or(Error::SingularCovariance)?;
        delta = (&beta_new - &beta)
            .amax()
            .max((&sigma_new - &sigma).amax());
        trace.push(log_likelihood(&res, &chol_new));
        beta = beta_new;
        sigma = sigma_new;
        sigma_chol = chol_new;
        if delta < TOLERANCE {
            let (_, beta_covariance) = gls(&sigma_chol)?;
            return Ok(MixedFit {
                beta,
                sigma,
                log_likelihood: *trace.last().unwrap(),
                beta_covariance,
                iterations: iteration,
                loglik_trace: trace,
                n_subjects: ns,
                n_occasions: nt,
            });
        }
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        last_delta: delta,
    })
}

/// One row of a Type-III tests table.
#[derive(Debug, Clone, PartialEq)]
pub struct Tests3Row {
    pub effect: String,
    pub num_df: u32,
    pub den_df: f64,
    pub f_value: f64,
    pub imputation: usize,
}

impl Tests3Row {
    pub fn p_value(&self) -> Result<Probability> {
        f_pvalue(self.f_value, f64::from(self.num_df), self.den_df)
    }
}

/// Denominator df for each effect under the between-within convention.
pub fn between_within_df(fit: &MixedFit, design: &RepeatedDesign) -> Result<Vec<f64>> {
    let between_cols = 1 + design
        .layout
        .effects
        .iter()
        .zip(&design.within)
        .filter(|(_, w)| !**w)
        .map(|(e, _)| e.columns.len())
        .sum::<usize>();
    let within_cols: usize = design
        .layout
        .effects
        .iter()
        .zip(&design.within)
        .filter(|(_, w)| **w)
        .map(|(e, _)| e.columns.len())
        .sum();
    let between = fit.n_subjects as f64 - between_cols as f64;
    let within = (fit.n_subjects * (fit.n_occasions - 1)) as f64 - within_cols as f64;
    design
        .within
        .iter()
        .map(|&w| {
            let df = if w { within } else { between };
            if df > 0.0 {
                Ok(df)
            } else {
                Err(Error::InsufficientData(format!(
                    "non-positive denominator df ({df})"
                )))
            }
        })
        .collect()
}

/// Type-III Wald F for every effect: `F = (Lβ)' (L V L')^{-1} (Lβ) / rank(L)`
/// where `L` selects the effect's columns.
pub fn type3_tests(
    fit: &MixedFit,
    design: &RepeatedDesign,
    imputation: usize,
) -> Result<Vec<Tests3Row>> {
    let den = between_within_df(fit, design)?;
    design
        .layout
        .effects
        .iter()
        .zip(den)
        .map(|(e, den_df)| {
            let cols: Vec<usize> = e.columns.clone().collect();
            let lb = fit.beta.select_rows(&cols);
            let lvl = fit.beta_covariance.select_rows(&cols).select_columns(&cols);
            let c = chol(&lvl).ok_or_else(|| Error::ContrastSingular(e.term.to_string()))?;
            let q = cols.len();
            let f_value = (lb.dot(&c.solve(&lb)) / q as f64).max(0.0);
            Ok(Tests3Row {
                effect: e.term.to_string(),
                num_df: q as u32,
                den_df,
                f_value,
                imputation,
            })
        })
        .collect()
}
