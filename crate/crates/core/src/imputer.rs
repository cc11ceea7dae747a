//! Bayesian normal-regression imputation of a single numeric response with
//! fully observed predictors (monotone missingness).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::frame::{build_model_matrix, design_rows, LongTable, Term};
use crate::specfun::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSpec {
    pub response: String,
    pub predictors: Vec<Term>,
    pub m: usize,
    pub seed: u64,
}

impl ImputationSpec {
    pub fn new(response: &str, predictors: &str, m: usize, seed: u64) -> Self {
        ImputationSpec {
            response: response.to_string(),
            predictors: Term::parse_list(predictors),
            m,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidArgument("number of imputations must be >= 1".into()));
        }
        if self.predictors.iter().any(|t| t.involves(&self.response)) {
            return Err(Error::ModelSpec(format!(
                "response '{}' appears among the predictors",
                self.response
            )));
        }
        Ok(())
    }
}

/// One completed dataset; `imputation` runs from 1 to M.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDataset {
    pub imputation: usize,
    pub table: LongTable,
}

/// Sets the response to missing on every row matching `rule`.
pub fn delete_values<F>(table: &LongTable, response: &str, rule: F) -> Result<LongTable>
where
    F: Fn(&LongTable, usize) -> bool,
{
    let mut out = table.clone();
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&r| rule(table, r)).collect();
    let y = out.numeric_mut(response)?;
    for r in rows {
        y[r] = None;
    }
    Ok(out)
}

/// Posterior quantities of the complete-case regression.
struct RegressionFit {
    beta_hat: DVector<f64>,
    /// Upper-triangular `A` with `A A' = (X'X)^{-1}`.
    root_inv: DMatrix<f64>,
    rss: f64,
    df_resid: usize,
    x_missing: DMatrix<f64>,
    missing_rows: Vec<usize>,
}

fn fit_complete_cases(table: &LongTable, spec: &ImputationSpec) -> Result<RegressionFit> {
    let y = table.numeric(&spec.response)?;
    let observed: Vec<usize> = (0..table.n_rows()).filter(|&r| y[r].is_some()).collect();
    let missing_rows: Vec<usize> = (0..table.n_rows()).filter(|&r| y[r].is_none()).collect();
    let (x_obs, layout) = build_model_matrix(table, &spec.predictors, &observed)
        .map_err(|e| match e {
            Error::RankDeficient { .. } => Error::Collinearity,
            other => other,
        })?;
    let p = layout.n_columns();
    if observed.len() < p + 2 {
        return Err(Error::InsufficientData(format!(
            "{} complete cases for {p} predictor columns (need {})",
            observed.len(),
            p + 2
        )));
    }
    let (x_missing, _) = design_rows(table, &spec.predictors, &missing_rows)?;
    let y_obs = DVector::from_iterator(observed.len(), observed.iter().map(|&r| y[r].unwrap()));
    let xtx = x_obs.transpose() * &x_obs;
    let chol = Cholesky::new(xtx).ok_or(Error::Collinearity)?;
    let beta_hat = chol.solve(&(x_obs.transpose() * &y_obs));
    let resid = &y_obs - &x_obs * &beta_hat;
    // X'X = L L'  =>  (X'X)^{-1} = L'^{-1} L^{-1}, so A = L'^{-1}
    let root_inv = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or(Error::Collinearity)?;
    Ok(RegressionFit {
        beta_hat,
        root_inv,
        rss: resid.norm_squared(),
        df_resid: observed.len() - p,
        x_missing,
        missing_rows,
    })
}

fn impute_one(
    table: &LongTable,
    spec: &ImputationSpec,
    fit: &RegressionFit,
    imputation: usize,
) -> Result<CompletedDataset> {
    let mut rng = RngStream::new(spec.seed, imputation as u64);
    let sigma2 = fit.rss / rng.chisq(fit.df_resid as f64)?;
    let sigma = sigma2.sqrt();
    let z = DVector::from_fn(fit.beta_hat.len(), |_, _| rng.standard_normal());
    let beta = &fit.beta_hat + &fit.root_inv * z * sigma;
    let mean = &fit.x_missing * beta;
    let mut out = table.clone();
    let y = out.numeric_mut(&spec.response)?;
    for (k, &r) in fit.missing_rows.iter().enumerate() {
        y[r] = Some(mean[k] + sigma * rng.standard_normal());
    }
    Ok(CompletedDataset {
        imputation,
        table: out,
    })
}

/// Generates `spec.m` completed datasets. Imputation `l` draws only from
/// stream `(spec.seed, l)`, so the result does not depend on evaluation order.
pub fn impute_monotone_reg(table: &LongTable, spec: &ImputationSpec) -> Result<Vec<CompletedDataset>> {
    spec.validate()?;
    let y = table.numeric(&spec.response)?;
    if y.iter().all(Option::is_some) {
        return Ok((1..=spec.m)
            .map(|imputation| CompletedDataset {
                imputation,
                table: table.clone(),
            })
            .collect());
    }
    let fit = fit_complete_cases(table, spec)?;
    (1..=spec.m)
        .map(|l| impute_one(table, spec, &fit, l))
        .collect()
}

/// Like [`impute_monotone_reg`] but produces imputations concurrently on the
/// current rayon pool. Output is identical to the sequential version.
pub fn impute_monotone_reg_par(
    table: &LongTable,
    spec: &ImputationSpec,
) -> Result<Vec<CompletedDataset>> {
    use rayon::prelude::*;
    spec.validate()?;
    let y = table.numeric(&spec.response)?;
    if y.iter().all(Option::is_some) {
        return impute_monotone_reg(table, spec);
    }
    let fit = fit_complete_cases(table, spec)?;
    (1..=spec.m)
        .into_par_iter()
        .map(|l| impute_one(table, spec, &fit, l))
        .collect()
}

/// Imputes a single index, for callers that schedule imputations themselves.
pub fn impute_single(table: &LongTable, spec: &ImputationSpec, imputation: usize) -> Result<CompletedDataset> {
    spec.validate()?;
    if imputation < 1 || imputation > spec.m {
        return Err(Error::InvalidArgument(format!(
            "imputation index {imputation} outside 1..={}",
            spec.m
        )));
    }
    let y = table.numeric(&spec.response)?;
    if y.iter().all(Option::is_some) {
        return Ok(CompletedDataset {
            imputation,
            table: table.clone(),
        });
    }
    let fit = fit_complete_cases(table, spec)?;
    impute_one(table, spec, &fit, imputation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_table(missing_at: &[usize]) -> LongTable {
        let mut csv = String::from("x,y\n");
        for i in 0..10 {
            let x = i as f64;
            if missing_at.contains(&i) {
                csv.push_str(&format!("{x},.\n"));
            } else {
                csv.push_str(&format!("{x},{}\n", 2.0 * x + if i % 2 == 0 { 0.3 } else { -0.3 }));
            }
        }
        LongTable::from_csv(csv.as_bytes(), &[]).unwrap()
    }

    #[test]
    fn no_missing_cells_gives_copies() {
        let t = linear_table(&[]);
        let out = impute_monotone_reg(&t, &ImputationSpec::new("y", "x", 4, 1)).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|c| c.table == t));
        assert_eq!(out.iter().map(|c| c.imputation).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn deterministic_and_observed_cells_untouched() {
        let t = linear_table(&[3, 7]);
        let spec = ImputationSpec::new("y", "x", 5, 42);
        let a = impute_monotone_reg(&t, &spec).unwrap();
        let b = impute_monotone_reg(&t, &spec).unwrap();
        assert_eq!(a, b);
        let orig = t.numeric("y").unwrap();
        for c in &a {
            let y = c.table.numeric("y").unwrap();
            for (o, v) in orig.iter().zip(y) {
                assert!(v.is_some());
                if let Some(o) = o {
                    assert_eq!(o.to_bits(), v.unwrap().to_bits());
                }
            }
        }
        let par = impute_monotone_reg_par(&t, &spec).unwrap();
        assert_eq!(a, par);
        assert_eq!(impute_single(&t, &spec, 4).unwrap(), a[3]);
    }

    #[test]
    fn delete_values_rules() {
        let t = linear_table(&[]);
        assert_eq!(delete_values(&t, "y", |_, _| false).unwrap(), t);
        let d = delete_values(&t, "y", |_, r| r == 2 || r == 5).unwrap();
        let y = d.numeric("y").unwrap();
        assert_eq!(y.iter().filter(|v| v.is_none()).count(), 2);
        assert!(y[2].is_none() && y[5].is_none());
    }

    #[test]
    fn errors() {
        // 3 observed rows for 2 columns: need p + 2 = 4
        let t = linear_table(&[0, 1, 2, 3, 4, 5, 6]);
        assert!(matches!(
            impute_monotone_reg(&t, &ImputationSpec::new("y", "x", 2, 1)).unwrap_err(),
            Error::InsufficientData(_)
        ));
        let csv = "x,z,y\n1,2,1\n2,4,2\n3,6,3\n4,8,.\n5,10,5\n6,12,6\n";
        let t = LongTable::from_csv(csv.as_bytes(), &[]).unwrap();
        assert!(matches!(
            impute_monotone_reg(&t, &ImputationSpec::new("y", "x z", 2, 1)).unwrap_err(),
            Error::Collinearity
        ));
        let t = linear_table(&[1]);
        assert!(impute_monotone_reg(&t, &ImputationSpec::new("y", "y", 2, 1)).is_err());
        assert!(impute_monotone_reg(&t, &ImputationSpec::new("y", "x", 0, 1)).is_err());
    }
}
