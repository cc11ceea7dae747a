//! Table-level commands behind the `mipool` binary.

use std::io::Read;

use crate::analyzers::{FractionalFRecord, WelchResult};
use crate::error::{Error, Result};
use crate::pooling::{
    combine_chisq, combine_f_fractional, rubin_scalar, sfa_transform, welch_to_fractional,
    ChiSqRecord, ChiSqScaling, CombinedTest, PooledScalar, SfaVariant,
};
use crate::specfun::f_pvalue;
use crate::table::{Cell, ImputedTable, ResultTable, Schema};

/// `Source, Imputation number, DF, Error DF, MI adjusted F, p-value`
pub fn f_result_table(tests: &[CombinedTest]) -> ResultTable {
    ResultTable {
        headers: ["Source", "Imputation number", "DF", "Error DF", "MI adjusted F", "p-value"]
            .map(String::from)
            .to_vec(),
        rows: tests
            .iter()
            .map(|t| {
                vec![
                    Cell::Text(t.source.clone()),
                    Cell::Int(t.m),
                    Cell::Num(t.df_num),
                    Cell::Num(t.df_den.unwrap_or(f64::NAN)),
                    Cell::Num(t.statistic),
                    Cell::Num(t.p_value.value()),
                ]
            })
            .collect(),
    }
}

/// Chi-square result table; `labels` are the m/df/statistic/p headers.
fn chisq_table(tests: &[CombinedTest], labels: [&str; 5]) -> ResultTable {
    ResultTable {
        headers: labels.map(String::from).to_vec(),
        rows: tests
            .iter()
            .map(|t| {
                vec![
                    Cell::Text(t.source.clone()),
                    Cell::Int(t.m),
                    Cell::Num(t.df_num),
                    Cell::Num(t.statistic),
                    Cell::Num(t.p_value.value()),
                ]
            })
            .collect(),
    }
}

/// `Source, Imputation_number, DF, Chisq, p_value`
pub fn chisq_result_table(tests: &[CombinedTest]) -> ResultTable {
    chisq_table(tests, ["Source", "Imputation_number", "DF", "Chisq", "p_value"])
}

/// `Source, Imputation number, DF, Chisq, p-value`
pub fn tests3_result_table(tests: &[CombinedTest]) -> ResultTable {
    chisq_table(tests, ["Source", "Imputation number", "DF", "Chisq", "p-value"])
}

pub fn pool_f_table(table: &ImputedTable) -> Result<Vec<CombinedTest>> {
    table
        .sources()
        .iter()
        .map(|source| {
            let records = table
                .rows_for(source)
                .into_iter()
                .map(|r| {
                    FractionalFRecord::new(
                        source.as_str(),
                        table.require(r, 1)?,
                        table.require(r, 0)?,
                        table.require(r, 3)?,
                        table.require(r, 2)?,
                        r.imputation,
                    )
                    .map_err(|e| Error::Schema(format!("row {}: {e}", r.line)))
                })
                .collect::<Result<Vec<_>>>()?;
            combine_f_fractional(&records)
        })
        .collect()
}

pub fn pool_chisq_table(table: &ImputedTable, scaling: ChiSqScaling) -> Result<Vec<CombinedTest>> {
    table
        .sources()
        .iter()
        .map(|source| {
            let records = table
                .rows_for(source)
                .into_iter()
                .map(|r| {
                    let df = table.require(r, 0)?;
                    let lambda = table.require(r, 1)?;
                    if lambda == 0.0 {
                        return Err(Error::ZeroStatistic {
                            source_label: source.clone(),
                            imputation: r.imputation,
                            row: Some(r.line),
                        });
                    }
                    ChiSqRecord::new(source.as_str(), lambda, df, r.imputation)
                        .map_err(|e| Error::Schema(format!("row {}: {e}", r.line)))
                })
                .collect::<Result<Vec<_>>>()?;
            combine_chisq(&records, scaling)
        })
        .collect()
}

/// Reshapes a Welch table (effect row plus `Error` row per imputation) into
/// fractional records and pools them.
pub fn pool_welch_table(table: &ImputedTable) -> Result<Vec<CombinedTest>> {
    let is_error = |s: &str| s.eq_ignore_ascii_case("Error");
    let effects: Vec<String> = table.sources().into_iter().filter(|s| !is_error(s)).collect();
    if effects.len() != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one effect row per imputation, found sources {effects:?}"
        )));
    }
    let effect = &effects[0];
    let errors = table
        .sources()
        .into_iter()
        .find(|s| is_error(s))
        .ok_or_else(|| Error::Schema("Welch table has no 'Error' rows".into()))?;
    let error_rows = table.rows_for(&errors);
    let effect_rows = table.rows_for(effect);
    let records = effect_rows
        .iter()
        .zip(&error_rows)
        .map(|(eff, err)| {
            let df = table.require(eff, 0)?;
            let k = df + 1.0;
            if df < 1.0 || df.fract() != 0.0 {
                return Err(Error::Schema(format!(
                    "row {}: effect DF {df} must be a positive integer",
                    eff.line
                )));
            }
            let gamma = table.require(err, 0)?;
            let f_value = table.require(eff, 1)?;
            if !(gamma > 0.0) || !(f_value >= 0.0) {
                return Err(Error::Schema(format!(
                    "imputation {}: Error DF {gamma}, FValue {f_value}",
                    eff.imputation
                )));
            }
            let result = WelchResult {
                f_value,
                k: k as usize,
                gamma,
                p_value: f_pvalue(f_value, df, gamma)?,
            };
            welch_to_fractional(&result, effect, eff.imputation)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![combine_f_fractional(&records)?])
}

/// Shrinking-factor transform of every Tests3 row, then chi-square pooling
/// per effect.
pub fn pool_tests3_table(
    table: &ImputedTable,
    variant: SfaVariant,
    scaling: ChiSqScaling,
) -> Result<Vec<CombinedTest>> {
    table
        .sources()
        .iter()
        .map(|effect| {
            let records = table
                .rows_for(effect)
                .into_iter()
                .map(|r| {
                    let num_df = table.require(r, 0)?;
                    if num_df < 1.0 || num_df.fract() != 0.0 {
                        return Err(Error::Schema(format!(
                            "row {}: NumDF {num_df} must be a positive integer",
                            r.line
                        )));
                    }
                    let den_df = table.require(r, 1)?;
                    if !(den_df > 0.0) {
                        return Err(Error::Schema(format!(
                            "row {}: DenDF {den_df} must be > 0",
                            r.line
                        )));
                    }
                    let f_value = table.require(r, 2)?;
                    let rec = sfa_transform(effect, r.imputation, f_value, num_df as u32, den_df, variant)
                        .map_err(|e| Error::Schema(format!("row {}: {e}", r.line)))?;
                    if rec.lambda == 0.0 {
                        return Err(Error::ZeroStatistic {
                            source_label: effect.clone(),
                            imputation: r.imputation,
                            row: Some(r.line),
                        });
                    }
                    Ok(rec)
                })
                .collect::<Result<Vec<_>>>()?;
            combine_chisq(&records, scaling)
        })
        .collect()
}

/// Rubin's rule per parameter on an `Estimate, StdErr` table.
pub fn pool_scalar_table(table: &ImputedTable) -> Result<Vec<(String, PooledScalar)>> {
    table
        .sources()
        .into_iter()
        .map(|source| {
            let rows = table.rows_for(&source);
            let est = rows.iter().map(|r| table.require(r, 0)).collect::<Result<Vec<_>>>()?;
            let var = rows
                .iter()
                .map(|r| table.require(r, 1).map(|s| s * s))
                .collect::<Result<Vec<_>>>()?;
            Ok((source, rubin_scalar(&est, &var)?))
        })
        .collect()
}

pub fn cmd_pool_f<R: Read>(input: R) -> Result<ResultTable> {
    let table = ImputedTable::read(input, Schema::FractionalF)?;
    Ok(f_result_table(&pool_f_table(&table)?))
}

pub fn cmd_pool_chisq<R: Read>(input: R, scaling: ChiSqScaling) -> Result<ResultTable> {
    let table = ImputedTable::read(input, Schema::ChiSq)?;
    Ok(chisq_result_table(&pool_chisq_table(&table, scaling)?))
}

pub fn cmd_pool_welch<R: Read>(input: R) -> Result<ResultTable> {
    let table = ImputedTable::read(input, Schema::Welch)?;
    Ok(f_result_table(&pool_welch_table(&table)?))
}

pub fn cmd_pool_tests3<R: Read>(
    input: R,
    variant: SfaVariant,
    scaling: ChiSqScaling,
) -> Result<ResultTable> {
    let table = ImputedTable::read(input, Schema::Tests3)?;
    Ok(tests3_result_table(&pool_tests3_table(&table, variant, scaling)?))
}
