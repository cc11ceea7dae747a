//! A small long-format data table with numeric and categorical columns, and
//! the reference-coded design matrices built from it.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_missing(&self, row: usize) -> bool {
        match self {
            ColumnData::Numeric(v) => v[row].is_none(),
            ColumnData::Categorical(v) => v[row].is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

/// Rows of observations; `"."` or an empty cell reads as missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LongTable {
    columns: Vec<Column>,
    n_rows: usize,
}

pub fn is_missing_cell(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "."
}

impl LongTable {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map(|c| c.data.len()).unwrap_or(0);
        if let Some(c) = columns.iter().find(|c| c.data.len() != n_rows) {
            return Err(Error::InvalidArgument(format!(
                "column '{}' has {} rows, expected {n_rows}",
                c.name,
                c.data.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.to_ascii_lowercase()) {
                return Err(Error::InvalidArgument(format!("duplicate column '{}'", c.name)));
            }
        }
        Ok(LongTable { columns, n_rows })
    }

    /// Reads a CSV with a header row. Columns listed in `categorical` are kept
    /// as text; every other column must parse as numbers.
    pub fn from_csv<R: Read>(reader: R, categorical: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() {
            return Err(Error::Schema("missing header row".into()));
        }
        let is_cat: Vec<bool> = headers
            .iter()
            .map(|h| categorical.iter().any(|c| c.eq_ignore_ascii_case(h)))
            .collect();
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (j, col) in cells.iter_mut().enumerate() {
                col.push(rec.get(j).unwrap_or("").to_string());
            }
        }
        let columns = headers
            .into_iter()
            .zip(cells)
            .zip(is_cat)
            .map(|((name, raw), cat)| {
                let data = if cat {
                    ColumnData::Categorical(
                        raw.into_iter()
                            .map(|s| (!is_missing_cell(&s)).then_some(s))
                            .collect(),
                    )
                } else {
                    let mut v = Vec::with_capacity(raw.len());
                    for (i, s) in raw.iter().enumerate() {
                        v.push(if is_missing_cell(s) {
                            None
                        } else {
                            Some(s.parse::<f64>().map_err(|_| {
                                Error::Schema(format!(
                                    "column '{name}', data row {}: '{s}' is not numeric",
                                    i + 1
                                ))
                            })?)
                        });
                    }
                    ColumnData::Numeric(v)
                };
                Ok(Column { name, data })
            })
            .collect::<Result<Vec<_>>>()?;
        LongTable::new(columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns
            .iter_mut()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name).map(|c| &c.data) {
            Some(ColumnData::Numeric(v)) => Ok(v),
            Some(_) => Err(Error::ModelSpec(format!("column '{name}' is not numeric"))),
            None => Err(Error::ModelSpec(format!("unknown column '{name}'"))),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<&[Option<String>]> {
        match self.column(name).map(|c| &c.data) {
            Some(ColumnData::Categorical(v)) => Ok(v),
            Some(_) => Err(Error::ModelSpec(format!("column '{name}' is not categorical"))),
            None => Err(Error::ModelSpec(format!("unknown column '{name}'"))),
        }
    }

    pub fn numeric_mut(&mut self, name: &str) -> Result<&mut Vec<Option<f64>>> {
        match self.column_mut(name).map(|c| &mut c.data) {
            Some(ColumnData::Numeric(v)) => Ok(v),
            Some(_) => Err(Error::ModelSpec(format!("column '{name}' is not numeric"))),
            None => Err(Error::ModelSpec(format!("unknown column '{name}'"))),
        }
    }

    /// Cell as text, for use in row predicates.
    pub fn cell_text(&self, name: &str, row: usize) -> Option<String> {
        match &self.column(name)?.data {
            ColumnData::Numeric(v) => v[row].map(|x| x.to_string()),
            ColumnData::Categorical(v) => v[row].clone(),
        }
    }

    pub fn is_missing(&self, name: &str, row: usize) -> bool {
        self.column(name).map(|c| c.data.is_missing(row)).unwrap_or(true)
    }
}

/// One model term: a main effect (single variable) or an interaction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Term {
    pub vars: Vec<String>,
}

impl Term {
    pub fn new<S: Into<String>>(vars: impl IntoIterator<Item = S>) -> Self {
        Term {
            vars: vars.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses a whitespace-separated effect list such as `"Gender Age Gender*Age"`.
    pub fn parse_list(spec: &str) -> Vec<Term> {
        spec.split_whitespace()
            .map(|t| Term::new(t.split('*').filter(|s| !s.is_empty())))
            .collect()
    }

    pub fn involves(&self, var: &str) -> bool {
        self.vars.iter().any(|v| v.eq_ignore_ascii_case(var))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.vars.join("*"))
    }
}

/// Column indices owned by one term.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectColumns {
    pub term: Term,
    pub columns: Range<usize>,
}

/// Column layout of a reference-coded design (intercept first).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignLayout {
    pub column_names: Vec<String>,
    pub effects: Vec<EffectColumns>,
}

impl DesignLayout {
    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    pub fn effect(&self, term: &Term) -> Option<&EffectColumns> {
        self.effects.iter().find(|e| &e.term == term)
    }
}

enum VarCoding {
    Numeric,
    /// Non-reference levels, each with its own indicator column.
    Categorical(Vec<String>),
}

/// Builds a full-rank design with an intercept. Categorical variables are
/// reference coded with the lexicographically last level as the reference.
///
/// Rows listed in `rows` are used; predictors must be observed on them.
pub fn build_model_matrix(
    table: &LongTable,
    terms: &[Term],
    rows: &[usize],
) -> Result<(DMatrix<f64>, DesignLayout)> {
    let (x, layout) = design_rows(table, terms, rows)?;
    let rank = matrix_rank(&x);
    if rank < x.ncols() {
        return Err(Error::RankDeficient {
            rank,
            columns: x.ncols(),
        });
    }
    Ok((x, layout))
}

/// Same coding as [`build_model_matrix`] without the rank check, for rows
/// that only receive predictions.
pub fn design_rows(
    table: &LongTable,
    terms: &[Term],
    rows: &[usize],
) -> Result<(DMatrix<f64>, DesignLayout)> {
    let mut codings: Vec<(String, VarCoding)> = Vec::new();
    for term in terms {
        if term.vars.is_empty() {
            return Err(Error::ModelSpec("empty term".into()));
        }
        for var in &term.vars {
            if codings.iter().any(|(n, _)| n.eq_ignore_ascii_case(var)) {
                continue;
            }
            let col = table
                .column(var)
                .ok_or_else(|| Error::ModelSpec(format!("unknown factor '{var}'")))?;
            let coding = match &col.data {
                ColumnData::Numeric(_) => VarCoding::Numeric,
                ColumnData::Categorical(v) => {
                    let levels: BTreeSet<&str> = v.iter().flatten().map(String::as_str).collect();
                    let mut levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
                    levels.pop();
                    VarCoding::Categorical(levels)
                }
            };
            codings.push((var.clone(), coding));
        }
    }

    for &r in rows {
        for (var, _) in &codings {
            if table.is_missing(var, r) {
                return Err(Error::InsufficientData(format!(
                    "predictor '{var}' is missing on row {}",
                    r + 1
                )));
            }
        }
    }

    let mut column_names = vec!["Intercept".to_string()];
    let mut blocks: Vec<Vec<f64>> = vec![vec![1.0; rows.len()]];
    let mut effects = Vec::with_capacity(terms.len());
    for term in terms {
        // each variable contributes a set of (label, per-row values) factors;
        // the term's columns are their cartesian product
        let mut cols: Vec<(String, Vec<f64>)> = vec![(String::new(), vec![1.0; rows.len()])];
        for var in &term.vars {
            let (_, coding) = codings
                .iter()
                .find(|(n, _)| n.eq_ignore_ascii_case(var))
                .expect("coding registered above");
            let factor: Vec<(String, Vec<f64>)> = match coding {
                VarCoding::Numeric => {
                    let v = table.numeric(var)?;
                    vec![(var.clone(), rows.iter().map(|&r| v[r].unwrap_or(0.0)).collect())]
                }
                VarCoding::Categorical(levels) => {
                    let v = table.categorical(var)?;
                    levels
                        .iter()
                        .map(|lvl| {
                            let ind = rows
                                .iter()
                                .map(|&r| f64::from(u8::from(v[r].as_deref() == Some(lvl))))
                                .collect();
                            (format!("{var}={lvl}"), ind)
                        })
                        .collect()
                }
            };
            let mut next = Vec::with_capacity(cols.len() * factor.len());
            for (name_a, va) in &cols {
                for (name_b, vb) in &factor {
                    let name = if name_a.is_empty() {
                        name_b.clone()
                    } else {
                        format!("{name_a}*{name_b}")
                    };
                    next.push((name, va.iter().zip(vb).map(|(a, b)| a * b).collect()));
                }
            }
            cols = next;
        }
        let start = blocks.len();
        for (name, v) in cols {
            column_names.push(name);
            blocks.push(v);
        }
        effects.push(EffectColumns {
            term: term.clone(),
            columns: start..blocks.len(),
        });
    }

    let p = blocks.len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| blocks[j][i]);
    Ok((
        x,
        DesignLayout {
            column_names,
            effects,
        },
    ))
}

pub(crate) fn matrix_rank(x: &DMatrix<f64>) -> usize {
    if x.nrows() == 0 || x.ncols() == 0 {
        return 0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = max * 1e-10 * x.nrows().max(x.ncols()) as f64;
    sv.iter().filter(|s| **s > tol).count()
}
