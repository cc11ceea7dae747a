//! Per-imputation analysis tables (CSV in, CSV out).
//!
//! Input tables follow the column naming of the statistical system's output
//! datasets. Headers match case-insensitively and a few synonyms are
//! accepted (`_Imputation_` for `Imputation`, `Effect` for `Source`).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::frame::is_missing_cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// `Imputation, Source, DF, MS, de_DF, MSE`
    FractionalF,
    /// `Imputation, Source, DF, FValue`; one `Error` row per imputation.
    Welch,
    /// `Imputation, Effect, NumDF, DenDF, FValue`
    Tests3,
    /// `Imputation, Source, DF, ChiSq`
    ChiSq,
    /// `Imputation, Source, Estimate, StdErr`
    Scalar,
}

const IMPUTATION: &[&str] = &["Imputation", "_Imputation_"];
const SOURCE: &[&str] = &["Source", "Effect", "Parameter"];

impl Schema {
    fn value_columns(self) -> &'static [&'static str] {
        match self {
            Schema::FractionalF => &["DF", "MS", "de_DF", "MSE"],
            Schema::Welch => &["DF", "FValue"],
            Schema::Tests3 => &["NumDF", "DenDF", "FValue"],
            Schema::ChiSq => &["DF", "ChiSq"],
            Schema::Scalar => &["Estimate", "StdErr"],
        }
    }

    fn source_label(self) -> &'static str {
        match self {
            Schema::Tests3 => "Effect",
            Schema::Scalar => "Parameter",
            _ => "Source",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedRow {
    /// 1-based data row number in the input file.
    pub line: usize,
    pub imputation: usize,
    pub source: String,
    pub values: Vec<Option<f64>>,
}

/// A long table of per-imputation analysis rows keyed by
/// `(imputation, source)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedTable {
    pub schema: Schema,
    pub rows: Vec<ImputedRow>,
    pub m: usize,
}

fn find_column(headers: &[String], names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| n.eq_ignore_ascii_case(h.trim())))
}

impl ImputedTable {
    pub fn read<R: Read>(reader: R, schema: Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::Schema("empty input: header row required".into()));
        }
        let imp_col = find_column(&headers, IMPUTATION)
            .ok_or_else(|| Error::Schema("missing column 'Imputation'".into()))?;
        let src_col = find_column(&headers, SOURCE)
            .ok_or_else(|| Error::Schema(format!("missing column '{}'", schema.source_label())))?;
        let value_cols = schema
            .value_columns()
            .iter()
            .map(|name| {
                find_column(&headers, &[name])
                    .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 1;
            let cell = |c: usize| rec.get(c).unwrap_or("");
            let imp_text = cell(imp_col);
            let imputation = imp_text
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 1.0)
                .map(|v| v as usize)
                .ok_or_else(|| {
                    Error::Schema(format!("row {line}: imputation index '{imp_text}' is not a positive integer"))
                })?;
            let source = cell(src_col).to_string();
            if is_missing_cell(&source) {
                return Err(Error::Schema(format!("row {line}: missing source label")));
            }
            let values = value_cols
                .iter()
                .zip(schema.value_columns())
                .map(|(&c, name)| {
                    let s = cell(c);
                    if is_missing_cell(s) {
                        Ok(None)
                    } else {
                        s.parse::<f64>().map(Some).map_err(|_| {
                            Error::Schema(format!("row {line}, column '{name}': '{s}' is not numeric"))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(ImputedRow {
                line,
                imputation,
                source,
                values,
            });
        }
        if rows.is_empty() {
            return Err(Error::Schema("no data rows".into()));
        }
        let m = check_integrity(&rows)?;
        Ok(ImputedTable { schema, rows, m })
    }

    /// Sources in order of first appearance.
    pub fn sources(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.source) {
                out.push(r.source.clone());
            }
        }
        out
    }

    /// Rows of one source sorted by imputation.
    pub fn rows_for(&self, source: &str) -> Vec<&ImputedRow> {
        let mut v: Vec<&ImputedRow> = self.rows.iter().filter(|r| r.source == source).collect();
        v.sort_by_key(|r| r.imputation);
        v
    }

    /// Value `index` of `row`, which must be present.
    pub fn require(&self, row: &ImputedRow, index: usize) -> Result<f64> {
        row.values[index].ok_or_else(|| {
            Error::Schema(format!(
                "row {}: column '{}' is missing",
                row.line,
                self.schema.value_columns()[index]
            ))
        })
    }
}

fn check_integrity(rows: &[ImputedRow]) -> Result<usize> {
    let mut seen = BTreeSet::new();
    let mut by_source: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for r in rows {
        if !seen.insert((r.imputation, r.source.as_str())) {
            return Err(Error::Integrity(format!(
                "row {}: duplicate (imputation {}, source '{}')",
                r.line, r.imputation, r.source
            )));
        }
        by_source.entry(&r.source).or_default().insert(r.imputation);
    }
    let all: BTreeSet<usize> = rows.iter().map(|r| r.imputation).collect();
    let m = *all.iter().next_back().unwrap();
    if all.len() != m {
        let gap = (1..=m).find(|i| !all.contains(i)).unwrap();
        return Err(Error::Integrity(format!(
            "imputation indices must run 1..{m} without gaps; {gap} is absent"
        )));
    }
    for (source, imps) in &by_source {
        if imps.len() != m {
            let gap = (1..=m).find(|i| !imps.contains(i)).unwrap();
            return Err(Error::Integrity(format!(
                "source '{source}' has no row for imputation {gap}"
            )));
        }
    }
    Ok(m)
}

/// Numeric display: 5 significant figures, or 17 for exact round trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Display,
    Full,
}

pub fn format_number(x: f64, precision: Precision) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "Infinity".into() } else { "-Infinity".into() };
    }
    match precision {
        Precision::Full => format!("{x:.16e}"),
        Precision::Display => format_sig(x, 5),
    }
}

fn format_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{:.*E}", sig - 1, x);
    }
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(usize),
    Num(f64),
}

/// A rectangular result table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, writer: W, precision: Precision) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Text(s) => s.clone(),
                Cell::Int(i) => i.to_string(),
                Cell::Num(x) => format_number(*x, precision),
            }))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, precision: Precision) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, precision)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Reads a table written by [`ResultTable::write_csv`]; cells parse as
    /// integers, then floats, then text.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(
                rec?.iter()
                    .map(|s| {
                        if let Ok(i) = s.parse::<usize>() {
                            Cell::Int(i)
                        } else if let Ok(x) = s.parse::<f64>() {
                            Cell::Num(x)
                        } else {
                            Cell::Text(s.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(ResultTable { headers, rows })
    }
}
