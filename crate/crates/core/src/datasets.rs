//! Bundled example datasets and their deletion rules.
//!
//! `growth` holds the Potthoff–Roy dental growth measurements (27 children
//! at ages 8, 10, 12, 14). `upsit` is a synthetic smell-score table with 180
//! subjects in five age groups whose spread grows with age; it stands in for
//! the documentation dataset of the same name and shape.

use crate::error::{Error, Result};
use crate::frame::LongTable;

const UPSIT_CSV: &str = include_str!("../data/upsit.csv");
const GROWTH_CSV: &str = include_str!("../data/growth.csv");

pub const UPSIT_ROWS: usize = 180;
pub const GROWTH_PERSONS: usize = 27;
pub const GROWTH_AGES: [f64; 4] = [8.0, 10.0, 12.0, 14.0];

/// Persons whose age-14 measurement is deleted in the growth example.
pub const GROWTH_DELETED_PERSONS: [&str; 7] = ["1", "5", "9", "12", "16", "20", "24"];

/// Columns: `agegroup` (categorical), `smell`.
pub fn upsit() -> Result<LongTable> {
    let t = LongTable::from_csv(UPSIT_CSV.as_bytes(), &["agegroup"])?;
    if t.n_rows() != UPSIT_ROWS {
        return Err(Error::Integrity(format!(
            "upsit has {} rows, expected {UPSIT_ROWS}",
            t.n_rows()
        )));
    }
    Ok(t)
}

/// Columns: `Person`, `Gender` (categorical), `Age`, `y`.
pub fn growth() -> Result<LongTable> {
    let t = LongTable::from_csv(GROWTH_CSV.as_bytes(), &["Person", "Gender"])?;
    let expected = GROWTH_PERSONS * GROWTH_AGES.len();
    if t.n_rows() != expected {
        return Err(Error::Integrity(format!(
            "growth has {} rows, expected {expected}",
            t.n_rows()
        )));
    }
    Ok(t)
}

/// Marks the first observation of each age group.
pub fn upsit_deletion_rule(table: &LongTable, row: usize) -> bool {
    let group = table.cell_text("agegroup", row);
    !(0..row).any(|r| table.cell_text("agegroup", r) == group)
}

/// Marks age-14 rows of the persons in [`GROWTH_DELETED_PERSONS`].
pub fn growth_deletion_rule(table: &LongTable, row: usize) -> bool {
    let age = table.numeric("Age").ok().and_then(|a| a[row]);
    let person = table.cell_text("Person", row);
    age == Some(14.0)
        && person
            .map(|p| GROWTH_DELETED_PERSONS.contains(&p.as_str()))
            .unwrap_or(false)
}
