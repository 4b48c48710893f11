//! Typed in-memory tables: parsing, row filtering, train/test splitting and
//! per-group target normalization.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::{ColumnRole, TableSchema, TargetKind, ValueTransform};

/// A parsed table with one typed vector per retained schema column.
/// All column vectors have length `n_rows`; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedTable {
    pub n_rows: usize,
    /// Categorical feature columns, in schema order.
    pub categorical: IndexMap<String, Vec<Option<String>>>,
    /// Numeric feature columns, in schema order.
    pub numeric: IndexMap<String, Vec<Option<f64>>>,
    /// Excluded columns are kept raw so they remain usable for filtering.
    pub excluded: IndexMap<String, Vec<Option<String>>>,
    pub target: Option<TargetColumn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetColumn {
    pub name: String,
    pub kind: TargetKind,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitStrategy {
    /// Sample `ceil(fraction * n_rows)` test rows without replacement.
    Random { fraction: f64, seed: u64 },
    /// Take the last `ceil(fraction * n_rows)` rows in file order.
    ChronologicalTail { fraction: f64 },
}

pub fn parse_table(path: impl AsRef<Path>, schema: &TableSchema) -> Result<TypedTable> {
    let file = std::fs::File::open(path)?;
    parse_reader(file, schema)
}

pub fn parse_reader(reader: impl Read, schema: &TableSchema) -> Result<TypedTable> {
    schema.validate()?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(false)
        .flexible(false)
        .from_reader(reader);

    let mut records = csv_reader.records();

    // Map each schema column to its field position in the file.
    let positions: Vec<usize> = if schema.has_header {
        let header = match records.next() {
            Some(record) => record?,
            None => {
                // Completely empty file: treat as a headerless empty table.
                csv::StringRecord::new()
            }
        };
        schema
            .columns
            .iter()
            .map(|col| {
                header
                    .iter()
                    .position(|h| h == col.name)
                    .ok_or_else(|| Error::MissingColumn(col.name.clone()))
            })
            .collect::<Result<_>>()?
    } else {
        (0..schema.columns.len()).collect()
    };

    let mut table = TypedTable::empty(schema);
    let mut row = 0usize;
    for record in records {
        let record = record?;
        for (col, &pos) in schema.columns.iter().zip(&positions) {
            let raw = record.get(pos).unwrap_or("");
            let cell = if schema.is_missing(raw) { None } else { Some(raw) };
            match col.role {
                ColumnRole::Categorical => table.categorical[&col.name]
                    .push(cell.map(|s| s.to_string())),
                ColumnRole::Excluded => table.excluded[&col.name].push(cell.map(|s| s.to_string())),
                ColumnRole::Numeric => {
                    let value = cell
                        .map(|s| parse_numeric(s, col.transform.as_ref(), &col.name, row))
                        .transpose()?;
                    table.numeric[&col.name].push(value);
                }
                ColumnRole::Target => {
                    let value = cell
                        .map(|s| parse_numeric(s, col.transform.as_ref(), &col.name, row))
                        .transpose()?;
                    table.target.as_mut().expect("target storage").values.push(value);
                }
            }
        }
        row += 1;
    }
    table.n_rows = row;
    Ok(table)
}

fn parse_numeric(
    raw: &str,
    transform: Option<&ValueTransform>,
    column: &str,
    row: usize,
) -> Result<f64> {
    let non_numeric = || Error::NonNumericCell {
        column: column.to_string(),
        row,
        value: raw.to_string(),
    };
    match transform {
        Some(ValueTransform::DayOfYear { format }) => {
            let date = NaiveDate::parse_from_str(raw, format).map_err(|_| non_numeric())?;
            Ok(date.ordinal() as f64)
        }
        None => {
            let value: f64 = raw.trim().parse().map_err(|_| non_numeric())?;
            if !value.is_finite() {
                return Err(non_numeric());
            }
            Ok(value)
        }
    }
}

pub fn write_table(table: &TypedTable, schema: &TableSchema, writer: impl Write) -> Result<()> {
    let mut csv_writer = csv::WriterBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_writer(writer);
    if schema.has_header {
        csv_writer.write_record(schema.columns.iter().map(|c| c.name.as_str()))?;
    }
    let mut record: Vec<String> = Vec::with_capacity(schema.columns.len());
    for row in 0..table.n_rows {
        record.clear();
        for col in &schema.columns {
            let cell = match col.role {
                ColumnRole::Categorical => table.categorical[&col.name][row].clone(),
                ColumnRole::Excluded => table.excluded[&col.name][row].clone(),
                ColumnRole::Numeric => table.numeric[&col.name][row].map(|v| format_f64(v)),
                ColumnRole::Target => table
                    .target
                    .as_ref()
                    .and_then(|t| t.values[row])
                    .map(|v| format_f64(v)),
            };
            record.push(cell.unwrap_or_default());
        }
        csv_writer.write_record(&record)?;
    }
    csv_writer.flush()?;
    Ok(())
}

/// Shortest decimal form that parses back to the identical f64.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

impl TypedTable {
    fn empty(schema: &TableSchema) -> Self {
        let mut categorical = IndexMap::new();
        let mut numeric = IndexMap::new();
        let mut excluded = IndexMap::new();
        let mut target = None;
        for col in &schema.columns {
            match col.role {
                ColumnRole::Categorical => {
                    categorical.insert(col.name.clone(), Vec::new());
                }
                ColumnRole::Numeric => {
                    numeric.insert(col.name.clone(), Vec::new());
                }
                ColumnRole::Excluded => {
                    excluded.insert(col.name.clone(), Vec::new());
                }
                ColumnRole::Target => {
                    target = Some(TargetColumn {
                        name: col.name.clone(),
                        kind: col.target_kind.expect("validated"),
                        values: Vec::new(),
                    });
                }
            }
        }
        TypedTable {
            n_rows: 0,
            categorical,
            numeric,
            excluded,
            target,
        }
    }

    /// Number of non-missing feature cells in one row.
    pub fn non_missing_cells(&self, row: usize) -> usize {
        let cats = self
            .categorical
            .values()
            .filter(|col| col[row].is_some())
            .count();
        let nums = self.numeric.values().filter(|col| col[row].is_some()).count();
        cats + nums
    }

    fn take_rows(&self, keep: &[usize]) -> TypedTable {
        let pick_str = |col: &Vec<Option<String>>| keep.iter().map(|&i| col[i].clone()).collect();
        let pick_num = |col: &Vec<Option<f64>>| keep.iter().map(|&i| col[i]).collect();
        TypedTable {
            n_rows: keep.len(),
            categorical: self
                .categorical
                .iter()
                .map(|(name, col)| (name.clone(), pick_str(col)))
                .collect(),
            numeric: self
                .numeric
                .iter()
                .map(|(name, col)| (name.clone(), pick_num(col)))
                .collect(),
            excluded: self
                .excluded
                .iter()
                .map(|(name, col)| (name.clone(), pick_str(col)))
                .collect(),
            target: self.target.as_ref().map(|t| TargetColumn {
                name: t.name.clone(),
                kind: t.kind,
                values: pick_num(&t.values),
            }),
        }
    }

    /// Raw string view of a column usable as a filter or grouping key.
    fn string_cell(&self, column: &str, row: usize) -> Result<Option<String>> {
        if let Some(col) = self.categorical.get(column) {
            return Ok(col[row].clone());
        }
        if let Some(col) = self.excluded.get(column) {
            return Ok(col[row].clone());
        }
        if let Some(col) = self.numeric.get(column) {
            return Ok(col[row].map(format_f64));
        }
        if let Some(t) = &self.target {
            if t.name == column {
                return Ok(t.values[row].map(format_f64));
            }
        }
        Err(Error::MissingColumn(column.to_string()))
    }
}

/// Keep only the rows where `column` equals `value`; missing cells fail the
/// predicate. Works on any retained column, including excluded ones.
pub fn filter_rows(table: &TypedTable, column: &str, value: &str) -> Result<TypedTable> {
    let mut keep = Vec::new();
    for row in 0..table.n_rows {
        if table.string_cell(column, row)?.as_deref() == Some(value) {
            keep.push(row);
        }
    }
    Ok(table.take_rows(&keep))
}

pub fn split_rows(table: &TypedTable, strategy: SplitStrategy) -> Result<(TypedTable, TypedTable)> {
    let (fraction, test_indices) = match strategy {
        SplitStrategy::Random { fraction, seed } => {
            check_fraction(fraction)?;
            let n_test = test_count(table.n_rows, fraction);
            let mut indices: Vec<usize> = (0..table.n_rows).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            indices.shuffle(&mut rng);
            let mut test: Vec<usize> = indices[..n_test].to_vec();
            test.sort_unstable();
            (fraction, test)
        }
        SplitStrategy::ChronologicalTail { fraction } => {
            check_fraction(fraction)?;
            let n_test = test_count(table.n_rows, fraction);
            (fraction, (table.n_rows - n_test..table.n_rows).collect())
        }
    };
    if test_indices.is_empty() || test_indices.len() == table.n_rows {
        return Err(Error::InvalidSplit(format!(
            "fraction {fraction} leaves an empty side on {} rows",
            table.n_rows
        )));
    }
    let test_set: std::collections::HashSet<usize> = test_indices.iter().copied().collect();
    let train_indices: Vec<usize> = (0..table.n_rows).filter(|i| !test_set.contains(i)).collect();
    Ok((table.take_rows(&train_indices), table.take_rows(&test_indices)))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidSplit(format!(
            "fraction must be in (0, 1), got {fraction}"
        )));
    }
    Ok(())
}

fn test_count(n_rows: usize, fraction: f64) -> usize {
    (fraction * n_rows as f64).ceil() as usize
}

/// Divide every target value by the mean target of its group, computed on the
/// training table. Groups unseen in training fall back to the global training
/// mean, as do rows whose group cell is missing.
pub fn normalize_target_by_group(
    train: &TypedTable,
    test: &TypedTable,
    group_column: &str,
) -> Result<(TypedTable, TypedTable, std::collections::BTreeMap<String, f64>)> {
    let train_target = train
        .target
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("no target column to normalize".to_string()))?;
    if train_target.kind != TargetKind::Continuous {
        return Err(Error::InvalidConfig(
            "group normalization needs a continuous target".to_string(),
        ));
    }

    let mut sums: std::collections::BTreeMap<String, (f64, usize)> = Default::default();
    let mut global = (0.0f64, 0usize);
    for row in 0..train.n_rows {
        let Some(value) = train_target.values[row] else { continue };
        global.0 += value;
        global.1 += 1;
        if let Some(group) = train.string_cell(group_column, row)? {
            let entry = sums.entry(group).or_insert((0.0, 0));
            entry.0 += value;
            entry.1 += 1;
        }
    }
    if global.1 == 0 {
        return Err(Error::EmptyInput);
    }
    let global_mean = global.0 / global.1 as f64;
    if global_mean == 0.0 {
        return Err(Error::ZeroGroupMean("(global)".to_string()));
    }
    let mut means = std::collections::BTreeMap::new();
    for (group, (sum, count)) in sums {
        let mean = sum / count as f64;
        if mean == 0.0 {
            return Err(Error::ZeroGroupMean(group));
        }
        means.insert(group, mean);
    }

    let apply = |table: &TypedTable| -> Result<TypedTable> {
        let mut out = table.clone();
        let target = out.target.as_mut().expect("target checked on train");
        for row in 0..table.n_rows {
            let Some(value) = target.values[row] else { continue };
            let mean = table
                .string_cell(group_column, row)?
                .and_then(|g| means.get(&g).copied())
                .unwrap_or(global_mean);
            target.values[row] = Some(value / mean);
        }
        Ok(out)
    };

    Ok((apply(train)?, apply(test)?, means))
}
