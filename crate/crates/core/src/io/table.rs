//! CSV ingestion with a missing-value policy, and CSV output of samples.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimation::Dataset;
use crate::model::{Schema, Variable};

/// What to do with a row containing an empty or `NA` cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MissingPolicy {
    #[default]
    DropRow,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub dataset: Dataset,
    pub kept: usize,
    pub dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

pub fn read_csv(path: impl AsRef<Path>, schema: Option<&Schema>, policy: MissingPolicy) -> Result<CsvData> {
    read_csv_from(std::fs::File::open(path)?, schema, policy)
}

/// Reads a header row followed by records; rows are numbered from 1 after the header.
///
/// Without a schema every column becomes a variable whose levels are the
/// observed values sorted lexicographically.
pub fn read_csv_from<R: Read>(reader: R, schema: Option<&Schema>, policy: MissingPolicy) -> Result<CsvData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.iter().any(String::is_empty) {
        return Err(Error::Parse("CSV header has an empty column name".into()));
    }
    if header.iter().collect::<BTreeSet<_>>().len() != header.len() {
        return Err(Error::Parse("CSV header repeats a column name".into()));
    }

    // column -> variable index in the output schema
    let column_var: Vec<usize> = match schema {
        Some(s) => {
            let map = header.iter().map(|h| s.var_index(h)).collect::<Result<Vec<_>>>()?;
            if map.len() != s.len() {
                return Err(Error::Schema(format!("CSV has {} columns, schema declares {}", map.len(), s.len())));
            }
            map
        }
        None => (0..header.len()).collect(),
    };

    let mut cells: Vec<(usize, Vec<String>)> = Vec::new();
    let mut dropped = 0;
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::Csv { row: row_no, column: String::new(), message: e.to_string() })?;
        let row: Vec<String> = record.iter().map(|c| c.trim().to_string()).collect();
        if let Some(c) = row.iter().position(|c| is_missing(c)) {
            match policy {
                MissingPolicy::DropRow => {
                    dropped += 1;
                    continue;
                }
                MissingPolicy::Error => {
                    return Err(Error::Csv { row: row_no, column: header[c].clone(), message: "missing value".into() })
                }
            }
        }
        cells.push((row_no, row));
    }
    let schema = match schema {
        Some(s) => s.clone(),
        None => {
            let vars = header
                .iter()
                .enumerate()
                .map(|(c, name)| {
                    let levels: BTreeSet<&str> = cells.iter().map(|(_, r)| r[c].as_str()).collect();
                    Variable::new(name.as_str(), levels)
                })
                .collect();
            if cells.is_empty() {
                return Err(Error::EmptyData);
            }
            Schema::in_listed_order(vars)?
        }
    };

    let mut rows = Vec::with_capacity(cells.len());
    for (row_no, row) in &cells {
        let mut out = vec![0; schema.len()];
        for (c, cell) in row.iter().enumerate() {
            let v = column_var[c];
            out[v] = schema.variable(v).level_index(cell).ok_or_else(|| Error::Csv {
                row: *row_no,
                column: header[c].clone(),
                message: format!("unknown level '{cell}'"),
            })?;
        }
        rows.push(out);
    }
    let kept = rows.len();
    let dataset = Dataset::from_rows(schema, rows)?;
    Ok(CsvData { dataset, kept, dropped })
}

/// Writes level names with a header in schema variable order.
pub fn write_csv<W: Write>(writer: W, schema: &Schema, rows: &[Vec<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.variables().iter().map(|v| v.name.as_str()))?;
    for row in rows {
        w.write_record(row.iter().enumerate().map(|(v, &l)| schema.variable(v).levels[l].as_str()))?;
    }
    w.flush()?;
    Ok(())
}
