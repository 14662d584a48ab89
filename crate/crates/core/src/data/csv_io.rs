use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, TimeSeriesSample};
use crate::error::{Error, Result};

/// Column mapping for the wide CSV layout: one row per sample, a label
/// column, an optional id column and one `c{channel}_t{step}` column per cell.
/// Cell columns may appear in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub label_column: String,
    /// Used when present in the header; otherwise ids are `row{n}`.
    pub id_column: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label_column: "label".into(),
            id_column: Some("id".into()),
        }
    }
}

fn parse_cell_name(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('c')?;
    let (ch, t) = rest.split_once("_t")?;
    Some((ch.parse().ok()?, t.parse().ok()?))
}

struct Layout {
    label: usize,
    id: Option<usize>,
    /// (column index, flat offset) for every value column.
    cells: Vec<(usize, usize, String)>,
    channels: usize,
    length: usize,
}

fn resolve_layout(header: &csv::StringRecord, schema: &CsvSchema) -> Result<Layout> {
    let mut label = None;
    let mut id = None;
    let mut raw = Vec::new();
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        if name == schema.label_column {
            label = Some(col);
        } else if schema.id_column.as_deref() == Some(name) {
            id = Some(col);
        } else if let Some((ch, t)) = parse_cell_name(name) {
            raw.push((col, ch, t, name.to_string()));
        } else {
            return Err(Error::BadHeader(format!("unrecognized column {name:?}")));
        }
    }
    let label = label.ok_or_else(|| Error::BadHeader(format!("missing label column {:?}", schema.label_column)))?;
    if raw.is_empty() {
        return Err(Error::BadHeader("no c{ch}_t{t} value columns".into()));
    }
    let channels = raw.iter().map(|r| r.1).max().unwrap() + 1;
    let length = raw.iter().map(|r| r.2).max().unwrap() + 1;
    if raw.len() != channels * length {
        return Err(Error::BadHeader(format!(
            "{} value columns cannot form a {channels}×{length} grid",
            raw.len()
        )));
    }
    let mut seen = vec![false; channels * length];
    let mut cells = Vec::with_capacity(raw.len());
    for (col, ch, t, name) in raw {
        let off = ch * length + t;
        if std::mem::replace(&mut seen[off], true) {
            return Err(Error::BadHeader(format!("duplicate column {name:?}")));
        }
        cells.push((col, off, name));
    }
    Ok(Layout {
        label,
        id,
        cells,
        channels,
        length,
    })
}

/// Reads a wide-format CSV. Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::BadHeader(e.to_string()))?.clone();
    let layout = resolve_layout(&header, schema)?;
    let width = layout.channels * layout.length;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::MalformedRow {
                row,
                message: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        let label = match record[layout.label].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::NonBinaryLabel {
                    row,
                    value: other.to_string(),
                })
            }
        };
        let mut values = vec![0.0; width];
        for (col, off, name) in &layout.cells {
            let text = record[*col].trim();
            let v: f64 = text.parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("column {name}: {text:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row,
                    column: name.clone(),
                });
            }
            values[*off] = v;
        }
        let id = match layout.id {
            Some(c) => record[c].to_string(),
            None => format!("row{row}"),
        };
        samples.push(TimeSeriesSample { values, label, id });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(samples, layout.channels, layout.length)
}

/// Writes `label,id,c0_t0,...` with shortest round-trip decimal text.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_io = |e: csv::Error| Error::io(path, std::io::Error::other(e));

    let mut header = vec!["label".to_string(), "id".to_string()];
    for ch in 0..data.channels() {
        for t in 0..data.length() {
            header.push(format!("c{ch}_t{t}"));
        }
    }
    w.write_record(&header).map_err(to_io)?;
    let mut row = Vec::with_capacity(header.len());
    for s in data.samples() {
        row.clear();
        row.push(s.label.to_string());
        row.push(s.id.clone());
        row.extend(s.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
