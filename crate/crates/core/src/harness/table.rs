use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::ExperimentReport;
use crate::metrics::{Aggregate, HEADLINE};

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub name: String,
    /// `Err` holds the failure reason of a failed cell.
    pub aggregates: Result<BTreeMap<String, Aggregate>, String>,
}

impl TableRow {
    pub fn from_report(r: &ExperimentReport) -> Self {
        TableRow {
            name: r.name.clone(),
            aggregates: Ok(r.aggregates.clone()),
        }
    }
}

fn cell(a: Option<&Aggregate>) -> String {
    match a.map(|a| (a.mean.value(), a.std.value())) {
        Some((Some(m), Some(s))) => format!("{m:.4} ({s:.4})"),
        Some((Some(m), None)) => format!("{m:.4} (nan)"),
        _ => "nan".to_string(),
    }
}

/// Methods as rows, the six headline metrics as columns, `mean (std)` per
/// cell, `nan` when undefined in every fold, `*` on the best mean of each
/// column.
pub fn render_table(rows: &[TableRow]) -> String {
    let best: Vec<Option<f64>> = HEADLINE
        .iter()
        .map(|m| {
            rows.iter()
                .filter_map(|r| r.aggregates.as_ref().ok()?.get(*m)?.mean.value())
                .reduce(f64::max)
        })
        .collect();
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
        .chain(HEADLINE.iter().map(|s| s.to_string()))
        .collect()];
    for r in rows {
        let mut line = vec![r.name.clone()];
        match &r.aggregates {
            Ok(aggs) => {
                for (m, b) in HEADLINE.iter().zip(&best) {
                    let a = aggs.get(*m);
                    let mut text = cell(a);
                    if a.and_then(|a| a.mean.value()).is_some_and(|v| Some(v) == *b) {
                        text.push('*');
                    }
                    line.push(text);
                }
            }
            Err(e) => {
                line.push(format!("failed: {e}"));
                line.extend(std::iter::repeat_n(String::new(), HEADLINE.len() - 1));
            }
        }
        grid.push(line);
    }
    let widths: Vec<usize> = (0..=HEADLINE.len())
        .map(|c| {
            grid.iter()
                .filter(|row| !(row.len() > 1 && row[1].starts_with("failed: ")) || c == 0)
                .map(|row| row[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in &grid {
        let mut line = String::new();
        for (c, text) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{text:<w$}", w = widths[c]);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// One line per logged training batch across all folds.
pub fn lambda_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("fold,epoch,batch,size,positives,loss,gmean,acc,lambda_minority\n");
    for f in &report.folds {
        for b in &f.log.batches {
            let lambda = b.lambda_minority.map(|l| l.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                f.fold_index, b.epoch, b.batch, b.size, b.positives, b.loss, b.gmean, b.acc, lambda
            );
        }
    }
    out
}
