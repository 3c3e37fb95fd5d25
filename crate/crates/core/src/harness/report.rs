use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{AggregateReport, Metrics, METRIC_NAMES};

/// Column headings, in [`METRIC_NAMES`] order.
pub const METRIC_HEADINGS: [&str; 6] = ["Acc", "BalAcc", "F1", "Prec", "Rec", "ROC-AUC"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub dataset: String,
    pub model: String,
    pub n_folds: usize,
    pub mean: Metrics,
    pub std: Metrics,
}

impl TableRow {
    pub fn new(dataset: impl Into<String>, model: impl Into<String>, agg: &AggregateReport) -> Self {
        TableRow {
            dataset: dataset.into(),
            model: model.into(),
            n_folds: agg.n_folds,
            mean: agg.mean,
            std: agg.std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
}

impl ResultTable {
    pub fn new(rows: Vec<TableRow>) -> Self {
        ResultTable { rows }
    }

    /// Per-column index of the row with the highest mean; the first wins ties.
    pub fn column_maxima(&self) -> [Option<usize>; 6] {
        let mut out = [None; 6];
        for (c, slot) in out.iter_mut().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let v = row.mean.values()[c];
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((r, v));
                }
            }
            *slot = best.map(|(r, _)| r);
        }
        out
    }

    /// Aligned text; `*` marks column maxima when there is more than one row.
    pub fn to_text(&self) -> String {
        let maxima = self.column_maxima();
        let mark = self.rows.len() > 1;
        let mut cells: Vec<Vec<String>> = vec![{
            let mut h = vec!["Dataset/Task".to_string(), "Model".to_string()];
            h.extend(METRIC_HEADINGS.iter().map(|s| s.to_string()));
            h
        }];
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.dataset.clone(), row.model.clone()];
            for c in 0..6 {
                let star = if mark && maxima[c] == Some(r) { "*" } else { "" };
                line.push(format!(
                    "{:.3}±{:.3}{star}",
                    row.mean.values()[c],
                    row.std.values()[c]
                ));
            }
            cells.push(line);
        }
        let widths: Vec<usize> = (0..8)
            .map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &cells {
            let padded: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| {
                    let pad = w - s.chars().count();
                    if c < 2 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    fn csv_header() -> Vec<String> {
        let mut h = vec!["dataset".to_string(), "model".to_string(), "n_folds".to_string()];
        for name in METRIC_NAMES {
            h.push(name.to_string());
            h.push(format!("{name}_std"));
        }
        h
    }

    /// Comma-separated values with shortest round-trip floats.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Validation(format!("csv: {e}"));
        w.write_record(Self::csv_header()).map_err(io)?;
        for row in &self.rows {
            let mut rec = vec![row.dataset.clone(), row.model.clone(), row.n_folds.to_string()];
            for (m, s) in row.mean.values().iter().zip(row.std.values()) {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            w.write_record(rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let origin = Path::new("<csv>");
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::parse(origin, 1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != Self::csv_header() {
            return Err(Error::parse(origin, 1, "unexpected header"));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse()
                    .map_err(|_| Error::parse(origin, line, format!("bad number `{}`", &rec[k])))
            };
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for c in 0..6 {
                mean[c] = num(3 + 2 * c)?;
                std[c] = num(4 + 2 * c)?;
            }
            rows.push(TableRow {
                dataset: rec[0].to_string(),
                model: rec[1].to_string(),
                n_folds: rec[2]
                    .parse()
                    .map_err(|_| Error::parse(origin, line, "bad fold count"))?,
                mean: Metrics::from_values(mean),
                std: Metrics::from_values(std),
            });
        }
        Ok(ResultTable { rows })
    }
}

/// Writes `<stem>.txt` and `<stem>.csv` under `dir`.
pub fn emit_report(table: &ResultTable, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let txt = dir.join(format!("{stem}.txt"));
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&txt, table.to_text()).map_err(|e| Error::io(&txt, e))?;
    std::fs::write(&csv, table.to_csv()?).map_err(|e| Error::io(&csv, e))?;
    Ok((txt, csv))
}
