//! Leaderboards: one row per system, metric columns Bias-SSC↓, RStd↓, F1↑,
//! OOD↑, then free-text notes.
//!
//! Markdown shows one decimal and bolds the best value of each column (all
//! tied rows when several share it; nothing when there is a single row).
//! CSV keeps full precision and lists a row's best columns in `best`.

use serde::{Deserialize, Serialize};

use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Markdown,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected markdown or csv)")),
        }
    }
}

/// Metric fields can only be filled from a [`MetricReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    system: String,
    bias_ssc: f64,
    rstd: f64,
    macro_f1: f64,
    ood: Option<f64>,
    notes: String,
}

impl LeaderboardRow {
    pub fn from_report(system: impl Into<String>, report: &MetricReport, notes: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            bias_ssc: report.bias_ssc,
            rstd: report.rstd,
            macro_f1: report.macro_f1,
            ood: report.ood_macro_f1,
            notes: notes.into(),
        }
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn bias_ssc(&self) -> f64 {
        self.bias_ssc
    }

    pub fn rstd(&self) -> f64 {
        self.rstd
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_f1
    }

    pub fn ood(&self) -> Option<f64> {
        self.ood
    }

    pub fn notes(&self) -> &str {
        &self.notes
    }

    fn values(&self) -> [Option<f64>; 4] {
        [Some(self.bias_ssc), Some(self.rstd), Some(self.macro_f1), self.ood]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("a leaderboard needs at least one row")]
    Empty,
    #[error("csv: {0}")]
    Csv(String),
}

pub const COLUMNS: [&str; 4] = ["bias_ssc", "rstd", "macro_f1", "ood"];
const HEADERS: [&str; 4] = ["Bias-SSC ↓", "RStd ↓", "F1 ↑", "OOD ↑"];
const LOWER_IS_BETTER: [bool; 4] = [true, true, false, false];

/// `best[r][c]`: row `r` holds the best value of column `c`.
fn best_cells(rows: &[LeaderboardRow]) -> Vec<[bool; 4]> {
    let mut best = vec![[false; 4]; rows.len()];
    if rows.len() < 2 {
        return best;
    }
    for c in 0..4 {
        let values: Vec<f64> = rows.iter().filter_map(|r| r.values()[c]).collect();
        let target = if LOWER_IS_BETTER[c] {
            values.iter().copied().fold(f64::INFINITY, f64::min)
        } else {
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        for (r, row) in rows.iter().enumerate() {
            best[r][c] = row.values()[c] == Some(target);
        }
    }
    best
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn render_markdown(rows: &[LeaderboardRow]) -> String {
    let best = best_cells(rows);
    let mut out = format!("| System | {} | Notes |\n", HEADERS.join(" | "));
    out.push_str("|---|---:|---:|---:|---:|---|\n");
    for (row, marks) in rows.iter().zip(&best) {
        let cells: Vec<String> = row
            .values()
            .iter()
            .zip(marks)
            .map(|(v, &is_best)| match v {
                None => "n/a".to_string(),
                Some(v) if is_best => format!("**{v:.1}**"),
                Some(v) => format!("{v:.1}"),
            })
            .collect();
        out.push_str(&format!(
            "| {} | {} | {} |\n",
            md_escape(&row.system),
            cells.join(" | "),
            md_escape(&row.notes)
        ));
    }
    out
}

fn render_csv(rows: &[LeaderboardRow]) -> Result<String, ReportError> {
    let best = best_cells(rows);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let err = |e: csv::Error| ReportError::Csv(e.to_string());
    w.write_record(["system", "bias_ssc", "rstd", "macro_f1", "ood", "notes", "best"])
        .map_err(err)?;
    for (row, marks) in rows.iter().zip(&best) {
        let mut record: Vec<String> = vec![row.system.clone()];
        record.extend(row.values().iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
        record.push(row.notes.clone());
        let best_cols: Vec<&str> = COLUMNS.iter().zip(marks).filter(|(_, b)| **b).map(|(c, _)| *c).collect();
        record.push(best_cols.join(";"));
        w.write_record(&record).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_leaderboard(rows: &[LeaderboardRow], format: Format) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    match format {
        Format::Markdown => Ok(render_markdown(rows)),
        Format::Csv => render_csv(rows),
    }
}
