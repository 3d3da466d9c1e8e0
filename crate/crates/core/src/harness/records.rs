//! CSV emission and parsing of [`RunRecord`] rows.
//!
//! The first nine columns are fixed; later columns are only ever appended.
//! Empty cells mark values that were not measured at that step.

use std::io::Write;
use std::path::Path;

use crate::error::{Result, ZoError};
use crate::optimizers::{RunRecord, StepKind};

pub const COLUMNS: [&str; 13] = [
    "step",
    "cumulative_queries",
    "train_loss",
    "eval_metric",
    "eta1",
    "eta2",
    "kind",
    "peak_slots",
    "elapsed_seconds",
    "backward_queries",
    "gap",
    "batch_loss",
    "max_step_queries",
];

/// Columns that vary between otherwise identical runs.
pub const TIMING_COLUMNS: [&str; 1] = ["elapsed_seconds"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn record_fields(r: &RunRecord) -> [String; 13] {
    [
        r.step.to_string(),
        r.cumulative_queries.to_string(),
        opt(r.train_loss),
        opt(r.eval_metric),
        format!("{:?}", r.eta1),
        format!("{:?}", r.eta2),
        r.kind.as_str().to_string(),
        r.peak_slots.to_string(),
        format!("{:?}", r.elapsed_seconds),
        r.backward_queries.to_string(),
        opt(r.gap),
        format!("{:?}", r.batch_loss),
        r.max_step_queries.to_string(),
    ]
}

/// Writes `records` with a header. Extra columns, if any, are appended to
/// every row with the same values.
pub fn write_records<W: Write>(w: W, records: &[RunRecord], extra: &[(&str, &str)]) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(COLUMNS.iter().copied().chain(extra.iter().map(|(k, _)| *k)))?;
    for r in records {
        let fields = record_fields(r);
        out.write_record(fields.iter().map(String::as_str).chain(extra.iter().map(|(_, v)| *v)))?;
    }
    out.flush().map_err(|e| ZoError::io(Path::new("<csv>"), e))?;
    Ok(())
}

pub fn save_records(path: &Path, records: &[RunRecord], extra: &[(&str, &str)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| ZoError::io(path, e))?;
    write_records(std::io::BufWriter::new(file), records, extra)
}

/// One parsed row. Unknown trailing columns are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub step: u64,
    pub cumulative_queries: u64,
    pub train_loss: Option<f64>,
    pub eval_metric: Option<f64>,
    pub eta1: f64,
    pub eta2: f64,
    pub kind: StepKind,
    pub peak_slots: u64,
    pub elapsed_seconds: f64,
    pub backward_queries: u64,
    pub gap: Option<f64>,
    pub batch_loss: f64,
    pub max_step_queries: u64,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        Self {
            step: r.step,
            cumulative_queries: r.cumulative_queries,
            train_loss: r.train_loss,
            eval_metric: r.eval_metric,
            eta1: r.eta1,
            eta2: r.eta2,
            kind: r.kind,
            peak_slots: r.peak_slots,
            elapsed_seconds: r.elapsed_seconds,
            backward_queries: r.backward_queries,
            gap: r.gap,
            batch_loss: r.batch_loss,
            max_step_queries: r.max_step_queries,
        }
    }
}

fn cell<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .unwrap_or_default()
        .parse()
        .map_err(|_| ZoError::Format(format!("row {line}: bad value in column {}", COLUMNS[i])))
}

fn opt_cell(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<f64>> {
    match rec.get(i).unwrap_or_default() {
        "" => Ok(None),
        _ => cell(rec, i, line).map(Some),
    }
}

pub fn read_records<R: std::io::Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < COLUMNS.len() || header.iter().zip(COLUMNS).any(|(a, b)| a != b) {
        return Err(ZoError::Format(format!(
            "schema mismatch: expected columns starting with {}",
            COLUMNS.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        let kind = match rec.get(6).unwrap_or_default() {
            "fullbatch" => StepKind::Fullbatch,
            "minibatch" => StepKind::Minibatch,
            "fo" => StepKind::Fo,
            other => return Err(ZoError::Format(format!("row {line}: unknown step kind {other:?}"))),
        };
        rows.push(CsvRow {
            step: cell(&rec, 0, line)?,
            cumulative_queries: cell(&rec, 1, line)?,
            train_loss: opt_cell(&rec, 2, line)?,
            eval_metric: opt_cell(&rec, 3, line)?,
            eta1: cell(&rec, 4, line)?,
            eta2: cell(&rec, 5, line)?,
            kind,
            peak_slots: cell(&rec, 7, line)?,
            elapsed_seconds: cell(&rec, 8, line)?,
            backward_queries: cell(&rec, 9, line)?,
            gap: opt_cell(&rec, 10, line)?,
            batch_loss: cell(&rec, 11, line)?,
            max_step_queries: cell(&rec, 12, line)?,
        });
    }
    Ok(rows)
}

pub fn load_records(path: &Path) -> Result<Vec<CsvRow>> {
    let file = std::fs::File::open(path).map_err(|e| ZoError::io(path, e))?;
    read_records(std::io::BufReader::new(file))
}
