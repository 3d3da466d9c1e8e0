//! Equal-query comparison of recorded runs.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, ZoError};
use crate::harness::records::CsvRow;

/// Fraction of evaluated rows that forms the trailing window.
pub const TRAILING_FRACTION: f64 = 0.2;

/// Population standard deviation of the last `⌈fraction·len⌉` values.
pub fn trailing_std(values: &[f64], fraction: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = ((values.len() as f64 * fraction).ceil() as usize).clamp(1, values.len());
    let tail = &values[values.len() - k..];
    let mean = tail.iter().sum::<f64>() / k as f64;
    Some((tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub steps: u64,
    pub final_queries: u64,
    pub final_loss: Option<f64>,
    pub final_gap: Option<f64>,
    pub trailing_std: Option<f64>,
    /// Largest single-step query count.
    pub max_step_queries: u64,
    /// (cumulative queries, train loss) at every evaluated row.
    pub curve: Vec<(u64, f64)>,
}

pub fn summarize(label: &str, rows: &[CsvRow]) -> Result<RunSummary> {
    let last = rows
        .last()
        .ok_or_else(|| ZoError::Format(format!("run {label:?} has no rows")))?;
    let mut prev = (0, 0);
    for r in rows {
        if r.step <= prev.0 || r.cumulative_queries < prev.1 {
            return Err(ZoError::Format(format!(
                "run {label:?}: step and queries must increase"
            )));
        }
        prev = (r.step, r.cumulative_queries);
    }
    let curve: Vec<(u64, f64)> = rows
        .iter()
        .filter_map(|r| r.train_loss.map(|l| (r.cumulative_queries, l)))
        .collect();
    let losses: Vec<f64> = curve.iter().map(|c| c.1).collect();
    Ok(RunSummary {
        label: label.to_string(),
        steps: last.step,
        final_queries: last.cumulative_queries,
        final_loss: last.train_loss,
        final_gap: last.gap,
        trailing_std: trailing_std(&losses, TRAILING_FRACTION),
        max_step_queries: last.max_step_queries,
        curve,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    FinalLoss,
    FinalGap,
    TrailingStd,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::FinalLoss => "final_loss",
            Metric::FinalGap => "final_gap",
            Metric::TrailingStd => "trailing_std",
        }
    }

    pub fn of(self, s: &RunSummary) -> Option<f64> {
        match self {
            Metric::FinalLoss => s.final_loss,
            Metric::FinalGap => s.final_gap,
            Metric::TrailingStd => s.trailing_std,
        }
    }
}

/// `metric <= ratio`: the first run passes against another when
/// `metric(first) <= ratio · metric(other)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Criterion {
    pub metric: Metric,
    pub ratio: f64,
}

impl FromStr for Criterion {
    type Err = ZoError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, ratio) = match s.split_once("<=") {
            Some((n, r)) => (
                n.trim(),
                r.trim()
                    .parse::<f64>()
                    .map_err(|_| ZoError::Config(format!("bad ratio in criterion {s:?}")))?,
            ),
            None => (s.trim(), 1.0),
        };
        let metric = [Metric::FinalLoss, Metric::FinalGap, Metric::TrailingStd]
            .into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| ZoError::Config(format!("unknown criterion {name:?}")))?;
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(ZoError::Config(format!(
                "criterion ratio must be positive, got {ratio}"
            )));
        }
        Ok(Self { metric, ratio })
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<={}", self.metric.as_str(), self.ratio)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub reference: String,
    pub other: String,
    /// Final-loss difference reference − other.
    pub loss_gap: Option<f64>,
    /// Whether the runs end within one step's worth of queries.
    pub query_parity: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub criterion: Criterion,
    pub runs: Vec<RunSummary>,
    pub comparisons: Vec<Comparison>,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.passed)
    }
}

/// Compares the first run against each of the others.
pub fn compare(runs: Vec<RunSummary>, criterion: Criterion) -> Result<CompareReport> {
    if runs.len() < 2 {
        return Err(ZoError::Config("compare needs at least two runs".into()));
    }
    let reference = &runs[0];
    let comparisons = runs[1..]
        .iter()
        .map(|o| {
            let tolerance = reference.max_step_queries.max(o.max_step_queries);
            let query_parity = reference.final_queries.abs_diff(o.final_queries) <= tolerance;
            let ok = match (criterion.metric.of(reference), criterion.metric.of(o)) {
                (Some(a), Some(b)) => a <= criterion.ratio * b,
                _ => false,
            };
            Comparison {
                reference: reference.label.clone(),
                other: o.label.clone(),
                loss_gap: reference.final_loss.zip(o.final_loss).map(|(a, b)| a - b),
                query_parity,
                passed: query_parity && ok,
            }
        })
        .collect();
    Ok(CompareReport {
        criterion,
        runs,
        comparisons,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>8} {:>12} {:>14} {:>14} {:>14}",
            "run", "steps", "queries", "final_loss", "final_gap", "trailing_std"
        )?;
        for r in &self.runs {
            writeln!(
                f,
                "{:<24} {:>8} {:>12} {:>14} {:>14} {:>14}",
                r.label,
                r.steps,
                r.final_queries,
                cell(r.final_loss),
                cell(r.final_gap),
                cell(r.trailing_std)
            )?;
        }
        for c in &self.comparisons {
            writeln!(
                f,
                "{} {} vs {}: {} loss_gap={} query_parity={}",
                if c.passed { "PASS" } else { "FAIL" },
                c.reference,
                c.other,
                self.criterion,
                cell(c.loss_gap),
                c.query_parity
            )?;
        }
        Ok(())
    }
}

/// Merged loss-vs-query curves: `run,cumulative_queries,train_loss`.
pub fn write_curves<W: std::io::Write>(w: W, runs: &[RunSummary]) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(["run", "cumulative_queries", "train_loss"])?;
    for r in runs {
        for (q, l) in &r.curve {
            out.write_record([r.label.as_str(), &q.to_string(), &format!("{l:?}")])?;
        }
    }
    out.flush().map_err(|e| ZoError::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::StepKind;

    fn rows(losses: &[f64], per_step: u64) -> Vec<CsvRow> {
        losses
            .iter()
            .enumerate()
            .map(|(i, &l)| CsvRow {
                step: i as u64 + 1,
                cumulative_queries: per_step * (i as u64 + 1),
                train_loss: Some(l),
                eval_metric: None,
                eta1: 1e-3,
                eta2: 1e-3,
                kind: StepKind::Minibatch,
                peak_slots: 1,
                elapsed_seconds: 0.0,
                backward_queries: 0,
                gap: Some(l - 0.5),
                batch_loss: l,
                max_step_queries: per_step,
            })
            .collect()
    }

    #[test]
    fn trailing_window_statistics() {
        assert_eq!(trailing_std(&[], 0.2), None);
        assert_eq!(trailing_std(&[3.0], 0.2), Some(0.0));
        // last 2 of 10 values: 1 and 3
        let v = [9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 1.0, 3.0];
        assert_eq!(trailing_std(&v, 0.2), Some(1.0));
    }

    #[test]
    fn identical_runs_have_zero_gap() {
        let a = summarize("a", &rows(&[2.0, 1.0, 0.75], 64)).unwrap();
        let b = summarize("b", &rows(&[2.0, 1.0, 0.75], 64)).unwrap();
        let r = compare(vec![a, b], "final_gap".parse().unwrap()).unwrap();
        assert_eq!(r.comparisons[0].loss_gap, Some(0.0));
        assert!(r.passed());
    }

    #[test]
    fn ratio_criteria() {
        let a = summarize("a", &rows(&[1.0, 0.6], 10)).unwrap();
        let b = summarize("b", &rows(&[1.0, 1.5], 10)).unwrap();
        assert!(compare(vec![a.clone(), b.clone()], "final_gap<=0.1".parse().unwrap())
            .unwrap()
            .passed());
        assert!(!compare(vec![b, a], "final_gap".parse().unwrap()).unwrap().passed());
    }

    #[test]
    fn runs_with_unequal_queries_never_match() {
        let a = summarize("a", &rows(&[1.0, 0.5], 10)).unwrap();
        let b = summarize("b", &rows(&[1.0, 0.9, 0.8, 0.7], 10)).unwrap();
        let r = compare(vec![a, b], "final_loss".parse().unwrap()).unwrap();
        assert!(!r.comparisons[0].query_parity);
        assert!(!r.passed());
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!(
            "trailing_std<=0.5".parse::<Criterion>().unwrap(),
            Criterion {
                metric: Metric::TrailingStd,
                ratio: 0.5
            }
        );
        assert!("speed".parse::<Criterion>().is_err());
        assert!("final_loss<=-1".parse::<Criterion>().is_err());
    }

    #[test]
    fn curves_are_written_per_run() {
        let a = summarize("a", &rows(&[1.0, 0.5], 10)).unwrap();
        let mut buf = Vec::new();
        write_curves(&mut buf, &[a]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "run,cumulative_queries,train_loss\na,10,1.0\na,20,0.5\n"
        );
    }
}
