//! Summary text and raw CSV renderings of a [`SweepReport`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::experiment::{Method, SweepReport, TrialRecord, TrialReport};
use crate::datasets::SampleCount;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

pub const REPORT_CSV_HEADER: &str = "method,n_per_class,fold,trial,ua";

/// `mean±std` in rounded UA percentage points.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{}±{}", (mean * 100.0).round() as i64, (std * 100.0).round() as i64)
}

fn format_priors(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" / ")
}

pub fn render_report(report: &SweepReport, format: ReportFormat) -> Result<String> {
    if report.cells.is_empty() {
        return Err(Error::Precondition("report has no method cells".into()));
    }
    Ok(match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
    })
}

fn render_text(report: &SweepReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "source: {}  target: {}", report.source_name, report.target_name);
    let _ = writeln!(
        out,
        "class priors: source {}  target {}",
        format_priors(&report.source_priors),
        format_priors(&report.target_priors)
    );
    let _ = writeln!(out, "trials: {}  folds: {}", report.trials, report.folds);
    out.push('\n');

    for cell in report.cells.iter().filter(|c| c.n_per_class.is_none()) {
        let _ = writeln!(out, "{}: {}", cell.method.label(), format_cell(cell.mean, cell.std));
    }

    let mut ns: Vec<usize> = report.cells.iter().filter_map(|c| c.n_per_class).collect();
    ns.sort_unstable();
    ns.dedup();
    if !ns.is_empty() {
        let mut methods: Vec<Method> = Vec::new();
        for c in report.cells.iter().filter(|c| c.n_per_class.is_some()) {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
        }
        let unit = match report.count_unit {
            SampleCount::PerClass => "Examples per class",
            SampleCount::Total => "Examples",
        };
        out.push('\n');
        let _ = write!(out, "| {unit} |");
        for n in &ns {
            let _ = write!(out, " {n} |");
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &ns {
            out.push_str("---|");
        }
        out.push('\n');
        for m in methods {
            let _ = write!(out, "| {} |", m.label());
            for &n in &ns {
                match report.cell(m, Some(n)) {
                    Some(c) => {
                        let _ = write!(out, " {} |", format_cell(c.mean, c.std));
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
    }

    if !report.warnings.is_empty() {
        out.push_str("\nwarnings:\n");
        for w in &report.warnings {
            let _ = writeln!(out, "- {w}");
        }
    }
    out
}

fn render_csv(report: &SweepReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for cell in &report.cells {
        let n = cell.n_per_class.map(|n| n.to_string()).unwrap_or_default();
        for r in &cell.records {
            let _ = writeln!(out, "{},{},{},{},{}", cell.method.slug(), n, r.fold, r.trial, r.ua);
        }
    }
    out
}

/// Parse the raw CSV back into per-cell reports, recomputing mean and std.
/// Cells keep their order of first appearance.
pub fn parse_report_csv(text: &str) -> Result<Vec<TrialReport>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("report header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != REPORT_CSV_HEADER {
        return Err(Error::Parse(format!("unexpected report header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut order: Vec<(Method, Option<usize>)> = Vec::new();
    let mut groups: BTreeMap<(Method, Option<usize>), Vec<TrialRecord>> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse(format!("report line {line}: {e}")))?;
        let field = |j: usize| row.get(j).unwrap_or("");
        let bad = |what: &str| Error::Parse(format!("report line {line}: bad {what}"));
        let method: Method = field(0).parse()?;
        let n = match field(1) {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| bad("n_per_class"))?),
        };
        let record = TrialRecord {
            fold: field(2).parse().map_err(|_| bad("fold"))?,
            trial: field(3).parse().map_err(|_| bad("trial"))?,
            ua: field(4).parse().map_err(|_| bad("ua"))?,
        };
        let key = (method, n);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(record);
    }
    order
        .into_iter()
        .map(|key| TrialReport::from_records(key.0, key.1, groups.remove(&key).unwrap_or_default()))
        .collect()
}
