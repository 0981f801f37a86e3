//! Side-by-side comparison of tail reports against a baseline.

use std::fmt::Write as _;
use std::path::Path;

use longtail_core::metrics::{MetricKind, TailReport};

use crate::error::{CliError, CliResult};

/// One report entered into a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub label: String,
    /// Known when the source file records it.
    pub metric: Option<MetricKind>,
    pub report: TailReport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mark {
    /// Strictly below the baseline (first) entry.
    pub better: bool,
    /// Equal to the column minimum.
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub entries: Vec<Entry>,
    pub metric: Option<MetricKind>,
    /// Per entry, one mark per [`TailReport::FIELDS`] column.
    pub marks: Vec<[Mark; 8]>,
}

/// Marks every column; lower is better everywhere. Undefined values take no marks.
pub fn compare(entries: Vec<Entry>) -> CliResult<Comparison> {
    if entries.len() < 2 {
        return Err(CliError::Config(format!("compare needs at least 2 reports, got {}", entries.len())));
    }
    let mut metric: Option<(MetricKind, &str)> = None;
    for e in &entries {
        match (metric, e.metric) {
            (None, Some(m)) => metric = Some((m, &e.label)),
            (Some((m, first)), Some(n)) if m != n => {
                return Err(CliError::MetricKindMismatch {
                    first: m.name().into(),
                    first_file: first.into(),
                    second: n.name().into(),
                    second_file: e.label.clone(),
                })
            }
            _ => {}
        }
    }
    let metric = metric.map(|(m, _)| m);
    let values: Vec<[Option<f64>; 8]> = entries.iter().map(|e| e.report.values()).collect();
    let mut marks = vec![[Mark::default(); 8]; entries.len()];
    for col in 0..8 {
        let baseline = values[0][col];
        let best = values.iter().filter_map(|v| v[col]).fold(f64::INFINITY, f64::min);
        for (row, v) in values.iter().enumerate() {
            if let Some(x) = v[col] {
                marks[row][col] = Mark { better: baseline.is_some_and(|b| x < b), best: x == best };
            }
        }
    }
    Ok(Comparison { entries, metric, marks })
}

fn cell(value: Option<f64>, mark: Mark) -> String {
    match value {
        None => "-".into(),
        Some(v) if mark.best => format!("**{v:.4}**"),
        Some(v) if mark.better => format!("_{v:.4}_"),
        Some(v) => format!("{v:.4}"),
    }
}

impl Comparison {
    /// Markdown table rounded to 4 decimals: best values in bold, values
    /// better than the baseline in italics.
    pub fn to_markdown(&self) -> String {
        let metric = self.metric.map_or("unknown", MetricKind::name);
        let mut out = format!("| report ({metric}) |");
        for f in TailReport::FIELDS {
            write!(out, " {f} |").unwrap();
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(8));
        out.push('\n');
        for (e, marks) in self.entries.iter().zip(&self.marks) {
            write!(out, "| {} |", e.label).unwrap();
            for (v, m) in e.report.values().into_iter().zip(marks) {
                write!(out, " {} |", cell(v, *m)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Long-format CSV at full precision.
    pub fn to_csv(&self) -> String {
        let metric = self.metric.map_or("", MetricKind::name);
        let mut out = String::from("report,metric,column,value,better,best\n");
        for (e, marks) in self.entries.iter().zip(&self.marks) {
            for ((f, v), m) in TailReport::FIELDS.iter().zip(e.report.values()).zip(marks) {
                let v = v.map(|v| format!("{v:?}")).unwrap_or_default();
                writeln!(out, "{},{metric},{f},{v},{},{}", csv_field(&e.label), m.better, m.best).unwrap();
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn parse_opt(raw: &str) -> Result<Option<f64>, String> {
    if raw.is_empty() {
        Ok(None)
    } else {
        raw.parse().map(Some).map_err(|_| format!("bad number {raw:?}"))
    }
}

/// Reads `report.json` (no metric recorded) or `report.csv` (with metric).
pub fn read_report(path: &Path) -> CliResult<Entry> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let label = path.display().to_string();
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let report: TailReport = serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?;
        return Ok(Entry { label, metric: None, report });
    }
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let expected: Vec<&str> = std::iter::once("metric").chain(TailReport::FIELDS).collect();
    if header != expected {
        return Err(CliError::input(path, "header does not match the tail report layout"));
    }
    let row: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if row.len() != expected.len() {
        return Err(CliError::input(path, "expected one data row with every column"));
    }
    let metric = MetricKind::parse(row[0]).ok_or_else(|| CliError::input(path, format!("unknown metric {:?}", row[0])))?;
    let v: Vec<Option<f64>> =
        row[1..].iter().map(|r| parse_opt(r)).collect::<Result<_, _>>().map_err(|e| CliError::input(path, e))?;
    let required = |i: usize| v[i].ok_or_else(|| CliError::input(path, format!("{} is required", TailReport::FIELDS[i])));
    let report = TailReport {
        mean: required(0)?,
        var95: required(1)?,
        var98: required(2)?,
        var99: required(3)?,
        max: required(4)?,
        kurtosis: v[5],
        skew: v[6],
        tail_length: v[7],
    };
    Ok(Entry { label, metric: Some(metric), report })
}
