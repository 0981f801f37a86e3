//! Synthetic series generation, CSV ingestion and windowing.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A collection of named series. Each series carries its own timestamps
/// (integer seconds, or plain step indices for generated data).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub names: Vec<String>,
    pub series: Vec<Vec<f64>>,
    pub timestamps: Vec<Vec<i64>>,
    pub frequency: String,
}

impl SeriesSet {
    /// Series indexed by step `0..len`.
    pub fn from_steps(names: Vec<String>, series: Vec<Vec<f64>>, frequency: &str) -> Result<Self> {
        if names.len() != series.len() {
            return Err(Error::LengthMismatch { expected: series.len(), found: names.len() });
        }
        if series.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParams("series must be nonempty".into()));
        }
        let timestamps = series.iter().map(|s| (0..s.len() as i64).collect()).collect();
        Ok(Self { names, series, timestamps, frequency: frequency.to_string() })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    /// Every value of every series, in order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.series.iter().flatten().copied()
    }
}

fn series_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("series_{i:03}")).collect()
}

fn check_sizes(n_series: usize, length: usize) -> Result<()> {
    if n_series == 0 || length == 0 {
        return Err(Error::InvalidParams("need at least one series of length >= 1".into()));
    }
    Ok(())
}

/// `sin(2*pi*nu*t + theta)` for `t = 0..length`.
pub fn sine_series(theta: f64, nu: f64, length: usize) -> Vec<f64> {
    (0..length)
        .map(|t| (2.0 * std::f64::consts::PI * nu * t as f64 + theta).sin())
        .collect()
}

/// Sine set with per-series offset and frequency drawn from `U[0, 1]`.
pub fn gen_sine(n_series: usize, length: usize, seed: u64) -> Result<SeriesSet> {
    check_sizes(n_series, length)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = (0..n_series)
        .map(|_| {
            let theta: f64 = rng.random();
            let nu: f64 = rng.random();
            sine_series(theta, nu, length)
        })
        .collect();
    SeriesSet::from_steps(series_names(n_series), series, "step")
}

/// Innovation distribution of the AR(1) generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Noise {
    Gaussian { mean: f64, std: f64 },
    /// Classic Pareto with density `shape*scale^shape / x^(shape+1)` on `x >= scale`.
    Pareto { shape: f64, scale: f64 },
}

impl Noise {
    pub const GAUSSIAN: Self = Self::Gaussian { mean: 1.0, std: 1.0 };
    pub const PARETO: Self = Self::Pareto { shape: 10.0, scale: 1.0 };

    /// Draws `n` innovations.
    pub fn draws(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        Ok(match *self {
            Self::Gaussian { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| Error::InvalidParams(e.to_string()))?;
                d.sample_iter(rng).take(n).collect()
            }
            Self::Pareto { shape, scale } => {
                let d = Pareto::new(scale, shape).map_err(|e| Error::InvalidParams(e.to_string()))?;
                d.sample_iter(rng).take(n).collect()
            }
        })
    }
}

/// `y_t = phi*y_{t-1} + eps_t` with `y_0 = eps_0`.
pub fn gen_ar1(noise: Noise, phi: f64, n_series: usize, length: usize, seed: u64) -> Result<SeriesSet> {
    check_sizes(n_series, length)?;
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidParams(format!("|phi| must be below 1, got {phi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(n_series);
    for _ in 0..n_series {
        let eps = noise.draws(length, &mut rng)?;
        let mut y = Vec::with_capacity(length);
        let mut prev = 0.0;
        for (t, e) in eps.into_iter().enumerate() {
            let v = if t == 0 { e } else { phi * prev + e };
            y.push(v);
            prev = v;
        }
        series.push(y);
    }
    SeriesSet::from_steps(series_names(n_series), series, "step")
}

/// History length `k` and horizon `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub k: usize,
    pub h: usize,
}

impl WindowSpec {
    pub fn new(k: usize, h: usize) -> Result<Self> {
        if k == 0 || h == 0 {
            return Err(Error::InvalidParams(format!("window needs k >= 1 and h >= 1, got k={k} h={h}")));
        }
        Ok(Self { k, h })
    }

    pub fn span(&self) -> usize {
        self.k + self.h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub history: Vec<f64>,
    pub target: Vec<f64>,
    pub series_id: usize,
    /// Index of the first history value within its series.
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub spec: WindowSpec,
    pub examples: Vec<Example>,
    pub series_lengths: Vec<usize>,
    /// Series shorter than `k + h`, which produced no windows.
    pub skipped: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn with_examples(&self, examples: Vec<Example>) -> Self {
        Self {
            spec: self.spec,
            examples,
            series_lengths: self.series_lengths.clone(),
            skipped: self.skipped.clone(),
        }
    }
}

/// Cuts every window of `k + h` consecutive values starting at multiples of
/// `stride`. Series too short for one window are listed in `skipped`.
pub fn window(set: &SeriesSet, spec: WindowSpec, stride: usize) -> Result<WindowedDataset> {
    if stride == 0 {
        return Err(Error::InvalidParams("stride must be at least 1".into()));
    }
    let span = spec.span();
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for (id, s) in set.series.iter().enumerate() {
        if s.len() < span {
            skipped.push(id);
            continue;
        }
        for start in (0..=s.len() - span).step_by(stride) {
            examples.push(Example {
                history: s[start..start + spec.k].to_vec(),
                target: s[start + spec.k..start + span].to_vec(),
                series_id: id,
                start,
            });
        }
    }
    Ok(WindowedDataset {
        spec,
        examples,
        series_lengths: set.series.iter().map(Vec::len).collect(),
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Same step index in every series.
    Index(usize),
    /// `floor(fraction * len)` of each series.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub empty_train: bool,
    pub empty_test: bool,
}

/// Chronological split. Training windows end at or before the boundary; test
/// windows forecast targets at or after it, with histories that may reach back
/// into the training range.
pub fn train_test_split(dataset: &WindowedDataset, boundary: Boundary) -> Result<Split> {
    let cut = |id: usize| -> Result<usize> {
        let len = dataset.series_lengths[id];
        match boundary {
            Boundary::Index(b) if b <= len => Ok(b),
            Boundary::Index(b) => Err(Error::InvalidBoundary(format!("index {b} beyond series {id} of length {len}"))),
            Boundary::Fraction(f) if (0.0..=1.0).contains(&f) => Ok((f * len as f64).floor() as usize),
            Boundary::Fraction(f) => Err(Error::InvalidBoundary(format!("fraction {f} outside [0, 1]"))),
        }
    };
    let (k, span) = (dataset.spec.k, dataset.spec.span());
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (id, _) in dataset.series_lengths.iter().enumerate() {
        cut(id)?;
    }
    for ex in &dataset.examples {
        let b = cut(ex.series_id)?;
        if ex.start + span <= b {
            train.push(ex.clone());
        } else if ex.start + k >= b {
            test.push(ex.clone());
        }
    }
    let (empty_train, empty_test) = (train.is_empty(), test.is_empty());
    Ok(Split {
        train: dataset.with_examples(train),
        test: dataset.with_examples(test),
        empty_train,
        empty_test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Timestamp column followed by one column per series.
    Wide,
    /// `series_id,timestamp,value` rows.
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Sum,
}

/// Parses a timestamp as an integer, or as `YYYY-MM-DD HH:MM:SS` (also with a
/// `T` separator) interpreted as UTC seconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| chrono::NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

/// Parses `"15m"`, `"1h"`, `"30s"`, `"1d"` or a bare number of seconds.
pub fn parse_interval(s: &str) -> Option<i64> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| c.is_ascii_alphabetic()) {
        Some(i) => (&s[..i], &s[i..]),
        None => (s, "s"),
    };
    let n: i64 = num.trim().parse().ok()?;
    let mult = match unit {
        "s" => 1,
        "m" | "min" => 60,
        "h" => 3600,
        "d" => 86_400,
        _ => return None,
    };
    (n > 0).then_some(n * mult)
}

fn parse_value(cell: &str, row: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(Error::Parse { row, column: column.to_string(), message: "missing value".into() });
    }
    cell.parse::<f64>().map_err(|e| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("{cell:?}: {e}"),
    })
}

fn parse_ts(cell: &str, row: usize, column: &str) -> Result<i64> {
    parse_timestamp(cell).ok_or_else(|| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("unparseable timestamp {cell:?}"),
    })
}

/// Reads a series set from CSV. Rows are numbered from 1 for the first data
/// row. Long-layout series are split into separate segments wherever their
/// timestamp spacing changes, so windows never straddle a gap.
pub fn read_csv<R: Read>(reader: R, layout: Layout) -> Result<SeriesSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    match layout {
        Layout::Wide => {
            if headers.len() < 2 {
                return Err(Error::Parse { row: 0, column: "header".into(), message: "need a timestamp and a series column".into() });
            }
            let names = headers[1..].to_vec();
            let mut series = vec![Vec::new(); names.len()];
            let mut stamps = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let row = i + 1;
                if rec.len() != headers.len() {
                    return Err(Error::Parse {
                        row,
                        column: "*".into(),
                        message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                    });
                }
                let ts = parse_ts(&rec[0], row, &headers[0])?;
                if stamps.last().is_some_and(|&prev| ts <= prev) {
                    return Err(Error::NonMonotoneTimestamps { series: "*".into(), row });
                }
                stamps.push(ts);
                for (j, s) in series.iter_mut().enumerate() {
                    s.push(parse_value(&rec[j + 1], row, &names[j])?);
                }
            }
            if stamps.is_empty() {
                return Err(Error::EmptySample);
            }
            let timestamps = vec![stamps; names.len()];
            Ok(SeriesSet { names, series, timestamps, frequency: String::new() })
        }
        Layout::Long => {
            let mut names: Vec<String> = Vec::new();
            let mut series: Vec<Vec<f64>> = Vec::new();
            let mut timestamps: Vec<Vec<i64>> = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let row = i + 1;
                if rec.len() != 3 {
                    return Err(Error::Parse { row, column: "*".into(), message: format!("expected 3 fields, found {}", rec.len()) });
                }
                let id = rec[0].trim().to_string();
                let ts = parse_ts(&rec[1], row, &headers[1])?;
                let v = parse_value(&rec[2], row, &headers[2])?;
                let idx = match names.iter().position(|n| *n == id) {
                    Some(idx) => idx,
                    None => {
                        names.push(id.clone());
                        series.push(Vec::new());
                        timestamps.push(Vec::new());
                        names.len() - 1
                    }
                };
                if timestamps[idx].last().is_some_and(|&prev| ts <= prev) {
                    return Err(Error::NonMonotoneTimestamps { series: id, row });
                }
                timestamps[idx].push(ts);
                series[idx].push(v);
            }
            if names.is_empty() {
                return Err(Error::EmptySample);
            }
            Ok(split_at_gaps(SeriesSet { names, series, timestamps, frequency: String::new() }))
        }
    }
}

fn split_at_gaps(set: SeriesSet) -> SeriesSet {
    let mut out = SeriesSet { names: vec![], series: vec![], timestamps: vec![], frequency: set.frequency };
    for ((name, values), stamps) in set.names.into_iter().zip(set.series).zip(set.timestamps) {
        let spacing = stamps.windows(2).map(|w| w[1] - w[0]).min();
        let mut cuts = vec![0];
        if let Some(spacing) = spacing {
            cuts.extend((1..stamps.len()).filter(|&i| stamps[i] - stamps[i - 1] != spacing));
        }
        cuts.push(stamps.len());
        let segments = cuts.len() - 1;
        for (seg, w) in cuts.windows(2).enumerate() {
            out.names.push(if segments == 1 { name.clone() } else { format!("{name}#{}", seg + 1) });
            out.series.push(values[w[0]..w[1]].to_vec());
            out.timestamps.push(stamps[w[0]..w[1]].to_vec());
        }
    }
    out
}

/// Aggregates each series into buckets of `interval` seconds aligned to
/// multiples of `interval`. A bucket is kept only if it holds every sample the
/// native spacing implies; partial buckets are dropped.
pub fn downsample(set: &SeriesSet, interval: i64, aggregator: Aggregator) -> Result<SeriesSet> {
    if interval <= 0 {
        return Err(Error::InvalidParams(format!("interval must be positive, got {interval}")));
    }
    let mut out = SeriesSet {
        names: set.names.clone(),
        series: Vec::with_capacity(set.len()),
        timestamps: Vec::with_capacity(set.len()),
        frequency: format!("{interval}s"),
    };
    for (values, stamps) in set.series.iter().zip(&set.timestamps) {
        let spacing = stamps.windows(2).map(|w| w[1] - w[0]).min().unwrap_or(interval);
        if interval % spacing != 0 {
            return Err(Error::InvalidParams(format!(
                "interval {interval}s is not a multiple of the native spacing {spacing}s"
            )));
        }
        let per_bucket = (interval / spacing) as usize;
        let (mut vs, mut ts) = (Vec::new(), Vec::new());
        let mut i = 0;
        while i < values.len() {
            let bucket = stamps[i].div_euclid(interval);
            let mut j = i;
            while j < values.len() && stamps[j].div_euclid(interval) == bucket {
                j += 1;
            }
            if j - i == per_bucket {
                let sum: f64 = values[i..j].iter().sum();
                vs.push(match aggregator {
                    Aggregator::Mean => sum / per_bucket as f64,
                    Aggregator::Sum => sum,
                });
                ts.push(bucket * interval);
            }
            i = j;
        }
        out.series.push(vs);
        out.timestamps.push(ts);
    }
    Ok(out)
}

pub fn load_csv(path: &Path, layout: Layout, downsample_to: Option<i64>, aggregator: Aggregator) -> Result<SeriesSet> {
    let file = std::fs::File::open(path)?;
    let set = read_csv(std::io::BufReader::new(file), layout)?;
    match downsample_to {
        Some(interval) => downsample(&set, interval, aggregator),
        None => Ok(set),
    }
}

/// Writes the wide layout. All series must share one timestamp axis.
pub fn write_wide_csv<W: Write>(set: &SeriesSet, writer: W) -> Result<()> {
    let axis = set.timestamps.first().ok_or(Error::EmptySample)?;
    if set.timestamps.iter().any(|t| t != axis) {
        return Err(Error::ShapeMismatch("wide layout needs a shared timestamp axis".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(set.names.iter().cloned());
    w.write_record(&header)?;
    for (row, ts) in axis.iter().enumerate() {
        let mut rec = vec![ts.to_string()];
        rec.extend(set.series.iter().map(|s| format!("{:?}", s[row])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_long_csv<W: Write>(set: &SeriesSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "timestamp", "value"])?;
    for ((name, values), stamps) in set.names.iter().zip(&set.series).zip(&set.timestamps) {
        for (v, ts) in values.iter().zip(stamps) {
            w.write_record([name.clone(), ts.to_string(), format!("{v:?}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
