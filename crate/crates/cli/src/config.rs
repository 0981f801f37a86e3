//! Declarative run configuration.

use std::path::{Path, PathBuf};

use longtail_core::data::{
    gen_ar1, gen_sine, load_csv, parse_interval, train_test_split, window, Aggregator, Boundary, Layout, Noise,
    SeriesSet, Split, WindowSpec,
};
use longtail_core::metrics::MetricKind;
use longtail_core::study::StudyConfig;
use longtail_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Sine,
    Gaussian,
    Pareto,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetBlock {
    pub kind: DatasetKind,
    pub n_series: usize,
    pub length: usize,
    /// AR(1) coefficient of the Gaussian and Pareto generators.
    pub phi: f64,
    /// Gaussian innovations.
    pub noise_mean: f64,
    pub noise_std: f64,
    /// Pareto innovations.
    pub noise_shape: f64,
    pub noise_scale: f64,
    pub path: Option<PathBuf>,
    pub layout: Layout,
    /// Interval such as `"1h"`; absent keeps the native sampling.
    pub downsample: Option<String>,
    pub aggregator: Aggregator,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Sine,
            n_series: 100,
            length: 960,
            phi: 0.5,
            noise_mean: 1.0,
            noise_std: 1.0,
            noise_shape: 10.0,
            noise_scale: 1.0,
            path: None,
            layout: Layout::Wide,
            downsample: None,
            aggregator: Aggregator::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowBlock {
    pub k: usize,
    pub h: usize,
    pub stride: usize,
    /// Chronological split as a fraction of each series.
    pub split_fraction: Option<f64>,
    /// Chronological split at a fixed step index.
    pub split_index: Option<usize>,
}

impl Default for WindowBlock {
    fn default() -> Self {
        Self { k: 8, h: 8, stride: 1, split_fraction: None, split_index: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ar,
    Rnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub order: usize,
    pub hidden_size: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self { kind: ModelKind::Rnn, order: 1, hidden_size: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportBlock {
    pub metric: MetricKind,
    /// Extra VaR levels written to `var_levels.csv`.
    pub var_levels: Vec<f64>,
    pub histogram_bins: usize,
}

impl Default for ReportBlock {
    fn default() -> Self {
        Self { metric: MetricKind::Nd, var_levels: vec![0.95, 0.98, 0.99], histogram_bins: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Run seed. Data generation uses it directly; model initialization and
    /// shuffling use values derived from it, and `train.seed` is overwritten.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub dataset: DatasetBlock,
    pub window: WindowBlock,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub report: ReportBlock,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            dataset: DatasetBlock::default(),
            window: WindowBlock::default(),
            model: ModelBlock::default(),
            train: TrainConfig::default(),
            report: ReportBlock::default(),
            study: StudyConfig::default(),
        }
    }
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

/// Seed tags shared with the synthetic study.
pub const INIT_TAG: u64 = 100;
pub const SHUFFLE_TAG: u64 = 101;

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Output(format!("cannot serialize config: {e}")))
    }

    /// Applies derived values and checks every block.
    pub fn resolve(mut self) -> CliResult<Self> {
        self.train.seed = longtail_core::study::sub_seed(self.seed, SHUFFLE_TAG);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Csv => {
                if d.path.is_none() {
                    return Err(invalid("dataset.path", "required for csv datasets"));
                }
                if let Some(iv) = &d.downsample {
                    if parse_interval(iv).is_none() {
                        return Err(invalid("dataset.downsample", format!("unrecognized interval {iv:?}")));
                    }
                }
            }
            _ => {
                if d.path.is_some() {
                    return Err(invalid("dataset.path", "only valid for csv datasets"));
                }
                if d.n_series == 0 {
                    return Err(invalid("dataset.n_series", "must be at least 1"));
                }
                if d.length == 0 {
                    return Err(invalid("dataset.length", "must be at least 1"));
                }
                if !(d.phi.abs() < 1.0) {
                    return Err(invalid("dataset.phi", "must satisfy |phi| < 1"));
                }
            }
        }
        let w = &self.window;
        if w.k == 0 {
            return Err(invalid("window.k", "must be at least 1"));
        }
        if w.h == 0 {
            return Err(invalid("window.h", "must be at least 1"));
        }
        if w.stride == 0 {
            return Err(invalid("window.stride", "must be at least 1"));
        }
        if w.split_fraction.is_some() && w.split_index.is_some() {
            return Err(invalid("window.split_index", "conflicts with window.split_fraction"));
        }
        if let Some(f) = w.split_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid("window.split_fraction", "must lie in [0, 1]"));
            }
        }
        match self.model.kind {
            ModelKind::Ar if self.model.order == 0 => return Err(invalid("model.order", "must be at least 1")),
            ModelKind::Rnn if self.model.hidden_size == 0 => {
                return Err(invalid("model.hidden_size", "must be at least 1"))
            }
            _ => {}
        }
        self.train.validate().map_err(|e| invalid("train", e))?;
        self.study.train.validate().map_err(|e| invalid("study.train", e))?;
        if let Some(a) = self.report.var_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(invalid("report.var_levels", format!("{a} outside (0, 1)")));
        }
        if self.report.histogram_bins < 2 {
            return Err(invalid("report.histogram_bins", "must be at least 2"));
        }
        if self.study.histogram_bins < 2 {
            return Err(invalid("study.histogram_bins", "must be at least 2"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn is_synthetic(&self) -> bool {
        self.dataset.kind != DatasetKind::Csv
    }

    pub fn load_series(&self) -> CliResult<SeriesSet> {
        let d = &self.dataset;
        let set = match d.kind {
            DatasetKind::Sine => gen_sine(d.n_series, d.length, self.seed)?,
            DatasetKind::Gaussian => {
                let noise = Noise::Gaussian { mean: d.noise_mean, std: d.noise_std };
                gen_ar1(noise, d.phi, d.n_series, d.length, self.seed)?
            }
            DatasetKind::Pareto => {
                let noise = Noise::Pareto { shape: d.noise_shape, scale: d.noise_scale };
                gen_ar1(noise, d.phi, d.n_series, d.length, self.seed)?
            }
            DatasetKind::Csv => {
                let path = d.path.as_ref().expect("validated");
                let interval = d.downsample.as_deref().and_then(parse_interval);
                load_csv(path, d.layout, interval, d.aggregator)?
            }
        };
        Ok(set)
    }

    pub fn boundary(&self) -> Boundary {
        match (self.window.split_index, self.window.split_fraction) {
            (Some(i), _) => Boundary::Index(i),
            (None, Some(f)) => Boundary::Fraction(f),
            (None, None) => Boundary::Fraction(0.8),
        }
    }

    pub fn split(&self, set: &SeriesSet) -> CliResult<Split> {
        let spec = WindowSpec::new(self.window.k, self.window.h)?;
        let windows = window(set, spec, self.window.stride)?;
        Ok(train_test_split(&windows, self.boundary())?)
    }
}
