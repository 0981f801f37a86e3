//! The five subcommands. Each reads a resolved [`RunConfig`] and writes its
//! outputs plus a `config.resolved.toml` snapshot into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use longtail_core::checkpoint::Checkpoint;
use longtail_core::data::{write_wide_csv, Boundary, Noise, SeriesSet};
use longtail_core::metrics::{loglog_histogram, var_alpha, Binning, ErrorSample, TailReport};
use longtail_core::models::{fit_ar, AnyModel, RecurrentForecaster};
use longtail_core::study::{run_synthetic_study_with, sub_seed, StudyReport};
use longtail_core::trainer::{evaluate, train_from, EpochDiagnostics, TrainState};
use serde::Serialize;

use crate::compare::{compare, read_report, Comparison};
use crate::config::{DatasetKind, ModelKind, RunConfig, INIT_TAG};
use crate::error::{CliError, CliResult};

pub const SNAPSHOT: &str = "config.resolved.toml";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::output(path, e))
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Output(e.to_string()))
}

/// Resolved config with the applied command-line overrides as leading
/// comments. The output directory is not part of a run and is left out.
pub fn write_snapshot(dir: &Path, config: &RunConfig, overrides: &[String]) -> CliResult<()> {
    let mut text = String::new();
    for o in overrides {
        writeln!(text, "# override: {o}").unwrap();
    }
    text.push_str(&RunConfig { out: None, ..config.clone() }.to_toml()?);
    write(&dir.join(SNAPSHOT), text)
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    kind: DatasetKind,
    n_series: usize,
    length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<Noise>,
    names: &'a [String],
}

pub fn generate(config: &RunConfig, overrides: &[String]) -> CliResult<PathBuf> {
    if !config.is_synthetic() {
        return Err(CliError::Config("dataset.kind: generate needs a synthetic dataset".into()));
    }
    let set = config.load_series()?;
    let d = &config.dataset;
    let noise = match d.kind {
        DatasetKind::Gaussian => Some(Noise::Gaussian { mean: d.noise_mean, std: d.noise_std }),
        DatasetKind::Pareto => Some(Noise::Pareto { shape: d.noise_shape, scale: d.noise_scale }),
        _ => None,
    };
    let manifest = Manifest {
        seed: config.seed,
        kind: d.kind,
        n_series: d.n_series,
        length: d.length,
        phi: noise.map(|_| d.phi),
        noise,
        names: &set.names,
    };
    let dir = config.out_dir();
    create_dir(&dir)?;
    let mut csv = Vec::new();
    write_wide_csv(&set, &mut csv)?;
    write(&dir.join("data.csv"), csv)?;
    write(&dir.join("manifest.json"), json(&manifest)?)?;
    write_snapshot(&dir, config, overrides)?;
    Ok(dir)
}

/// The part of every series before the split boundary, used to fit AR.
fn training_prefixes(set: &SeriesSet, boundary: Boundary) -> Vec<Vec<f64>> {
    set.series
        .iter()
        .map(|s| {
            let end = match boundary {
                Boundary::Index(i) => i.min(s.len()),
                Boundary::Fraction(f) => (f * s.len() as f64).floor() as usize,
            };
            s[..end].to_vec()
        })
        .collect()
}

/// Fits or trains the configured model. With `resume`, an RNN run continues
/// from the saved state until `train.epochs` epochs are complete.
pub fn train(config: &RunConfig, resume: Option<&Path>, overrides: &[String]) -> CliResult<PathBuf> {
    let set = config.load_series()?;
    let split = config.split(&set)?;
    let dir = config.out_dir();
    let (checkpoint, diagnostics) = match config.model.kind {
        ModelKind::Ar => {
            if resume.is_some() {
                return Err(CliError::Config("--checkpoint: AR fits cannot be resumed".into()));
            }
            let model = fit_ar(&training_prefixes(&set, config.boundary()), config.model.order)?;
            let mut c = Checkpoint::new();
            AnyModel::Ar(model).write_to(&mut c);
            (c, EpochDiagnostics::to_csv(&[]))
        }
        ModelKind::Rnn => {
            let state = match resume {
                Some(path) => {
                    let state = TrainState::from_checkpoint(&Checkpoint::load(path)?)?;
                    if state.model.hidden_size() != config.model.hidden_size {
                        return Err(CliError::Config(format!(
                            "model.hidden_size: checkpoint has {}, config has {}",
                            state.model.hidden_size(),
                            config.model.hidden_size
                        )));
                    }
                    state
                }
                None => TrainState::new(RecurrentForecaster::new(
                    config.model.hidden_size,
                    sub_seed(config.seed, INIT_TAG),
                )?),
            };
            let outcome = train_from(state, &split.train, &config.train)?;
            (outcome.state.to_checkpoint(), EpochDiagnostics::to_csv(&outcome.state.diagnostics))
        }
    };
    create_dir(&dir)?;
    let path = dir.join("model.ckpt");
    checkpoint.save(&path)?;
    Checkpoint::load(&path)?;
    write(&dir.join("diagnostics.csv"), diagnostics)?;
    write_snapshot(&dir, config, overrides)?;
    Ok(path)
}

pub fn evaluate_checkpoint(config: &RunConfig, checkpoint: &Path, overrides: &[String]) -> CliResult<TailReport> {
    let model = AnyModel::read_from(&Checkpoint::load(checkpoint)?)?;
    let set = config.load_series()?;
    let split = config.split(&set)?;
    let eval = evaluate(&model, &split.test, config.report.metric)?;
    let sample = ErrorSample::new(eval.errors.clone())?;
    let report = eval.report()?;

    let mut errors = String::from("index,series_id,start,error\n");
    for (&i, e) in eval.indices.iter().zip(&eval.errors) {
        let ex = &split.test.examples[i];
        writeln!(errors, "{i},{},{},{e:?}", set.names[ex.series_id], ex.start).unwrap();
    }
    let mut levels = String::from("alpha,var\n");
    for &a in &config.report.var_levels {
        writeln!(levels, "{a:?},{:?}", var_alpha(&sample, a)?).unwrap();
    }
    let histogram = loglog_histogram(&eval.errors, Binning::Count(config.report.histogram_bins))?;

    let dir = config.out_dir();
    create_dir(&dir)?;
    let report_json = json(&report)?;
    let back: TailReport = serde_json::from_str(&report_json).map_err(|e| CliError::Output(e.to_string()))?;
    if back != report {
        return Err(CliError::Output("report.json does not round-trip".into()));
    }
    write(&dir.join("report.json"), report_json)?;
    write(&dir.join("report.csv"), report.to_csv(eval.metric))?;
    write(&dir.join("errors.csv"), errors)?;
    write(&dir.join("histogram.csv"), histogram.to_csv())?;
    write(&dir.join("var_levels.csv"), levels)?;
    write_snapshot(&dir, config, overrides)?;
    Ok(report)
}

/// Compares report files, first one as baseline, and optionally writes the
/// table to `out`.
pub fn compare_files(paths: &[PathBuf], out: Option<&Path>) -> CliResult<Comparison> {
    let entries = paths.iter().map(|p| read_report(p)).collect::<CliResult<Vec<_>>>()?;
    let comparison = compare(entries)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write(&dir.join("compare.md"), comparison.to_markdown())?;
        write(&dir.join("compare.csv"), comparison.to_csv())?;
    }
    Ok(comparison)
}

pub fn study(config: &RunConfig, overrides: &[String]) -> CliResult<StudyReport> {
    let report = run_synthetic_study_with(&config.study, config.seed)?;
    let dir = config.out_dir();
    let reports = dir.join("reports");
    let histograms = dir.join("histograms");
    create_dir(&reports)?;
    create_dir(&histograms)?;
    write(&dir.join("grid.csv"), report.grid_csv())?;
    let mut checks = String::from("name,value,threshold,passed\n");
    for c in report.checks() {
        writeln!(checks, "{},{:?},{:?},{}", c.name, c.value, c.threshold, c.passed).unwrap();
    }
    write(&dir.join("checks.csv"), checks)?;
    for l in &report.labels {
        write(&histograms.join(format!("labels_{}.csv", l.dataset.name())), l.histogram.to_csv())?;
    }
    for c in &report.cells {
        let stem = format!("{}_{}", c.dataset.name(), c.model.name());
        write(&reports.join(format!("{stem}.json")), json(&c.report)?)?;
        write(&histograms.join(format!("errors_{stem}.csv")), c.histogram.to_csv())?;
    }
    write_snapshot(&dir, config, overrides)?;
    Ok(report)
}
