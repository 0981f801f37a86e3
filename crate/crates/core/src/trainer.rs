//! Mini-batch training of the recurrent forecaster and test-set evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Example, WindowedDataset};
use crate::error::{Error, Result};
use crate::gpd::{fit_gpd_mom, GpdParams};
use crate::losses::{ModifierConfig, ModifierKind};
use crate::metrics::{build_tail_report, moments, per_example_error, ErrorSample, MetricKind, TailReport};
use crate::models::{BatchForward, Forecaster, RecurrentForecaster};

/// When the GPD of auxiliary losses is re-estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpdRefit {
    /// After every batch, from that batch's auxiliary losses.
    PerBatch,
    /// At the start of every epoch, from the whole training set.
    PerEpoch,
}

impl GpdRefit {
    pub fn name(self) -> &'static str {
        match self {
            Self::PerBatch => "per_batch",
            Self::PerEpoch => "per_epoch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub modifier: ModifierConfig,
    pub gpd_refit: GpdRefit,
    /// Weight of a fresh GPD fit when blended into the running estimate.
    pub gpd_ema: f64,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip; infinite disables clipping.
    pub clip_norm: f64,
    /// Leading epochs trained on the unmodified loss.
    pub warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            modifier: ModifierConfig::default(),
            gpd_refit: GpdRefit::PerBatch,
            gpd_ema: 0.3,
            optimizer: Optimizer::default(),
            clip_norm: 10.0,
            warmup_epochs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.gpd_ema > 0.0 && self.gpd_ema <= 1.0) {
            return bad(format!("gpd_ema must lie in (0, 1], got {}", self.gpd_ema));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return bad(format!("invalid Adam settings ({beta1}, {beta2}, {eps})"));
            }
        }
        self.modifier.validate()
    }
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub mean_base_loss: f64,
    pub mean_aux_loss: f64,
    pub xi: f64,
    pub eta: f64,
    /// Mean over batches of the excess kurtosis of auxiliary losses.
    pub aux_kurtosis: f64,
}

impl EpochDiagnostics {
    pub const CSV_HEADER: &'static str = "epoch,mean_base_loss,mean_aux_loss,xi,eta,aux_kurtosis";

    pub fn to_csv(rows: &[Self]) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for d in rows {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?}\n",
                d.epoch, d.mean_base_loss, d.mean_aux_loss, d.xi, d.eta, d.aux_kurtosis
            ));
        }
        out
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: RecurrentForecaster,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
    pub gpd: Option<GpdParams>,
    /// Completed epochs.
    pub epoch: usize,
    pub diagnostics: Vec<EpochDiagnostics>,
}

/// Parameters used by GPD modifiers before any fit has succeeded.
const FALLBACK_GPD: GpdParams = GpdParams { xi: 0.0, eta: 1.0 };

impl TrainState {
    pub fn new(model: RecurrentForecaster) -> Self {
        let n = model.num_params();
        Self {
            model,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            gpd: None,
            epoch: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        self.model.write_to(&mut c);
        c.set("epoch", self.epoch);
        c.set("step", self.step);
        if let Some(g) = self.gpd {
            c.set_f64("gpd_xi", g.xi);
            c.set_f64("gpd_eta", g.eta);
        }
        c.set_vector("adam_m", self.adam_m.clone());
        c.set_vector("adam_v", self.adam_v.clone());
        let col = |f: fn(&EpochDiagnostics) -> f64| self.diagnostics.iter().map(f).collect::<Vec<_>>();
        c.set_vector("diag_base", col(|d| d.mean_base_loss));
        c.set_vector("diag_aux", col(|d| d.mean_aux_loss));
        c.set_vector("diag_xi", col(|d| d.xi));
        c.set_vector("diag_eta", col(|d| d.eta));
        c.set_vector("diag_kurtosis", col(|d| d.aux_kurtosis));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let model = RecurrentForecaster::read_from(c)?;
        let epoch: usize = c.parse("epoch")?;
        let gpd = if c.has("gpd_xi") {
            Some(GpdParams::new(c.get_f64("gpd_xi")?, c.get_f64("gpd_eta")?)?)
        } else {
            None
        };
        let adam_m = c.vector("adam_m")?.to_vec();
        let adam_v = c.vector("adam_v")?.to_vec();
        if adam_m.len() != model.num_params() || adam_v.len() != model.num_params() {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        let cols = ["diag_base", "diag_aux", "diag_xi", "diag_eta", "diag_kurtosis"]
            .map(|k| c.vector(k).map(<[f64]>::to_vec))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        if cols.iter().any(|v| v.len() != epoch) {
            return Err(Error::Checkpoint("diagnostics do not match the epoch count".into()));
        }
        let diagnostics = (0..epoch)
            .map(|e| EpochDiagnostics {
                epoch: e + 1,
                mean_base_loss: cols[0][e],
                mean_aux_loss: cols[1][e],
                xi: cols[2][e],
                eta: cols[3][e],
                aux_kurtosis: cols[4][e],
            })
            .collect();
        Ok(Self { model, adam_m, adam_v, step: c.parse("step")?, gpd, epoch, diagnostics })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// GPD estimate in force after every batch of this call.
    pub gpd_trace: Vec<GpdParams>,
}

fn blend(old: Option<GpdParams>, fresh: GpdParams, weight: f64) -> GpdParams {
    match old {
        None => fresh,
        Some(o) => GpdParams {
            xi: (1.0 - weight) * o.xi + weight * fresh.xi,
            eta: (1.0 - weight) * o.eta + weight * fresh.eta,
        },
    }
}

/// Folds a fit of `aux` into the running estimate. Degenerate samples (for
/// example all-equal losses) leave the estimate unchanged.
fn refit(gpd: &mut Option<GpdParams>, aux: &[f64], weight: f64) -> Result<()> {
    match fit_gpd_mom(aux) {
        Ok(fit) => {
            *gpd = Some(blend(*gpd, fit.params, weight));
            Ok(())
        }
        Err(Error::DegenerateSample(_)) => Ok(()),
        Err(e) => Err(e),
    }
}

/// Visiting order of the examples in `epoch` (zero-based).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn apply_update(state: &mut TrainState, grad: &mut [f64], config: &TrainConfig) {
    let clip = config.clip_norm;
    if clip.is_finite() {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > clip {
            grad.iter_mut().for_each(|g| *g *= clip / norm);
        }
    }
    state.step += 1;
    let lr = config.learning_rate;
    let params = state.model.params_mut();
    match config.optimizer {
        Optimizer::Sgd => params.iter_mut().zip(grad.iter()).for_each(|(p, g)| *p -= lr * g),
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powf(state.step as f64);
            let c2 = 1.0 - beta2.powf(state.step as f64);
            for (((p, g), m), v) in params.iter_mut().zip(grad.iter()).zip(&mut state.adam_m).zip(&mut state.adam_v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Trains a fresh state for `config.epochs` epochs.
pub fn train(model: RecurrentForecaster, data: &WindowedDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_from(TrainState::new(model), data, config)
}

/// What the trainer saw on one batch, passed to an observer.
#[derive(Debug, Clone, Copy)]
pub struct BatchRecord<'a> {
    pub epoch: usize,
    pub batch: usize,
    /// Detached auxiliary losses of the batch, before the update.
    pub aux: &'a [f64],
    /// GPD estimate the batch was modified under.
    pub gpd: GpdParams,
    pub loss: f64,
}

/// [`train_observed`] without an observer.
pub fn train_from(state: TrainState, data: &WindowedDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(state, data, config, &mut |_| {})
}

/// Continues `state` until `config.epochs` epochs are complete.
///
/// Each epoch visits the examples in a seeded shuffle and drops the final
/// partial batch. The GPD is estimated throughout, including warmup epochs
/// where the modifier is off, so modifiers start from a fitted estimate. With
/// per-batch refits each batch's detached auxiliary losses are folded into the
/// estimate before its modified loss is computed.
///
/// `observer` is called after every optimizer step.
pub fn train_observed(
    mut state: TrainState,
    data: &WindowedDataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&BatchRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.len() < config.batch_size {
        return Err(Error::InvalidParams(format!(
            "training set of {} examples is smaller than one batch of {}",
            data.len(),
            config.batch_size
        )));
    }
    let plain = ModifierConfig::new(ModifierKind::None, 0.0);
    let mut gpd_trace = Vec::new();

    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let modifier = if epoch < config.warmup_epochs { plain } else { config.modifier };
        if config.gpd_refit == GpdRefit::PerEpoch {
            let aux = data
                .examples
                .iter()
                .map(|ex| state.model.base_and_aux(ex).map(|(_, a)| a))
                .collect::<Result<Vec<_>>>()?;
            refit(&mut state.gpd, &aux, config.gpd_ema)?;
        }

        let order = epoch_order(data.len(), config.seed, epoch);
        let (mut base_sum, mut aux_sum, mut kurt_sum, mut kurt_n, mut batches) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for (b, chunk) in order.chunks_exact(config.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data.examples[i]).collect();
            let forward = BatchForward::new(&state.model, &batch)?;
            let losses = forward.losses();
            if losses.base().iter().chain(losses.aux()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { batch: b });
            }
            if config.gpd_refit == GpdRefit::PerBatch {
                refit(&mut state.gpd, forward.losses().aux(), config.gpd_ema)?;
            }
            let gpd = state.gpd.unwrap_or(FALLBACK_GPD);
            let mut out = forward.loss_and_gradient(&modifier, &gpd)?;
            drop(forward);
            if !out.loss.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { batch: b });
            }
            apply_update(&mut state, &mut out.grad, config);
            gpd_trace.push(gpd);
            observer(&BatchRecord { epoch, batch: b, aux: &out.aux, gpd, loss: out.loss });

            let n = out.base.len() as f64;
            base_sum += out.base.iter().sum::<f64>() / n;
            aux_sum += out.aux.iter().sum::<f64>() / n;
            if let Ok(m) = moments(&out.aux) {
                kurt_sum += m.kurtosis;
                kurt_n += 1;
            }
            batches += 1;
        }
        let gpd = state.gpd.unwrap_or(FALLBACK_GPD);
        state.epoch += 1;
        state.diagnostics.push(EpochDiagnostics {
            epoch: state.epoch,
            mean_base_loss: base_sum / batches as f64,
            mean_aux_loss: aux_sum / batches as f64,
            xi: gpd.xi,
            eta: gpd.eta,
            aux_kurtosis: if kurt_n > 0 { kurt_sum / kurt_n as f64 } else { 0.0 },
        });
    }
    Ok(TrainOutcome { state, gpd_trace })
}

/// Per-example test errors of a forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metric: MetricKind,
    pub errors: Vec<f64>,
    /// Position in the evaluated dataset of the example behind each error.
    pub indices: Vec<usize>,
    /// Examples skipped because the metric is undefined for them (all-zero
    /// targets under ND or NRMSE).
    pub excluded: usize,
}

impl Evaluation {
    pub fn report(&self) -> Result<TailReport> {
        build_tail_report(&ErrorSample::new(self.errors.clone())?)
    }
}

pub fn evaluate(model: &dyn Forecaster, data: &WindowedDataset, metric: MetricKind) -> Result<Evaluation> {
    let mut errors = Vec::with_capacity(data.len());
    let mut indices = Vec::with_capacity(data.len());
    let mut excluded = 0;
    for (i, ex) in data.examples.iter().enumerate() {
        let f = model.forecast(&ex.history, ex.target.len())?;
        match per_example_error(&f.means, &ex.target, metric) {
            Ok(e) => {
                errors.push(e);
                indices.push(i);
            }
            Err(Error::ZeroDenominator(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Evaluation { metric, errors, indices, excluded })
}
