//! Per-example base losses and the loss modifiers.
//!
//! Every modifier works on a [`LossBatch`]: the base loss `l` the model is
//! trained on (Gaussian NLL here, which is unbounded below) and a nonnegative
//! auxiliary loss `l̂` (MAE) that drives the tail model.
//!
//! - PLM adds `lambda * (1 - pdf(l̂))`, a margin that grows towards `lambda`
//!   for tail examples.
//! - PLW multiplies `l` by `1 - lambda * pdf(l̂)`, downweighting easy examples.
//! - Kurtosis adds `lambda * ((l̂ - mean)/std)^4` using batch statistics.
//! - Focal, Shrinkage and LDS are reweighting baselines adapted to the
//!   auxiliary loss.
//!
//! Batch-level quantities (GPD parameters, mean/std of `l̂`, the batch max and
//! LDS weights) are constants for differentiation. [`modify`] returns the
//! partial derivatives with respect to `l` and `l̂` that the model backward
//! pass composes with.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpd::{gpd_pdf, GpdParams};

/// Per-example base and auxiliary losses for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    base: Vec<f64>,
    aux: Vec<f64>,
}

impl LossBatch {
    pub fn new(base: Vec<f64>, aux: Vec<f64>) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::BatchTooSmall { len: 0, min: 1 });
        }
        if base.len() != aux.len() {
            return Err(Error::LengthMismatch { expected: base.len(), found: aux.len() });
        }
        if let Some(bad) = aux.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParams(format!("auxiliary losses must be nonnegative, got {bad}")));
        }
        Ok(Self { base, aux })
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn aux(&self) -> &[f64] {
        &self.aux
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModifierKind {
    None,
    Plm,
    Plw,
    Kurtosis,
    Focal,
    Shrinkage,
    Lds,
}

impl ModifierKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Plm => "plm",
            Self::Plw => "plw",
            Self::Kurtosis => "kurtosis",
            Self::Focal => "focal",
            Self::Shrinkage => "shrinkage",
            Self::Lds => "lds",
        }
    }

    /// Time-series lambda defaults: 1 for PLM, 0.5 for PLW, 0.01 for Kurtosis.
    /// The reweighting baselines do not use lambda.
    pub fn default_lambda(self) -> f64 {
        match self {
            Self::Plm => 1.0,
            Self::Plw => 0.5,
            Self::Kurtosis => 0.01,
            _ => 0.0,
        }
    }
}

/// Which modifier to apply and its hyperparameters. Keys that do not belong to
/// `kind` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawModifierConfig")]
pub struct ModifierConfig {
    pub kind: ModifierKind,
    pub lambda: f64,
    /// Focal exponent.
    pub gamma: f64,
    /// Shrinkage sigmoid sharpness.
    pub shrink_a: f64,
    /// Shrinkage sigmoid midpoint on max-normalized auxiliary loss.
    pub shrink_c: f64,
    pub lds_bins: usize,
    /// Gaussian kernel standard deviation, in bins.
    pub lds_kernel_width: f64,
    pub lds_min_prob: f64,
}

impl Default for ModifierConfig {
    fn default() -> Self {
        Self {
            kind: ModifierKind::None,
            lambda: 0.0,
            gamma: 2.0,
            shrink_a: 10.0,
            shrink_c: 0.2,
            lds_bins: 50,
            lds_kernel_width: 2.0,
            lds_min_prob: 0.001,
        }
    }
}

/// Deserialized form; an omitted `lambda` takes the kind's default.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModifierConfig {
    kind: Option<ModifierKind>,
    lambda: Option<f64>,
    gamma: Option<f64>,
    shrink_a: Option<f64>,
    shrink_c: Option<f64>,
    lds_bins: Option<usize>,
    lds_kernel_width: Option<f64>,
    lds_min_prob: Option<f64>,
}

impl From<RawModifierConfig> for ModifierConfig {
    fn from(raw: RawModifierConfig) -> Self {
        let d = Self::default();
        let kind = raw.kind.unwrap_or(d.kind);
        Self {
            kind,
            lambda: raw.lambda.unwrap_or_else(|| kind.default_lambda()),
            gamma: raw.gamma.unwrap_or(d.gamma),
            shrink_a: raw.shrink_a.unwrap_or(d.shrink_a),
            shrink_c: raw.shrink_c.unwrap_or(d.shrink_c),
            lds_bins: raw.lds_bins.unwrap_or(d.lds_bins),
            lds_kernel_width: raw.lds_kernel_width.unwrap_or(d.lds_kernel_width),
            lds_min_prob: raw.lds_min_prob.unwrap_or(d.lds_min_prob),
        }
    }
}

impl ModifierConfig {
    pub fn new(kind: ModifierKind, lambda: f64) -> Self {
        Self { kind, lambda, ..Self::default() }
    }

    /// `kind` with its default lambda.
    pub fn with_default_lambda(kind: ModifierKind) -> Self {
        Self::new(kind, kind.default_lambda())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        match self.kind {
            ModifierKind::Plw if self.lambda > 1.0 => Err(Error::InvalidParams(format!(
                "plw lambda must lie in [0, 1], got {}",
                self.lambda
            ))),
            ModifierKind::Focal if !(self.gamma >= 0.0) => {
                Err(Error::InvalidParams(format!("focal gamma must be nonnegative, got {}", self.gamma)))
            }
            ModifierKind::Shrinkage if !(self.shrink_a > 0.0) => {
                Err(Error::InvalidParams(format!("shrinkage a must be positive, got {}", self.shrink_a)))
            }
            ModifierKind::Lds if self.lds_bins < 2 || !(self.lds_kernel_width > 0.0) || !(self.lds_min_prob > 0.0) => {
                Err(Error::InvalidParams("lds needs bins >= 2, a positive kernel width and min_prob".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Population mean and standard deviation of the auxiliary losses in a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub mean_aux: f64,
    /// Population variance.
    pub var_aux: f64,
}

impl BatchStats {
    pub fn of(aux: &[f64]) -> Self {
        let n = aux.len() as f64;
        let mean_aux = aux.iter().sum::<f64>() / n;
        let var = aux.iter().map(|v| (v - mean_aux).powi(2)).sum::<f64>() / n;
        Self { mean_aux, var_aux: var }
    }
}

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

pub fn gaussian_nll(mean: f64, std: f64, target: f64) -> Result<f64> {
    if !(std > 0.0) {
        return Err(Error::InvalidParams(format!("standard deviation must be positive, got {std}")));
    }
    let z = (target - mean) / std;
    Ok(HALF_LN_TWO_PI + std.ln() + 0.5 * z * z)
}

/// Mean absolute error over a forecast horizon.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch { expected: pred.len(), found: target.len() });
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("empty horizon".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn plm_margin(aux: f64, params: &GpdParams) -> Result<f64> {
    Ok(1.0 - gpd_pdf(aux, params)?)
}

pub fn apply_plm(batch: &LossBatch, config: &ModifierConfig, params: &GpdParams) -> Result<Vec<f64>> {
    expect_kind(config, ModifierKind::Plm)?;
    config.validate()?;
    batch
        .base
        .iter()
        .zip(&batch.aux)
        .map(|(&l, &a)| Ok(l + config.lambda * plm_margin(a, params)?))
        .collect()
}

pub fn plw_weight(aux: f64, lambda: f64, params: &GpdParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParams(format!("plw lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(1.0 - lambda * gpd_pdf(aux, params)?)
}

pub fn apply_plw(batch: &LossBatch, config: &ModifierConfig, params: &GpdParams) -> Result<Vec<f64>> {
    expect_kind(config, ModifierKind::Plw)?;
    config.validate()?;
    batch
        .base
        .iter()
        .zip(&batch.aux)
        .map(|(&l, &a)| Ok(plw_weight(a, config.lambda, params)? * l))
        .collect()
}

/// Each example's standardized fourth-power deviation within the batch.
/// A constant batch has no tail and yields all-zero terms.
pub fn kurtosis_terms(aux: &[f64]) -> Result<(Vec<f64>, BatchStats)> {
    if aux.len() < 2 {
        return Err(Error::BatchTooSmall { len: aux.len(), min: 2 });
    }
    let stats = BatchStats::of(aux);
    if stats.var_aux == 0.0 {
        return Ok((vec![0.0; aux.len()], stats));
    }
    let terms = aux
        .iter()
        .map(|a| ((a - stats.mean_aux).powi(2) / stats.var_aux).powi(2))
        .collect();
    Ok((terms, stats))
}

pub fn apply_kurtosis(batch: &LossBatch, config: &ModifierConfig) -> Result<Vec<f64>> {
    expect_kind(config, ModifierKind::Kurtosis)?;
    config.validate()?;
    let (terms, _) = kurtosis_terms(&batch.aux)?;
    Ok(batch.base.iter().zip(terms).map(|(l, t)| l + config.lambda * t).collect())
}

/// `(aux / batch_max_aux)^gamma`.
pub fn focal_weight(aux: f64, batch_max_aux: f64, gamma: f64) -> Result<f64> {
    if !(batch_max_aux > 0.0) {
        return Err(Error::InvalidParams(format!("batch max must be positive, got {batch_max_aux}")));
    }
    if !(aux >= 0.0 && aux <= batch_max_aux) {
        return Err(Error::InvalidParams(format!("aux {aux} outside [0, {batch_max_aux}]")));
    }
    Ok((aux / batch_max_aux).powf(gamma))
}

/// Sigmoid weight `1 / (1 + exp(a*(c - aux)))`.
pub fn shrinkage_weight(aux: f64, a: f64, c: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParams(format!("shrinkage a must be positive, got {a}")));
    }
    Ok(1.0 / (1.0 + (a * (c - aux)).exp()))
}

/// Label-distribution-smoothing weights: histogram all labels into `bins`
/// equal-width bins, smooth with a Gaussian kernel (renormalized at the range
/// edges), floor the per-bin probability at `min_prob`, invert, and rescale so
/// the weights average to one.
pub fn lds_weights(targets: &[f64], bins: usize, kernel_width: f64, min_prob: f64) -> Result<Vec<f64>> {
    let (weights, _) = lds_weights_with_density(targets, bins, kernel_width, min_prob)?;
    Ok(weights)
}

/// [`lds_weights`] together with each label's floored density before inversion.
pub fn lds_weights_with_density(
    targets: &[f64],
    bins: usize,
    kernel_width: f64,
    min_prob: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if bins < 2 || !(kernel_width > 0.0) || !(min_prob > 0.0) {
        return Err(Error::InvalidParams("lds needs bins >= 2, a positive kernel width and min_prob".into()));
    }
    if targets.is_empty() {
        return Err(Error::EmptySample);
    }
    let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateLabels);
    }
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| (((v - lo) / width) as usize).min(bins - 1);

    let mut counts = vec![0.0; bins];
    for &t in targets {
        counts[bin_of(t)] += 1.0;
    }
    let total = targets.len() as f64;
    let density: Vec<f64> = (0..bins)
        .map(|i| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (j, c) in counts.iter().enumerate() {
                let d = i as f64 - j as f64;
                let k = (-0.5 * d * d / (kernel_width * kernel_width)).exp();
                acc += k * c;
                norm += k;
            }
            (acc / norm / total).max(min_prob)
        })
        .collect();

    let label_density: Vec<f64> = targets.iter().map(|&t| density[bin_of(t)]).collect();
    let raw: Vec<f64> = label_density.iter().map(|d| 1.0 / d).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok((raw.iter().map(|w| w / mean).collect(), label_density))
}

/// Modified per-example losses with partial derivatives in `l` and `l̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedLoss {
    pub values: Vec<f64>,
    pub d_base: Vec<f64>,
    pub d_aux: Vec<f64>,
}

/// Batch-level quantities that modifiers treat as constants when
/// differentiating: aux moments for kurtosis, the aux maximum for focal and
/// shrinkage, and per-example LDS weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchContext {
    pub stats: BatchStats,
    pub max_aux: f64,
    pub lds_weights: Vec<f64>,
}

impl BatchContext {
    /// `labels` holds each example's horizon targets and is only read by LDS,
    /// which weights an example by the mean weight of its labels.
    pub fn new(batch: &LossBatch, config: &ModifierConfig, labels: &[Vec<f64>]) -> Result<Self> {
        let aux = &batch.aux;
        let stats = match config.kind {
            ModifierKind::Kurtosis => kurtosis_terms(aux)?.1,
            _ => BatchStats::of(aux),
        };
        let max_aux = aux.iter().copied().fold(0.0, f64::max);
        let lds_weights = if config.kind == ModifierKind::Lds {
            if labels.len() != batch.len() {
                return Err(Error::LengthMismatch { expected: batch.len(), found: labels.len() });
            }
            let flat: Vec<f64> = labels.iter().flatten().copied().collect();
            let per_label = lds_weights(&flat, config.lds_bins, config.lds_kernel_width, config.lds_min_prob)?;
            let mut offset = 0;
            labels
                .iter()
                .map(|ex| {
                    let w = per_label[offset..offset + ex.len()].iter().sum::<f64>() / ex.len() as f64;
                    offset += ex.len();
                    w
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self { stats, max_aux, lds_weights })
    }
}

/// Applies `config` to a batch for training. See [`modify_with_context`].
pub fn modify(
    batch: &LossBatch,
    config: &ModifierConfig,
    gpd: &GpdParams,
    labels: &[Vec<f64>],
) -> Result<ModifiedLoss> {
    config.validate()?;
    let ctx = BatchContext::new(batch, config, labels)?;
    modify_with_context(batch, config, gpd, &ctx)
}

/// Modified losses and their partials with `ctx` held fixed.
///
/// For the GPD-based modifiers an auxiliary loss beyond the upper endpoint of
/// a bounded support gets density zero, since the fitted parameters lag the
/// batch they are applied to.
pub fn modify_with_context(
    batch: &LossBatch,
    config: &ModifierConfig,
    gpd: &GpdParams,
    ctx: &BatchContext,
) -> Result<ModifiedLoss> {
    config.validate()?;
    let n = batch.len();
    let (base, aux) = (&batch.base, &batch.aux);
    let lambda = config.lambda;
    let mut out = ModifiedLoss { values: Vec::with_capacity(n), d_base: Vec::with_capacity(n), d_aux: Vec::with_capacity(n) };
    let mut push = |v: f64, db: f64, da: f64| {
        out.values.push(v);
        out.d_base.push(db);
        out.d_aux.push(da);
    };

    match config.kind {
        ModifierKind::None => base.iter().for_each(|&l| push(l, 1.0, 0.0)),
        ModifierKind::Plm => {
            gpd.validate()?;
            for (&l, &a) in base.iter().zip(aux) {
                let (pdf, slope) = gpd.density_and_slope(a);
                push(l + lambda * (1.0 - pdf), 1.0, -lambda * slope);
            }
        }
        ModifierKind::Plw => {
            gpd.validate()?;
            for (&l, &a) in base.iter().zip(aux) {
                let (pdf, slope) = gpd.density_and_slope(a);
                let w = 1.0 - lambda * pdf;
                push(w * l, w, -lambda * slope * l);
            }
        }
        ModifierKind::Kurtosis => {
            let BatchStats { mean_aux, var_aux } = ctx.stats;
            for (&l, &a) in base.iter().zip(aux) {
                if var_aux > 0.0 {
                    let d = a - mean_aux;
                    push(l + lambda * (d * d / var_aux).powi(2), 1.0, 4.0 * lambda * d.powi(3) / (var_aux * var_aux));
                } else {
                    push(l, 1.0, 0.0);
                }
            }
        }
        ModifierKind::Focal => {
            let max = ctx.max_aux;
            if max == 0.0 {
                base.iter().for_each(|_| push(0.0, 0.0, 0.0));
            } else {
                let g = config.gamma;
                for (&l, &a) in base.iter().zip(aux) {
                    let w = (a / max).powf(g);
                    let dw = if g == 0.0 || (a == 0.0 && g < 1.0) {
                        0.0
                    } else {
                        g * (a / max).powf(g - 1.0) / max
                    };
                    push(w * l, w, dw * l);
                }
            }
        }
        ModifierKind::Shrinkage => {
            let scale = if ctx.max_aux > 0.0 { ctx.max_aux } else { 1.0 };
            for (&l, &a) in base.iter().zip(aux) {
                let w = shrinkage_weight(a / scale, config.shrink_a, config.shrink_c)?;
                let dw = config.shrink_a * w * (1.0 - w) / scale;
                push(w * l, w, dw * l);
            }
        }
        ModifierKind::Lds => {
            if ctx.lds_weights.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: ctx.lds_weights.len() });
            }
            for (&l, &w) in base.iter().zip(&ctx.lds_weights) {
                push(w * l, w, 0.0);
            }
        }
    }
    Ok(out)
}

fn expect_kind(config: &ModifierConfig, kind: ModifierKind) -> Result<()> {
    if config.kind != kind {
        return Err(Error::InvalidParams(format!(
            "expected a {} modifier, got {}",
            kind.name(),
            config.kind.name()
        )));
    }
    Ok(())
}
