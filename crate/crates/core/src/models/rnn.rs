use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::Example;
use crate::error::{Error, Result};
use crate::gpd::GpdParams;
use crate::losses::{gaussian_nll, modify, LossBatch, ModifierConfig};
use crate::models::{ForecastDistribution, Forecaster, STD_FLOOR};

/// Offsets of each parameter block within the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    hidden: usize,
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wn: usize,
    un: usize,
    bn: usize,
    w_mu: usize,
    b_mu: usize,
    w_sig: usize,
    b_sig: usize,
    total: usize,
}

impl Layout {
    fn new(hidden: usize) -> Self {
        let h = hidden;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let (wz, uz, bz) = (take(h), take(h * h), take(h));
        let (wr, ur, br) = (take(h), take(h * h), take(h));
        let (wn, un, bn) = (take(h), take(h * h), take(h));
        let (w_mu, b_mu, w_sig, b_sig) = (take(h), take(1), take(h), take(1));
        Self { hidden, wz, uz, bz, wr, ur, br, wn, un, bn, w_mu, b_mu, w_sig, b_sig, total: at }
    }
}

/// Single-layer GRU emitting a Gaussian per step.
///
/// Inputs are divided by `1 + mean(|history|)` and outputs multiplied back by
/// the same factor. After encoding the history, each normalized mean is fed
/// back as the next input.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentForecaster {
    layout: Layout,
    params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn input_scale(history: &[f64]) -> f64 {
    1.0 + history.iter().map(|x| x.abs()).sum::<f64>() / history.len() as f64
}

/// `out += M v` for a row-major square matrix.
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o += m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T v`.
fn matvec_t_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, vi) in v.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(&m[i * n..(i + 1) * n]) {
            *o += a * vi;
        }
    }
}

/// `G += u v^T`.
fn outer_add(g: &mut [f64], u: &[f64], v: &[f64]) {
    let n = v.len();
    for (i, ui) in u.iter().enumerate() {
        for (gij, vj) in g[i * n..(i + 1) * n].iter_mut().zip(v) {
            *gij += ui * vj;
        }
    }
}

/// Everything the backward pass needs from one forward pass.
struct Trace {
    scale: f64,
    inputs: Vec<f64>,
    /// `steps + 1` hidden states, the first all zero.
    hidden: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    raw_sig: Vec<f64>,
    out: ForecastDistribution,
}

impl RecurrentForecaster {
    /// Weights drawn uniformly from `[-1/sqrt(H), 1/sqrt(H)]`.
    pub fn new(hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidParams("hidden size must be at least 1".into()));
        }
        let layout = Layout::new(hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..layout.total).map(|_| rng.random_range(-bound..=bound)).collect();
        Ok(Self { layout, params })
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidParams("hidden size must be at least 1".into()));
        }
        let layout = Layout::new(hidden);
        if params.len() != layout.total {
            return Err(Error::LengthMismatch { expected: layout.total, found: params.len() });
        }
        Ok(Self { layout, params })
    }

    pub fn hidden_size(&self) -> usize {
        self.layout.hidden
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        ckpt.set("model", "rnn");
        ckpt.set("hidden_size", self.layout.hidden);
        ckpt.set_vector("params", self.params.clone());
    }

    pub fn read_from(ckpt: &Checkpoint) -> Result<Self> {
        let hidden: usize = ckpt.parse("hidden_size")?;
        Self::from_params(hidden, ckpt.vector("params")?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("rnn parameters: {e}")))
    }

    fn block(&self, at: usize, len: usize) -> &[f64] {
        &self.params[at..at + len]
    }

    fn trace(&self, history: &[f64], h: usize) -> Result<Trace> {
        if history.is_empty() {
            return Err(Error::HistoryTooShort { len: 0, order: 1 });
        }
        if h == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        if let Some(bad) = history.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite history value {bad}")));
        }
        let l = self.layout;
        let hs = l.hidden;
        let k = history.len();
        let steps = k + h - 1;
        let scale = input_scale(history);

        let mut t = Trace {
            scale,
            inputs: Vec::with_capacity(steps),
            hidden: vec![vec![0.0; hs]],
            z: Vec::with_capacity(steps),
            r: Vec::with_capacity(steps),
            n: Vec::with_capacity(steps),
            raw_sig: Vec::with_capacity(h),
            out: ForecastDistribution { means: Vec::with_capacity(h), stds: Vec::with_capacity(h) },
        };
        let (w_mu, b_mu) = (self.block(l.w_mu, hs), self.params[l.b_mu]);
        let (w_sig, b_sig) = (self.block(l.w_sig, hs), self.params[l.b_sig]);
        let mut fed_back = 0.0;

        for s in 0..steps {
            let x = if s < k { history[s] / scale } else { fed_back };
            let prev = &t.hidden[s];
            let gate = |w: usize, u: usize, b: usize, v: &[f64]| {
                let mut a: Vec<f64> = (0..hs).map(|i| self.params[w + i] * x + self.params[b + i]).collect();
                matvec_add(self.block(u, hs * hs), v, &mut a);
                a
            };
            let z: Vec<f64> = gate(l.wz, l.uz, l.bz, prev).into_iter().map(sigmoid).collect();
            let r: Vec<f64> = gate(l.wr, l.ur, l.br, prev).into_iter().map(sigmoid).collect();
            let rh: Vec<f64> = r.iter().zip(prev).map(|(a, b)| a * b).collect();
            let n: Vec<f64> = gate(l.wn, l.un, l.bn, &rh).into_iter().map(f64::tanh).collect();
            let next: Vec<f64> = (0..hs).map(|i| (1.0 - z[i]) * n[i] + z[i] * prev[i]).collect();

            if s + 1 >= k {
                let mu_n = b_mu + w_mu.iter().zip(&next).map(|(a, b)| a * b).sum::<f64>();
                let raw = b_sig + w_sig.iter().zip(&next).map(|(a, b)| a * b).sum::<f64>();
                t.out.means.push(scale * mu_n);
                t.out.stds.push(scale * (softplus(raw) + STD_FLOOR));
                t.raw_sig.push(raw);
                fed_back = mu_n;
            }
            t.inputs.push(x);
            t.z.push(z);
            t.r.push(r);
            t.n.push(n);
            t.hidden.push(next);
        }
        Ok(t)
    }

    /// Accumulates `weight * d(objective)/d(params)` into `grad`, given the
    /// objective's derivatives in each emitted mean and standard deviation.
    fn backward(&self, t: &Trace, d_mean: &[f64], d_std: &[f64], weight: f64, grad: &mut [f64]) {
        let l = self.layout;
        let hs = l.hidden;
        let steps = t.inputs.len();
        let k = steps + 1 - d_mean.len();
        let mut dh = vec![0.0; hs];
        let mut dx_next = 0.0;

        for s in (0..steps).rev() {
            if s + 1 >= k {
                let j = s + 1 - k;
                let h_out = &t.hidden[s + 1];
                // the next cell step (if any) read this normalized mean as input
                let feedback = if s + 1 < steps { dx_next } else { 0.0 };
                let d_mu = weight * t.scale * d_mean[j] + feedback;
                let d_raw = weight * d_std[j] * t.scale * sigmoid(t.raw_sig[j]);
                for i in 0..hs {
                    grad[l.w_mu + i] += d_mu * h_out[i];
                    grad[l.w_sig + i] += d_raw * h_out[i];
                    dh[i] += d_mu * self.params[l.w_mu + i] + d_raw * self.params[l.w_sig + i];
                }
                grad[l.b_mu] += d_mu;
                grad[l.b_sig] += d_raw;
            }

            let (x, prev) = (t.inputs[s], &t.hidden[s]);
            let (z, r, n) = (&t.z[s], &t.r[s], &t.n[s]);
            let mut dh_prev: Vec<f64> = (0..hs).map(|i| dh[i] * z[i]).collect();
            let da_n: Vec<f64> = (0..hs).map(|i| dh[i] * (1.0 - z[i]) * (1.0 - n[i] * n[i])).collect();
            let da_z: Vec<f64> = (0..hs).map(|i| dh[i] * (prev[i] - n[i]) * z[i] * (1.0 - z[i])).collect();

            let rh: Vec<f64> = r.iter().zip(prev).map(|(a, b)| a * b).collect();
            outer_add(&mut grad[l.un..l.un + hs * hs], &da_n, &rh);
            let mut d_rh = vec![0.0; hs];
            matvec_t_add(self.block(l.un, hs * hs), &da_n, &mut d_rh);
            let da_r: Vec<f64> = (0..hs).map(|i| d_rh[i] * prev[i] * r[i] * (1.0 - r[i])).collect();
            for i in 0..hs {
                dh_prev[i] += d_rh[i] * r[i];
            }

            outer_add(&mut grad[l.uz..l.uz + hs * hs], &da_z, prev);
            outer_add(&mut grad[l.ur..l.ur + hs * hs], &da_r, prev);
            matvec_t_add(self.block(l.uz, hs * hs), &da_z, &mut dh_prev);
            matvec_t_add(self.block(l.ur, hs * hs), &da_r, &mut dh_prev);

            let mut dx = 0.0;
            for (w, b, da) in [(l.wz, l.bz, &da_z), (l.wr, l.br, &da_r), (l.wn, l.bn, &da_n)] {
                for i in 0..hs {
                    grad[w + i] += da[i] * x;
                    grad[b + i] += da[i];
                    dx += self.params[w + i] * da[i];
                }
            }
            dx_next = dx;
            dh = dh_prev;
        }
    }

    /// Mean Gaussian NLL over the horizon and the MAE of the means.
    pub fn base_and_aux(&self, example: &Example) -> Result<(f64, f64)> {
        let t = self.trace(&example.history, example.target.len())?;
        per_example_losses(&t.out, &example.target)
    }
}

fn per_example_losses(out: &ForecastDistribution, target: &[f64]) -> Result<(f64, f64)> {
    let h = target.len() as f64;
    let mut base = 0.0;
    let mut aux = 0.0;
    for ((m, s), y) in out.means.iter().zip(&out.stds).zip(target) {
        base += gaussian_nll(*m, *s, *y)?;
        aux += (m - y).abs();
    }
    Ok((base / h, aux / h))
}

impl Forecaster for RecurrentForecaster {
    fn forecast(&self, history: &[f64], h: usize) -> Result<ForecastDistribution> {
        Ok(self.trace(history, h)?.out)
    }
}

/// Batch objective and its gradient with respect to the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGradient {
    /// Mean of the modified per-example losses.
    pub loss: f64,
    pub base: Vec<f64>,
    pub aux: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Forward pass over a batch, kept for the backward pass. The base loss of an
/// example is its mean NLL over the horizon and the auxiliary loss its MAE.
pub struct BatchForward<'a> {
    model: &'a RecurrentForecaster,
    batch: &'a [&'a Example],
    traces: Vec<Trace>,
    losses: LossBatch,
}

impl<'a> BatchForward<'a> {
    pub fn new(model: &'a RecurrentForecaster, batch: &'a [&'a Example]) -> Result<Self> {
        let mut traces = Vec::with_capacity(batch.len());
        let mut base = Vec::with_capacity(batch.len());
        let mut aux = Vec::with_capacity(batch.len());
        for ex in batch {
            let t = model.trace(&ex.history, ex.target.len())?;
            let (b, a) = per_example_losses(&t.out, &ex.target)?;
            traces.push(t);
            base.push(b);
            aux.push(a);
        }
        Ok(Self { model, batch, traces, losses: LossBatch::new(base, aux)? })
    }

    pub fn losses(&self) -> &LossBatch {
        &self.losses
    }

    /// Mean modified loss and its gradient; batch-level modifier quantities
    /// are treated as constants.
    pub fn loss_and_gradient(&self, modifier: &ModifierConfig, gpd: &GpdParams) -> Result<LossAndGradient> {
        let labels: Vec<Vec<f64>> = self.batch.iter().map(|ex| ex.target.clone()).collect();
        let modified = modify(&self.losses, modifier, gpd, &labels)?;

        let mut grad = vec![0.0; self.model.num_params()];
        let weight = 1.0 / self.batch.len() as f64;
        for (i, (t, ex)) in self.traces.iter().zip(self.batch).enumerate() {
            let h = ex.target.len() as f64;
            let (gl, ga) = (modified.d_base[i] / h, modified.d_aux[i] / h);
            let mut d_mean = Vec::with_capacity(ex.target.len());
            let mut d_std = Vec::with_capacity(ex.target.len());
            for ((m, s), y) in t.out.means.iter().zip(&t.out.stds).zip(&ex.target) {
                let e = m - y;
                let sign = if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                d_mean.push(gl * e / (s * s) + ga * sign);
                d_std.push(gl * (1.0 / s - e * e / (s * s * s)));
            }
            self.model.backward(t, &d_mean, &d_std, weight, &mut grad);
        }
        Ok(LossAndGradient {
            loss: modified.values.iter().sum::<f64>() * weight,
            base: self.losses.base().to_vec(),
            aux: self.losses.aux().to_vec(),
            grad,
        })
    }
}

/// Mean modified loss over `batch` and its gradient.
pub fn rnn_loss_and_gradient(
    model: &RecurrentForecaster,
    batch: &[&Example],
    modifier: &ModifierConfig,
    gpd: &GpdParams,
) -> Result<LossAndGradient> {
    BatchForward::new(model, batch)?.loss_and_gradient(modifier, gpd)
}

/// Mean modified loss with the batch context fixed, as used by the gradient
/// oracle in tests.
#[cfg(test)]
pub(crate) fn frozen_objective(
    model: &RecurrentForecaster,
    batch: &[&Example],
    modifier: &ModifierConfig,
    gpd: &GpdParams,
    ctx: &crate::losses::BatchContext,
) -> f64 {
    let (base, aux): (Vec<f64>, Vec<f64>) = batch.iter().map(|ex| model.base_and_aux(ex).unwrap()).unzip();
    let losses = LossBatch::new(base, aux).unwrap();
    let out = crate::losses::modify_with_context(&losses, modifier, gpd, ctx).unwrap();
    out.values.iter().sum::<f64>() / batch.len() as f64
}
