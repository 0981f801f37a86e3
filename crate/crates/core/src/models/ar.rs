use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::models::{ForecastDistribution, Forecaster, STD_FLOOR};

/// Linear autoregression `y_t = intercept + sum_i coeffs[i] * y_{t-1-i} + e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub coeffs: Vec<f64>,
    pub intercept: f64,
    pub noise_std: f64,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn write_to(&self, ckpt: &mut Checkpoint) {
        ckpt.set("model", "ar");
        ckpt.set("order", self.order());
        ckpt.set_f64("intercept", self.intercept);
        ckpt.set_f64("noise_std", self.noise_std);
        ckpt.set_vector("coeffs", self.coeffs.clone());
    }

    pub fn read_from(ckpt: &Checkpoint) -> Result<Self> {
        let order: usize = ckpt.parse("order")?;
        let coeffs = ckpt.vector("coeffs")?.to_vec();
        if coeffs.len() != order || order == 0 {
            return Err(Error::Checkpoint(format!("expected {order} coefficients, found {}", coeffs.len())));
        }
        Ok(Self { coeffs, intercept: ckpt.get_f64("intercept")?, noise_std: ckpt.get_f64("noise_std")? })
    }
}

/// Ordinary least squares on the design pooled over all series, solved by
/// Householder QR. `noise_std` is the residual standard deviation with
/// `order + 1` degrees of freedom removed.
pub fn fit_ar<S: AsRef<[f64]>>(series: &[S], order: usize) -> Result<ArModel> {
    if order == 0 {
        return Err(Error::InvalidParams("order must be at least 1".into()));
    }
    let cols = order + 1;
    let mut rows: Vec<f64> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for s in series {
        let s = s.as_ref();
        if s.len() <= order {
            return Err(Error::SeriesTooShort { len: s.len(), needed: order });
        }
        for t in order..s.len() {
            rows.extend((1..=order).map(|lag| s[t - lag]));
            rows.push(1.0);
            y.push(s[t]);
        }
    }
    let n = y.len();
    if n < cols {
        return Err(Error::RankDeficient);
    }
    let beta = least_squares(&mut rows.clone(), &mut y.clone(), n, cols)?;

    let rss: f64 = rows
        .chunks_exact(cols)
        .zip(&y)
        .map(|(row, target)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (target - fit).powi(2)
        })
        .sum();
    let dof = if n > cols { n - cols } else { n };
    Ok(ArModel {
        coeffs: beta[..order].to_vec(),
        intercept: beta[order],
        noise_std: (rss / dof as f64).sqrt(),
    })
}

/// Solves `min |A x - b|` for a row-major `n x m` matrix via Householder QR,
/// destroying `a` and `b`.
fn least_squares(a: &mut [f64], b: &mut [f64], n: usize, m: usize) -> Result<Vec<f64>> {
    let mut diag = vec![0.0; m];
    let scale = (0..m)
        .map(|j| (0..n).map(|i| a[i * m + j].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    for j in 0..m {
        let norm = (j..n).map(|i| a[i * m + j].powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient);
        }
        let alpha = if a[j * m + j] > 0.0 { -norm } else { norm };
        // v = x - alpha e1, stored in place
        a[j * m + j] -= alpha;
        let vnorm2: f64 = (j..n).map(|i| a[i * m + j].powi(2)).sum();
        for c in j + 1..m {
            let dot: f64 = (j..n).map(|i| a[i * m + j] * a[i * m + c]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..n {
                a[i * m + c] -= f * a[i * m + j];
            }
        }
        let dot: f64 = (j..n).map(|i| a[i * m + j] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..n {
            b[i] -= f * a[i * m + j];
        }
        diag[j] = alpha;
    }
    let mut x = vec![0.0; m];
    for j in (0..m).rev() {
        let s: f64 = (j + 1..m).map(|c| a[j * m + c] * x[c]).sum();
        x[j] = (b[j] - s) / diag[j];
    }
    Ok(x)
}

/// Iterated forecast. Step `j` has variance `noise_std^2 * sum_{i<j} psi_i^2`
/// where `psi` are the moving-average weights of the AR recursion.
pub fn ar_forecast(model: &ArModel, history: &[f64], h: usize) -> Result<ForecastDistribution> {
    let p = model.order();
    if history.len() < p {
        return Err(Error::HistoryTooShort { len: history.len(), order: p });
    }
    let mut window: Vec<f64> = history[history.len() - p..].to_vec();
    let mut means = Vec::with_capacity(h);
    for _ in 0..h {
        let next = model.intercept
            + model.coeffs.iter().enumerate().map(|(i, c)| c * window[window.len() - 1 - i]).sum::<f64>();
        means.push(next);
        window.push(next);
    }
    let mut psi = vec![1.0];
    for i in 1..h {
        let v: f64 = (1..=i.min(p)).map(|m| model.coeffs[m - 1] * psi[i - m]).sum();
        psi.push(v);
    }
    let mut acc = 0.0;
    let stds = psi
        .iter()
        .map(|w| {
            acc += w * w;
            (model.noise_std * acc.sqrt()).max(STD_FLOOR)
        })
        .collect();
    Ok(ForecastDistribution { means, stds })
}

impl Forecaster for ArModel {
    fn forecast(&self, history: &[f64], h: usize) -> Result<ForecastDistribution> {
        ar_forecast(self, history, h)
    }
}
