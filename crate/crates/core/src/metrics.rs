//! Average and tail error metrics.
//!
//! Each forecast window yields one scalar error (ND, NRMSE or MAE). The tail of
//! the resulting error sample is summarized by nearest-rank VaR quantiles,
//! population moments and the TailLength ratio sum.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Nd,
    Nrmse,
    Mae,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Nd => "nd",
            Self::Nrmse => "nrmse",
            Self::Mae => "mae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nd" => Some(Self::Nd),
            "nrmse" => Some(Self::Nrmse),
            "mae" => Some(Self::Mae),
            _ => None,
        }
    }
}

/// Error of one forecast window.
///
/// `nd = sum|pred - y| / sum|y|`, `nrmse = sqrt(mean (pred - y)^2) / mean|y|`.
/// Windows whose targets are all zero have no ND/NRMSE.
pub fn per_example_error(pred: &[f64], target: &[f64], kind: MetricKind) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch { expected: target.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptySample);
    }
    let h = pred.len() as f64;
    let abs_target: f64 = target.iter().map(|y| y.abs()).sum();
    let needs_scale = kind != MetricKind::Mae;
    if needs_scale && abs_target == 0.0 {
        return Err(Error::ZeroDenominator("all-zero target window"));
    }
    Ok(match kind {
        MetricKind::Mae => pred.iter().zip(target).map(|(p, y)| (p - y).abs()).sum::<f64>() / h,
        MetricKind::Nd => pred.iter().zip(target).map(|(p, y)| (p - y).abs()).sum::<f64>() / abs_target,
        MetricKind::Nrmse => {
            let mse = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / h;
            mse.sqrt() / (abs_target / h)
        }
    })
}

/// ND or NRMSE with every time step of every window pooled before normalizing.
pub fn pooled_error<'a, I>(pairs: I, kind: MetricKind) -> Result<f64>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let (mut abs_err, mut sq_err, mut abs_target, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (pred, target) in pairs {
        if pred.len() != target.len() {
            return Err(Error::LengthMismatch { expected: target.len(), found: pred.len() });
        }
        for (p, y) in pred.iter().zip(target) {
            abs_err += (p - y).abs();
            sq_err += (p - y).powi(2);
            abs_target += y.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let n = n as f64;
    match kind {
        MetricKind::Mae => Ok(abs_err / n),
        _ if abs_target == 0.0 => Err(Error::ZeroDenominator("all-zero targets")),
        MetricKind::Nd => Ok(abs_err / abs_target),
        MetricKind::Nrmse => Ok((sq_err / n).sqrt() / (abs_target / n)),
    }
}

/// A nonempty sample of nonnegative per-example errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    values: Vec<f64>,
}

impl ErrorSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParams(format!("errors must be finite and nonnegative, got {bad}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// 0-based nearest-rank index `ceil(alpha*n) - 1`. The small slack keeps
/// products like `0.95 * 100` from rounding up a rank.
fn nearest_rank_index(alpha: f64, n: usize) -> usize {
    let rank = (alpha * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Value at risk: the smallest observed error exceeded by at most a `1 - alpha`
/// fraction of the sample.
pub fn var_alpha(errors: &ErrorSample, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let sorted = errors.sorted();
    Ok(sorted[nearest_rank_index(alpha, sorted.len())])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub skew: f64,
    /// Excess (Fisher) kurtosis.
    pub kurtosis: f64,
}

/// Population mean, skew `m3/m2^1.5` and excess kurtosis `m4/m2^2 - 3`.
pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.len() < 2 {
        return Err(Error::DegenerateSample(format!("need at least 2 values, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if !(m2 > 0.0) {
        return Err(Error::DegenerateSample("variance is zero".into()));
    }
    Ok(Moments { mean, skew: m3 / m2.powf(1.5), kurtosis: m4 / (m2 * m2) - 3.0 })
}

/// `VaR95/mean + VaR98/VaR95 + VaR99/VaR98 + max/VaR99`.
pub fn tail_length(mean: f64, var95: f64, var98: f64, var99: f64, max: f64) -> Result<f64> {
    if [mean, var95, var98, var99].iter().any(|v| !(*v > 0.0)) || !(max > 0.0) {
        return Err(Error::ZeroDenominator("tail length needs positive inputs"));
    }
    Ok(var95 / mean + var98 / var95 + var99 / var98 + max / var99)
}

/// Average and tail summary of an error sample. `kurtosis`, `skew` and
/// `tail_length` are absent when undefined for the sample (constant or
/// containing zero quantiles).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailReport {
    pub mean: f64,
    pub var95: f64,
    pub var98: f64,
    pub var99: f64,
    pub max: f64,
    pub kurtosis: Option<f64>,
    pub skew: Option<f64>,
    pub tail_length: Option<f64>,
}

impl TailReport {
    pub const FIELDS: [&'static str; 8] =
        ["mean", "var95", "var98", "var99", "max", "kurtosis", "skew", "tail_length"];

    /// Field values in [`Self::FIELDS`] order.
    pub fn values(&self) -> [Option<f64>; 8] {
        [
            Some(self.mean),
            Some(self.var95),
            Some(self.var98),
            Some(self.var99),
            Some(self.max),
            self.kurtosis,
            self.skew,
            self.tail_length,
        ]
    }

    /// Header line and one data row; undefined fields are left empty.
    pub fn to_csv(&self, metric: MetricKind) -> String {
        let mut out = String::from("metric");
        for f in Self::FIELDS {
            out.push(',');
            out.push_str(f);
        }
        out.push('\n');
        out.push_str(metric.name());
        for v in self.values() {
            out.push(',');
            if let Some(v) = v {
                write!(out, "{v:?}").unwrap();
            }
        }
        out.push('\n');
        out
    }
}

pub fn build_tail_report(errors: &ErrorSample) -> Result<TailReport> {
    let sorted = errors.sorted();
    let n = sorted.len();
    let at = |alpha: f64| sorted[nearest_rank_index(alpha, n)];
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let (var95, var98, var99) = (at(0.95), at(0.98), at(0.99));
    let max = sorted[n - 1];
    let (kurtosis, skew) = match moments(&sorted) {
        Ok(m) => (Some(m.kurtosis), Some(m.skew)),
        Err(Error::DegenerateSample(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(TailReport {
        mean,
        var95,
        var98,
        var99,
        max,
        kurtosis,
        skew,
        tail_length: tail_length(mean, var95, var98, var99, max).ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// A fixed number of geometric bins spanning `[min positive, max]`.
    Count(usize),
    /// Bins aligned to powers of ten, this many per decade.
    PerDecade(usize),
}

/// Geometric histogram for log-log plots. Bins are right-open except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Values `<= 0`, which have no place on a log axis.
    pub underflow: usize,
    pub lower_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.underflow + self.counts.iter().sum::<usize>()
    }

    /// Two-column CSV; the underflow bin is written first with lower edge 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lower_edge,count\n");
        writeln!(out, "0,{}", self.underflow).unwrap();
        for (e, c) in self.lower_edges.iter().zip(&self.counts) {
            writeln!(out, "{e:?},{c}").unwrap();
        }
        out
    }
}

pub fn loglog_histogram(values: &[f64], binning: Binning) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    let underflow = values.len() - positive.len();
    if positive.is_empty() {
        return Ok(Histogram { underflow, lower_edges: vec![], counts: vec![] });
    }
    let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let edges: Vec<f64> = match binning {
        Binning::Count(bins) => {
            if bins < 2 {
                return Err(Error::InvalidParams(format!("need at least 2 bins, got {bins}")));
            }
            if hi == lo {
                vec![lo]
            } else {
                let ratio = hi / lo;
                (0..bins).map(|i| lo * ratio.powf(i as f64 / bins as f64)).collect()
            }
        }
        Binning::PerDecade(per) => {
            if per < 1 {
                return Err(Error::InvalidParams("need at least 1 bin per decade".into()));
            }
            let start = (lo.log10() * per as f64).floor() as i64;
            let end = (hi.log10() * per as f64).floor() as i64;
            (start..=end).map(|i| 10f64.powf(i as f64 / per as f64)).collect()
        }
    };

    let mut counts = vec![0usize; edges.len()];
    let last = edges.len() - 1;
    for v in positive {
        // binary search over lower edges; the last bin is closed on the right
        let idx = edges.partition_point(|e| *e <= v).saturating_sub(1).min(last);
        counts[idx] += 1;
    }
    Ok(Histogram { underflow, lower_edges: edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sample(v: &[f64]) -> ErrorSample {
        ErrorSample::new(v.to_vec()).unwrap()
    }

    /// Smallest observed `e` with `#(errors > e)/n <= 1 - alpha`.
    fn var_scan(values: &[f64], alpha: f64) -> f64 {
        let n = values.len() as f64;
        let mut candidates = values.to_vec();
        candidates.sort_by(f64::total_cmp);
        *candidates
            .iter()
            .find(|&&e| values.iter().filter(|&&x| x > e).count() as f64 / n <= 1.0 - alpha + 1e-12)
            .unwrap()
    }

    #[test]
    fn per_example_error_examples() {
        let y = [1.0, 2.0, 3.0];
        for kind in [MetricKind::Nd, MetricKind::Nrmse, MetricKind::Mae] {
            assert_eq!(per_example_error(&y, &y, kind).unwrap(), 0.0);
        }
        let doubled: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert!((per_example_error(&doubled, &y, MetricKind::Nd).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            per_example_error(&[1.0, 1.0], &[0.0, 0.0], MetricKind::Nd),
            Err(Error::ZeroDenominator(_))
        ));
        assert!(matches!(
            per_example_error(&[1.0, 1.0], &[0.0, 0.0], MetricKind::Nrmse),
            Err(Error::ZeroDenominator(_))
        ));
        assert_eq!(per_example_error(&[1.0, 1.0], &[0.0, 0.0], MetricKind::Mae).unwrap(), 1.0);
    }

    #[test]
    fn pooled_nd_differs_from_per_window_mean() {
        let preds = [vec![2.0, 2.0], vec![11.0, 11.0]];
        let targets = [vec![1.0, 1.0], vec![10.0, 10.0]];
        let pooled = pooled_error(
            preds.iter().map(Vec::as_slice).zip(targets.iter().map(Vec::as_slice)),
            MetricKind::Nd,
        )
        .unwrap();
        assert!((pooled - 4.0 / 22.0).abs() < 1e-15);
    }

    #[test]
    fn var_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(var_alpha(&sample(&v), 0.95).unwrap(), 95.0);
        assert_eq!(var_alpha(&sample(&v), 0.999).unwrap(), 100.0);
        assert_eq!(var_alpha(&sample(&[4.2]), 0.5).unwrap(), 4.2);
        assert!(matches!(var_alpha(&sample(&v), 1.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(var_alpha(&sample(&v), 0.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(ErrorSample::new(vec![]), Err(Error::EmptySample)));
    }

    #[test]
    fn moments_examples() {
        let m = moments(&[0.0, 2.0]).unwrap();
        assert_eq!(m.skew, 0.0);
        assert!(matches!(moments(&[1.5; 7]), Err(Error::DegenerateSample(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let m = moments(&draws).unwrap();
        assert!(m.kurtosis.abs() < 0.05, "{}", m.kurtosis);
        assert!(m.skew.abs() < 0.05, "{}", m.skew);
    }

    #[test]
    fn tail_length_examples() {
        assert_eq!(tail_length(1.0, 2.0, 4.0, 8.0, 16.0).unwrap(), 8.0);
        let elec = tail_length(0.0584, 0.0796, 0.2312, 0.4429, 4.1520).unwrap();
        assert!((elec - 15.56).abs() <= 0.01, "{elec}");
        let traffic = tail_length(0.1741, 0.6866, 25.5840, 32.1330, 84.1582).unwrap();
        assert!((traffic - 45.08).abs() <= 0.05, "{traffic}");
        assert!(matches!(tail_length(0.0, 1.0, 1.0, 1.0, 1.0), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn report_examples() {
        let r = build_tail_report(&sample(&[3.5; 20])).unwrap();
        assert_eq!([r.mean, r.var95, r.var98, r.var99, r.max], [3.5; 5]);
        assert_eq!(r.kurtosis, None);
        assert_eq!(r.skew, None);
        assert_eq!(r.tail_length, Some(4.0));

        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = build_tail_report(&sample(&v)).unwrap();
        assert_eq!((r.mean, r.var95, r.var98, r.var99, r.max), (50.5, 95.0, 98.0, 99.0, 100.0));

        let zeros = build_tail_report(&sample(&[0.0; 5])).unwrap();
        assert_eq!(zeros.mean, 0.0);
        assert_eq!(zeros.tail_length, None);
    }

    #[test]
    fn report_csv_has_one_row() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let csv = build_tail_report(&sample(&v)).unwrap().to_csv(MetricKind::Nd);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "metric,mean,var95,var98,var99,max,kurtosis,skew,tail_length");
        assert!(lines[1].starts_with("nd,5.5,10.0"));
    }

    #[test]
    fn histogram_examples() {
        let h = loglog_histogram(&[1.0, 10.0, 100.0], Binning::Count(3)).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert!((h.lower_edges[1] - 100f64.powf(1.0 / 3.0)).abs() < 1e-12);

        let h = loglog_histogram(&[2.0, 3.5, 7.0, 9.9], Binning::PerDecade(1)).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);

        let h = loglog_histogram(&[0.0, 0.0, 1.0, 5.0, 0.3], Binning::Count(4)).unwrap();
        assert_eq!(h.underflow, 2);
        assert_eq!(h.total(), 5);
        assert!(matches!(loglog_histogram(&[], Binning::Count(4)), Err(Error::EmptySample)));

        let csv = h.to_csv();
        assert!(csv.starts_with("bin_lower_edge,count\n0,2\n"));
    }

    proptest! {
        #[test]
        fn var_matches_definitional_scan(values in prop::collection::vec(0.0f64..100.0, 1..300)) {
            let s = ErrorSample::new(values.clone()).unwrap();
            for alpha in [0.5, 0.9, 0.95, 0.98, 0.99] {
                prop_assert_eq!(var_alpha(&s, alpha).unwrap(), var_scan(&values, alpha));
            }
        }

        #[test]
        fn var_monotone_in_alpha(values in prop::collection::vec(0.0f64..100.0, 1..200), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let s = ErrorSample::new(values).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(var_alpha(&s, lo).unwrap() <= var_alpha(&s, hi).unwrap());
        }

        #[test]
        fn report_quantiles_ordered(values in prop::collection::vec(0.0f64..1e6, 1..300)) {
            let r = build_tail_report(&ErrorSample::new(values).unwrap()).unwrap();
            prop_assert!(r.var95 <= r.var98 && r.var98 <= r.var99 && r.var99 <= r.max);
        }

        #[test]
        fn constant_ratio_tail_length(mean in 0.01f64..10.0, rho in 1.0f64..5.0) {
            let t = tail_length(mean, mean * rho, mean * rho.powi(2), mean * rho.powi(3), mean * rho.powi(4)).unwrap();
            prop_assert!((t - 4.0 * rho).abs() < 1e-9);
        }

        #[test]
        fn nd_nrmse_scale_invariant(
            pairs in prop::collection::vec((0.1f64..10.0, -10.0f64..10.0), 1..16),
            scale in 0.01f64..100.0,
        ) {
            let (target, pred): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let st: Vec<f64> = target.iter().map(|v| v * scale).collect();
            let sp: Vec<f64> = pred.iter().map(|v| v * scale).collect();
            for kind in [MetricKind::Nd, MetricKind::Nrmse] {
                let a = per_example_error(&pred, &target, kind).unwrap();
                let b = per_example_error(&sp, &st, kind).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }

        #[test]
        fn histogram_counts_everything(values in prop::collection::vec(0.0f64..1e4, 1..200), bins in 2usize..30) {
            let h = loglog_histogram(&values, Binning::Count(bins)).unwrap();
            prop_assert_eq!(h.total(), values.len());
        }
    }
}
