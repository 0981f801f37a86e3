use longtail_core::checkpoint::Checkpoint;
use longtail_core::error::Error;
use longtail_core::models::{ar_forecast, fit_ar, AnyModel, ArModel, Forecaster, RecurrentForecaster, STD_FLOOR};
use proptest::prelude::*;

fn recurrence(coeffs: &[f64], intercept: f64, start: &[f64], len: usize) -> Vec<f64> {
    let mut s = start.to_vec();
    while s.len() < len {
        let t = s.len();
        let v = intercept + coeffs.iter().enumerate().map(|(i, c)| c * s[t - 1 - i]).sum::<f64>();
        s.push(v);
    }
    s
}

#[test]
fn ar1_noiseless_recovery() {
    let series: Vec<Vec<f64>> = [1.0, -2.0, 3.5].iter().map(|&y0| recurrence(&[0.5], 0.0, &[y0], 40)).collect();
    let m = fit_ar(&series, 1).unwrap();
    assert!((m.coeffs[0] - 0.5).abs() < 1e-10);
    assert!(m.intercept.abs() < 1e-10);
    assert!(m.noise_std < 1e-10);
}

#[test]
fn ar2_noiseless_recovery() {
    let series: Vec<Vec<f64>> =
        [[1.0, 0.5], [-1.0, 2.0], [3.0, 0.0]].iter().map(|st| recurrence(&[0.3, 0.2], 0.0, st, 50)).collect();
    let m = fit_ar(&series, 2).unwrap();
    assert!((m.coeffs[0] - 0.3).abs() < 1e-8, "{:?}", m.coeffs);
    assert!((m.coeffs[1] - 0.2).abs() < 1e-8, "{:?}", m.coeffs);
}

#[test]
fn constant_series_is_rank_deficient() {
    assert!(matches!(fit_ar(&[vec![2.0; 30]], 1), Err(Error::RankDeficient)));
}

#[test]
fn short_series_rejected() {
    assert!(matches!(fit_ar(&[vec![1.0, 2.0]], 2), Err(Error::SeriesTooShort { .. })));
    assert!(fit_ar(&[vec![1.0, 2.0, 3.0]], 0).is_err());
}

#[test]
fn forecast_examples() {
    let m = ArModel { coeffs: vec![0.5], intercept: 1.0, noise_std: 0.0 };
    let f = ar_forecast(&m, &[4.0], 3).unwrap();
    assert_eq!(f.means, vec![3.0, 2.5, 2.25]);
    assert!(f.stds.iter().all(|s| *s == STD_FLOOR));

    let m = ArModel { coeffs: vec![0.5], intercept: 0.0, noise_std: 2.0 };
    let f = ar_forecast(&m, &[1.0], 3).unwrap();
    assert_eq!(f.stds[0], 2.0);
    assert!((f.stds[1] - 2.0 * 1.25f64.sqrt()).abs() < 1e-12);
    assert!((f.stds[2] - 2.0 * 1.3125f64.sqrt()).abs() < 1e-12);

    assert!(matches!(ar_forecast(&m, &[], 1), Err(Error::HistoryTooShort { .. })));
}

#[test]
fn ar_checkpoint_round_trip() {
    let m = AnyModel::Ar(ArModel { coeffs: vec![0.1, -0.7], intercept: 1.0 / 3.0, noise_std: 0.25 });
    let mut c = Checkpoint::new();
    m.write_to(&mut c);
    let back = AnyModel::read_from(&Checkpoint::from_text(&c.to_text()).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn rnn_checkpoint_forecasts_identically() {
    let m = AnyModel::Rnn(RecurrentForecaster::new(6, 21).unwrap());
    let mut c = Checkpoint::new();
    m.write_to(&mut c);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    c.save(&path).unwrap();
    let back = AnyModel::read_from(&Checkpoint::load(&path).unwrap()).unwrap();
    let history = [0.3, -1.2, 4.0, 2.2];
    assert_eq!(back.forecast(&history, 5).unwrap(), m.forecast(&history, 5).unwrap());
}

#[test]
fn corrupt_model_checkpoint_rejected() {
    let mut c = Checkpoint::new();
    RecurrentForecaster::new(2, 0).unwrap().write_to(&mut c);
    let text = c.to_text().replacen("scalar hidden_size 2", "scalar hidden_size 3", 1);
    assert!(matches!(Checkpoint::from_text(&text), Err(Error::ChecksumMismatch)));
}

proptest! {
    #[test]
    fn ar_forecast_shape_and_positive_std(
        coeffs in prop::collection::vec(-0.9f64..0.9, 1..4),
        noise in 0.0f64..3.0,
        h in 1usize..12,
        history in prop::collection::vec(-10.0f64..10.0, 4..8),
    ) {
        let m = ArModel { coeffs, intercept: 0.5, noise_std: noise };
        let f = ar_forecast(&m, &history, h).unwrap();
        prop_assert_eq!(f.means.len(), h);
        prop_assert_eq!(f.stds.len(), h);
        prop_assert!(f.stds.iter().all(|s| *s > 0.0));
        // forecast variance never shrinks with the horizon
        prop_assert!(f.stds.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rnn_forecast_shape_and_positive_std(
        seed in 0u64..1000,
        hidden in 1usize..6,
        h in 1usize..10,
        history in prop::collection::vec(-50.0f64..50.0, 1..10),
    ) {
        let m = RecurrentForecaster::new(hidden, seed).unwrap();
        let f = m.forecast(&history, h).unwrap();
        prop_assert_eq!(f.horizon(), h);
        prop_assert!(f.means.iter().all(|x| x.is_finite()));
        prop_assert!(f.stds.iter().all(|s| *s > 0.0 && s.is_finite()));
    }

    #[test]
    fn ar_fit_recovers_random_stable_ar1(phi in -0.9f64..0.9, c in -2.0f64..2.0) {
        prop_assume!(phi.abs() > 0.05);
        let series: Vec<Vec<f64>> =
            [5.0, -3.0].iter().map(|&y0| recurrence(&[phi], c, &[y0], 30)).collect();
        let m = fit_ar(&series, 1).unwrap();
        prop_assert!((m.coeffs[0] - phi).abs() < 1e-8);
        prop_assert!((m.intercept - c).abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn rnn_forward_is_deterministic(seed in 0u64..500, history in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let a = RecurrentForecaster::new(3, seed).unwrap();
        let b = RecurrentForecaster::from_params(3, a.params().to_vec()).unwrap();
        prop_assert_eq!(a.forecast(&history, 4).unwrap(), b.forecast(&history, 4).unwrap());
    }
}
