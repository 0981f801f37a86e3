use longtail_core::data::{gen_ar1, gen_sine, window, Noise, SeriesSet, WindowSpec};
use longtail_core::metrics::{build_tail_report, ErrorSample};
use proptest::prelude::*;

fn label_tail_ratio(set: &SeriesSet) -> f64 {
    let r = build_tail_report(&ErrorSample::new(set.values().map(f64::abs).collect()).unwrap()).unwrap();
    r.max / r.var99
}

#[test]
fn noisy_generators_have_heavier_label_tails_than_sine() {
    for seed in 0..3 {
        let sine = label_tail_ratio(&gen_sine(100, 960, seed).unwrap());
        let gaussian = label_tail_ratio(&gen_ar1(Noise::GAUSSIAN, 0.5, 100, 960, seed).unwrap());
        let pareto = label_tail_ratio(&gen_ar1(Noise::PARETO, 0.5, 100, 960, seed).unwrap());
        assert!(gaussian > sine && pareto > sine, "seed {seed}: {sine} {gaussian} {pareto}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_are_bit_reproducible(seed in any::<u64>(), n in 1usize..5, len in 1usize..80) {
        prop_assert_eq!(gen_sine(n, len, seed).unwrap(), gen_sine(n, len, seed).unwrap());
        for noise in [Noise::GAUSSIAN, Noise::PARETO] {
            prop_assert_eq!(gen_ar1(noise, 0.5, n, len, seed).unwrap(), gen_ar1(noise, 0.5, n, len, seed).unwrap());
        }
    }

    #[test]
    fn stride_one_targets_rebuild_series_tail(seed in any::<u64>(), k in 1usize..6, h in 1usize..6) {
        let set = gen_ar1(Noise::GAUSSIAN, 0.3, 2, 40, seed).unwrap();
        let data = window(&set, WindowSpec::new(k, h).unwrap(), 1).unwrap();
        for (id, series) in set.series.iter().enumerate() {
            let last: Vec<f64> = data
                .examples
                .iter()
                .filter(|e| e.series_id == id)
                .map(|e| *e.target.last().unwrap())
                .collect();
            prop_assert_eq!(&last[..], &series[k + h - 1..]);
        }
    }
}
