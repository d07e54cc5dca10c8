use csa_lab::montecarlo::{compare, run_ensemble, EnsembleConfig, DEFAULT_Z_THRESHOLD};
use csa_lab::order_stats::minimum_moments;
use csa_lab::theory;
use csa_lab::AlgorithmParams;
use proptest::prelude::*;

fn config(lambda: u32, c: f64, runs: usize, t_max: u64, seed: u64) -> EnsembleConfig {
    EnsembleConfig::new(
        AlgorithmParams::new(20, lambda, c).unwrap(),
        runs,
        t_max,
        seed,
    )
}

#[test]
fn extending_the_ensemble_keeps_existing_runs() {
    let small = config(8, 1.0 / 20f64.sqrt(), 5001, 60, 11);
    let mut large = small.clone();
    large.runs = 10_001;
    let a = run_ensemble(&small).unwrap();
    let b = run_ensemble(&large).unwrap();
    let bits = |rows: &[Vec<f64>]| -> Vec<Vec<u64>> {
        rows.iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect()
    };
    assert_eq!(bits(&b.traces[..5001]), bits(&a.traces));
    assert_eq!(&b.final_increments[..5001], &a.final_increments[..]);
}

#[test]
fn zero_rate_verdict_uses_absolute_scale() {
    let cfg = config(2, 1.0, 4000, 300, 8);
    let result = run_ensemble(&cfg).unwrap();
    let pred = theory::predict(&cfg.params, &minimum_moments(2).unwrap()).unwrap();
    assert_eq!(pred.rate, 0.0);
    let verdict = compare(&pred, &result, DEFAULT_Z_THRESHOLD).unwrap();
    let rate = &verdict.items[0];
    assert_eq!(rate.quantity, "rate");
    assert!(rate.pass == (rate.empirical.abs() <= DEFAULT_Z_THRESHOLD * rate.stderr));
    assert!(verdict.pass, "{verdict:?}");
    // No divergence rate of X is claimed when the step size does not diverge.
    assert!(verdict.items.iter().all(|i| i.quantity != "x_rate"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quantile_rows_are_ordered(
        lambda in 1u32..10,
        c in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let r = run_ensemble(&config(lambda, c, 101, 120, seed)).unwrap();
        for row in &r.quantile_series {
            prop_assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
        prop_assert!(r.empirical_rate.stderr >= 0.0);
    }
}
