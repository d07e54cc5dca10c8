use csa_lab::es_core::{self, ObjectiveSpec, SelectedStep, SelectionMode};
use csa_lab::montecarlo::run_stream;
use csa_lab::order_stats::minimum_moments;
use csa_lab::stats::{mean_estimate, sample_std};
use csa_lab::theory;
use csa_lab::AlgorithmParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn estimate_of_variance(xs: &[f64]) -> (f64, f64) {
    // Sample variance around a known zero mean, with its standard error.
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let e = mean_estimate(&sq);
    (e.value, e.stderr)
}

#[test]
fn random_selection_keeps_path_standard_normal() {
    let (n, lambda, c) = (5, 8u32, 0.3);
    let runs = 10_000;
    let mut coords = vec![Vec::with_capacity(runs); n];
    for run in 0..runs as u64 {
        let mut rng = run_stream(17, run);
        let mut p: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..100 {
            let children: Vec<Vec<f64>> = (0..lambda)
                .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let pick = rng.random_range(0..lambda as usize);
            let step = SelectedStep {
                xi_star: children[pick].clone(),
                child: Some(pick),
            };
            p = es_core::update_path(&p, &step, c);
        }
        for (i, v) in p.into_iter().enumerate() {
            coords[i].push(v);
        }
    }
    for (i, xs) in coords.iter().enumerate() {
        assert!(
            mean_estimate(xs).z_score(0.0) < 4.0,
            "mean of coordinate {i}"
        );
        let (var, se) = estimate_of_variance(xs);
        assert!(
            (var - 1.0).abs() < 4.0 * se,
            "variance of coordinate {i}: {var}"
        );
    }
}

#[test]
fn shortcut_leaves_second_coordinate_unbiased() {
    let params = AlgorithmParams::new(2, 2, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let second: Vec<f64> = (0..1_000_000)
        .map(|_| es_core::select_step_shortcut(&params, &mut rng).xi_star[1])
        .collect();
    assert!(mean_estimate(&second).z_score(0.0) < 4.0);
    let (var, se) = estimate_of_variance(&second);
    assert!((var - 1.0).abs() < 4.0 * se, "variance {var}");
}

#[test]
fn stationary_path_moments_match_limits() {
    let params = AlgorithmParams::new(20, 8, 1.0 / 20f64.sqrt()).unwrap();
    let moments = minimum_moments(8).unwrap();
    let e_sq = theory::e_p1_sq_limit(params.c, &moments).unwrap();
    let (e_quad, _) = theory::e_p1_quad_limit(params.c, &moments).unwrap();
    let objective = ObjectiveSpec::LinearFirstCoordinate;

    let (mut sq, mut quad) = (Vec::new(), Vec::new());
    for run in 0..10_000u64 {
        let mut rng = run_stream(99, run);
        let mut state = es_core::init_state(&params, &[0.0; 20], 1.0, &mut rng).unwrap();
        // 300 steps is far beyond the ceil(10/c) = 45 burn-in.
        for _ in 0..300 {
            state = es_core::step(
                state,
                &params,
                &objective,
                SelectionMode::Shortcut,
                &mut rng,
            )
            .unwrap()
            .0;
        }
        let p1 = state.p[0];
        sq.push(p1 * p1);
        quad.push(p1.powi(4));
    }
    let z_sq = mean_estimate(&sq).z_score(e_sq);
    let z_quad = mean_estimate(&quad).z_score(e_quad);
    assert!(z_sq < 4.0, "E p1^2: z = {z_sq}");
    assert!(z_quad < 4.0, "E p1^4: z = {z_quad}");
}

#[test]
fn cesaro_mean_of_path_length_stabilizes() {
    let params = AlgorithmParams::new(20, 8, 1.0 / 20f64.sqrt()).unwrap();
    let objective = ObjectiveSpec::LinearFirstCoordinate;
    let n = params.n as f64;
    let (mut early, mut late) = (Vec::new(), Vec::new());
    for run in 0..200u64 {
        let mut rng = run_stream(3, run);
        let mut state = es_core::init_state(&params, &[0.0; 20], 1.0, &mut rng).unwrap();
        let mut sum = 0.0;
        for t in 1..=10_000u32 {
            state = es_core::step(
                state,
                &params,
                &objective,
                SelectionMode::Shortcut,
                &mut rng,
            )
            .unwrap()
            .0;
            sum += state.p.iter().map(|v| v * v).sum::<f64>() / n;
            if t == 100 {
                early.push(sum / 100.0);
            }
        }
        late.push(sum / 10_000.0);
    }
    let (s_early, s_late) = (sample_std(&early), sample_std(&late));
    assert!(s_late < 0.5 * s_early, "{s_late} vs {s_early}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steps_preserve_shapes(
        n in 1usize..12,
        lambda in 1u32..12,
        c in 0.01f64..=1.0,
        seed in any::<u64>(),
        full in any::<bool>(),
    ) {
        let params = AlgorithmParams::new(n, lambda, c).unwrap();
        let mode = if full { SelectionMode::Full } else { SelectionMode::Shortcut };
        let objective = ObjectiveSpec::LinearFirstCoordinate;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = es_core::init_state(&params, &vec![0.0; n], 1.0, &mut rng).unwrap();
        for t in 1..=20u64 {
            let (next, inc, sel) =
                es_core::step_with_selection(state, &params, &objective, mode, &mut rng).unwrap();
            prop_assert_eq!(next.t, t);
            prop_assert_eq!(next.x.len(), n);
            prop_assert_eq!(next.p.len(), n);
            prop_assert!(inc.is_finite() && next.log_sigma.is_finite());
            if c == 1.0 {
                prop_assert_eq!(&next.p, &sel.xi_star);
            }
            state = next;
        }
    }

    #[test]
    fn closed_form_invariants(lambda in 1u32..=30, c in 0.001f64..=1.0, n in 1usize..5000) {
        let moments = minimum_moments(lambda).unwrap();
        let params = AlgorithmParams::new(n, lambda, c).unwrap();
        let pred = theory::predict(&params, &moments).unwrap();
        prop_assert!(pred.variance_log_inc >= 0.0);
        prop_assert!(pred.e_p1_quad_limit >= pred.e_p1_sq_limit.powi(2) * (1.0 - 1e-12));
        let zero_rate = lambda == 1 || (lambda == 2 && c == 1.0);
        if zero_rate {
            prop_assert_eq!(pred.rate, 0.0);
        } else {
            prop_assert!(pred.rate > 0.0);
        }
    }
}
