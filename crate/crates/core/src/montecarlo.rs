//! Ensembles of independent runs and their comparison with the closed forms.
//!
//! Run `i` of an ensemble draws from the ChaCha8 stream `i` of the master
//! seed, so results do not depend on thread scheduling and extending an
//! ensemble leaves the existing runs untouched. Per-run summaries are
//! reduced in run order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::es_core::{self, AlgorithmParams, EsError, ObjectiveSpec, SelectionMode};
use crate::stats::{self, BatchSums, Estimate};
use crate::theory::TheoryPrediction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Es(#[from] EsError),
}

/// Quantile levels of the log step-size figure: `10^-i` and `1 − 10^-i`
/// for `i = 1..4`, and the median.
pub const FIGURE1_LEVELS: [f64; 9] = [1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.99, 0.999, 0.9999];

/// Iterations are recorded individually up to this point, then geometrically.
const DENSE_PREFIX: u64 = 100;
const GRID_GROWTH: f64 = 1.05;

/// Ten lifetimes `1/c` of the path memory.
pub fn default_burn_in(c: f64) -> u64 {
    (10.0 / c).ceil() as u64
}

/// Batch length for the batch-means standard errors.
pub fn batch_length(c: f64) -> u32 {
    (10.0 / c).ceil() as u32
}

/// The random stream of one run.
pub fn run_stream(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub params: AlgorithmParams,
    pub objective: ObjectiveSpec,
    pub mode: SelectionMode,
    pub runs: usize,
    pub t_max: u64,
    pub burn_in: u64,
    pub master_seed: u64,
    pub quantile_levels: Vec<f64>,
}

impl EnsembleConfig {
    /// Shortcut selection on `f(x) = x_1`, default burn-in and the figure quantile levels.
    pub fn new(params: AlgorithmParams, runs: usize, t_max: u64, master_seed: u64) -> Self {
        let burn_in = default_burn_in(params.c).min(t_max.saturating_sub(1));
        Self {
            params,
            objective: ObjectiveSpec::LinearFirstCoordinate,
            mode: SelectionMode::Shortcut,
            runs,
            t_max,
            burn_in,
            master_seed,
            quantile_levels: FIGURE1_LEVELS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        self.params.validate()?;
        if self.runs == 0 {
            return Err(MonteCarloError::Config("runs must be positive".into()));
        }
        if self.t_max == 0 {
            return Err(MonteCarloError::Config("t_max must be positive".into()));
        }
        if self.burn_in >= self.t_max {
            return Err(MonteCarloError::Config(format!(
                "burn-in ({}) must be smaller than t_max ({})",
                self.burn_in, self.t_max
            )));
        }
        let levels = &self.quantile_levels;
        if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(MonteCarloError::Config(
                "quantile levels must lie in (0, 1)".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MonteCarloError::Config(
                "quantile levels must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Iterations at which `ln(σ_t/σ_0)` is kept for every run.
    pub fn recorded_t(&self) -> Vec<u64> {
        let mut ts: Vec<u64> = (0..=self.t_max.min(DENSE_PREFIX)).collect();
        let mut next = DENSE_PREFIX as f64;
        while (next as u64) < self.t_max {
            next = (next * GRID_GROWTH).ceil();
            ts.push((next as u64).min(self.t_max));
        }
        ts.extend([self.t_max, self.burn_in, self.t_max / 2]);
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    fn burn_in_warning(&self) -> Option<String> {
        let needed = default_burn_in(self.params.c);
        (self.burn_in < needed).then(|| {
            format!(
                "burn-in {} is shorter than ceil(10/c) = {needed}; stationary estimates may be biased",
                self.burn_in
            )
        })
    }
}

/// Everything kept from one trajectory.
#[derive(Debug, Clone)]
struct RunOutcome {
    trace: Vec<f64>,
    batches: Vec<BatchSums>,
    /// `[X]_1` at `t_max/2` and at `t_max`.
    x1: (f64, f64),
    last_increment: f64,
}

fn simulate_run(
    cfg: &EnsembleConfig,
    grid: &[u64],
    batch_len: u32,
    run_index: u64,
) -> Result<RunOutcome, String> {
    let params = &cfg.params;
    let mut rng = run_stream(cfg.master_seed, run_index);
    let mut state = es_core::init_state(params, &vec![0.0; params.n], 1.0, &mut rng)
        .map_err(|e| e.to_string())?;
    let log_sigma0 = state.log_sigma;
    let half = cfg.t_max / 2;

    let mut trace = Vec::with_capacity(grid.len());
    let mut next_record = 0;
    if grid.first() == Some(&0) {
        trace.push(0.0);
        next_record = 1;
    }
    let mut batches = Vec::new();
    let mut current = BatchSums::default();
    let mut x_half = f64::NAN;
    let mut last_increment = f64::NAN;

    for t in 1..=cfg.t_max {
        let (next, inc) = es_core::step(state, params, &cfg.objective, cfg.mode, &mut rng)
            .map_err(|e| format!("t = {t}: {e}"))?;
        state = next;
        if !state.log_sigma.is_finite() {
            return Err(format!("t = {t}: log step size is not finite"));
        }
        if t > cfg.burn_in {
            current.push(inc);
            if current.len == batch_len {
                batches.push(current);
                current = BatchSums::default();
            }
        }
        if next_record < grid.len() && grid[next_record] == t {
            trace.push(state.log_sigma - log_sigma0);
            next_record += 1;
        }
        if t == half {
            x_half = state.x[0];
        }
        last_increment = inc;
    }
    Ok(RunOutcome {
        trace,
        batches,
        x1: (x_half, state.x[0]),
        last_increment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub params: AlgorithmParams,
    pub mode: SelectionMode,
    pub runs: usize,
    pub t_max: u64,
    pub burn_in: u64,
    pub batch_len: u32,
    pub recorded_t: Vec<u64>,
    pub quantile_levels: Vec<f64>,
    /// `quantile_series[i][j]`: level `j` of `ln(σ_t/σ_0)` at `recorded_t[i]`.
    pub quantile_series: Vec<Vec<f64>>,
    /// Per included run, `ln(σ_t/σ_0)` at `recorded_t`.
    pub traces: Vec<Vec<f64>>,
    /// Per included run, the increment of the last iteration.
    pub final_increments: Vec<f64>,
    /// Mean over runs of `(ln σ_T − ln σ_B)/(T − B)` with `B` the burn-in.
    pub empirical_rate: Estimate,
    pub empirical_inc_mean: Option<Estimate>,
    pub empirical_inc_var: Option<Estimate>,
    /// Mean over runs of `(ln|X_T| − ln|X_{T/2}|)/(T − T/2)` for `c = 1`.
    pub empirical_x_rate: Option<Estimate>,
    /// Mean over runs of `(1/T) ln|X_T|`, for reference next to the windowed estimator.
    pub empirical_x_rate_from_origin: Option<Estimate>,
    pub excluded_runs: usize,
    pub diagnostics: Vec<String>,
}

impl EnsembleResult {
    fn index_of(&self, t: u64) -> Option<usize> {
        self.recorded_t.binary_search(&t).ok()
    }

    /// The quantile series at `t`, if recorded.
    pub fn quantiles_at(&self, t: u64) -> Option<&[f64]> {
        self.index_of(t).map(|i| self.quantile_series[i].as_slice())
    }

    /// `ln(σ_t/σ_0)` of every included run at a recorded `t`.
    pub fn log_sigma_at(&self, t: u64) -> Option<Vec<f64>> {
        let i = self.index_of(t)?;
        Some(self.traces.iter().map(|tr| tr[i]).collect())
    }
}

/// Runs the ensemble in parallel and aggregates it.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleResult, MonteCarloError> {
    config.validate()?;
    let grid = config.recorded_t();
    let batch_len = batch_length(config.params.c);
    let outcomes: Vec<Result<RunOutcome, String>> = (0..config.runs as u64)
        .into_par_iter()
        .map(|i| simulate_run(config, &grid, batch_len, i))
        .collect();

    let mut diagnostics = Vec::new();
    diagnostics.extend(config.burn_in_warning());
    let mut kept = Vec::with_capacity(outcomes.len());
    let mut excluded = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(run) => kept.push(run),
            Err(msg) => {
                excluded += 1;
                if excluded <= 10 {
                    diagnostics.push(format!("run {i} excluded: {msg}"));
                }
            }
        }
    }
    if excluded > 0 {
        diagnostics.push(format!("{excluded} run(s) excluded"));
    }
    if kept.is_empty() {
        return Err(MonteCarloError::Contract("every run was excluded".into()));
    }

    let quantile_series = grid
        .iter()
        .enumerate()
        .map(|(gi, _)| {
            let mut col: Vec<f64> = kept.iter().map(|r| r.trace[gi]).collect();
            col.sort_by(f64::total_cmp);
            config
                .quantile_levels
                .iter()
                .map(|&q| stats::nearest_rank(&col, q))
                .collect()
        })
        .collect();

    let all_batches: Vec<BatchSums> = kept
        .iter()
        .flat_map(|r| r.batches.iter().copied())
        .collect();
    let (inc_mean, inc_var) = match stats::batch_means(&all_batches) {
        Some((m, v)) => (Some(m), Some(v)),
        None => {
            diagnostics.push(format!(
                "fewer than two complete batches of length {batch_len}; increment statistics unavailable"
            ));
            (None, None)
        }
    };

    let (x_rate, x_rate_origin) = if config.params.c == 1.0 && config.t_max >= 2 {
        x_rate_estimates(&kept, config.t_max, &mut diagnostics)
    } else {
        (None, None)
    };

    let mut result = EnsembleResult {
        params: config.params.clone(),
        mode: config.mode,
        runs: config.runs,
        t_max: config.t_max,
        burn_in: config.burn_in,
        batch_len,
        recorded_t: grid,
        quantile_levels: config.quantile_levels.clone(),
        quantile_series,
        final_increments: kept.iter().map(|r| r.last_increment).collect(),
        traces: kept.into_iter().map(|r| r.trace).collect(),
        empirical_rate: Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        },
        empirical_inc_mean: inc_mean,
        empirical_inc_var: inc_var,
        empirical_x_rate: x_rate,
        empirical_x_rate_from_origin: x_rate_origin,
        excluded_runs: excluded,
        diagnostics,
    };
    result.empirical_rate = estimate_rate(&result, config.t_max)?;
    Ok(result)
}

fn x_rate_estimates(
    runs: &[RunOutcome],
    t_max: u64,
    diagnostics: &mut Vec<String>,
) -> (Option<Estimate>, Option<Estimate>) {
    let half = t_max / 2;
    let usable = |v: f64| v.is_finite() && v != 0.0;
    let window = (t_max - half) as f64;
    let mut windowed = Vec::with_capacity(runs.len());
    let mut origin = Vec::with_capacity(runs.len());
    let mut skipped = 0;
    for r in runs {
        let (xh, xt) = r.x1;
        if usable(xt) {
            origin.push(xt.abs().ln() / t_max as f64);
        }
        if usable(xh) && usable(xt) {
            windowed.push((xt.abs().ln() - xh.abs().ln()) / window);
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        diagnostics.push(format!(
            "{skipped} run(s) without a finite non-zero [X]_1 left out of the X rate"
        ));
    }
    let est = |v: &[f64]| (v.len() >= 2).then(|| stats::mean_estimate(v));
    (est(&windowed), est(&origin))
}

/// Mean and standard error over runs of `(ln σ_t − ln σ_B)/(t − B)`, where
/// `B` is the ensemble burn-in (or 0 when `t <= B`). `t` must be recorded.
pub fn estimate_rate(result: &EnsembleResult, t: u64) -> Result<Estimate, MonteCarloError> {
    let start = if result.burn_in < t {
        result.burn_in
    } else {
        0
    };
    windowed_rate(result, start, t)
}

/// Mean over runs of `(1/t) ln(σ_t/σ_0)`, the Cesaro average from the origin.
pub fn estimate_rate_from_origin(
    result: &EnsembleResult,
    t: u64,
) -> Result<Estimate, MonteCarloError> {
    windowed_rate(result, 0, t)
}

fn windowed_rate(
    result: &EnsembleResult,
    start: u64,
    end: u64,
) -> Result<Estimate, MonteCarloError> {
    if end <= start {
        return Err(MonteCarloError::Contract(format!(
            "empty rate window [{start}, {end}]"
        )));
    }
    let missing = |t| MonteCarloError::Contract(format!("iteration {t} was not recorded"));
    let i0 = result.index_of(start).ok_or_else(|| missing(start))?;
    let i1 = result.index_of(end).ok_or_else(|| missing(end))?;
    let span = (end - start) as f64;
    let per_run: Vec<f64> = result
        .traces
        .iter()
        .map(|tr| (tr[i1] - tr[i0]) / span)
        .collect();
    Ok(stats::mean_estimate(&per_run))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementStats {
    pub mean: Estimate,
    pub var: Estimate,
    pub batch_len: u32,
    pub warnings: Vec<String>,
}

/// Pooled post-burn-in statistics of `ln(σ_{t+1}/σ_t)` with batch-means
/// standard errors.
pub fn estimate_increment_stats(
    config: &EnsembleConfig,
) -> Result<IncrementStats, MonteCarloError> {
    let result = run_ensemble(config)?;
    increment_stats(&result)
}

/// Increment statistics of an existing ensemble.
pub fn increment_stats(result: &EnsembleResult) -> Result<IncrementStats, MonteCarloError> {
    match (result.empirical_inc_mean, result.empirical_inc_var) {
        (Some(mean), Some(var)) => Ok(IncrementStats {
            mean,
            var,
            batch_len: result.batch_len,
            warnings: result.diagnostics.clone(),
        }),
        _ => Err(MonteCarloError::Config(format!(
            "not enough post-burn-in iterations for batches of length {}",
            result.batch_len
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictItem {
    pub quantity: String,
    pub theory: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub params: AlgorithmParams,
    pub z_threshold: f64,
    pub items: Vec<VerdictItem>,
    pub pass: bool,
}

pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

/// z-scores `|empirical − theory| / stderr` for the rate, the mean and
/// variance of the increments and, for `c = 1` with a positive rate, the
/// divergence rate of `|[X]_1|`. A zero theoretical rate is compared on the
/// same absolute scale, so the test is `|empirical| <= z · stderr`.
pub fn compare(
    theory: &TheoryPrediction,
    empirical: &EnsembleResult,
    z_threshold: f64,
) -> Result<Verdict, MonteCarloError> {
    if theory.params != empirical.params {
        return Err(MonteCarloError::Contract(format!(
            "prediction is for {:?} but the ensemble used {:?}",
            theory.params, empirical.params
        )));
    }
    let item = |quantity: &str, reference: f64, est: Estimate| {
        let z = est.z_score(reference);
        VerdictItem {
            quantity: quantity.to_string(),
            theory: reference,
            empirical: est.value,
            stderr: est.stderr,
            z,
            pass: z <= z_threshold,
        }
    };
    let mut items = vec![item("rate", theory.rate, empirical.empirical_rate)];
    if let Some(m) = empirical.empirical_inc_mean {
        items.push(item("increment_mean", theory.rate, m));
    }
    if let Some(v) = empirical.empirical_inc_var {
        items.push(item("increment_variance", theory.variance_log_inc, v));
    }
    if let Some(x) = empirical.empirical_x_rate {
        if theory.rate > 0.0 {
            items.push(item("x_rate", theory.rate, x));
        }
    }
    let pass = items.iter().all(|i| i.pass);
    Ok(Verdict {
        params: theory.params.clone(),
        z_threshold,
        items,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_stats::minimum_moments;
    use crate::theory;

    fn config(lambda: u32, c: f64, runs: usize, t_max: u64) -> EnsembleConfig {
        EnsembleConfig::new(
            AlgorithmParams::new(20, lambda, c).unwrap(),
            runs,
            t_max,
            42,
        )
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(8, 1.0, 10, 100);
        assert!(cfg.validate().is_ok());
        cfg.burn_in = 100;
        assert!(cfg.validate().is_err());
        cfg.burn_in = 10;
        cfg.quantile_levels = vec![0.5, 0.1];
        assert!(cfg.validate().is_err());
        cfg.quantile_levels = vec![0.0, 0.5];
        assert!(cfg.validate().is_err());
        cfg.quantile_levels = vec![0.5];
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn recorded_grid_shape() {
        let cfg = config(8, 0.2, 1, 1000);
        let g = cfg.recorded_t();
        assert_eq!(&g[..101], &(0..=100).collect::<Vec<_>>()[..]);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.contains(&500) && g.contains(&cfg.burn_in));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!(g.len() < 160);
    }

    #[test]
    fn deterministic_and_extension_stable() {
        let cfg = config(8, 1.0, 2, 200);
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a, b);

        let small = config(5, 0.3, 50, 150);
        let mut bigger = small.clone();
        bigger.runs = 101;
        let s = run_ensemble(&small).unwrap();
        let l = run_ensemble(&bigger).unwrap();
        assert_eq!(&l.traces[..50], &s.traces[..]);
        assert_eq!(&l.final_increments[..50], &s.final_increments[..]);
    }

    #[test]
    fn quantiles_never_cross() {
        let r = run_ensemble(&config(8, 0.3, 301, 300)).unwrap();
        for row in &r.quantile_series {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(r.quantiles_at(0).unwrap(), &[0.0; 9]);
    }

    #[test]
    fn short_runs_have_no_batches() {
        let mut cfg = config(8, 0.1, 4, 120);
        cfg.burn_in = 100;
        let r = run_ensemble(&cfg).unwrap();
        assert!(r.empirical_inc_mean.is_none());
        assert!(increment_stats(&r).is_err());
    }

    #[test]
    fn short_burn_in_is_flagged() {
        let mut cfg = config(8, 0.1, 8, 400);
        cfg.burn_in = 5;
        let stats = estimate_increment_stats(&cfg).unwrap();
        assert!(stats.warnings.iter().any(|w| w.contains("burn-in")));
        assert_eq!(stats.batch_len, 100);
    }

    #[test]
    fn overflowing_objective_excludes_runs() {
        // n = 1, λ = 8 diverges at ~0.7 nats per iteration, so the cubic
        // objective overflows within a few hundred iterations.
        let params = AlgorithmParams::new(1, 8, 1.0).unwrap();
        let mut cfg = EnsembleConfig::new(params, 4, 2000, 1);
        cfg.mode = SelectionMode::Full;
        cfg.objective = ObjectiveSpec::Composed(es_core::Transform::Cubic);
        assert!(matches!(
            run_ensemble(&cfg),
            Err(MonteCarloError::Contract(_))
        ));
        cfg.t_max = 50;
        cfg.burn_in = 10;
        let ok = run_ensemble(&cfg).unwrap();
        assert_eq!(ok.excluded_runs, 0);
    }

    #[test]
    fn rate_matches_theory_without_cumulation() {
        let cfg = config(8, 1.0, 2000, 400);
        let r = run_ensemble(&cfg).unwrap();
        let pred = theory::predict(&cfg.params, &minimum_moments(8).unwrap()).unwrap();
        let v = compare(&pred, &r, DEFAULT_Z_THRESHOLD).unwrap();
        assert!(v.pass, "{v:?}");
    }

    #[test]
    fn compare_exact_match_and_mismatch() {
        let cfg = config(8, 1.0, 500, 200);
        let r = run_ensemble(&cfg).unwrap();
        let mut pred = theory::predict(&cfg.params, &minimum_moments(8).unwrap()).unwrap();
        pred.rate = r.empirical_rate.value;
        let v = compare(&pred, &r, 4.0).unwrap();
        assert_eq!(v.items[0].z, 0.0);
        assert!(v.items[0].pass);

        // Prediction for another lambda relabelled with this ensemble's parameters.
        let other = AlgorithmParams::new(20, 3, 1.0).unwrap();
        let mut wrong = theory::predict(&other, &minimum_moments(3).unwrap()).unwrap();
        assert!(matches!(
            compare(&wrong, &r, 4.0),
            Err(MonteCarloError::Contract(_))
        ));
        wrong.params = cfg.params.clone();
        let v = compare(&wrong, &r, 4.0).unwrap();
        assert!(!v.pass);
        assert!(v.items.iter().any(|i| i.z > 4.0));
    }

    #[test]
    fn rate_window_errors() {
        let r = run_ensemble(&config(3, 1.0, 3, 300)).unwrap();
        assert!(estimate_rate(&r, 299).is_err());
        assert!(estimate_rate(&r, 300).is_ok());
        assert!(windowed_rate(&r, 10, 10).is_err());
    }
}
