//! The (1,λ)-CSA-ES with identity covariance.
//!
//! One iteration draws `λ` children `x + σ ξ_i`, keeps the child with the
//! smallest objective value, moves the cumulative path towards the selected
//! step, and rescales `σ` according to the path length. The step size is
//! carried as `ln σ` throughout since it diverges geometrically on linear
//! functions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::order_stats::{expected_chi_norm, sample_minimum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("objective value of child {child} is not finite ({value})")]
    NonFiniteObjective { child: usize, value: f64 },
}

/// Step-size update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `ln σ += c/(2 d_σ) · (‖p‖²/n − 1)`
    SquaredLength,
    /// `ln σ += c/d_σ · (‖p‖/E‖N(0,I)‖ − 1)`
    NormLength,
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::SquaredLength => "squared",
            UpdateRule::NormLength => "norm",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = EsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squared" | "squared_length" => Ok(UpdateRule::SquaredLength),
            "norm" | "norm_length" => Ok(UpdateRule::NormLength),
            other => Err(EsError::Config(format!(
                "unknown update rule '{other}' (expected squared or norm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    pub n: usize,
    pub lambda: u32,
    pub c: f64,
    pub d_sigma: f64,
    pub update_rule: UpdateRule,
}

impl AlgorithmParams {
    /// Parameters with `d_σ = 1` and the squared-length rule.
    pub fn new(n: usize, lambda: u32, c: f64) -> Result<Self, EsError> {
        Self {
            n,
            lambda,
            c,
            d_sigma: 1.0,
            update_rule: UpdateRule::SquaredLength,
        }
        .validated()
    }

    pub fn with_d_sigma(mut self, d_sigma: f64) -> Result<Self, EsError> {
        self.d_sigma = d_sigma;
        self.validated()
    }

    pub fn with_rule(mut self, rule: UpdateRule) -> Self {
        self.update_rule = rule;
        self
    }

    pub fn validated(self) -> Result<Self, EsError> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), EsError> {
        if self.n == 0 {
            return Err(EsError::Config("dimension n must be at least 1".into()));
        }
        if self.lambda == 0 {
            return Err(EsError::Config("lambda must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(EsError::Config(format!(
                "cumulation parameter must satisfy 0 < c <= 1, got {}",
                self.c
            )));
        }
        if !(self.d_sigma > 0.0 && self.d_sigma.is_finite()) {
            return Err(EsError::Config(format!(
                "damping d_sigma must be positive, got {}",
                self.d_sigma
            )));
        }
        Ok(())
    }
}

/// Strictly increasing scalar transform applied to `[x]_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `v ↦ exp(v − shift)`
    ShiftedExp {
        shift: f64,
    },
    Cubic,
    Arctan,
}

impl Transform {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Transform::Identity => v,
            Transform::ShiftedExp { shift } => (v - shift).exp(),
            Transform::Cubic => v * v * v,
            Transform::Arctan => v.atan(),
        }
    }
}

/// `f(x) = g([x]_1)` for a strictly increasing `g`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSpec {
    #[default]
    LinearFirstCoordinate,
    Composed(Transform),
}

impl ObjectiveSpec {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            ObjectiveSpec::LinearFirstCoordinate => y[0],
            ObjectiveSpec::Composed(g) => g.apply(y[0]),
        }
    }
}


/// Full selection draws and ranks all children; the shortcut samples the
/// selected step directly from its law on linear functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Full,
    Shortcut,
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMode::Full => "full",
            SelectionMode::Shortcut => "shortcut",
        })
    }
}

impl FromStr for SelectionMode {
    type Err = EsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(SelectionMode::Full),
            "shortcut" => Ok(SelectionMode::Shortcut),
            other => Err(EsError::Config(format!(
                "unknown mode '{other}' (expected full or shortcut)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsState {
    pub t: u64,
    pub x: Vec<f64>,
    pub log_sigma: f64,
    pub p: Vec<f64>,
}

impl EsState {
    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }
}

/// The mutation vector of the winning child.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedStep {
    pub xi_star: Vec<f64>,
    /// Index of the winning child; `None` for the shortcut sampler.
    pub child: Option<usize>,
}

/// Starting state with `p_0 ~ N(0, I_n)` drawn from `rng`.
pub fn init_state<R: Rng + ?Sized>(
    params: &AlgorithmParams,
    x0: &[f64],
    sigma0: f64,
    rng: &mut R,
) -> Result<EsState, EsError> {
    params.validate()?;
    if x0.len() != params.n {
        return Err(EsError::Config(format!(
            "initial point has length {}, expected n = {}",
            x0.len(),
            params.n
        )));
    }
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(EsError::Config(format!(
            "initial step size must be positive and finite, got {sigma0}"
        )));
    }
    let p = (0..params.n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(EsState {
        t: 0,
        x: x0.to_vec(),
        log_sigma: sigma0.ln(),
        p,
    })
}

/// Draws `λ` children around `state.x` and returns the step of the best one.
/// Ties go to the lowest child index.
pub fn select_step_full<R: Rng + ?Sized>(
    state: &EsState,
    params: &AlgorithmParams,
    objective: &ObjectiveSpec,
    rng: &mut R,
) -> Result<SelectedStep, EsError> {
    let n = params.n;
    let sigma = state.sigma();
    let mut best: Option<(f64, usize)> = None;
    let mut best_xi = vec![0.0; n];
    let mut xi = vec![0.0; n];
    let mut y = vec![0.0; n];
    for child in 0..params.lambda as usize {
        for j in 0..n {
            xi[j] = rng.sample(StandardNormal);
            y[j] = state.x[j] + sigma * xi[j];
        }
        let value = objective.eval(&y);
        if !value.is_finite() {
            return Err(EsError::NonFiniteObjective { child, value });
        }
        if best.is_none_or(|(v, _)| value < v) {
            best = Some((value, child));
            best_xi.copy_from_slice(&xi);
        }
    }
    Ok(SelectedStep {
        xi_star: best_xi,
        child: best.map(|(_, i)| i),
    })
}

/// Samples the selected step on `f(x) = [x]_1` directly: the first
/// coordinate is the minimum of `λ` standard normals, the rest are standard
/// normals.
pub fn select_step_shortcut<R: Rng + ?Sized>(
    params: &AlgorithmParams,
    rng: &mut R,
) -> SelectedStep {
    let mut xi_star = Vec::with_capacity(params.n);
    xi_star.push(sample_minimum(params.lambda, rng));
    xi_star.extend((1..params.n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    SelectedStep {
        xi_star,
        child: None,
    }
}

/// `(1 − c) p + √(c(2 − c)) ξ*`. With `c = 1` the selected step is returned as is.
pub fn update_path(p: &[f64], xi_star: &SelectedStep, c: f64) -> Vec<f64> {
    let mut out = p.to_vec();
    update_path_in_place(&mut out, &xi_star.xi_star, c);
    out
}

fn update_path_in_place(p: &mut [f64], xi_star: &[f64], c: f64) {
    if c == 1.0 {
        p.copy_from_slice(xi_star);
        return;
    }
    let keep = 1.0 - c;
    let gain = (c * (2.0 - c)).sqrt();
    for (pi, xi) in p.iter_mut().zip(xi_star) {
        *pi = keep * *pi + gain * xi;
    }
}

/// The increment `ln(σ_{t+1}/σ_t)` implied by the new path.
pub fn log_sigma_increment(p_next: &[f64], params: &AlgorithmParams) -> f64 {
    let n = params.n as f64;
    let sq: f64 = p_next.iter().map(|v| v * v).sum();
    match params.update_rule {
        UpdateRule::SquaredLength => params.c / (2.0 * params.d_sigma) * (sq / n - 1.0),
        UpdateRule::NormLength => {
            params.c / params.d_sigma * (sq.sqrt() / expected_chi_norm(params.n as u32) - 1.0)
        }
    }
}

pub fn update_log_sigma(log_sigma: f64, p_next: &[f64], params: &AlgorithmParams) -> f64 {
    log_sigma + log_sigma_increment(p_next, params)
}

/// One iteration: selection, path, step size, then `X_{t+1} = X_t + σ_t ξ*`.
/// Returns the new state and the realized `ln(σ_{t+1}/σ_t)`.
pub fn step<R: Rng + ?Sized>(
    state: EsState,
    params: &AlgorithmParams,
    objective: &ObjectiveSpec,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<(EsState, f64), EsError> {
    let (state, inc, _) = step_with_selection(state, params, objective, mode, rng)?;
    Ok((state, inc))
}

/// Like [`step`], also handing back the selected step.
pub fn step_with_selection<R: Rng + ?Sized>(
    mut state: EsState,
    params: &AlgorithmParams,
    objective: &ObjectiveSpec,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<(EsState, f64, SelectedStep), EsError> {
    let selected = match mode {
        SelectionMode::Full => select_step_full(&state, params, objective, rng)?,
        SelectionMode::Shortcut => select_step_shortcut(params, rng),
    };
    update_path_in_place(&mut state.p, &selected.xi_star, params.c);
    let inc = log_sigma_increment(&state.p, params);
    let sigma = state.sigma();
    for (x, xi) in state.x.iter_mut().zip(&selected.xi_star) {
        *x += sigma * xi;
    }
    state.log_sigma += inc;
    state.t += 1;
    Ok((state, inc, selected))
}

/// Per-iteration trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub log_sigma: f64,
    pub log_increment: f64,
    pub p_norm_sq: f64,
    pub x1: f64,
}

impl TraceRecord {
    pub fn of(state: &EsState, log_increment: f64) -> Self {
        Self {
            t: state.t,
            log_sigma: state.log_sigma,
            log_increment,
            p_norm_sq: state.p.iter().map(|v| v * v).sum(),
            x1: state.x[0],
        }
    }
}

/// Runs `iterations` steps from `state`, recording every state after the first.
pub fn trace<R: Rng + ?Sized>(
    mut state: EsState,
    params: &AlgorithmParams,
    objective: &ObjectiveSpec,
    mode: SelectionMode,
    iterations: u64,
    rng: &mut R,
) -> Result<(EsState, Vec<TraceRecord>), EsError> {
    let mut records = Vec::with_capacity(iterations as usize);
    for _ in 0..iterations {
        let (next, inc) = step(state, params, objective, mode, rng)?;
        records.push(TraceRecord::of(&next, inc));
        state = next;
    }
    Ok((state, records))
}
