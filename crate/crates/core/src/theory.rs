//! Closed-form predictions for the (1,λ)-CSA-ES on linear functions with the
//! squared-length update rule.
//!
//! All formulas take the raw moments of `N_{1:λ}` as input instead of
//! computing them, so predictions are reproducible from a frozen moment
//! table. Writing `m_k = E(N_{1:λ}^k)` and `a = 1 − c`:
//!
//! ```text
//! rate            = (2(1−c) m1² + c(m2 − 1)) / (2 d_σ n)
//! lim E([p]_1²)   = m2 + (2−2c)/c · m1²
//! lim E([p]_1⁴)   = (1−a²)²/(1−a⁴) · (k4 + k31 + k22 + k211 + k1111)
//! Var ln(σ'/σ)    = c²/(4 d_σ² n²) · (E([p]_1⁴) − E([p]_1²)² + 2(n−1))
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::es_core::{AlgorithmParams, UpdateRule};
use crate::order_stats::{OrderStatError, OrderStatMoments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Moments(#[from] OrderStatError),
}

/// The five groups of terms in the stationary fourth moment of `[p]_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KTerms {
    pub k4: f64,
    pub k31: f64,
    pub k22: f64,
    pub k211: f64,
    pub k1111: f64,
}

impl KTerms {
    pub fn sum(&self) -> f64 {
        self.k4 + self.k31 + self.k22 + self.k211 + self.k1111
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub params: AlgorithmParams,
    /// Limit of `(1/t) ln(σ_t/σ_0)`, nats per iteration.
    pub rate: f64,
    pub e_p1_sq_limit: f64,
    pub e_p1_quad_limit: f64,
    pub k_terms: KTerms,
    /// Stationary variance of `ln(σ_{t+1}/σ_t)`.
    pub variance_log_inc: f64,
    /// `√variance / rate`; `None` when the rate is zero.
    pub rel_std: Option<f64>,
}

fn check_minimum(moments: &OrderStatMoments, lambda: Option<u32>) -> Result<(), TheoryError> {
    let spec = moments.spec();
    if spec.rank() != 1 {
        return Err(TheoryError::Contract(format!(
            "expected moments of the minimum N_{{1:λ}}, got {spec}"
        )));
    }
    if let Some(l) = lambda {
        if spec.lambda() != l {
            return Err(TheoryError::Contract(format!(
                "moments are for lambda = {}, but lambda = {l} was requested",
                spec.lambda()
            )));
        }
    }
    Ok(())
}

fn check_c(c: f64) -> Result<(), TheoryError> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(TheoryError::Domain(format!(
            "cumulation parameter must satisfy 0 < c <= 1, got {c}"
        )))
    }
}

/// Returns exactly zero when `value` cannot be told apart from zero given the
/// accuracy of the moments it was computed from.
fn snap_to_zero(value: f64, uncertainty: f64) -> f64 {
    if value.abs() <= uncertainty {
        0.0
    } else {
        value
    }
}

/// Divergence rate without cumulation: `(m2 − 1)/(2 d_σ n)`.
pub fn rate_no_cumulation(
    n: usize,
    lambda: u32,
    d_sigma: f64,
    moments: &OrderStatMoments,
) -> Result<f64, TheoryError> {
    check_minimum(moments, Some(lambda))?;
    let m2 = moments.moment(2)?;
    let e2 = moments.error_bound(2)?;
    let scale = 2.0 * d_sigma * n as f64;
    Ok(snap_to_zero(m2 - 1.0, e2) / scale)
}

/// Divergence rate with cumulation: `(2(1−c) m1² + c(m2 − 1))/(2 d_σ n)`.
pub fn rate_cumulation(
    n: usize,
    lambda: u32,
    c: f64,
    d_sigma: f64,
    moments: &OrderStatMoments,
) -> Result<f64, TheoryError> {
    check_minimum(moments, Some(lambda))?;
    check_c(c)?;
    let m1 = moments.moment(1)?;
    let m2 = moments.moment(2)?;
    let (e1, e2) = (moments.error_bound(1)?, moments.error_bound(2)?);
    let bracket = 2.0 * (1.0 - c) * m1 * m1 + c * (m2 - 1.0);
    let uncertainty = 2.0 * (1.0 - c) * (2.0 * m1.abs() * e1 + e1 * e1) + c * e2;
    Ok(snap_to_zero(bracket, uncertainty) / (2.0 * d_sigma * n as f64))
}

/// Stationary `E([p]_1²) = m2 + (2 − 2c)/c · m1²`.
pub fn e_p1_sq_limit(c: f64, moments: &OrderStatMoments) -> Result<f64, TheoryError> {
    check_minimum(moments, None)?;
    check_c(c)?;
    let m1 = moments.moment(1)?;
    let m2 = moments.moment(2)?;
    Ok(m2 + (2.0 - 2.0 * c) / c * m1 * m1)
}

/// Stationary `E([p]_1⁴)` and its k-term decomposition.
pub fn e_p1_quad_limit(c: f64, moments: &OrderStatMoments) -> Result<(f64, KTerms), TheoryError> {
    check_minimum(moments, None)?;
    check_c(c)?;
    let m1 = moments.moment(1)?;
    let m2 = moments.moment(2)?;
    let m3 = moments.moment(3)?;
    let m4 = moments.moment(4)?;

    if c == 1.0 {
        let k = KTerms {
            k4: m4,
            k31: 0.0,
            k22: 0.0,
            k211: 0.0,
            k1111: 0.0,
        };
        return Ok((m4, k));
    }

    let a = 1.0 - c;
    let a2 = a * a;
    let a3 = a2 * a;
    let one_m_a = c;
    let one_m_a2 = 1.0 - a2;
    let one_m_a3 = 1.0 - a3;
    let one_m_a4 = 1.0 - a2 * a2;

    let k = KTerms {
        k4: m4,
        k31: 4.0 * a * (1.0 + a + 2.0 * a2) / one_m_a3 * m3 * m1,
        k22: 6.0 * a2 / one_m_a2 * m2 * m2,
        k211: 12.0 * a3 * (1.0 + 2.0 * a + 3.0 * a2) / (one_m_a2 * one_m_a3) * m2 * m1 * m1,
        k1111: 24.0 * a3 * a3 / (one_m_a * one_m_a2 * one_m_a3) * m1.powi(4),
    };
    let prefactor = one_m_a2 * one_m_a2 / one_m_a4;
    Ok((prefactor * k.sum(), k))
}

/// Stationary variance of `ln(σ_{t+1}/σ_t)`.
pub fn variance_log_increment(
    n: usize,
    c: f64,
    d_sigma: f64,
    e_p1_sq: f64,
    e_p1_quad: f64,
) -> Result<f64, TheoryError> {
    let sq = e_p1_sq * e_p1_sq;
    if e_p1_quad < sq * (1.0 - 1e-12) {
        return Err(TheoryError::Contract(format!(
            "inconsistent path moments: E(p^4) = {e_p1_quad} < E(p^2)^2 = {sq}"
        )));
    }
    let nf = n as f64;
    let spread = (e_p1_quad - sq).max(0.0) + 2.0 * (nf - 1.0);
    Ok(c * c / (4.0 * d_sigma * d_sigma * nf * nf) * spread)
}

/// All predictions for one parameter set.
pub fn predict(
    params: &AlgorithmParams,
    moments: &OrderStatMoments,
) -> Result<TheoryPrediction, TheoryError> {
    params
        .validate()
        .map_err(|e| TheoryError::Domain(e.to_string()))?;
    if params.update_rule != UpdateRule::SquaredLength {
        return Err(TheoryError::Contract(
            "closed-form predictions cover the squared-length update rule only".into(),
        ));
    }
    let rate = rate_cumulation(params.n, params.lambda, params.c, params.d_sigma, moments)?;
    let e_sq = e_p1_sq_limit(params.c, moments)?;
    let (e_quad, k_terms) = e_p1_quad_limit(params.c, moments)?;
    let variance = variance_log_increment(params.n, params.c, params.d_sigma, e_sq, e_quad)?;
    Ok(TheoryPrediction {
        params: params.clone(),
        rate,
        e_p1_sq_limit: e_sq,
        e_p1_quad_limit: e_quad,
        k_terms,
        variance_log_inc: variance,
        rel_std: relative_std(variance, rate),
    })
}

fn relative_std(variance: f64, rate: f64) -> Option<f64> {
    (rate != 0.0).then(|| variance.sqrt() / rate)
}

/// `c = 1/(1 + n^alpha)` over a grid of dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub alpha: f64,
    pub n_grid: Vec<usize>,
}

impl ScalingSpec {
    pub fn new(alpha: f64, n_grid: Vec<usize>) -> Result<Self, TheoryError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(TheoryError::Domain(format!(
                "alpha must be >= 0, got {alpha}"
            )));
        }
        check_grid(&n_grid)?;
        Ok(Self { alpha, n_grid })
    }

    pub fn c_for(&self, n: usize) -> f64 {
        1.0 / (1.0 + (n as f64).powf(self.alpha))
    }
}

fn check_grid(n_grid: &[usize]) -> Result<(), TheoryError> {
    if n_grid.is_empty() {
        return Err(TheoryError::Domain("dimension grid is empty".into()));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TheoryError::Domain(
            "dimension grid must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub c: f64,
    pub rate: f64,
    pub std: f64,
    pub rel_std: Option<f64>,
}

fn scaling_row(
    n: usize,
    c: f64,
    lambda: u32,
    d_sigma: f64,
    moments: &OrderStatMoments,
) -> Result<ScalingRow, TheoryError> {
    let params = AlgorithmParams::new(n, lambda, c)
        .and_then(|p| p.with_d_sigma(d_sigma))
        .map_err(|e| TheoryError::Domain(e.to_string()))?;
    let pred = predict(&params, moments)?;
    Ok(ScalingRow {
        n,
        c,
        rate: pred.rate,
        std: pred.variance_log_inc.sqrt(),
        rel_std: pred.rel_std,
    })
}

/// Relative standard deviation of the log step-size increment along
/// `c = 1/(1 + n^alpha)`.
pub fn relative_std_curve(
    spec: &ScalingSpec,
    lambda: u32,
    d_sigma: f64,
    moments: &OrderStatMoments,
) -> Result<Vec<ScalingRow>, TheoryError> {
    check_grid(&spec.n_grid)?;
    spec.n_grid
        .iter()
        .map(|&n| scaling_row(n, spec.c_for(n), lambda, d_sigma, moments))
        .collect()
}

/// Same as [`relative_std_curve`] with one cumulation parameter for every `n`.
pub fn relative_std_curve_fixed_c(
    c: f64,
    n_grid: &[usize],
    lambda: u32,
    d_sigma: f64,
    moments: &OrderStatMoments,
) -> Result<Vec<ScalingRow>, TheoryError> {
    check_c(c)?;
    check_grid(n_grid)?;
    n_grid
        .iter()
        .map(|&n| scaling_row(n, c, lambda, d_sigma, moments))
        .collect()
}

/// Relative standard deviation at one dimension over a grid of `c` values.
pub fn relative_std_vs_c(
    n: usize,
    c_grid: &[f64],
    lambda: u32,
    d_sigma: f64,
    moments: &OrderStatMoments,
) -> Result<Vec<ScalingRow>, TheoryError> {
    c_grid
        .iter()
        .map(|&c| {
            check_c(c)?;
            scaling_row(n, c, lambda, d_sigma, moments)
        })
        .collect()
}

/// Limit of the relative standard deviation on the critical schedule:
/// `1/(√2 · E(N_{1:λ})²)`.
pub fn critical_rel_std_limit(moments: &OrderStatMoments) -> Result<f64, TheoryError> {
    check_minimum(moments, None)?;
    let m1 = moments.moment(1)?;
    Ok(1.0 / (std::f64::consts::SQRT_2 * m1 * m1))
}
