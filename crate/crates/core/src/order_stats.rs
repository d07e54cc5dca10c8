//! Moments and samples of Gaussian order statistics.
//!
//! `N_{i:λ}` denotes the `i`-th smallest of `λ` i.i.d. standard normals
//! (rank 1 is the minimum). Its density is
//!
//! ```text
//! f(x) = λ!/((i-1)!(λ-i)!) · Φ(x)^(i-1) · (1-Φ(x))^(λ-i) · φ(x)
//! ```
//!
//! and is evaluated in the log domain so that `(1-Φ(x))^(λ-1)` does not
//! underflow before the polynomial weight is applied.

use std::fmt;

use libm::{erfc, lgamma as ln_gamma};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{self, QuadratureError};

/// Highest moment order tracked by [`OrderStatMoments`].
pub const MAX_MOMENT: usize = 4;

/// Default absolute tolerance per moment.
pub const DEFAULT_TOL: f64 = 1e-10;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderStatError {
    #[error(
        "invalid order statistic: rank {rank} with lambda {lambda} (need 1 <= rank <= lambda)"
    )]
    InvalidSpec { lambda: u32, rank: u32 },
    #[error("moment order {0} outside 1..=4")]
    InvalidOrder(usize),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(
        "quadrature for moment {k} did not reach tolerance {requested:e}; best bound {achieved:e}"
    )]
    Accuracy {
        k: usize,
        requested: f64,
        achieved: f64,
    },
    #[error("moment {k} not available (computed up to {k_max})")]
    MissingMoment { k: usize, k_max: usize },
}

/// Identifies `N_{rank:lambda}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderStatSpec {
    lambda: u32,
    rank: u32,
}

impl OrderStatSpec {
    pub fn new(lambda: u32, rank: u32) -> Result<Self, OrderStatError> {
        if lambda == 0 || rank == 0 || rank > lambda {
            return Err(OrderStatError::InvalidSpec { lambda, rank });
        }
        Ok(Self { lambda, rank })
    }

    /// The minimum of `lambda` standard normals.
    pub fn minimum(lambda: u32) -> Result<Self, OrderStatError> {
        Self::new(lambda, 1)
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    /// The mirrored statistic `N_{λ+1-i:λ}`, distributed as `-N_{i:λ}`.
    pub fn mirrored(&self) -> Self {
        Self {
            lambda: self.lambda,
            rank: self.lambda + 1 - self.rank,
        }
    }

    fn ln_coefficient(&self) -> f64 {
        let l = f64::from(self.lambda);
        let i = f64::from(self.rank);
        ln_gamma(l + 1.0) - ln_gamma(i) - ln_gamma(l - i + 1.0)
    }

    /// Natural log of the density at `x`.
    pub fn ln_density(&self, x: f64) -> f64 {
        let below = self.rank - 1;
        let above = self.lambda - self.rank;
        let mut acc = self.ln_coefficient() - 0.5 * x * x - LN_SQRT_2PI;
        if below > 0 {
            acc += f64::from(below) * ln_normal_cdf(x);
        }
        if above > 0 {
            acc += f64::from(above) * ln_normal_sf(x);
        }
        acc
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    /// `P(N_{i:λ} <= x)`: probability that at least `rank` of the `lambda`
    /// draws fall below `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let l = f64::from(self.lambda);
        let (ln_p, ln_q) = (ln_normal_cdf(x), ln_normal_sf(x));
        let sum: f64 = (self.rank..=self.lambda)
            .map(|j| {
                let jf = f64::from(j);
                let mut lt = ln_gamma(l + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(l - jf + 1.0);
                lt += jf * ln_p;
                if j < self.lambda {
                    lt += (l - jf) * ln_q;
                }
                lt.exp()
            })
            .sum();
        sum.min(1.0)
    }
}

impl fmt::Display for OrderStatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N_{{{}:{}}}", self.rank, self.lambda)
    }
}

/// How a moment table was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    Quadrature,
    MonteCarlo,
}

impl fmt::Display for MomentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentMethod::Quadrature => f.write_str("quadrature"),
            MomentMethod::MonteCarlo => f.write_str("montecarlo"),
        }
    }
}

/// Raw moments `E(N_{i:λ}^k)` for `k = 1..=k_max`.
///
/// For Monte Carlo tables the error bound of each moment is its standard
/// error; for quadrature tables it is the absolute error bound of the
/// integration plus the truncated tail mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStatMoments {
    spec: OrderStatSpec,
    k_max: usize,
    values: [f64; MAX_MOMENT],
    abs_error_bound: [f64; MAX_MOMENT],
    method: MomentMethod,
}

impl OrderStatMoments {
    /// Assembles a table from externally obtained values (frozen constants,
    /// another integrator, ...). `values[k-1]` is the `k`-th moment.
    pub fn from_values(
        spec: OrderStatSpec,
        values: &[f64],
        abs_error_bound: &[f64],
        method: MomentMethod,
    ) -> Result<Self, OrderStatError> {
        let k_max = values.len();
        if k_max == 0 || k_max > MAX_MOMENT {
            return Err(OrderStatError::InvalidOrder(k_max));
        }
        if abs_error_bound.len() != k_max {
            return Err(OrderStatError::InvalidOrder(abs_error_bound.len()));
        }
        let mut v = [f64::NAN; MAX_MOMENT];
        let mut e = [f64::NAN; MAX_MOMENT];
        v[..k_max].copy_from_slice(values);
        e[..k_max].copy_from_slice(abs_error_bound);
        Ok(Self {
            spec,
            k_max,
            values: v,
            abs_error_bound: e,
            method,
        })
    }

    pub fn spec(&self) -> OrderStatSpec {
        self.spec
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn method(&self) -> MomentMethod {
        self.method
    }

    /// `E(N^k)`.
    pub fn moment(&self, k: usize) -> Result<f64, OrderStatError> {
        self.check_k(k)?;
        Ok(self.values[k - 1])
    }

    pub fn error_bound(&self, k: usize) -> Result<f64, OrderStatError> {
        self.check_k(k)?;
        Ok(self.abs_error_bound[k - 1])
    }

    fn check_k(&self, k: usize) -> Result<(), OrderStatError> {
        if k == 0 || k > MAX_MOMENT {
            return Err(OrderStatError::InvalidOrder(k));
        }
        if k > self.k_max {
            return Err(OrderStatError::MissingMoment {
                k,
                k_max: self.k_max,
            });
        }
        Ok(())
    }

    /// One row per available moment, in the exported table layout.
    pub fn rows(&self) -> Vec<MomentRow> {
        (1..=self.k_max)
            .map(|k| MomentRow {
                lambda: self.spec.lambda,
                rank: self.spec.rank,
                k: k as u32,
                value: self.values[k - 1],
                method: self.method,
                abs_error_bound: self.abs_error_bound[k - 1],
            })
            .collect()
    }
}

/// Flat record of the moment table (`lambda, rank, k, value, method, abs_error_bound`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub lambda: u32,
    pub rank: u32,
    pub k: u32,
    pub value: f64,
    pub method: MomentMethod,
    pub abs_error_bound: f64,
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, accurate in relative terms for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln(1 - Φ(x))`, finite for every finite `x`.
pub fn ln_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        return normal_sf(x).ln();
    }
    // Mills ratio expansion; erfc underflows past x ~ 37.5.
    let r = 1.0 / (x * x);
    -0.5 * x * x - x.ln() - LN_SQRT_2PI
        + (1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r).ln()
}

/// `ln Φ(x)`.
pub fn ln_normal_cdf(x: f64) -> f64 {
    ln_normal_sf(-x)
}

/// `∫_L^∞ x^k φ(x) dx` for `k <= 4`, `L >= 0`.
fn upper_tail_moment(k: usize, lo: f64) -> f64 {
    let phi = (-0.5 * lo * lo - LN_SQRT_2PI).exp();
    let sf = normal_sf(lo);
    match k {
        0 => sf,
        1 => phi,
        2 => lo * phi + sf,
        3 => (lo * lo + 2.0) * phi,
        4 => (lo * lo * lo + 3.0 * lo) * phi + 3.0 * sf,
        _ => unreachable!("moment order checked by caller"),
    }
}

/// Bound on `∫_{|x|>L} |x|^k f(x) dx`.
///
/// Left of `-L` the factor `Φ(x)^(i-1)` is at most `Φ(-L)^(i-1)`; right of
/// `L` the factor `(1-Φ(x))^(λ-i)` is at most `(1-Φ(L))^(λ-i)`.
fn tail_bound(spec: &OrderStatSpec, k: usize, half_width: f64) -> f64 {
    let ln_coef = spec.ln_coefficient();
    let ln_tail_prob = ln_normal_sf(half_width);
    let ln_i = upper_tail_moment(k, half_width).ln();
    let left = ln_coef + f64::from(spec.rank - 1) * ln_tail_prob + ln_i;
    let right = ln_coef + f64::from(spec.lambda - spec.rank) * ln_tail_prob + ln_i;
    left.exp() + right.exp()
}

const MIN_HALF_WIDTH: f64 = 12.0;
const MAX_HALF_WIDTH: f64 = 38.0;

/// Computes `E(N_{i:λ}^k)` for `k = 1..=k_max` by adaptive Gauss–Kronrod
/// quadrature on a truncated interval `[-L, L]`.
///
/// `L` starts at 12 and is widened until the analytic tail bound is below a
/// quarter of `tol`. The reported `abs_error_bound` of each moment is the
/// integration error estimate plus that tail bound, and never exceeds `tol`;
/// otherwise [`OrderStatError::Accuracy`] is returned.
pub fn moments_quadrature(
    spec: OrderStatSpec,
    k_max: usize,
    tol: f64,
) -> Result<OrderStatMoments, OrderStatError> {
    if k_max == 0 || k_max > MAX_MOMENT {
        return Err(OrderStatError::InvalidOrder(k_max));
    }
    if tol.is_nan() || tol <= 0.0 || !tol.is_finite() {
        return Err(OrderStatError::InvalidTolerance(tol));
    }

    if spec.lambda == 1 {
        // N_{1:1} is a standard normal.
        let exact = [0.0, 1.0, 0.0, 3.0];
        return OrderStatMoments::from_values(
            spec,
            &exact[..k_max],
            &[0.0; MAX_MOMENT][..k_max],
            MomentMethod::Quadrature,
        );
    }

    let tail_budget = 0.25 * tol;
    let mut half_width = MIN_HALF_WIDTH;
    let mut tails = [0.0; MAX_MOMENT];
    loop {
        for (k, t) in tails.iter_mut().enumerate().take(k_max) {
            *t = tail_bound(&spec, k + 1, half_width);
        }
        if tails[..k_max].iter().all(|&t| t <= tail_budget) || half_width >= MAX_HALF_WIDTH {
            break;
        }
        half_width = (half_width + 2.0).min(MAX_HALF_WIDTH);
    }
    if let Some((k, &t)) = tails[..k_max]
        .iter()
        .enumerate()
        .find(|(_, &t)| t > tail_budget)
    {
        return Err(OrderStatError::Accuracy {
            k: k + 1,
            requested: tol,
            achieved: t,
        });
    }

    let integrand = |x: f64, out: &mut [f64]| {
        let d = spec.density(x);
        let mut pow = x;
        for slot in out.iter_mut() {
            *slot = pow * d;
            pow *= x;
        }
    };
    let quad_tol: Vec<f64> = tails[..k_max].iter().map(|&t| tol - t).collect();
    let outcome = quadrature::integrate_vector(
        integrand,
        -half_width,
        half_width,
        k_max,
        &quad_tol,
        quadrature::DEFAULT_MAX_INTERVALS,
    );
    match outcome {
        Ok(res) => {
            let bounds: Vec<f64> = res.errors.iter().zip(&tails).map(|(e, t)| e + t).collect();
            OrderStatMoments::from_values(spec, &res.values, &bounds, MomentMethod::Quadrature)
        }
        Err(QuadratureError::NotConverged {
            component,
            achieved,
        }) => Err(OrderStatError::Accuracy {
            k: component + 1,
            requested: tol,
            achieved: achieved + tails[component],
        }),
    }
}

/// Moments of `N_{1:λ}` at the default tolerance.
pub fn minimum_moments(lambda: u32) -> Result<OrderStatMoments, OrderStatError> {
    moments_quadrature(OrderStatSpec::minimum(lambda)?, MAX_MOMENT, DEFAULT_TOL)
}

/// One draw of `N_{rank:λ}`: `λ` standard normals, then the `rank`-th smallest.
pub fn sample_order_stat<R: Rng + ?Sized>(spec: OrderStatSpec, rng: &mut R) -> f64 {
    if spec.rank == 1 {
        return sample_minimum(spec.lambda, rng);
    }
    let mut draws: Vec<f64> = (0..spec.lambda)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let idx = (spec.rank - 1) as usize;
    let (_, nth, _) = draws.select_nth_unstable_by(idx, f64::total_cmp);
    *nth
}

/// Minimum of `lambda` standard normals.
pub fn sample_minimum<R: Rng + ?Sized>(lambda: u32, rng: &mut R) -> f64 {
    (0..lambda)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .fold(f64::INFINITY, f64::min)
}

/// Sample moments of `samples` draws, with standard errors as the error bound.
pub fn moments_montecarlo<R: Rng + ?Sized>(
    spec: OrderStatSpec,
    k_max: usize,
    samples: usize,
    rng: &mut R,
) -> Result<OrderStatMoments, OrderStatError> {
    if k_max == 0 || k_max > MAX_MOMENT {
        return Err(OrderStatError::InvalidOrder(k_max));
    }
    let mut sum = [0.0f64; MAX_MOMENT];
    let mut sum_sq = [0.0f64; MAX_MOMENT];
    for _ in 0..samples {
        let x = sample_order_stat(spec, rng);
        let mut pow = 1.0;
        for k in 0..k_max {
            pow *= x;
            sum[k] += pow;
            sum_sq[k] += pow * pow;
        }
    }
    let n = samples as f64;
    let mut values = Vec::with_capacity(k_max);
    let mut errors = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let mean = sum[k] / n;
        let var = ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
        values.push(mean);
        errors.push((var / n).sqrt());
    }
    OrderStatMoments::from_values(spec, &values, &errors, MomentMethod::MonteCarlo)
}

/// `E‖N(0, I_n)‖ = √2 Γ((n+1)/2) / Γ(n/2)`, evaluated through log-gamma.
pub fn expected_chi_norm(n: u32) -> f64 {
    assert!(n >= 1, "dimension must be positive");
    let h = 0.5 * f64::from(n);
    (0.5 * std::f64::consts::LN_2 + ln_gamma(h + 0.5) - ln_gamma(h)).exp()
}
