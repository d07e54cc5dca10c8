//! Small statistics toolbox: estimates with standard errors, batch means,
//! Kolmogorov–Smirnov tests, nearest-rank quantiles and least squares.

use serde::{Deserialize, Serialize};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|value − reference| / stderr`; zero when both the gap and the error vanish.
    pub fn z_score(&self, reference: f64) -> f64 {
        z_score(self.value, reference, self.stderr)
    }
}

pub fn z_score(value: f64, reference: f64, stderr: f64) -> f64 {
    let gap = (value - reference).abs();
    if gap == 0.0 {
        0.0
    } else if stderr > 0.0 {
        gap / stderr
    } else {
        f64::INFINITY
    }
}

/// Sample mean and the standard error of the mean.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate {
            value: mean,
            stderr: f64::NAN,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Running sums over one batch of consecutive observations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSums {
    pub len: u32,
    pub sum: f64,
    pub sum_sq: f64,
}

impl BatchSums {
    pub fn push(&mut self, x: f64) {
        self.len += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }
}

/// Mean and variance of the pooled observations, with batch-means standard
/// errors. All batches must have the same length.
///
/// The variance estimate is the average over batches of
/// `(1/b) Σ (x − x̄)²` with the grand mean `x̄`; its standard error is the
/// spread of those per-batch values.
pub fn batch_means(batches: &[BatchSums]) -> Option<(Estimate, Estimate)> {
    if batches.len() < 2 {
        return None;
    }
    let b = f64::from(batches[0].len);
    debug_assert!(batches.iter().all(|s| f64::from(s.len) == b));
    let count = batches.len() as f64;
    let grand = batches.iter().map(|s| s.sum).sum::<f64>() / (count * b);
    let means: Vec<f64> = batches.iter().map(|s| s.sum / b).collect();
    let spreads: Vec<f64> = batches
        .iter()
        .map(|s| (s.sum_sq - 2.0 * grand * s.sum + b * grand * grand) / b)
        .collect();
    let mean = Estimate {
        value: grand,
        stderr: sample_std(&means) / count.sqrt(),
    };
    let var = mean_estimate(&spreads);
    Some((mean, var))
}

/// Kolmogorov distribution tail `P(K > z)`.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 1.18 {
        // Small-z series (converges fast where the alternating one does not).
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * z * z)).exp();
        let s: f64 = (0..20).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / z * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let kf = f64::from(k);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * kf * kf * z * z).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let s = effective_n.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    }
}

/// Nearest-rank quantile of an ascending sample: the `⌈q·N⌉`-th smallest.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
