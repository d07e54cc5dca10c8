//! Globally adaptive Gauss–Kronrod (G7/K15) quadrature for vector-valued
//! integrands on a finite interval.
//!
//! Every component shares the same subdivision. The interval with the
//! largest error relative to its component tolerance is bisected until all
//! components meet their tolerances or the interval budget runs out.

#![allow(clippy::excessive_precision)]

use thiserror::Error;

pub const DEFAULT_MAX_INTERVALS: usize = 4000;

const INITIAL_PIECES: usize = 24;

// Kronrod abscissae on [0, 1]; the odd entries (1, 3, 5, 7) are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("component {component} did not converge; error estimate {achieved:e}")]
    NotConverged { component: usize, achieved: f64 },
}

#[derive(Debug, Clone)]
pub struct QuadratureResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub intervals: usize,
}

struct Piece {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
}

fn kronrod_piece<F>(f: &F, lo: f64, hi: f64, dim: usize, scratch: &mut [f64]) -> Piece
where
    F: Fn(f64, &mut [f64]),
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    f(center, scratch);
    for d in 0..dim {
        kron[d] += WGK[7] * scratch[d];
        gauss[d] += WG[3] * scratch[d];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for x in [center - dx, center + dx] {
            f(x, scratch);
            for d in 0..dim {
                kron[d] += WGK[j] * scratch[d];
                if j % 2 == 1 {
                    gauss[d] += WG[j / 2] * scratch[d];
                }
            }
        }
    }
    let errors = kron
        .iter()
        .zip(&gauss)
        .map(|(k, g)| (half * (k - g)).abs())
        .collect();
    let values = kron.iter().map(|k| half * k).collect();
    Piece {
        lo,
        hi,
        values,
        errors,
    }
}

/// Integrates `f` over `[lo, hi]`. `f(x, out)` fills `out[..dim]`.
///
/// The error estimate of a piece is `|K15 - G7|`, summed over pieces.
pub fn integrate_vector<F>(
    f: F,
    lo: f64,
    hi: f64,
    dim: usize,
    tol: &[f64],
    max_intervals: usize,
) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64, &mut [f64]),
{
    assert_eq!(tol.len(), dim, "one tolerance per component");
    assert!(hi > lo, "empty interval");
    let mut scratch = vec![0.0; dim];
    let width = (hi - lo) / INITIAL_PIECES as f64;
    let mut pieces: Vec<Piece> = (0..INITIAL_PIECES)
        .map(|i| {
            let a = lo + width * i as f64;
            let b = if i + 1 == INITIAL_PIECES {
                hi
            } else {
                lo + width * (i + 1) as f64
            };
            kronrod_piece(&f, a, b, dim, &mut scratch)
        })
        .collect();

    loop {
        let totals = error_totals(&pieces, dim);
        let worst = (0..dim)
            .map(|d| (d, totals[d] / tol[d]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("dim > 0");
        if worst.1 <= 1.0 {
            break;
        }
        if pieces.len() >= max_intervals {
            return Err(QuadratureError::NotConverged {
                component: worst.0,
                achieved: totals[worst.0],
            });
        }
        let (split, _) = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let score = (0..dim).map(|d| p.errors[d] / tol[d]).fold(0.0, f64::max);
                (i, score)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let p = pieces.swap_remove(split);
        let mid = 0.5 * (p.lo + p.hi);
        if !(mid > p.lo && mid < p.hi) {
            // Interval can no longer be bisected in floating point.
            return Err(QuadratureError::NotConverged {
                component: worst.0,
                achieved: totals[worst.0],
            });
        }
        pieces.push(kronrod_piece(&f, p.lo, mid, dim, &mut scratch));
        pieces.push(kronrod_piece(&f, mid, p.hi, dim, &mut scratch));
    }

    // Sum in a fixed order so the result does not depend on the refinement history.
    pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut values = vec![0.0; dim];
    for p in &pieces {
        for (v, x) in values.iter_mut().zip(&p.values) {
            *v += x;
        }
    }
    Ok(QuadratureResult {
        values,
        errors: error_totals(&pieces, dim),
        intervals: pieces.len(),
    })
}

fn error_totals(pieces: &[Piece], dim: usize) -> Vec<f64> {
    let mut totals = vec![0.0; dim];
    for p in pieces {
        for (t, e) in totals.iter_mut().zip(&p.errors) {
            *t += e;
        }
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let res = integrate_vector(
            |x, out| {
                out[0] = x.powi(5) - 2.0 * x;
                out[1] = 3.0 * x * x;
            },
            -1.0,
            2.0,
            2,
            &[1e-13, 1e-13],
            DEFAULT_MAX_INTERVALS,
        )
        .unwrap();
        assert!((res.values[0] - (64.0 / 6.0 - 1.0 / 6.0 - 3.0)).abs() < 1e-12);
        assert!((res.values[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let res = integrate_vector(
            |x, out| out[0] = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -12.0,
            12.0,
            1,
            &[1e-13],
            DEFAULT_MAX_INTERVALS,
        )
        .unwrap();
        assert!((res.values[0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let err = integrate_vector(
            |x, out| out[0] = (1.0 / x.abs().max(1e-300)).sqrt(),
            -1.0,
            1.0,
            1,
            &[1e-14],
            40,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            QuadratureError::NotConverged { component: 0, .. }
        ));
    }
}
