//! Adaptive Gauss–Kronrod quadrature.
//!
//! The integrands met in this crate are smooth but can be extremely
//! peaked: weights like `exp(-2c(G(t) - G(s)))` concentrate all of their
//! mass in a window of width `1/(c g(t))` at one end of the interval. A
//! plain adaptive rule sampling a long interval never sees such a spike,
//! so [`integrate_decaying_left`] and [`integrate_decaying_right`] march
//! geometric panels away from the peak instead.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae on [-1, 1] (non-negative half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Embedded 7-point Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

/// Value and error estimate of an integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Stopping tolerances: converged when `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn relative(rel: f64) -> Self {
        Tolerance { abs: 0.0, rel }
    }

    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    fn bound(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-300, 1e-10)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

struct Segment {
    a: f64,
    b: f64,
    est: Estimate,
}

/// Globally adaptive G7/K15 quadrature of `f` over `[a, b]`.
///
/// The segment with the largest error is bisected until the summed error
/// meets `tol`. Fails with [`Error::Quadrature`] when the segment budget
/// runs out or the integrand produces non-finite values.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let first = kronrod15(&f, lo, hi);
    let mut segments = vec![Segment {
        a: lo,
        b: hi,
        est: first,
    }];
    let mut total = first;
    loop {
        if !total.value.is_finite() || !total.error.is_finite() {
            return Err(Error::Quadrature {
                a,
                b,
                estimate: total.value,
                error: total.error,
            });
        }
        if total.error <= tol.bound(total.value) {
            return Ok(Estimate {
                value: sign * total.value,
                error: total.error,
            });
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                a,
                b,
                estimate: total.value,
                error: total.error,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.est.error.total_cmp(&y.1.est.error))
            .map(|(i, _)| i)
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval collapsed to machine resolution.
            return Err(Error::Quadrature {
                a,
                b,
                estimate: total.value,
                error: total.error,
            });
        }
        let left = kronrod15(&f, seg.a, mid);
        let right = kronrod15(&f, mid, seg.b);
        total.value += left.value + right.value - seg.est.value;
        total.error += left.error + right.error - seg.est.error;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            est: left,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            est: right,
        });
        // Re-sum occasionally; incremental updates drift.
        if segments.len() % 64 == 0 {
            total.value = segments.iter().map(|s| s.est.value).sum();
            total.error = segments.iter().map(|s| s.est.error).sum();
        }
    }
}

/// Integrate `f` over `[a, b]` for an integrand concentrated at `b`.
///
/// Panels start at `b` with width `first_width` and double while moving
/// left. `negligible(s)` reports that everything left of `s` can be
/// dropped; the march stops there. Each panel is integrated with a
/// tolerance relative to the running total.
pub fn integrate_decaying_left<F, N>(
    f: F,
    a: f64,
    b: f64,
    first_width: f64,
    negligible: N,
    tol: Tolerance,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
    N: Fn(f64) -> bool,
{
    debug_assert!(first_width > 0.0);
    let mut total = Estimate {
        value: 0.0,
        error: 0.0,
    };
    let mut right = b;
    let mut width = first_width;
    while right > a {
        let left = (right - width).max(a);
        let panel_tol = Tolerance::new(tol.abs.max(tol.rel * total.value.abs()), tol.rel);
        let est = integrate(&f, left, right, panel_tol)?;
        total.value += est.value;
        total.error += est.error;
        right = left;
        width *= 2.0;
        if right > a && negligible(right) {
            break;
        }
    }
    Ok(total)
}

/// Mirror of [`integrate_decaying_left`]: the integrand peaks at `a` and
/// panels march right until `negligible(s)` or `b` (which may be
/// `f64::INFINITY` as long as `negligible` eventually fires).
pub fn integrate_decaying_right<F, N>(
    f: F,
    a: f64,
    b: f64,
    first_width: f64,
    negligible: N,
    tol: Tolerance,
) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
    N: Fn(f64) -> bool,
{
    debug_assert!(first_width > 0.0);
    let mut total = Estimate {
        value: 0.0,
        error: 0.0,
    };
    let mut left = a;
    let mut width = first_width;
    let mut panels = 0usize;
    while left < b {
        let right = (left + width).min(b);
        let panel_tol = Tolerance::new(tol.abs.max(tol.rel * total.value.abs()), tol.rel);
        let est = integrate(&f, left, right, panel_tol)?;
        total.value += est.value;
        total.error += est.error;
        left = right;
        width *= 2.0;
        panels += 1;
        if left < b && negligible(left) {
            break;
        }
        if panels > 2000 {
            return Err(Error::Quadrature {
                a,
                b,
                estimate: total.value,
                error: total.error,
            });
        }
    }
    Ok(total)
}

/// `∫_a^∞ f` for an integrand with (at least) polynomial decay: panels of
/// doubling width are added until one contributes less than `tol.rel` of
/// the running total.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, first_width: f64, tol: Tolerance) -> Result<Estimate> {
    let mut total = Estimate {
        value: 0.0,
        error: 0.0,
    };
    let mut left = a;
    let mut width = first_width;
    for panel in 0..200 {
        let right = left + width;
        let panel_tol = Tolerance::new(tol.abs.max(tol.rel * total.value.abs()), tol.rel);
        let est = integrate(&f, left, right, panel_tol)?;
        total.value += est.value;
        total.error += est.error;
        if panel >= 3 && est.value.abs() <= tol.rel * total.value.abs().max(tol.abs) {
            return Ok(total);
        }
        left = right;
        width *= 2.0;
    }
    Err(Error::Quadrature {
        a,
        b: f64::INFINITY,
        estimate: total.value,
        error: total.error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((est.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let fwd = integrate(f64::sin, 0.0, PI, Tolerance::default()).unwrap();
        let rev = integrate(f64::sin, PI, 0.0, Tolerance::default()).unwrap();
        assert!((fwd.value - 2.0).abs() < 1e-12);
        assert!((rev.value + 2.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_singularity_converges() {
        let est = integrate(f64::sqrt, 0.0, 1.0, Tolerance::relative(1e-10)).unwrap();
        assert!((est.value - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_spike_at_right_end() {
        // exp(-k (b - s)) on [0, b]: the whole mass sits within 1/k of b.
        let k = 4.0e4;
        let b = 1000.0;
        let est = integrate_decaying_left(
            |s| (-k * (b - s)).exp(),
            0.0,
            b,
            1.0 / k,
            |s| k * (b - s) > 60.0,
            Tolerance::relative(1e-11),
        )
        .unwrap();
        // b - s loses ~1e-13 absolute near b, so k(b - s) is good to ~5e-9.
        assert!((est.value * k - 1.0).abs() < 2e-8, "{}", est.value * k);
    }

    #[test]
    fn decaying_tail_to_infinity() {
        let est = integrate_decaying_right(
            |s| (-s).exp() / (1.0 + s),
            0.0,
            f64::INFINITY,
            0.5,
            |s| s > 60.0,
            Tolerance::relative(1e-12),
        )
        .unwrap();
        // e * E1(1)
        assert!((est.value - 0.596_347_362_323_194_1).abs() < 1e-12);
    }

    #[test]
    fn polynomial_tail_to_infinity() {
        let est = integrate_to_infinity(|s| 1.0 / ((1.0 + s) * (1.0 + s)), 0.0, 1.0, Tolerance::relative(1e-12)).unwrap();
        assert!((est.value - 1.0).abs() < 1e-11, "{}", est.value);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate(|x| 1.0 / x, 0.0, 1.0, Tolerance::default()).is_err());
    }
}
