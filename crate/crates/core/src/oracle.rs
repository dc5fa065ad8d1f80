//! Exact Gaussian laws for the quadratic potential `V(x) = c x^2 / 2`.
//!
//! With `f(s) = (r + s) e^{cG(s)}` the centred process satisfies
//! `d(f Y) = f dB`, so over any interval `[t0, t1]` the pair
//! `(Y_{t1}, μ̄_{t1} - μ̄_{t0})` is an affine function of `Y_{t0}` plus a
//! centred Gaussian vector. [`QuadraticLaw::transition`] computes that
//! map; the marginal laws are the transition from time zero. All weights
//! are evaluated as `exp(-c (G(b) - G(a)))` with `a <= b`, never as a
//! ratio of two exponentials, so nothing overflows for fast-growing gains.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gain::{GainLimit, GainSchedule, Regime};
use crate::quadrature::{self, Estimate, Tolerance};

/// Required relative accuracy of every oracle quadrature.
pub const ORACLE_REL_TOL: f64 = 1e-9;
/// Exponent beyond which `exp(-x)` tails are dropped.
const TAIL_EXPONENT: f64 = 45.0;

/// Affine-Gaussian transition of `(Y, μ̄)` over `[t0, t1]`.
///
/// `Y_{t1} = decay · Y_{t0} + ξ`, `μ̄_{t1} = μ̄_{t0} + mean_gain · Y_{t0} + η`
/// with `(ξ, η)` centred Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub decay: f64,
    pub mean_gain: f64,
    pub var_y: f64,
    pub var_mubar: f64,
    pub cov: f64,
}

/// Gaussian limit `N(center, variance)` of the empirical measure, with the
/// law of the random center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLimit {
    pub variance: f64,
    pub center_mean: f64,
    pub center_variance: f64,
}

/// One row of an oracle table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub t: f64,
    pub mean_y: f64,
    pub var_y: f64,
    pub mean_mubar: f64,
    pub var_mubar: f64,
}

/// Closed-form law of the 1-D quadratic system.
#[derive(Debug, Clone)]
pub struct QuadraticLaw {
    c: f64,
    gain: GainSchedule,
    r: f64,
    x0: f64,
    mu_bar0: f64,
}

fn check(est: Result<Estimate>) -> Result<f64> {
    let est = est?;
    if est.error > ORACLE_REL_TOL * est.value.abs() && est.error > 1e-300 {
        return Err(Error::Quadrature {
            a: f64::NAN,
            b: f64::NAN,
            estimate: est.value,
            error: est.error,
        });
    }
    Ok(est.value)
}

impl QuadraticLaw {
    pub fn new(c: f64, gain: GainSchedule, r: f64, x0: f64, mu_bar0: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid("quadratic stiffness c must be positive"));
        }
        if !(r > 0.0) {
            return Err(Error::invalid("initial weight r must be positive"));
        }
        if !x0.is_finite() || !mu_bar0.is_finite() {
            return Err(Error::invalid("initial state must be finite"));
        }
        Ok(QuadraticLaw {
            c,
            gain,
            r,
            x0,
            mu_bar0,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn gain(&self) -> &GainSchedule {
        &self.gain
    }

    fn y0(&self) -> f64 {
        self.x0 - self.mu_bar0
    }

    /// Natural width of the exponential weight near `s`.
    fn scale(&self, s: f64) -> f64 {
        1.0 / (1.0 + self.c * self.gain.g(s) + 1.0 / (self.r + s))
    }

    fn tol(&self) -> Tolerance {
        Tolerance::new(1e-300, 0.1 * ORACLE_REL_TOL)
    }

    /// `J(s, t) = ∫_s^t e^{-c(G(u) - G(s))} / (r + u)^2 du`, so that
    /// `H(t) - H(s) = e^{-cG(s)} J(s, t)`. `t` may be infinite.
    pub fn j_integral(&self, s: f64, t: f64) -> Result<f64> {
        if t <= s {
            return Ok(0.0);
        }
        self.j_offset(s, t - s)
    }

    /// `J(s, s + len)` integrated in the offset `v = u - s`.
    fn j_offset(&self, s: f64, len: f64) -> Result<f64> {
        let r = self.r;
        let f = |v: f64| (-self.c * self.gain.increment_forward(s, v)).exp() / ((r + s + v) * (r + s + v));
        let tol = Tolerance::new(1e-300, 1e-12);
        let first = self.scale(s).min(len);
        if self.gain.g(s) * self.c * (r + s) < 1.0 {
            // Weak confinement near s: the 1/u^2 factor sets the tail.
            if len.is_infinite() {
                return quadrature::integrate_to_infinity(f, 0.0, first, tol).map(|e| e.value);
            }
            return quadrature::integrate_decaying_right(f, 0.0, len, first, |_| false, tol).map(|e| e.value);
        }
        quadrature::integrate_decaying_right(
            f,
            0.0,
            len,
            first,
            |v| self.c * self.gain.increment_forward(s, v) > TAIL_EXPONENT,
            tol,
        )
        .map(|e| e.value)
    }

    /// `F(t) = ∫_0^t e^{-cG(s)} g(s) / (r + s) ds`.
    pub fn f_integral(&self, t: f64) -> Result<f64> {
        let r = self.r;
        check(quadrature::integrate_decaying_right(
            |s| (-self.c * self.gain.primitive(s)).exp() * self.gain.g(s) / (r + s),
            0.0,
            t,
            self.scale(0.0),
            // ∫_s^∞ e^{-cG} g/(r+u) du <= e^{-cG(s)} / (c (r + s))
            |s| (-self.c * self.gain.primitive(s)).exp() / (self.c * (r + s)) < 1e-18,
            self.tol(),
        ))
    }

    /// `H(t) = ∫_0^t e^{-cG(u)} / (r + u)^2 du`.
    pub fn h_integral(&self, t: f64) -> Result<f64> {
        let r = self.r;
        check(quadrature::integrate_decaying_right(
            |u| (-self.c * self.gain.primitive(u)).exp() / ((r + u) * (r + u)),
            0.0,
            t,
            self.scale(0.0),
            // ∫_s^∞ e^{-cG(u)}/(r+u)^2 du <= e^{-cG(s)} / (r + s)
            |s| (-self.c * self.gain.primitive(s)).exp() / (r + s) < 1e-18,
            self.tol(),
        ))
    }

    /// `F(∞)`; requires `G → ∞`.
    pub fn f_infinity(&self) -> Result<f64> {
        self.f_integral(f64::INFINITY)
    }

    /// `H(∞) = 1/r - c F(∞)`, integrated directly.
    pub fn h_infinity(&self) -> Result<f64> {
        self.h_integral(f64::INFINITY)
    }

    /// Affine-Gaussian transition over `[t0, t1]`.
    pub fn transition(&self, t0: f64, t1: f64) -> Result<Transition> {
        if !(t0 >= 0.0) || t1 < t0 {
            return Err(Error::invalid(format!("bad transition interval [{t0}, {t1}]")));
        }
        if t1 == t0 {
            return Ok(Transition {
                decay: 1.0,
                mean_gain: 0.0,
                var_y: 0.0,
                var_mubar: 0.0,
                cov: 0.0,
            });
        }
        let r = self.r;
        let len = t1 - t0;
        let decay = (r + t0) / (r + t1) * (-self.c * self.gain.increment_backward(t1, len)).exp();
        let mean_gain = (r + t0) * self.j_offset(t0, len)?;

        // Everything below is written in the backward offset w = t1 - s.
        // Weight of dB_s in Y_{t1}.
        let wy = |w: f64| (r + t1 - w) / (r + t1) * (-self.c * self.gain.increment_backward(t1, w)).exp();
        // Weight of dB_s in μ̄_{t1} - μ̄_{t0}.
        let wm = |w: f64| (r + t1 - w) * self.j_offset(t1 - w, w).unwrap_or(f64::NAN);
        let faded = |w: f64| self.c * self.gain.increment_backward(t1, w) > TAIL_EXPONENT;
        let first = self.scale(t1).min(len);

        let var_y = check(quadrature::integrate_decaying_right(
            |w| wy(w).powi(2),
            0.0,
            len,
            first,
            |w| faded(0.5 * w) && faded(w),
            self.tol(),
        ))?;
        let cov = check(quadrature::integrate_decaying_right(
            |w| wy(w) * wm(w),
            0.0,
            len,
            first,
            faded,
            self.tol(),
        ))?;
        // wm does not decay away from t1; cover the whole interval, with
        // geometric panels so the region near t1 is resolved.
        let var_mubar = check(quadrature::integrate_decaying_right(
            |w| wm(w).powi(2),
            0.0,
            len,
            first,
            |_| false,
            self.tol(),
        ))?;
        Ok(Transition {
            decay,
            mean_gain,
            var_y,
            var_mubar,
            cov,
        })
    }

    /// `(mean, variance)` of `Y_t`.
    pub fn law_of_y(&self, t: f64) -> Result<(f64, f64)> {
        let tr = self.transition(0.0, t)?;
        Ok((tr.decay * self.y0(), tr.var_y))
    }

    /// `(mean, variance)` of `μ̄_t`.
    pub fn law_of_mubar(&self, t: f64) -> Result<(f64, f64)> {
        let tr = self.transition(0.0, t)?;
        Ok((self.mu_bar0 + tr.mean_gain * self.y0(), tr.var_mubar))
    }

    /// `(mean, variance)` of `X_t = Y_t + μ̄_t`.
    pub fn law_of_x(&self, t: f64) -> Result<(f64, f64)> {
        let tr = self.transition(0.0, t)?;
        let mean = tr.decay * self.y0() + self.mu_bar0 + tr.mean_gain * self.y0();
        Ok((mean, tr.var_y + tr.var_mubar + 2.0 * tr.cov))
    }

    /// Mean of `X_t` written through `F`: `x + r c (μ̄ - x) F(t)`.
    pub fn mean_x_via_f(&self, t: f64) -> Result<f64> {
        Ok(self.x0 + self.r * self.c * (self.mu_bar0 - self.x0) * self.f_integral(t)?)
    }

    /// Limit of the empirical measure for a finite limiting gain: the
    /// Gaussian `N(μ̄_∞, 1 / (2 g(∞) c))` with the law of the random
    /// center `μ̄_∞`.
    pub fn limit_measure(&self) -> Result<GaussianLimit> {
        let report = self.gain.classify_regime(1e6);
        let g_inf = match (report.classification, report.lim_g) {
            (Regime::Diffusive, GainLimit::FiniteLimit(v)) if v > 0.0 => v,
            (other, _) => {
                return Err(Error::UnsupportedRegime(format!(
                    "limit measure is Gaussian only for a finite positive g(∞); regime is {}",
                    other.label()
                )))
            }
        };
        let h_inf = self.h_infinity()?;
        let r = self.r;
        // The integrand decays like s^{-2}; the doubling-panel stop rule
        // leaves a remainder comparable to the last panel.
        let center_variance = quadrature::integrate_to_infinity(
            |s| ((r + s) * self.j_offset(s, f64::INFINITY).unwrap_or(f64::NAN)).powi(2),
            0.0,
            1.0,
            Tolerance::new(1e-300, 1e-8),
        )?
        .value;
        Ok(GaussianLimit {
            variance: 1.0 / (2.0 * g_inf * self.c),
            center_mean: self.mu_bar0 + r * self.y0() * h_inf,
            center_variance,
        })
    }

    /// Oracle rows at the given times.
    pub fn table(&self, times: &[f64]) -> Result<Vec<OracleRow>> {
        times
            .iter()
            .map(|&t| {
                let tr = self.transition(0.0, t)?;
                Ok(OracleRow {
                    t,
                    mean_y: tr.decay * self.y0(),
                    var_y: tr.var_y,
                    mean_mubar: self.mu_bar0 + tr.mean_gain * self.y0(),
                    var_mubar: tr.var_mubar,
                })
            })
            .collect()
    }
}

/// Write oracle rows as CSV (`t,mean_Y,var_Y,mean_mubar,var_mubar`).
pub fn write_oracle_csv<W: Write>(rows: &[OracleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mean_Y", "var_Y", "mean_mubar", "var_mubar"])?;
    for row in rows {
        w.write_record(&[
            row.t.to_string(),
            row.mean_y.to_string(),
            row.var_y.to_string(),
            row.mean_mubar.to_string(),
            row.var_mubar.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<oracle csv>", e))?;
    Ok(())
}

pub fn write_oracle_csv_file(rows: &[OracleRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_oracle_csv(rows, file)
}

/// Limit variance `V(∞)` of `dZ = -a(t) Z dt + dB`, where
/// `V(t) = ∫_0^t exp(-2 (A(t) - A(s))) ds`.
///
/// `V` is evaluated at `horizon / 4`, `horizon / 2` and `horizon` and
/// extrapolated with Aitken's Δ² when the differences shrink
/// geometrically. A zero limit (for `a → ∞`) is the degenerate
/// `N(0, 0) = δ_0`. Sustained growth is reported as divergence.
pub fn ou_ergodic_variance<A: Fn(f64) -> f64>(a_fn: A, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    // Cumulative A on a fine geometric grid, linear in between.
    let mut knots = vec![0.0];
    let mut t = 1e-3_f64.min(horizon / 1e4);
    while t < horizon {
        knots.push(t);
        t = (t * 1.01).max(t + 1e-3);
    }
    knots.push(horizon);
    let mut cumulative = vec![0.0; knots.len()];
    for k in 1..knots.len() {
        let seg = quadrature::integrate(&a_fn, knots[k - 1], knots[k], Tolerance::new(1e-300, 1e-12))?;
        cumulative[k] = cumulative[k - 1] + seg.value;
    }
    let big_a = |s: f64| -> f64 {
        let idx = knots.partition_point(|&k| k <= s).clamp(1, knots.len() - 1);
        let (k0, k1) = (knots[idx - 1], knots[idx]);
        let w = if k1 > k0 { (s - k0) / (k1 - k0) } else { 0.0 };
        cumulative[idx - 1] + w * (cumulative[idx] - cumulative[idx - 1])
    };
    let variance_at = |t: f64| -> Result<f64> {
        let at = big_a(t);
        let rate = a_fn(t).max(1e-12);
        quadrature::integrate_decaying_left(
            |s| (-2.0 * (at - big_a(s))).exp(),
            0.0,
            t,
            (0.5 / rate).min(t),
            |s| 2.0 * (at - big_a(s)) > TAIL_EXPONENT,
            Tolerance::new(1e-300, 1e-10),
        )
        .map(|e| e.value)
    };
    let v1 = variance_at(horizon / 4.0)?;
    let v2 = variance_at(horizon / 2.0)?;
    let v3 = variance_at(horizon)?;
    let d1 = v2 - v1;
    let d2 = v3 - v2;
    let scale = v3.abs().max(1e-300);
    if d2.abs() <= 1e-10 * scale {
        return Ok(v3.max(0.0));
    }
    if d2 > 0.0 && d2 >= 0.5 * d1 {
        return Err(Error::DivergentVariance { horizon });
    }
    let ratio = d2 / d1;
    if d1 != 0.0 && ratio > 0.0 && ratio < 1.0 {
        let limit = v3 - d2 * d2 / (d2 - d1);
        // Degenerate limit δ_0 when the extrapolation lands at (or below) zero.
        if limit <= 1e-3 * v3 {
            return Ok(0.0);
        }
        return Ok(limit);
    }
    Ok(v3.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(c: f64, gain: GainSchedule, x0: f64) -> QuadraticLaw {
        QuadraticLaw::new(c, gain, 1.0, x0, 0.0).unwrap()
    }

    #[test]
    fn initial_condition() {
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 0.7);
        assert_eq!(q.law_of_y(0.0).unwrap(), (0.7, 0.0));
        assert_eq!(q.law_of_mubar(0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn mean_of_y_at_one() {
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 1.0);
        let (m, _) = q.law_of_y(1.0).unwrap();
        assert!((m - (-1.0f64).exp() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn variance_closed_form_constant_gain() {
        // e^{-2t}/(1+t)^2 ∫_0^t (1+s)^2 e^{2s} ds with the antiderivative
        // e^{2s}((1+s)^2/2 - (1+s)/2 + 1/4).
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 0.0);
        for &t in &[0.3, 1.0, 5.0, 40.0] {
            let anti = |s: f64| (2.0 * (s - t)).exp() * ((1.0 + s).powi(2) / 2.0 - (1.0 + s) / 2.0 + 0.25);
            let exact = (anti(t) - anti(0.0)) / (1.0 + t).powi(2);
            let (_, v) = q.law_of_y(t).unwrap();
            assert!((v - exact).abs() < 1e-10 * exact, "t={t}: {v} vs {exact}");
        }
        let (_, v) = q.law_of_y(400.0).unwrap();
        assert!((v - 0.5).abs() < 2e-3);
    }

    #[test]
    fn f_infinity_is_e_times_e1() {
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 1.0);
        assert!((q.f_infinity().unwrap() - 0.596_347_362_323_194_1).abs() < 1e-10);
        let h_inf = q.h_infinity().unwrap();
        assert!((h_inf - (1.0 - 0.596_347_362_323_194_1)).abs() < 1e-10);
    }

    #[test]
    fn h_f_identity_on_log_grid() {
        for gain in [
            GainSchedule::constant(1.0).unwrap(),
            GainSchedule::power(1.0, 1.0).unwrap(),
            GainSchedule::log_growth(2.0).unwrap(),
        ] {
            let q = QuadraticLaw::new(1.5, gain, 2.0, 1.0, 0.0).unwrap();
            let mut t = 1e-2;
            while t <= 1e3 {
                let lhs = q.h_integral(t).unwrap();
                let rhs = 1.0 / q.r() - q.c() * q.f_integral(t).unwrap()
                    - (-q.c() * q.gain().primitive(t)).exp() / (q.r() + t);
                assert!((lhs - rhs).abs() < 1e-8, "t={t}: {lhs} vs {rhs}");
                t *= 3.0;
            }
        }
    }

    #[test]
    fn mean_mubar_limit() {
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 1.0);
        let (m, _) = q.law_of_mubar(60.0).unwrap();
        assert!((m - 0.403_652_637_676_805_9).abs() < 1e-8, "{m}");
    }

    #[test]
    fn mubar_variance_nondecreasing() {
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 1.0);
        let vs: Vec<f64> = [0.5, 1.0, 2.0, 5.0, 10.0, 50.0].iter().map(|&t| q.law_of_mubar(t).unwrap().1).collect();
        assert!(vs.windows(2).all(|w| w[1] >= w[0]), "{vs:?}");
    }

    #[test]
    fn mean_x_two_routes_agree() {
        for gain in [GainSchedule::constant(1.0).unwrap(), GainSchedule::power(1.0, 1.0).unwrap()] {
            let q = QuadraticLaw::new(2.0, gain, 1.5, 0.8, -0.3).unwrap();
            for &t in &[0.1, 1.0, 7.0, 100.0] {
                let (m, _) = q.law_of_x(t).unwrap();
                let via_f = q.mean_x_via_f(t).unwrap();
                assert!((m - via_f).abs() < 1e-9, "t={t}: {m} vs {via_f}");
            }
        }
    }

    #[test]
    fn transitions_compose() {
        let q = QuadraticLaw::new(1.0, GainSchedule::power(1.0, 1.0).unwrap(), 1.0, 1.0, 0.0).unwrap();
        let grid = [0.0, 0.5, 1.3, 2.0, 4.0];
        // Propagate mean and covariance of (Y, μ̄) through the grid.
        let (mut my, mut mm) = (1.0, 0.0);
        let (mut vy, mut vm, mut cv) = (0.0, 0.0, 0.0);
        for w in grid.windows(2) {
            let tr = q.transition(w[0], w[1]).unwrap();
            let (a, b) = (tr.decay, tr.mean_gain);
            let nvy = a * a * vy + tr.var_y;
            let nvm = vm + 2.0 * b * cv + b * b * vy + tr.var_mubar;
            let ncv = a * cv + a * b * vy + tr.cov;
            mm += b * my;
            my *= a;
            vy = nvy;
            vm = nvm;
            cv = ncv;
        }
        let (ey, evy) = q.law_of_y(4.0).unwrap();
        let (em, evm) = q.law_of_mubar(4.0).unwrap();
        assert!((my - ey).abs() < 1e-12);
        assert!((mm - em).abs() < 1e-10);
        assert!((vy - evy).abs() < 1e-10 * evy);
        assert!((vm - evm).abs() < 1e-9 * evm, "{vm} vs {evm}");
    }

    #[test]
    fn limit_measure_variances() {
        let q = law(1.0, GainSchedule::constant(1.0).unwrap(), 1.0);
        let lim = q.limit_measure().unwrap();
        assert_eq!(lim.variance, 0.5);
        assert!((lim.center_mean - 0.403_652_637_676_805_9).abs() < 1e-9);
        let (_, v_late) = q.law_of_mubar(200.0).unwrap();
        assert!((lim.center_variance - v_late).abs() < 0.02 * v_late, "{} vs {v_late}", lim.center_variance);

        let q2 = law(2.0, GainSchedule::constant(1.0).unwrap(), 1.0);
        assert_eq!(q2.limit_measure().unwrap().variance, 0.25);

        let q3 = law(1.0, GainSchedule::power(1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(q3.limit_measure(), Err(Error::UnsupportedRegime(_))));
    }

    #[test]
    fn fast_gain_does_not_overflow() {
        let q = law(1.0, GainSchedule::power(1.0, 1.0).unwrap(), 1.0);
        let (m, v) = q.law_of_y(1000.0).unwrap();
        assert!(m.is_finite() && v.is_finite());
        // Variance ≈ 1/(2 c g(t)) once the relaxation is fast.
        assert!((v * 2.0 * 1001.0 - 1.0).abs() < 2e-3, "{v}");
    }

    #[test]
    fn ou_variance_constant_rates() {
        let v = ou_ergodic_variance(|_| 1.0, 50.0).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
        let v = ou_ergodic_variance(|_| 3.0, 50.0).unwrap();
        assert!((v - 1.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn ou_variance_growing_rate_is_degenerate() {
        let v = ou_ergodic_variance(|t| 1.0 + t, 1e3).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ou_variance_divergence_flagged() {
        let err = ou_ergodic_variance(|t| 1.0 / (1.0 + t), 1e3).unwrap_err();
        assert!(matches!(err, Error::DivergentVariance { .. }));
    }
}
