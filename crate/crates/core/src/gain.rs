//! Gain schedules `g(t)`, their primitive `G`, the generalized inverse
//! `G⁻¹` and the time-change rate `κ`, plus a heuristic classifier of the
//! asymptotic regime.

use std::fmt;
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// Ratio of the geometric checkpoint grid for `G`.
const CHECKPOINT_RATIO: f64 = 1.05;
/// First positive checkpoint.
const CHECKPOINT_START: f64 = 1e-3;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Parametric family of a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainFamily {
    /// `g ≡ g0`.
    Constant,
    /// `g0 + a log(1 + t)`.
    LogGrowth,
    /// `g0 + a t^alpha (log(1 + t))^beta`.
    PowerLog { alpha: f64, beta: f64 },
    /// User-supplied `g` and `g'`.
    Custom,
}

/// Parameters common to the built-in families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainParams {
    pub g0: f64,
    pub a: f64,
}

impl GainFamily {
    /// Default `(g0, a)` for the family: the log family starts at zero so
    /// that `g = a log(1 + t)` exactly, the others are shifted to `g(0) = 1`.
    pub fn default_params(&self) -> GainParams {
        match self {
            GainFamily::Constant => GainParams { g0: 1.0, a: 0.0 },
            GainFamily::LogGrowth => GainParams { g0: 0.0, a: 1.0 },
            GainFamily::PowerLog { .. } => GainParams { g0: 1.0, a: 1.0 },
            GainFamily::Custom => GainParams { g0: 0.0, a: 0.0 },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            GainFamily::Constant => "constant",
            GainFamily::LogGrowth => "log_growth",
            GainFamily::PowerLog { .. } => "power_log",
            GainFamily::Custom => "custom",
        }
    }
}

/// Monotone checkpoint table `(t_k, G(t_k))` on a geometric grid.
///
/// Reads take a shared lock; extending the table takes the write lock, so
/// lookups observe a consistent prefix from any thread.
#[derive(Debug, Default)]
struct Checkpoints {
    table: RwLock<Vec<(f64, f64)>>,
}

/// A nondecreasing, positive gain `g` with its primitive and inverse.
#[derive(Clone)]
pub struct GainSchedule {
    family: GainFamily,
    params: GainParams,
    custom: Option<(ScalarFn, ScalarFn)>,
    checkpoints: Arc<Checkpoints>,
}

impl fmt::Debug for GainSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GainSchedule")
            .field("family", &self.family)
            .field("params", &self.params)
            .finish()
    }
}

impl PartialEq for GainSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.custom.is_none()
            && other.custom.is_none()
            && self.family == other.family
            && self.params == other.params
    }
}

/// Build a schedule from a built-in family.
pub fn make_schedule(family: GainFamily, params: GainParams) -> Result<GainSchedule> {
    let GainParams { g0, a } = params;
    if !g0.is_finite() || !a.is_finite() {
        return Err(Error::invalid("gain parameters must be finite"));
    }
    if g0 < 0.0 || a < 0.0 {
        return Err(Error::invalid(format!(
            "gain must be nonnegative and nondecreasing (g0 = {g0}, a = {a})"
        )));
    }
    match family {
        GainFamily::Constant => {
            if g0 <= 0.0 {
                return Err(Error::invalid("constant gain must be positive"));
            }
        }
        GainFamily::LogGrowth => {
            if a <= 0.0 {
                return Err(Error::invalid("log-growth gain needs a > 0"));
            }
        }
        GainFamily::PowerLog { alpha, beta } => {
            if !(alpha >= 0.0) || !(beta >= 0.0) || (alpha == 0.0 && beta == 0.0) {
                return Err(Error::invalid(format!(
                    "power-log gain needs alpha >= 0, beta >= 0, not both zero (alpha = {alpha}, beta = {beta})"
                )));
            }
            if a <= 0.0 {
                return Err(Error::invalid("power-log gain needs a > 0"));
            }
        }
        GainFamily::Custom => {
            return Err(Error::invalid("use GainSchedule::custom for user-defined gains"));
        }
    }
    let schedule = GainSchedule {
        family,
        params,
        custom: None,
        checkpoints: Arc::new(Checkpoints::default()),
    };
    if schedule.g(1.0) <= 0.0 {
        return Err(Error::invalid("gain must be positive for t > 0"));
    }
    Ok(schedule)
}

impl GainSchedule {
    /// `g ≡ level`.
    pub fn constant(level: f64) -> Result<Self> {
        make_schedule(GainFamily::Constant, GainParams { g0: level, a: 0.0 })
    }

    /// `g0 + t^alpha`.
    pub fn power(alpha: f64, g0: f64) -> Result<Self> {
        make_schedule(GainFamily::PowerLog { alpha, beta: 0.0 }, GainParams { g0, a: 1.0 })
    }

    /// `a log(1 + t)`.
    pub fn log_growth(a: f64) -> Result<Self> {
        make_schedule(GainFamily::LogGrowth, GainParams { g0: 0.0, a })
    }

    /// User-defined schedule; `G` is always obtained by quadrature.
    /// Monotonicity and positivity are checked on a geometric grid.
    pub fn custom<G, D>(g: G, g_prime: D) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut prev = g(0.0);
        if !(prev >= 0.0) {
            return Err(Error::invalid("custom gain must be nonnegative"));
        }
        let mut t = CHECKPOINT_START;
        while t < 1e8 {
            let v = g(t);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("custom gain not positive at t = {t}")));
            }
            if v < prev * (1.0 - 1e-12) {
                return Err(Error::invalid(format!("custom gain decreases near t = {t}")));
            }
            prev = v;
            t *= 1.5;
        }
        Ok(GainSchedule {
            family: GainFamily::Custom,
            params: GainFamily::Custom.default_params(),
            custom: Some((Arc::new(g), Arc::new(g_prime))),
            checkpoints: Arc::new(Checkpoints::default()),
        })
    }

    pub fn family(&self) -> GainFamily {
        self.family
    }

    pub fn params(&self) -> GainParams {
        self.params
    }

    /// `g(t)`.
    #[inline]
    pub fn g(&self, t: f64) -> f64 {
        let GainParams { g0, a } = self.params;
        match self.family {
            GainFamily::Constant => g0,
            GainFamily::LogGrowth => g0 + a * t.ln_1p(),
            GainFamily::PowerLog { alpha, beta } => {
                let pow = if alpha == 0.0 { 1.0 } else if alpha == 1.0 { t } else { t.powf(alpha) };
                let log = if beta == 0.0 { 1.0 } else { t.ln_1p().powf(beta) };
                g0 + a * pow * log
            }
            GainFamily::Custom => (self.custom.as_ref().unwrap().0)(t),
        }
    }

    /// `g'(t)`.
    pub fn g_prime(&self, t: f64) -> f64 {
        let GainParams { a, .. } = self.params;
        match self.family {
            GainFamily::Constant => 0.0,
            GainFamily::LogGrowth => a / (1.0 + t),
            GainFamily::PowerLog { alpha, beta } => {
                let l = t.ln_1p();
                let first = if alpha == 0.0 {
                    0.0
                } else {
                    alpha * t.powf(alpha - 1.0) * l.powf(beta)
                };
                let second = if beta == 0.0 {
                    0.0
                } else {
                    beta * t.powf(alpha) * l.powf(beta - 1.0) / (1.0 + t)
                };
                a * (first + second)
            }
            GainFamily::Custom => (self.custom.as_ref().unwrap().1)(t),
        }
    }

    /// Closed-form primitive when one is used.
    fn analytic_primitive(&self, t: f64) -> Option<f64> {
        let GainParams { g0, a } = self.params;
        match self.family {
            GainFamily::Constant => Some(g0 * t),
            GainFamily::PowerLog { alpha, beta } if beta == 0.0 => {
                Some(g0 * t + a * t.powf(alpha + 1.0) / (alpha + 1.0))
            }
            _ => None,
        }
    }

    fn segment_integral(&self, lo: f64, hi: f64) -> f64 {
        quadrature::integrate(|s| self.g(s), lo, hi, Tolerance::new(1e-300, 1e-14))
            .or_else(|_| quadrature::integrate(|s| self.g(s), lo, hi, Tolerance::new(1e-300, 1e-11)))
            .map(|e| e.value)
            .expect("gain is smooth on bounded segments")
    }

    /// Ensure the checkpoint table covers time `t` (if `by_time`) or the
    /// primitive value `t` (otherwise). Returns the table length.
    fn extend_checkpoints(&self, target: f64, by_time: bool) {
        {
            let table = self.checkpoints.table.read().unwrap();
            if let Some(&(t_last, g_last)) = table.last() {
                let covered = if by_time { t_last } else { g_last };
                if covered >= target {
                    return;
                }
            }
        }
        let mut table = self.checkpoints.table.write().unwrap();
        if table.is_empty() {
            table.push((0.0, 0.0));
        }
        loop {
            let &(t_last, g_last) = table.last().unwrap();
            let covered = if by_time { t_last } else { g_last };
            if covered >= target && table.len() > 1 {
                break;
            }
            let t_next = if t_last == 0.0 { CHECKPOINT_START } else { t_last * CHECKPOINT_RATIO };
            let g_next = match self.analytic_primitive(t_next) {
                Some(v) => v,
                None => g_last + self.segment_integral(t_last, t_next),
            };
            table.push((t_next, g_next));
        }
    }

    /// Primitive `G(t) = ∫_0^t g`.
    pub fn primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if let Some(v) = self.analytic_primitive(t) {
            return v;
        }
        self.extend_checkpoints(t, true);
        let table = self.checkpoints.table.read().unwrap();
        let idx = table.partition_point(|&(tk, _)| tk <= t) - 1;
        let (tk, gk) = table[idx];
        if tk == t {
            return gk;
        }
        drop(table);
        gk + self.segment_integral(tk, t)
    }

    /// `G(t) - G(s)` for `s <= t`, without the cancellation of subtracting
    /// two large primitives when the interval is short.
    pub fn primitive_increment(&self, s: f64, t: f64) -> f64 {
        if t <= s {
            return 0.0;
        }
        if t - s < 0.05 * t.max(1.0) {
            return self.segment_integral(s, t);
        }
        self.primitive(t) - self.primitive(s)
    }

    /// `∫_s^{s+v} g` parametrised by the offset `v`, so the result stays a
    /// smooth function of `v` even when `s + v` rounds (large `s`).
    pub fn increment_forward(&self, s: f64, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if self.family == GainFamily::Constant {
            return self.params.g0 * v;
        }
        if v < 0.05 * (s + v).max(1.0) {
            return self.offset_integral(|z| self.g(s + z), v);
        }
        self.primitive(s + v) - self.primitive(s)
    }

    /// `∫_{t-w}^t g`, the backward counterpart of [`Self::increment_forward`].
    pub fn increment_backward(&self, t: f64, w: f64) -> f64 {
        let w = w.min(t);
        if w <= 0.0 {
            return 0.0;
        }
        if self.family == GainFamily::Constant {
            return self.params.g0 * w;
        }
        if w < 0.05 * t.max(1.0) {
            return self.offset_integral(|z| self.g(t - z), w);
        }
        self.primitive(t) - self.primitive(t - w)
    }

    fn offset_integral<F: Fn(f64) -> f64>(&self, f: F, v: f64) -> f64 {
        quadrature::integrate(&f, 0.0, v, Tolerance::new(1e-300, 1e-14))
            .or_else(|_| quadrature::integrate(&f, 0.0, v, Tolerance::new(1e-300, 1e-11)))
            .map(|e| e.value)
            .expect("gain is smooth on bounded segments")
    }

    /// Generalized inverse `G⁻¹(u) = inf{t >= 0 : G(t) >= u}`.
    pub fn inverse_primitive(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) || !u.is_finite() {
            return Err(Error::invalid(format!("G⁻¹ needs u >= 0, got {u}")));
        }
        if u == 0.0 {
            return Ok(0.0);
        }
        self.extend_checkpoints(u, false);
        let (mut lo, mut hi) = {
            let table = self.checkpoints.table.read().unwrap();
            let idx = table.partition_point(|&(_, gk)| gk < u);
            (table[idx - 1].0, table[idx].0)
        };
        let tol = 1e-10 * (1.0 + u);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let residual = self.primitive(t) - u;
            if residual.abs() <= tol {
                return Ok(t);
            }
            if residual > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.g(t);
            let newton = t - residual / slope;
            t = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                return Ok(t);
            }
        }
        Ok(t)
    }

    /// Time-change rate `κ(t) = (r + G⁻¹(t)) g(G⁻¹(t))`.
    pub fn kappa(&self, r: f64, t: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::invalid("initial weight r must be positive"));
        }
        let s = self.inverse_primitive(t)?;
        Ok((r + s) * self.g(s))
    }

    /// Classify the asymptotic regime from samples up to `horizon`.
    pub fn classify_regime(&self, horizon: f64) -> RegimeReport {
        classify_regime(self, horizon)
    }
}

/// Free-function form of [`GainSchedule::inverse_primitive`].
pub fn g_inverse(s: &GainSchedule, u: f64) -> Result<f64> {
    s.inverse_primitive(u)
}

/// Free-function form of [`GainSchedule::kappa`].
pub fn kappa(s: &GainSchedule, r: f64, t: f64) -> Result<f64> {
    s.kappa(r, t)
}

/// Estimated limit of `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainLimit {
    FiniteLimit(f64),
    Infinite,
    Inconclusive,
}

/// Estimated limit of a ratio, with the value observed at the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioLimit {
    Zero { at_horizon: f64 },
    FinitePositive { estimate: f64, at_horizon: f64 },
    Unbounded { at_horizon: f64 },
    Inconclusive { at_horizon: f64 },
}

impl RatioLimit {
    pub fn is_zero(&self) -> bool {
        matches!(self, RatioLimit::Zero { .. })
    }
}

/// Asymptotic regime of the dynamics as decided by the gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `g → ∞`, `log G / g → 0`: `Y → 0` and `X` converges a.s.
    ASConvergent,
    /// `g → ∞`, `log G / g` bounded positive: `Y` stays bounded.
    BoundedOscillation,
    /// `g → ∞`, `log G / g` unbounded: convergence in probability only.
    ProbConvergent,
    /// Finite `g(∞)`: the limit measure is a nondegenerate Gaussian and
    /// `X` recurs to `±∞`.
    Diffusive,
    /// Trends inconclusive at this horizon.
    OpenRegime,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::ASConvergent => "as_convergent",
            Regime::BoundedOscillation => "bounded_oscillation",
            Regime::ProbConvergent => "prob_convergent",
            Regime::Diffusive => "diffusive",
            Regime::OpenRegime => "open_regime",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    pub lim_g: GainLimit,
    pub ratio_gprime_g2: RatioLimit,
    pub ratio_log_g_over_g: RatioLimit,
    pub classification: Regime,
    pub samples: usize,
}

fn least_squares(rows: &[[f64; 3]], ys: &[f64]) -> Option<[f64; 3]> {
    // Normal equations for three regressors.
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (row, &y) in rows.iter().zip(ys) {
        let v = nalgebra::Vector3::new(row[0], row[1], row[2]);
        ata += v * v.transpose();
        aty += v * y;
    }
    ata.lu().solve(&aty).map(|s| [s[0], s[1], s[2]])
}

/// Heuristic regime classification on a geometric grid (ratio 1.05) from
/// `t = 1` to `horizon`. Trends inside the 10% slack band are reported as
/// inconclusive rather than guessed.
pub fn classify_regime(s: &GainSchedule, horizon: f64) -> RegimeReport {
    let mut times = Vec::new();
    let mut t = 1.0;
    while t <= horizon {
        times.push(t);
        t *= CHECKPOINT_RATIO;
    }
    let samples = times.len();
    let open = RegimeReport {
        lim_g: GainLimit::Inconclusive,
        ratio_gprime_g2: RatioLimit::Inconclusive { at_horizon: f64::NAN },
        ratio_log_g_over_g: RatioLimit::Inconclusive { at_horizon: f64::NAN },
        classification: Regime::OpenRegime,
        samples,
    };
    if samples < 50 {
        return open;
    }
    let h = *times.last().unwrap();
    let h10 = h / 10.0;

    // lim g: relative increase over the last decade.
    let g_h = s.g(h);
    let decade_growth = (g_h - s.g(h10)) / g_h;
    let lim_g = if decade_growth <= 0.01 {
        GainLimit::FiniteLimit(g_h)
    } else if decade_growth >= 0.05 {
        GainLimit::Infinite
    } else {
        GainLimit::Inconclusive
    };

    // g'/g^2 → 0 ?
    let q1 = |t: f64| s.g_prime(t) / s.g(t).powi(2);
    let q1_h = q1(h);
    let ratio_gprime_g2 = if q1_h.abs() <= 1e-3 || q1_h.abs() <= 0.5 * q1(h10).abs() {
        RatioLimit::Zero { at_horizon: q1_h }
    } else if q1_h.abs() >= 1.1 * q1(h10).abs() {
        RatioLimit::Unbounded { at_horizon: q1_h }
    } else {
        RatioLimit::FinitePositive {
            estimate: q1_h,
            at_horizon: q1_h,
        }
    };

    // log G / g, only where log G is positive.
    let q2 = |t: f64| s.primitive(t).ln() / s.g(t);
    let pts: Vec<(f64, f64)> = times
        .iter()
        .filter(|&&t| s.primitive(t) > std::f64::consts::E)
        .map(|&t| (t, q2(t)))
        .collect();
    let ratio_log_g_over_g = if pts.len() < 20 {
        RatioLimit::Inconclusive { at_horizon: q2(h) }
    } else {
        let q_h = pts.last().unwrap().1;
        let q_mid = q2(h.sqrt().max(pts[0].0));
        let q_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if q_h <= 0.1 * q_max && q_h < q_mid {
            RatioLimit::Zero { at_horizon: q_h }
        } else if q_h > 1.1 * q_mid {
            RatioLimit::Unbounded { at_horizon: q_h }
        } else {
            // Extrapolate with q ≈ L + b / log t + c log log t / log t over
            // the upper half of the samples (log-growth corrections).
            let upper: Vec<&(f64, f64)> = pts.iter().skip(pts.len() / 2).collect();
            let rows: Vec<[f64; 3]> = upper
                .iter()
                .map(|(t, _)| {
                    let lt = t.ln();
                    [1.0, 1.0 / lt, lt.ln() / lt]
                })
                .collect();
            let ys: Vec<f64> = upper.iter().map(|p| p.1).collect();
            let estimate = least_squares(&rows, &ys).map(|c| c[0]).unwrap_or(q_h);
            if estimate > 0.0 {
                RatioLimit::FinitePositive {
                    estimate,
                    at_horizon: q_h,
                }
            } else {
                RatioLimit::Inconclusive { at_horizon: q_h }
            }
        }
    };

    let classification = match (lim_g, ratio_gprime_g2.is_zero(), ratio_log_g_over_g) {
        (GainLimit::FiniteLimit(v), true, _) if v > 0.0 => Regime::Diffusive,
        (GainLimit::Infinite, true, RatioLimit::Zero { .. }) => Regime::ASConvergent,
        (GainLimit::Infinite, true, RatioLimit::FinitePositive { .. }) => Regime::BoundedOscillation,
        (GainLimit::Infinite, true, RatioLimit::Unbounded { .. }) => Regime::ProbConvergent,
        _ => Regime::OpenRegime,
    };
    RegimeReport {
        lim_g,
        ratio_gprime_g2,
        ratio_log_g_over_g,
        classification,
        samples,
    }
}
