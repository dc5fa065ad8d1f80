//! Verdicts on ensembles of recorded paths.

mod measure;

use std::io::Write;

use crate::error::{Error, Result};
use crate::gain::GainSchedule;
use crate::potentials::{CriticalKind, CriticalPoint, PotentialSpec};
use crate::simulator::{integrate_flow_dense, PathRecord};

pub use measure::{occupation_measure, occupation_measure_centered, Centering, EmpiricalMeasure, Histogram, Which};

/// Fraction of the horizon used as the convergence tail window.
pub const TAIL_FRACTION: f64 = 0.1;
/// Envelope constant in the LIL check.
pub const C_ENV: f64 = 3.0;
/// Minimum records inside an APT window.
pub const APT_MIN_POINTS: usize = 20;
/// Frequencies of the characteristic-function checks.
pub const FOURIER_FREQUENCIES: [f64; 3] = [0.5, 1.0, 2.0];

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index of the first record with `t >= start`.
fn first_at_or_after(p: &PathRecord, start: f64) -> usize {
    p.times.partition_point(|&t| t < start)
}

/// Largest `max - min` of `Y` over the last [`TAIL_FRACTION`] of the path,
/// maximized over components.
pub fn tail_oscillation(p: &PathRecord) -> f64 {
    let from = first_at_or_after(p, (1.0 - TAIL_FRACTION) * p.terminal_time());
    (0..p.dimension)
        .map(|k| {
            let (lo, hi) = p
                .y_component(k)
                .skip(from)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi >= lo {
                hi - lo
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// The critical point the path has settled at: nearest to `terminal_Y`,
/// within `eps`, with tail oscillation below `eps / 2`.
pub fn classify_terminal<'a>(p: &PathRecord, potential: &'a PotentialSpec, eps: f64) -> Result<Option<&'a CriticalPoint>> {
    let sep = potential.critical_separation();
    if !(eps > 0.0) || (sep.is_finite() && eps >= 0.5 * sep) {
        return Err(Error::invalid(format!(
            "eps = {eps} must be positive and below half the critical-point separation {sep}"
        )));
    }
    let Some((idx, dist)) = potential.nearest_critical_point(&p.terminal_y) else {
        return Ok(None);
    };
    if dist > eps || tail_oscillation(p) >= 0.5 * eps {
        return Ok(None);
    }
    Ok(Some(&potential.critical_points()[idx]))
}

/// Fraction of records with `t > t0` inside the envelope
/// `|Y_t - m| · sqrt(g(t) / log G(t)) <= C_ENV`.
pub fn lil_envelope_check(p: &PathRecord, m: &[f64], s: &GainSchedule, t0: f64) -> Result<f64> {
    if s.primitive(t0) <= 1.0 {
        return Err(Error::invalid(format!("log G(t0) must be positive (G({t0}) = {})", s.primitive(t0))));
    }
    let mut inside = 0usize;
    let mut total = 0usize;
    for i in 0..p.len() {
        let t = p.times[i];
        if t <= t0 {
            continue;
        }
        total += 1;
        let scale = (s.g(t) / s.primitive(t).ln()).sqrt();
        if distance(p.y_at(i), m) * scale <= C_ENV {
            inside += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok(inside as f64 / total as f64)
}

/// `sup_h |Y_{G⁻¹(u+h)} - φ_h(Y_{G⁻¹(u)})|` over the records in the
/// time-changed window `[u, u + window]`. The flow starts from the first
/// record at or after `G⁻¹(u)`.
pub fn apt_deviation(p: &PathRecord, potential: &PotentialSpec, s: &GainSchedule, u: f64, window: f64) -> Result<f64> {
    let t_start = s.inverse_primitive(u)?;
    let t_end = s.inverse_primitive(u + window)?;
    if t_end > p.terminal_time() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "window end G⁻¹({}) = {t_end} lies past the recorded horizon {}",
            u + window,
            p.terminal_time()
        )));
    }
    let from = first_at_or_after(p, t_start);
    let to = p.times.partition_point(|&t| t <= t_end);
    let found = to.saturating_sub(from);
    if found < APT_MIN_POINTS {
        return Err(Error::InsufficientResolution {
            found,
            needed: APT_MIN_POINTS,
        });
    }
    let g_base = s.primitive(p.times[from]);
    let offsets: Vec<f64> = (from..to).map(|i| (s.primitive(p.times[i]) - g_base).max(0.0)).collect();
    // Offsets must be nondecreasing for the dense integrator.
    let offsets: Vec<f64> = offsets
        .iter()
        .scan(0.0f64, |acc, &h| {
            *acc = acc.max(h);
            Some(*acc)
        })
        .collect();
    let flow = integrate_flow_dense(potential, p.y_at(from), &offsets)?;
    Ok((from..to).zip(&flow).map(|(i, phi)| distance(p.y_at(i), phi)).fold(0.0, f64::max))
}

/// Weighted least-squares slope of `v` on `log t` over `t ∈ [t_lo, t_hi]`,
/// each record weighted by the log-time it represents.
pub fn log_time_slope(times: &[f64], v: impl Iterator<Item = f64>, t_lo: f64, t_hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(v)
        .filter(|(&t, _)| t >= t_lo && t <= t_hi && t > 0.0)
        .map(|(&t, x)| (t.ln(), x))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len();
    let mut w = vec![0.0; n];
    for j in 1..n {
        let h = pts[j].0 - pts[j - 1].0;
        w[j - 1] += 0.5 * h;
        w[j] += 0.5 * h;
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let mx = pts.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = pts.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-path outcome of the trichotomy.
#[derive(Debug, Clone, PartialEq)]
pub enum TrichotomyLabel {
    /// `Y` settled at the minimum 0; `μ̄_∞` estimated by
    /// `μ̄_0 + ∫_0^T Y_s ds / (r + s)`.
    ConvergedToMubarInf { mu_bar_inf: Vec<f64> },
    /// `Y` settled at a nonzero minimum `y_inf`; `slope` is the regression
    /// of `X` on `log t` over the last decade.
    DivergedLogRate { y_inf: Vec<f64>, slope: Vec<f64> },
    Undecided,
}

impl TrichotomyLabel {
    pub fn name(&self) -> &'static str {
        match self {
            TrichotomyLabel::ConvergedToMubarInf { .. } => "ConvergedToMubarInf",
            TrichotomyLabel::DivergedLogRate { .. } => "DivergedLogRate",
            TrichotomyLabel::Undecided => "Undecided",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrichotomyVerdict {
    pub labels: Vec<TrichotomyLabel>,
    pub converged: f64,
    pub diverged: f64,
    pub undecided: f64,
}

impl TrichotomyVerdict {
    /// `μ̄_∞` estimates of the converged paths.
    pub fn mu_bar_inf_estimates(&self) -> Vec<&[f64]> {
        self.labels
            .iter()
            .filter_map(|l| match l {
                TrichotomyLabel::ConvergedToMubarInf { mu_bar_inf } => Some(mu_bar_inf.as_slice()),
                _ => None,
            })
            .collect()
    }

    /// `path,label,y_inf_1..,slope_1..,mu_bar_inf_1..` rows.
    pub fn write_csv<W: Write>(&self, out: W, dimension: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["path".to_string(), "label".to_string()];
        for name in ["y_inf", "slope", "mu_bar_inf"] {
            header.extend((1..=dimension).map(|k| format!("{name}_{k}")));
        }
        w.write_record(&header)?;
        let blank = || vec![String::new(); dimension];
        let fmt = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>();
        for (i, label) in self.labels.iter().enumerate() {
            let mut row = vec![i.to_string(), label.name().to_string()];
            match label {
                TrichotomyLabel::ConvergedToMubarInf { mu_bar_inf } => {
                    row.extend(blank());
                    row.extend(blank());
                    row.extend(fmt(mu_bar_inf));
                }
                TrichotomyLabel::DivergedLogRate { y_inf, slope } => {
                    row.extend(fmt(y_inf));
                    row.extend(fmt(slope));
                    row.extend(blank());
                }
                TrichotomyLabel::Undecided => {
                    row.extend(blank());
                    row.extend(blank());
                    row.extend(blank());
                }
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<trichotomy csv>", e))?;
        Ok(())
    }
}

/// Label each path by the minimum its `Y` settles at.
pub fn trichotomy(paths: &[PathRecord], potential: &PotentialSpec, eps: f64) -> Result<TrichotomyVerdict> {
    if paths.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut labels = Vec::with_capacity(paths.len());
    for p in paths {
        let horizon = p.terminal_time();
        if horizon.ln() < 5.0 {
            return Err(Error::invalid(format!("horizon {horizon} too short: need log T >= 5")));
        }
        let label = match classify_terminal(p, potential, eps)? {
            Some(cp) if cp.kind == CriticalKind::LocalMin => {
                if cp.location.iter().all(|v| v.abs() < 1e-9) {
                    let mu_bar_inf = p
                        .mu_bar_at(0)
                        .iter()
                        .zip(&p.mu_bar_integral_tail)
                        .map(|(a, b)| a + b)
                        .collect();
                    TrichotomyLabel::ConvergedToMubarInf { mu_bar_inf }
                } else {
                    let slope = (0..p.dimension)
                        .map(|k| log_time_slope(&p.times, p.x_component(k), horizon / 10.0, horizon).unwrap_or(f64::NAN))
                        .collect();
                    TrichotomyLabel::DivergedLogRate {
                        y_inf: cp.location.clone(),
                        slope,
                    }
                }
            }
            _ => TrichotomyLabel::Undecided,
        };
        labels.push(label);
    }
    let n = labels.len() as f64;
    let count = |name: &str| labels.iter().filter(|l| l.name() == name).count() as f64 / n;
    let converged = count("ConvergedToMubarInf");
    let diverged = count("DivergedLogRate");
    Ok(TrichotomyVerdict {
        converged,
        diverged,
        undecided: 1.0 - converged - diverged,
        labels,
    })
}

/// Running time-averages `(1/t) ∫_0^t f(X_s) ds` (trapezoid on the record
/// grid) for every path; the value at `t = 0` is `f(X_0)`.
pub fn ergodic_average<F: Fn(&[f64]) -> f64>(paths: &[PathRecord], f: F) -> Vec<Vec<f64>> {
    paths
        .iter()
        .map(|p| {
            let mut out = Vec::with_capacity(p.len());
            let mut integral = 0.0;
            let mut prev = f(p.x_at(0));
            out.push(prev);
            for i in 1..p.len() {
                let cur = f(p.x_at(i));
                integral += 0.5 * (p.times[i] - p.times[i - 1]) * (prev + cur);
                prev = cur;
                let t = p.times[i];
                out.push(if t > 0.0 { integral / t } else { cur });
            }
            out
        })
        .collect()
}

/// Running maximum of component `k` of `X` up to time `t`.
pub fn running_max_x(p: &PathRecord, k: usize, t: f64) -> f64 {
    p.times
        .iter()
        .zip(p.x_component(k))
        .take_while(|(&s, _)| s <= t)
        .map(|(_, x)| x)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Observed weak-order ratio `(V_1 - V_2) / (V_2 - V_3)` from a statistic
/// at step sizes `h`, `h/2`, `h/4`; 2 for a first-order scheme.
pub fn weak_order_ratio(values: [f64; 3]) -> f64 {
    (values[0] - values[1]) / (values[1] - values[2])
}

/// Ensemble test of `E[dV(Y)] <= 0` where `D(t, Y) > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    /// Mean of `ΔV / Δt` over record intervals starting where `D > 0`.
    pub mean_rate: f64,
    pub standard_error: f64,
    pub samples: usize,
}

impl DriftCheck {
    /// Passes when the mean rate is below 3 standard errors.
    pub fn pass(&self) -> bool {
        self.mean_rate <= 3.0 * self.standard_error
    }
}

pub fn supermartingale_check(paths: &[PathRecord], potential: &PotentialSpec, s: &GainSchedule, r: f64) -> Result<DriftCheck> {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for p in paths {
        for i in 0..p.len().saturating_sub(1) {
            let t = p.times[i];
            let y = p.y_at(i);
            if potential.supermartingale_drift(s.g(t), r + t, y) <= 0.0 {
                continue;
            }
            let dt = p.times[i + 1] - t;
            if !(dt > 0.0) {
                continue;
            }
            let rate = (potential.value(p.y_at(i + 1)) - potential.value(y)) / dt;
            n += 1;
            let delta = rate - mean;
            mean += delta / n as f64;
            m2 += delta * (rate - mean);
        }
    }
    if n < 2 {
        return Err(Error::EmptyWindow);
    }
    Ok(DriftCheck {
        mean_rate: mean,
        standard_error: (m2 / (n - 1) as f64 / n as f64).sqrt(),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{double_well, make_quadratic};

    fn path(times: Vec<f64>, y: Vec<f64>, mu: Vec<f64>) -> PathRecord {
        let x = y.iter().zip(&mu).map(|(a, b)| a + b).collect();
        let tail = vec![mu.last().unwrap() - mu[0]];
        PathRecord {
            dimension: 1,
            terminal_y: vec![*y.last().unwrap()],
            steps: times.len() as u64 - 1,
            times,
            x,
            y,
            mu_bar: mu,
            mu_bar_integral_tail: tail,
            seed_stream_id: 0,
            tamed_steps: 0,
            blow_up: None,
        }
    }

    fn grid(n: usize, horizon: f64) -> Vec<f64> {
        (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn nearest_point_rule() {
        let p = path(grid(11, 10.0), vec![-1.02; 11], vec![0.0; 11]);
        let dw = double_well();
        let cp = classify_terminal(&p, &dw, 0.1).unwrap().unwrap();
        assert_eq!(cp.location, vec![-1.0]);
        assert_eq!(cp.kind, CriticalKind::LocalMin);
    }

    #[test]
    fn oscillating_tail_is_unclassified() {
        let mut y = vec![1.0; 101];
        y[95] = 1.06;
        y[97] = 0.98;
        let p = path(grid(101, 10.0), y, vec![0.0; 101]);
        assert!(classify_terminal(&p, &double_well(), 0.1).unwrap().is_none());
    }

    #[test]
    fn eps_precondition() {
        let p = path(grid(3, 1.0), vec![1.0; 3], vec![0.0; 3]);
        assert!(classify_terminal(&p, &double_well(), 0.6).is_err());
    }

    #[test]
    fn envelope_fractions() {
        let s = GainSchedule::power(1.0, 1.0).unwrap();
        let times = grid(1000, 1000.0);
        let at_m = path(times.clone(), vec![0.0; 1000], vec![0.0; 1000]);
        assert_eq!(lil_envelope_check(&at_m, &[0.0], &s, 5.0).unwrap(), 1.0);
        let far = path(times, vec![1.0; 1000], vec![0.0; 1000]);
        let f = lil_envelope_check(&far, &[0.0], &s, 5.0).unwrap();
        // |Y - m| = 1 leaves the envelope once g/log G > 9, near t = 60.
        assert!(f > 0.03 && f < 0.1, "{f}");
        assert!(lil_envelope_check(&far, &[0.0], &s, 0.1).is_err());
    }

    #[test]
    fn apt_at_fixed_point_is_zero() {
        let s = GainSchedule::power(1.0, 1.0).unwrap();
        let p = path(grid(2001, 20.0), vec![1.0; 2001], vec![0.0; 2001]);
        let dev = apt_deviation(&p, &double_well(), &s, 10.0, 1.0).unwrap();
        assert!(dev < 1e-12);
        let sparse = path(grid(21, 20.0), vec![1.0; 21], vec![0.0; 21]);
        assert!(matches!(
            apt_deviation(&sparse, &double_well(), &s, 10.0, 1.0),
            Err(Error::InsufficientResolution { .. })
        ));
        assert!(apt_deviation(&p, &double_well(), &s, 300.0, 1.0).is_err());
    }

    #[test]
    fn slope_recovers_log_rate() {
        let times: Vec<f64> = (1..=5000).map(|i| i as f64 * 2.0).collect();
        let x: Vec<f64> = times.iter().map(|t| 3.0 - t.ln()).collect();
        let slope = log_time_slope(&times, x.into_iter(), 1000.0, 10000.0).unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ergodic_average_of_constant() {
        let p = path(grid(50, 7.0), (0..50).map(|i| (i as f64).sin()).collect(), vec![0.0; 50]);
        let avg = ergodic_average(&[p], |_| 1.0);
        assert!(avg[0].iter().all(|&a| (a - 1.0).abs() < 1e-14));
    }

    #[test]
    fn weak_order_of_exact_first_order_sequence() {
        let v = |h: f64| 0.5 + 0.25 * h;
        assert!((weak_order_ratio([v(0.01), v(0.005), v(0.0025)]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trichotomy_fractions_sum_to_one() {
        let q = make_quadratic(1.0, 1).unwrap();
        let times = grid(1001, 1000.0);
        let settled = path(times.clone(), vec![0.001; 1001], (0..1001).map(|i| 0.3 + 1e-4 * i as f64).collect());
        let wild = path(times, (0..1001).map(|i| (i as f64).sin()).collect(), vec![0.0; 1001]);
        let v = trichotomy(&[settled, wild], &q, 0.2).unwrap();
        assert_eq!(v.converged, 0.5);
        assert_eq!(v.undecided, 0.5);
        assert!((v.converged + v.diverged + v.undecided - 1.0).abs() < 1e-15);
        let est = v.mu_bar_inf_estimates();
        assert!((est[0][0] - 0.4).abs() < 1e-12);
        let mut buf = Vec::new();
        v.write_csv(&mut buf, 1).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("ConvergedToMubarInf"));
    }
}
