//! Weighted empirical measures and time-occupation measures.

use std::io::Write;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::simulator::PathRecord;

/// Which process an occupation measure is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    X,
    Y,
}

/// How each path is shifted before pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    #[default]
    None,
    /// Subtract the path's own occupation mean over the window.
    WindowMean,
    /// Subtract the path's `μ̄` at its last record (the estimate of `μ̄_∞`).
    TerminalMuBar,
}

/// Weighted point masses in `R^d`, normalized to total mass 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dimension: usize,
    /// Row-major points.
    points: Vec<f64>,
    weights: Vec<f64>,
    normalization: f64,
}

/// Histogram of one component: `edges.len() == mass.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    /// Mean of the binned mass, located at bin centres.
    pub fn mean(&self) -> f64 {
        let total: f64 = self.mass.iter().sum();
        self.centers().zip(&self.mass).map(|(c, m)| c * m).sum::<f64>() / total
    }

    /// Two-column `bin_center mass` text.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (c, m) in self.centers().zip(&self.mass) {
            writeln!(out, "{c} {m}").map_err(|e| Error::io("<histogram>", e))?;
        }
        Ok(())
    }
}

impl EmpiricalMeasure {
    /// Build from row-major points and non-negative weights.
    pub fn new(dimension: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dimension == 0 || points.len() != weights.len() * dimension {
            return Err(Error::invalid("points and weights do not match the dimension"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyWindow);
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(EmpiricalMeasure {
            dimension,
            points,
            weights,
            normalization: total,
        })
    }

    /// Equally weighted samples.
    pub fn uniform(dimension: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dimension.max(1);
        Self::new(dimension, points, vec![1.0; n])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total weight before normalization.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    fn component(&self, k: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points
            .iter()
            .skip(k)
            .step_by(self.dimension)
            .copied()
            .zip(self.weights.iter().copied())
    }

    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.component(k).map(|(x, w)| w * x).sum()
    }

    pub fn variance(&self, k: usize) -> f64 {
        let m = self.mean(k);
        self.component(k).map(|(x, w)| w * (x - m) * (x - m)).sum()
    }

    /// Mass of the closed ball of `radius` around `center`.
    pub fn mass_within(&self, center: &[f64], radius: f64) -> f64 {
        (0..self.len())
            .filter(|&i| {
                let d2: f64 = self.point(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius
            })
            .map(|i| self.weights[i])
            .sum()
    }

    /// Mass within `radius` of any of `centers`.
    pub fn mass_near_any(&self, centers: &[&[f64]], radius: f64) -> f64 {
        (0..self.len())
            .filter(|&i| {
                centers.iter().any(|c| {
                    let d2: f64 = self.point(i).iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    d2 <= radius * radius
                })
            })
            .map(|i| self.weights[i])
            .sum()
    }

    /// `P(component k <= x)`.
    pub fn cdf(&self, k: usize, x: f64) -> f64 {
        self.component(k).filter(|&(v, _)| v <= x).map(|(_, w)| w).sum()
    }

    /// Histogram of component `k` over `[lo, hi)` with `bins` equal bins.
    /// Mass outside the range is dropped.
    pub fn histogram(&self, k: usize, lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::invalid("histogram needs lo < hi and at least one bin"));
        }
        let width = (hi - lo) / bins as f64;
        let mut mass = vec![0.0; bins];
        for (x, w) in self.component(k) {
            if x >= lo && x < hi {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                mass[b] += w;
            }
        }
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Ok(Histogram { edges, mass })
    }

    /// Histogram covering the full sample range of component `k`.
    pub fn histogram_auto(&self, k: usize, bins: usize) -> Result<Histogram> {
        let (lo, hi) = self
            .component(k)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(x), hi.max(x)));
        let pad = if hi > lo { 1e-9 * (hi - lo) } else { 0.5 };
        self.histogram(k, lo - pad, hi + pad, bins)
    }

    /// Weighted Kolmogorov–Smirnov distance of component `k` to
    /// `N(mean, variance)`.
    pub fn ks_normal(&self, k: usize, mean: f64, variance: f64) -> Result<f64> {
        let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::invalid(format!("normal law: {e}")))?;
        let mut pairs: Vec<(f64, f64)> = self.component(k).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut below = 0.0;
        let mut worst: f64 = 0.0;
        let mut i = 0;
        while i < pairs.len() {
            let x = pairs[i].0;
            let f = normal.cdf(x);
            worst = worst.max((f - below).abs());
            while i < pairs.len() && pairs[i].0 == x {
                below += pairs[i].1;
                i += 1;
            }
            worst = worst.max((below - f).abs());
        }
        Ok(worst)
    }
}

/// Trapezoid weights of the records with `t >= start`: each record gets
/// half of each neighbouring interval inside the window.
pub(crate) fn window_weights(times: &[f64], start: f64) -> (usize, Vec<f64>) {
    let first = times.partition_point(|&t| t < start);
    let n = times.len() - first;
    let mut w = vec![0.0; n];
    for j in 1..n {
        let h = times[first + j] - times[first + j - 1];
        w[j - 1] += 0.5 * h;
        w[j] += 0.5 * h;
    }
    (first, w)
}

/// Time-occupation measure of `X` or `Y` after a burn-in fraction of each
/// path's horizon, pooled over paths. Each record is weighted by the time
/// it represents, so the measure does not depend on the decimation.
pub fn occupation_measure(paths: &[PathRecord], which: Which, burn_in: f64) -> Result<EmpiricalMeasure> {
    occupation_measure_centered(paths, which, burn_in, Centering::None)
}

pub fn occupation_measure_centered(
    paths: &[PathRecord],
    which: Which,
    burn_in: f64,
    centering: Centering,
) -> Result<EmpiricalMeasure> {
    if !(0.0..=0.9).contains(&burn_in) {
        return Err(Error::invalid("burn-in fraction must lie in [0, 0.9]"));
    }
    let d = paths.first().ok_or(Error::EmptyWindow)?.dimension;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for p in paths {
        let (first, w) = window_weights(&p.times, burn_in * p.terminal_time());
        let values = match which {
            Which::X => &p.x,
            Which::Y => &p.y,
        };
        let slice = &values[first * d..];
        let shift: Vec<f64> = match centering {
            Centering::None => vec![0.0; d],
            Centering::TerminalMuBar => p.terminal_mu_bar().to_vec(),
            Centering::WindowMean => {
                let total: f64 = w.iter().sum();
                (0..d)
                    .map(|k| {
                        if total > 0.0 {
                            w.iter().enumerate().map(|(j, wj)| wj * slice[j * d + k]).sum::<f64>() / total
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        };
        for (j, wj) in w.into_iter().enumerate() {
            weights.push(wj);
            points.extend((0..d).map(|k| slice[j * d + k] - shift[k]));
        }
    }
    EmpiricalMeasure::new(d, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(times: Vec<f64>, y: Vec<f64>) -> PathRecord {
        let n = times.len();
        PathRecord {
            dimension: 1,
            x: y.clone(),
            terminal_y: vec![*y.last().unwrap()],
            y,
            mu_bar: vec![0.0; n],
            times,
            mu_bar_integral_tail: vec![0.0],
            seed_stream_id: 0,
            steps: n as u64 - 1,
            tamed_steps: 0,
            blow_up: None,
        }
    }

    #[test]
    fn constant_path_is_a_dirac() {
        let p = record(vec![0.0, 1.0, 2.0, 3.0], vec![0.7; 4]);
        let m = occupation_measure(&[p], Which::Y, 0.0).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        assert!((m.mass_within(&[0.7], 1e-12) - 1.0).abs() < 1e-15);
        let h = m.histogram(0, 0.0, 1.0, 10).unwrap();
        assert_eq!(h.mass.iter().filter(|&&v| v > 0.0).count(), 1);
        assert!((m.variance(0)).abs() < 1e-15);
    }

    #[test]
    fn weights_follow_time_steps() {
        let p = record(vec![0.0, 1.0, 3.0], vec![0.0, 1.0, 2.0]);
        let m = occupation_measure(&[p], Which::Y, 0.0).unwrap();
        // Trapezoid weights 0.5, 1.5, 1.0 out of 3.
        assert!((m.mean(0) - (1.5 + 2.0) / 3.0).abs() < 1e-15);
        assert_eq!(m.normalization(), 3.0);
    }

    #[test]
    fn burn_in_range_and_empty_window() {
        let p = record(vec![0.0, 1.0], vec![0.0, 1.0]);
        assert!(occupation_measure(std::slice::from_ref(&p), Which::Y, 0.95).is_err());
        assert!(matches!(occupation_measure(&[p], Which::Y, 0.9), Err(Error::EmptyWindow)));
        assert!(matches!(occupation_measure(&[], Which::Y, 0.0), Err(Error::EmptyWindow)));
    }

    #[test]
    fn ks_against_own_law_is_small() {
        // Midpoint quantiles of N(0, 1).
        let n = 2000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<f64> = (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let m = EmpiricalMeasure::uniform(1, pts).unwrap();
        assert!(m.ks_normal(0, 0.0, 1.0).unwrap() <= 0.5 / n as f64 + 1e-8);
        assert!(m.ks_normal(0, 0.5, 1.0).unwrap() > 0.15);
    }

    #[test]
    fn histogram_mean_close_to_sample_mean() {
        let pts: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let m = EmpiricalMeasure::uniform(1, pts).unwrap();
        let h = m.histogram_auto(0, 200).unwrap();
        assert!((h.mean() - m.mean(0)).abs() < 0.5 * (h.edges[1] - h.edges[0]));
        let mut buf = Vec::new();
        h.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 200);
    }
}
