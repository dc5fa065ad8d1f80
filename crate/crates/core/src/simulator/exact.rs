//! Exact sampling of the 1-D quadratic system on a time grid.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{path_rng, PathRecord, SimConfig};
use crate::error::{Error, Result};
use crate::oracle::{QuadraticLaw, Transition};

/// Precomputed grid transitions, shared by every path.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    times: Vec<f64>,
    x0: f64,
    mu_bar0: f64,
    /// `(decay, mean_gain, l11, l21, l22)` per interval, with `L` the
    /// Cholesky factor of the `(ξ, η)` covariance.
    steps: Vec<(f64, f64, f64, f64, f64)>,
}

fn cholesky(tr: &Transition) -> (f64, f64, f64) {
    let l11 = tr.var_y.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { tr.cov / l11 } else { 0.0 };
    let l22 = (tr.var_mubar - l21 * l21).max(0.0).sqrt();
    (l11, l21, l22)
}

impl ExactSampler {
    /// `times` must be nondecreasing and start at or after 0. Transitions
    /// run from 0 to the first grid time, then between grid times.
    pub fn new(law: &QuadraticLaw, x0: f64, mu_bar0: f64, times: &[f64]) -> Result<Self> {
        if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("sampling grid must be nonempty, non-negative and nondecreasing"));
        }
        let mut steps = Vec::with_capacity(times.len());
        let mut prev = 0.0;
        for &t in times {
            let tr = law.transition(prev, t)?;
            let (l11, l21, l22) = cholesky(&tr);
            steps.push((tr.decay, tr.mean_gain, l11, l21, l22));
            prev = t;
        }
        Ok(ExactSampler {
            times: times.to_vec(),
            x0,
            mu_bar0,
            steps,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Sample path `path_index` from stream `path_index` of `seed`.
    pub fn sample(&self, seed: u64, path_index: u64) -> PathRecord {
        let mut rng = path_rng(seed, path_index);
        let mut rec = PathRecord::new(1, path_index, self.times.len());
        let mut y = self.x0 - self.mu_bar0;
        let mut m = self.mu_bar0;
        for (&t, &(decay, gain, l11, l21, l22)) in self.times.iter().zip(&self.steps) {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let xi = l11 * z1;
            let eta = l21 * z1 + l22 * z2;
            m += gain * y + eta;
            y = decay * y + xi;
            rec.push(t, &[y], &[m]);
            rec.steps += 1;
        }
        rec.terminal_y = vec![y];
        rec.mu_bar_integral_tail = vec![m - self.mu_bar0];
        rec
    }
}

/// Exact path `path_index` of a 1-D quadratic configuration on `times`.
pub fn exact_quadratic_path(cfg: &SimConfig, times: &[f64], path_index: u64) -> Result<PathRecord> {
    let sampler = sampler_for(cfg, times)?;
    Ok(sampler.sample(cfg.seed, path_index))
}

pub(crate) fn sampler_for(cfg: &SimConfig, times: &[f64]) -> Result<ExactSampler> {
    cfg.validate()?;
    let c = match cfg.potential.quadratic_stiffness() {
        Some(c) if cfg.dimension() == 1 => c,
        _ => return Err(Error::NotQuadratic { expected_dim: 1 }),
    };
    let law = QuadraticLaw::new(c, cfg.gain.clone(), cfg.r, cfg.x0[0], cfg.mu_bar0[0])?;
    ExactSampler::new(&law, cfg.x0[0], cfg.mu_bar0[0], times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::GainSchedule;
    use crate::potentials::{double_well, make_quadratic};

    fn cfg() -> SimConfig {
        let mut cfg = SimConfig::new(make_quadratic(1.0, 1).unwrap(), GainSchedule::constant(1.0).unwrap());
        cfg.x0 = vec![0.4];
        cfg.mu_bar0 = vec![0.1];
        cfg
    }

    #[test]
    fn starts_at_initial_condition() {
        let rec = exact_quadratic_path(&cfg(), &[0.0, 1.0], 0).unwrap();
        assert!((rec.y[0] - 0.3).abs() < 1e-15);
        assert!((rec.mu_bar[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_other_potentials() {
        let mut c = cfg();
        c.potential = double_well();
        assert!(matches!(
            exact_quadratic_path(&c, &[1.0], 0),
            Err(Error::NotQuadratic { expected_dim: 1 })
        ));
        let mut c = cfg();
        c.potential = make_quadratic(1.0, 2).unwrap();
        c.x0 = vec![0.0; 2];
        c.mu_bar0 = vec![0.0; 2];
        assert!(exact_quadratic_path(&c, &[1.0], 0).is_err());
    }

    #[test]
    fn reproducible() {
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let a = exact_quadratic_path(&cfg(), &grid, 3).unwrap();
        let b = exact_quadratic_path(&cfg(), &grid, 3).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            assert_eq!(a.x[i], a.y[i] + a.mu_bar[i]);
        }
    }
}
