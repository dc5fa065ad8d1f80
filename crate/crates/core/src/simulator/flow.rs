//! Gradient flow `φ' = -∇V(φ)` by classical RK4 with step doubling.

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;

/// Local error allowed per unit time.
pub const FLOW_TOLERANCE: f64 = 1e-8;

const MIN_STEP: f64 = 1e-12;
// The doubling estimate is only trustworthy in the asymptotic regime.
const MAX_STEP: f64 = 0.25;

fn rk4(p: &PotentialSpec, y: &[f64], h: f64, k: &mut [Vec<f64>; 4], tmp: &mut [f64], out: &mut [f64]) {
    let d = y.len();
    p.gradient_into(y, &mut k[0]);
    for i in 0..d {
        tmp[i] = y[i] - 0.5 * h * k[0][i];
    }
    p.gradient_into(tmp, &mut k[1]);
    for i in 0..d {
        tmp[i] = y[i] - 0.5 * h * k[1][i];
    }
    p.gradient_into(tmp, &mut k[2]);
    for i in 0..d {
        tmp[i] = y[i] - h * k[2][i];
    }
    p.gradient_into(tmp, &mut k[3]);
    for i in 0..d {
        out[i] = y[i] - h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

/// Adaptive integrator state.
struct Flow<'a> {
    p: &'a PotentialSpec,
    h: f64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    twice: Vec<f64>,
}

impl<'a> Flow<'a> {
    fn new(p: &'a PotentialSpec, d: usize) -> Self {
        let z = || vec![0.0; d];
        Flow {
            p,
            h: 0.01,
            k: [z(), z(), z(), z()],
            tmp: z(),
            full: z(),
            half: z(),
            twice: z(),
        }
    }

    /// Advance `y` by exactly `span`.
    fn advance(&mut self, y: &mut [f64], span: f64) -> Result<()> {
        let mut done = 0.0;
        while done < span {
            let h = self.h.min(span - done);
            rk4(self.p, y, h, &mut self.k, &mut self.tmp, &mut self.full);
            rk4(self.p, y, 0.5 * h, &mut self.k, &mut self.tmp, &mut self.half);
            let half = self.half.clone();
            rk4(self.p, &half, 0.5 * h, &mut self.k, &mut self.tmp, &mut self.twice);
            let err = self
                .twice
                .iter()
                .zip(&self.full)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / 15.0;
            if !err.is_finite() {
                return Err(Error::invalid("gradient flow left the finite range"));
            }
            let allowed = FLOW_TOLERANCE * h;
            if err <= allowed {
                for ((yi, t), f) in y.iter_mut().zip(&self.twice).zip(&self.full) {
                    *yi = t + (t - f) / 15.0;
                }
                done += h;
                let grow = if err == 0.0 { 4.0 } else { (0.9 * (allowed / err).powf(0.25)).min(4.0) };
                // Only grow from full steps; a final partial step says nothing.
                if h == self.h {
                    self.h = (self.h * grow.max(1.0)).min(MAX_STEP);
                }
            } else {
                self.h = h * (0.9 * (allowed / err).powf(0.25)).max(0.1);
                if self.h < MIN_STEP {
                    return Err(Error::invalid("gradient flow step underflow"));
                }
            }
        }
        Ok(())
    }
}

/// `φ_h(y0)`.
pub fn integrate_flow(p: &PotentialSpec, y0: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h >= 0.0) {
        return Err(Error::invalid("flow duration must be non-negative"));
    }
    if y0.len() != p.dimension() {
        return Err(Error::invalid("start point has the wrong dimension"));
    }
    let mut y = y0.to_vec();
    if h.is_infinite() {
        return Err(Error::invalid("flow duration must be finite"));
    }
    Flow::new(p, y.len()).advance(&mut y, h)?;
    Ok(y)
}

/// `φ_h(y0)` at every `h` of a nondecreasing list of offsets.
pub fn integrate_flow_dense(p: &PotentialSpec, y0: &[f64], offsets: &[f64]) -> Result<Vec<Vec<f64>>> {
    if y0.len() != p.dimension() {
        return Err(Error::invalid("start point has the wrong dimension"));
    }
    let mut flow = Flow::new(p, y0.len());
    let mut y = y0.to_vec();
    let mut at = 0.0;
    let mut out = Vec::with_capacity(offsets.len());
    for &h in offsets {
        if !(h >= at) || !h.is_finite() {
            return Err(Error::invalid("flow offsets must be finite and nondecreasing from 0"));
        }
        flow.advance(&mut y, h - at)?;
        at = h;
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{double_well, make_quadratic};

    #[test]
    fn linear_flow() {
        let p = make_quadratic(1.0, 1).unwrap();
        let y = integrate_flow(&p, &[1.0], 1.0).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
        let y = integrate_flow(&p, &[1.0], 0.0).unwrap();
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn critical_points_are_fixed() {
        let p = double_well();
        for m in [-1.0, 0.0, 1.0] {
            assert_eq!(integrate_flow(&p, &[m], 25.0).unwrap(), vec![m]);
        }
    }

    #[test]
    fn double_well_basin() {
        let p = double_well();
        assert!((integrate_flow(&p, &[0.5], 40.0).unwrap()[0] - 1.0).abs() < 1e-8);
        let y = integrate_flow(&p, &[-0.01], 60.0).unwrap()[0];
        assert!((y + 1.0).abs() < 1e-8, "{y}");
    }

    #[test]
    fn double_well_closed_form() {
        // V = (x^2 - 1)^2 / 4 gives φ' = φ(1 - φ^2), solved by
        // φ(h)^2 = y^2 e^{2h} / (1 - y^2 + y^2 e^{2h}).
        let p = double_well();
        let y0 = 0.3f64;
        let h = 2.5f64;
        let e = (2.0 * h).exp();
        let exact = (y0 * y0 * e / (1.0 - y0 * y0 + y0 * y0 * e)).sqrt();
        assert!((integrate_flow(&p, &[y0], h).unwrap()[0] - exact).abs() < 3e-8);
    }

    #[test]
    fn dense_matches_single_calls() {
        let p = double_well();
        let offs = [0.0, 0.1, 0.5, 1.0];
        let dense = integrate_flow_dense(&p, &[0.2], &offs).unwrap();
        for (h, y) in offs.iter().zip(&dense) {
            let single = integrate_flow(&p, &[0.2], *h).unwrap();
            assert!((single[0] - y[0]).abs() < 1e-8);
        }
    }
}
