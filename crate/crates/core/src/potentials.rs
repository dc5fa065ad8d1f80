//! Interaction potentials `V`, their derivatives and critical points.
//!
//! Every potential is stored in closed form so that gradient, Hessian and
//! Laplacian are analytic. Critical points are seeded by the caller (or by
//! the convenience constructors), refined with Newton's method on `∇V = 0`
//! and classified by the signs of the Hessian eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Hessian eigenvalues closer to zero than this mark a degenerate point.
const DEGENERACY_TOL: f64 = 1e-8;
/// Tolerance on Hessian lower bounds in hypothesis checks.
const HESSIAN_BOUND_TOL: f64 = 1e-8;

/// Dense univariate polynomial, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    /// `scale * Π (x - r_i)`.
    pub fn from_roots(roots: &[f64], scale: f64) -> Self {
        let mut coeffs = vec![scale];
        for &root in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= root * c;
            }
            coeffs = next;
        }
        Polynomial::new(coeffs)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Value, first and second derivative in one Horner pass.
    #[inline]
    pub fn eval_with_derivatives(&self, x: f64) -> (f64, f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        let mut ddp = 0.0;
        for &c in self.coeffs.iter().rev() {
            ddp = ddp * x + 2.0 * dp;
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp, ddp)
    }

    #[inline]
    pub fn derivative_at(&self, x: f64) -> f64 {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        dp
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    /// Cauchy bound: every real root lies in `[-bound, bound]`.
    fn root_bound(&self) -> f64 {
        let lead = *self.coeffs.last().unwrap();
        1.0 + self.coeffs[..self.coeffs.len() - 1]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max)
    }
}

/// Stability type of a critical point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriticalKind {
    LocalMin,
    LocalMax,
    Saddle,
}

impl CriticalKind {
    pub fn is_stable(self) -> bool {
        self == CriticalKind::LocalMin
    }
}

/// A nondegenerate critical point of `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub kind: CriticalKind,
    /// For a minimum `m`: an `a > 0` with `(y - m, ∇V(y)) >= a |y - m|^2`
    /// whenever `|y - m| <= valid_radius`. For an unstable point: the
    /// magnitude of the most negative Hessian eigenvalue.
    pub taylor_constant: f64,
    pub valid_radius: f64,
    /// Eigenvector of the most negative Hessian eigenvalue (unstable points).
    pub unstable_direction: Option<Vec<f64>>,
    pub hessian_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// `c |x|^2 / 2`.
    Quadratic { c: f64 },
    /// One-dimensional polynomial with cached derivatives.
    Polynomial {
        p: Polynomial,
        dp: Polynomial,
        ddp: Polynomial,
    },
    /// `Σ k_i x_i^2 / 2 + A exp(-|x|^2 / (2 s^2))`: a quadratic bowl with a
    /// Gaussian bump at the origin. Produces saddles in `d >= 2`.
    Bump {
        stiffness: Vec<f64>,
        amplitude: f64,
        width: f64,
    },
}

/// A potential `V: R^d -> R_+` together with its critical-point table.
///
/// Immutable once built; share it freely between worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    name: String,
    dimension: usize,
    shape: Shape,
    critical_points: Vec<CriticalPoint>,
    convexity_constant: f64,
    chi_support_radius: f64,
    warnings: Vec<String>,
}

/// `c |x|^2 / 2` on `R^d`.
pub fn make_quadratic(c: f64, dimension: usize) -> Result<PotentialSpec> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid(format!("quadratic stiffness must be positive, got {c}")));
    }
    if dimension == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let minimum = CriticalPoint {
        location: vec![0.0; dimension],
        kind: CriticalKind::LocalMin,
        taylor_constant: c,
        valid_radius: f64::INFINITY,
        unstable_direction: None,
        hessian_eigenvalues: vec![c; dimension],
    };
    Ok(PotentialSpec {
        name: "quadratic".into(),
        dimension,
        shape: Shape::Quadratic { c },
        critical_points: vec![minimum],
        convexity_constant: c,
        chi_support_radius: 0.0,
        warnings: vec![
            "quadratic potential: |∇V|^2/V is bounded, so the growth hypothesis fails; \
             the closed-form laws apply instead"
                .into(),
        ],
    })
}

/// One-dimensional polynomial potential with Newton-refined critical points.
///
/// `starts` seeds the Newton iteration on `V' = 0`. Requires even degree
/// `>= 2`, positive leading coefficient and `V >= 0`.
pub fn make_polynomial_multiwell(coefficients: &[f64], starts: &[f64]) -> Result<PotentialSpec> {
    let p = Polynomial::new(coefficients.to_vec());
    if p.is_zero() {
        return Err(Error::invalid("potential is identically zero"));
    }
    let degree = p.degree();
    let lead = p.coefficients()[degree];
    if degree < 2 || !degree.is_multiple_of(2) || lead <= 0.0 {
        return Err(Error::invalid(
            "polynomial potential must have even degree >= 2 and a positive leading coefficient",
        ));
    }
    let dp = p.derivative();
    let ddp = dp.derivative();

    let (convexity_constant, chi_support_radius) = if degree == 2 {
        (2.0 * lead, 0.0)
    } else {
        (1.0, convexity_radius(&ddp, 1.0))
    };

    // V >= 0: the global minimum is attained at a root of V', all of which
    // lie inside the Cauchy bound.
    let bound = dp.root_bound();
    let n = 20_000;
    let min_value = (0..=n)
        .map(|i| p.eval(-bound + 2.0 * bound * i as f64 / n as f64))
        .fold(f64::INFINITY, f64::min);
    if min_value < -1e-12 {
        return Err(Error::invalid(format!(
            "polynomial potential takes negative values (min ≈ {min_value:e})"
        )));
    }

    let shape = Shape::Polynomial { p, dp, ddp };
    let seeds: Vec<Vec<f64>> = starts.iter().map(|&s| vec![s]).collect();
    let critical_points = refine_critical_points(&shape, 1, &seeds)?;
    if critical_points.is_empty() {
        return Err(Error::invalid("no critical point found from the supplied starts"));
    }
    Ok(PotentialSpec {
        name: "polynomial".into(),
        dimension: 1,
        shape,
        critical_points,
        convexity_constant,
        chi_support_radius,
        warnings: Vec::new(),
    })
}

/// `Π (x - w_i)^2 / 4` for well locations `w_i`.
pub fn make_wells(wells: &[f64]) -> Result<PotentialSpec> {
    if wells.is_empty() {
        return Err(Error::invalid("need at least one well"));
    }
    let root_poly = Polynomial::from_roots(wells, 1.0);
    let p = root_poly.mul(&root_poly);
    let coeffs: Vec<f64> = p.coefficients().iter().map(|c| c / 4.0).collect();
    let lo = wells.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = wells.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let starts: Vec<f64> = (0..=400).map(|i| lo + (hi - lo) * i as f64 / 400.0).collect();
    let mut spec = make_polynomial_multiwell(&coeffs, &starts)?;
    spec.name = "wells".into();
    Ok(spec)
}

/// `(x^2 - 1)^2 / 4`: minima at `±1`, maximum at `0`.
pub fn double_well() -> PotentialSpec {
    let mut spec = make_wells(&[-1.0, 1.0]).expect("valid double well");
    spec.name = "double_well".into();
    spec
}

/// `x^2 (x - s)^2 / 4`: minima at `0` and `s`, maximum at `s/2`.
pub fn asymmetric_wells(separation: f64) -> Result<PotentialSpec> {
    if separation == 0.0 || !separation.is_finite() {
        return Err(Error::invalid("well separation must be nonzero"));
    }
    let mut spec = make_wells(&[0.0, separation])?;
    spec.name = "asymmetric_wells".into();
    Ok(spec)
}

/// Quadratic bowl `Σ k_i x_i^2/2` with a Gaussian bump of height `amplitude`
/// and width `width` at the origin. Critical points are Newton-refined from
/// `starts`.
pub fn make_bump(
    stiffness: Vec<f64>,
    amplitude: f64,
    width: f64,
    starts: &[Vec<f64>],
) -> Result<PotentialSpec> {
    let dimension = stiffness.len();
    if dimension == 0 || stiffness.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::invalid("bump potential needs positive stiffnesses"));
    }
    if !(amplitude >= 0.0) || !(width > 0.0) {
        return Err(Error::invalid("bump amplitude must be >= 0 and width > 0"));
    }
    if starts.iter().any(|s| s.len() != dimension) {
        return Err(Error::invalid("start points must match the dimension"));
    }
    let k_min = stiffness.iter().cloned().fold(f64::INFINITY, f64::min);
    // Outside this radius the bump's Hessian is below 1e-10 in norm.
    let mut chi_support_radius = width;
    let hess_bound = |r: f64| {
        let q = r * r / (width * width);
        amplitude / (width * width) * (1.0 + q) * (-0.5 * q).exp()
    };
    while hess_bound(chi_support_radius) > 1e-10 {
        chi_support_radius *= 1.1;
    }
    let shape = Shape::Bump {
        stiffness,
        amplitude,
        width,
    };
    let critical_points = refine_critical_points(&shape, dimension, starts)?;
    if critical_points.is_empty() {
        return Err(Error::invalid("no critical point found from the supplied starts"));
    }
    Ok(PotentialSpec {
        name: "bump".into(),
        dimension,
        shape,
        critical_points,
        convexity_constant: k_min,
        chi_support_radius,
        warnings: Vec::new(),
    })
}

/// Radius beyond which `V'' >= c` (1-D polynomial).
fn convexity_radius(ddp: &Polynomial, c: f64) -> f64 {
    let shifted = {
        let mut co = ddp.coefficients().to_vec();
        co[0] -= c;
        Polynomial::new(co)
    };
    let bound = shifted.root_bound();
    let n = 20_000;
    let mut radius: f64 = 0.0;
    for i in 0..=n {
        let x = -bound + 2.0 * bound * i as f64 / n as f64;
        if shifted.eval(x) < 0.0 {
            radius = radius.max(x.abs());
        }
    }
    // Pad by one grid cell so the sampled bound is conservative.
    if radius > 0.0 {
        radius + 2.0 * bound / n as f64
    } else {
        0.0
    }
}

impl Shape {
    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Quadratic { c } => 0.5 * c * x.iter().map(|v| v * v).sum::<f64>(),
            Shape::Polynomial { p, .. } => p.eval(x[0]),
            Shape::Bump {
                stiffness,
                amplitude,
                width,
            } => {
                let mut bowl = 0.0;
                let mut r2 = 0.0;
                for (k, v) in stiffness.iter().zip(x) {
                    bowl += 0.5 * k * v * v;
                    r2 += v * v;
                }
                bowl + amplitude * (-0.5 * r2 / (width * width)).exp()
            }
        }
    }

    #[inline]
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Shape::Quadratic { c } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = c * v;
                }
            }
            Shape::Polynomial { dp, .. } => out[0] = dp.eval(x[0]),
            Shape::Bump {
                stiffness,
                amplitude,
                width,
            } => {
                let s2 = width * width;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let bump = amplitude * (-0.5 * r2 / s2).exp() / s2;
                for ((o, k), v) in out.iter_mut().zip(stiffness).zip(x) {
                    *o = k * v - bump * v;
                }
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        match self {
            Shape::Quadratic { c } => DMatrix::identity(d, d) * *c,
            Shape::Polynomial { ddp, .. } => DMatrix::from_element(1, 1, ddp.eval(x[0])),
            Shape::Bump {
                stiffness,
                amplitude,
                width,
            } => {
                let s2 = width * width;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let bump = amplitude * (-0.5 * r2 / s2).exp() / s2;
                DMatrix::from_fn(d, d, |i, j| {
                    let diag = if i == j { stiffness[i] - bump } else { 0.0 };
                    diag + bump * x[i] * x[j] / s2
                })
            }
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Quadratic { c } => c * x.len() as f64,
            Shape::Polynomial { ddp, .. } => ddp.eval(x[0]),
            Shape::Bump {
                stiffness,
                amplitude,
                width,
            } => {
                let s2 = width * width;
                let d = x.len() as f64;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let bump = amplitude * (-0.5 * r2 / s2).exp() / s2;
                stiffness.iter().sum::<f64>() - bump * d + bump * r2 / s2
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Newton on `∇V = 0` from each seed; converged roots are deduplicated and
/// classified. Seeds whose iteration does not settle are dropped.
fn refine_critical_points(
    shape: &Shape,
    dimension: usize,
    seeds: &[Vec<f64>],
) -> Result<Vec<CriticalPoint>> {
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut grad = vec![0.0; dimension];
    for seed in seeds {
        let mut x = seed.clone();
        let mut converged = false;
        for _ in 0..200 {
            shape.gradient_into(&x, &mut grad);
            let scale = 1.0 + norm(&x);
            if norm(&grad) <= 1e-13 * scale {
                converged = true;
                break;
            }
            let h = shape.hessian(&x);
            let Some(step) = h.lu().solve(&DVector::from_column_slice(&grad)) else {
                break;
            };
            let step_norm = step.norm();
            if !step_norm.is_finite() {
                break;
            }
            for (xi, si) in x.iter_mut().zip(step.iter()) {
                *xi -= si;
            }
            if step_norm <= 1e-15 * scale {
                shape.gradient_into(&x, &mut grad);
                converged = norm(&grad) <= 1e-10 * scale;
                break;
            }
        }
        if converged && !roots.iter().any(|r| distance(r, &x) < 1e-6 * (1.0 + norm(&x))) {
            roots.push(x);
        }
    }
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut points = Vec::with_capacity(roots.len());
    for (i, loc) in roots.iter().enumerate() {
        let eig = SymmetricEigen::new(shape.hessian(loc));
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        if eigenvalues.iter().any(|l| l.abs() < DEGENERACY_TOL) {
            return Err(Error::DegenerateCriticalPoint {
                location: loc.clone(),
            });
        }
        let (min_idx, &lambda_min) = eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let negatives = eigenvalues.iter().filter(|&&l| l < 0.0).count();
        let kind = match negatives {
            0 => CriticalKind::LocalMin,
            n if n == dimension => CriticalKind::LocalMax,
            _ => CriticalKind::Saddle,
        };
        let nearest = roots
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| distance(r, loc))
            .fold(f64::INFINITY, f64::min);
        let radius = if nearest.is_finite() { (0.4 * nearest).min(1.0) } else { 1.0 };
        let (taylor_constant, valid_radius, unstable_direction) = if kind.is_stable() {
            let (a, eps) = taylor_bound(shape, loc, radius, lambda_min);
            (a, eps, None)
        } else {
            let dir: Vec<f64> = eig.eigenvectors.column(min_idx).iter().cloned().collect();
            (-lambda_min, radius, Some(dir))
        };
        eigenvalues.sort_by(f64::total_cmp);
        points.push(CriticalPoint {
            location: loc.clone(),
            kind,
            taylor_constant,
            valid_radius,
            unstable_direction,
            hessian_eigenvalues: eigenvalues,
        });
    }
    Ok(points)
}

/// Largest sampled lower bound `a` on `(y - m, ∇V(y)) / |y - m|^2` over the
/// ball of radius `eps`, shrinking `eps` until the bound is positive. The
/// sampled minimum is multiplied by 0.9 to cover unsampled points.
fn taylor_bound(shape: &Shape, m: &[f64], mut eps: f64, lambda_min: f64) -> (f64, f64) {
    let d = m.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11_0c0e);
    let mut grad = vec![0.0; d];
    let mut y = vec![0.0; d];
    for _ in 0..40 {
        let mut lowest = f64::INFINITY;
        let radial_steps = 64;
        let directions = if d == 1 { 2 } else { 64 * d };
        for k in 0..directions {
            let mut u: Vec<f64> = if d == 1 {
                vec![if k == 0 { 1.0 } else { -1.0 }]
            } else {
                (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            };
            let un = norm(&u);
            u.iter_mut().for_each(|v| *v /= un);
            for j in 1..=radial_steps {
                let rho = eps * j as f64 / radial_steps as f64;
                for i in 0..d {
                    y[i] = m[i] + rho * u[i];
                }
                shape.gradient_into(&y, &mut grad);
                let inner: f64 = (0..d).map(|i| (y[i] - m[i]) * grad[i]).sum();
                lowest = lowest.min(inner / (rho * rho));
            }
        }
        let a = 0.9 * lowest.min(lambda_min);
        if a > 0.0 {
            return (a, eps);
        }
        eps *= 0.5;
    }
    (0.5 * lambda_min, 0.0)
}

impl PotentialSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn critical_points(&self) -> &[CriticalPoint] {
        &self.critical_points
    }

    pub fn minima(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.critical_points.iter().filter(|p| p.kind.is_stable())
    }

    pub fn convexity_constant(&self) -> f64 {
        self.convexity_constant
    }

    pub fn chi_support_radius(&self) -> f64 {
        self.chi_support_radius
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Stiffness `c` when the potential is `c|x|^2/2`.
    pub fn quadratic_stiffness(&self) -> Option<f64> {
        match self.shape {
            Shape::Quadratic { c } => Some(c),
            _ => None,
        }
    }

    /// Polynomial coefficients (ascending) for 1-D polynomial potentials.
    pub fn polynomial_coefficients(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Polynomial { p, .. } => Some(p.coefficients()),
            _ => None,
        }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.shape.value(x)
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.shape.gradient_into(x, out)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.shape.gradient_into(x, &mut out);
        out
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        self.shape.laplacian(x)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.shape.hessian(x)
    }

    /// Drift-stiffness bound: largest Hessian eigenvalue magnitude over the
    /// box `[-radius, radius]^d`, sampled on a coarse grid.
    pub fn lipschitz_bound(&self, radius: f64) -> f64 {
        let d = self.dimension;
        let per_axis = if d == 1 { 401 } else { 21usize.min((4000f64).powf(1.0 / d as f64) as usize).max(3) };
        let total = per_axis.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut best: f64 = 0.0;
        for idx in 0..total {
            let mut rem = idx;
            for xi in x.iter_mut() {
                let k = rem % per_axis;
                rem /= per_axis;
                *xi = -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64;
            }
            let eig = SymmetricEigen::new(self.hessian(&x));
            best = best.max(eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max));
        }
        best
    }

    /// `D(t, y) = g|∇V|^2 + (y, ∇V)/(r + t) - ΔV/2`; nonnegative `D` makes
    /// `V(Y)` a local supermartingale.
    pub fn supermartingale_drift(&self, gain: f64, r_plus_t: f64, y: &[f64]) -> f64 {
        let grad = self.gradient(y);
        let sq: f64 = grad.iter().map(|v| v * v).sum();
        let inner: f64 = grad.iter().zip(y).map(|(a, b)| a * b).sum();
        gain * sq + inner / r_plus_t - 0.5 * self.laplacian(y)
    }

    /// Index of the critical point nearest to `y`.
    pub fn nearest_critical_point(&self, y: &[f64]) -> Option<(usize, f64)> {
        self.critical_points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, distance(&p.location, y)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Smallest pairwise distance between critical points.
    pub fn critical_separation(&self) -> f64 {
        let pts = &self.critical_points;
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min(distance(&pts[i].location, &pts[j].location));
            }
        }
        best
    }
}

/// Outcome of the grid-based hypothesis checks. Advisory only: a finite
/// sample cannot certify asymptotic statements.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// Smallest `a` with `ΔV <= a (1 + V)` on the samples.
    pub fitted_a: f64,
    /// `min |∇V|^2 / V` over the shell `|x| ∈ [R/2, R]`.
    pub growth_ratio_outer_min: f64,
    /// Same over `|x| ∈ [R/4, R/2]`.
    pub growth_ratio_inner_min: f64,
    pub nonnegative: bool,
    /// `|∇V|^2/V` grows from the inner to the outer shell (10% slack).
    pub growth_ratio_unbounded: bool,
    /// Hessian form `>= c - 1e-8` along random directions beyond the
    /// support radius of the nonconvex part.
    pub convex_outside_support: bool,
    pub notes: Vec<String>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.nonnegative && self.growth_ratio_unbounded && self.convex_outside_support
    }
}

/// Grid checks of positivity, the Laplacian growth bound, the growth of
/// `|∇V|^2/V` and convexity outside a compact set.
pub fn check_hypotheses(p: &PotentialSpec, radius: f64, samples: usize) -> Result<HypothesisReport> {
    if samples < 100 {
        return Err(Error::invalid("hypothesis check needs at least 100 samples"));
    }
    if !(radius > 0.0) {
        return Err(Error::invalid("grid radius must be positive"));
    }
    let d = p.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(0x4879_7053);
    let points: Vec<Vec<f64>> = if d == 1 {
        (0..samples)
            .map(|i| vec![-radius + 2.0 * radius * i as f64 / (samples - 1) as f64])
            .collect()
    } else {
        (0..samples)
            .map(|i| {
                let mut u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let un = norm(&u);
                // radii spread evenly so every shell is populated
                let rho = radius * (i as f64 + 0.5) / samples as f64;
                u.iter_mut().for_each(|v| *v *= rho / un);
                u
            })
            .collect()
    };

    let mut fitted_a: f64 = 0.0;
    let mut nonnegative = true;
    let mut outer = f64::INFINITY;
    let mut inner = f64::INFINITY;
    let mut convex = true;
    let c = p.convexity_constant;
    for x in &points {
        let v = p.value(x);
        if v < -1e-12 {
            nonnegative = false;
        }
        fitted_a = fitted_a.max(p.laplacian(x) / (1.0 + v.max(0.0)));
        let r = norm(x);
        if v > 0.0 {
            let g2: f64 = p.gradient(x).iter().map(|g| g * g).sum();
            let ratio = g2 / v;
            if r >= 0.5 * radius && r <= radius {
                outer = outer.min(ratio);
            } else if r >= 0.25 * radius && r < 0.5 * radius {
                inner = inner.min(ratio);
            }
        }
        if r > p.chi_support_radius {
            let h = p.hessian(x);
            for _ in 0..4 {
                let mut u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let un = norm(&u);
                u.iter_mut().for_each(|v| *v /= un);
                let uv = DVector::from_vec(u);
                let form = uv.dot(&(&h * &uv));
                if form < c - HESSIAN_BOUND_TOL {
                    convex = false;
                }
            }
        }
    }
    let growth_ratio_unbounded = outer.is_finite() && inner.is_finite() && outer > 1.1 * inner;
    let mut notes = p.warnings.clone();
    if !growth_ratio_unbounded {
        notes.push(format!(
            "|∇V|^2/V does not grow between shells (inner min {inner:.4e}, outer min {outer:.4e})"
        ));
    }
    notes.push("grid check only: limits at infinity cannot be certified numerically".into());
    Ok(HypothesisReport {
        fitted_a,
        growth_ratio_outer_min: outer,
        growth_ratio_inner_min: inner,
        nonnegative,
        growth_ratio_unbounded,
        convex_outside_support: convex,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let q = make_quadratic(1.0, 1).unwrap();
        assert_eq!(q.value(&[2.0]), 2.0);
        assert_eq!(q.gradient(&[2.0]), vec![2.0]);
        assert_eq!(q.laplacian(&[2.0]), 1.0);
        assert_eq!(q.gradient(&[0.0]), vec![0.0]);
        assert_eq!(q.critical_points()[0].kind, CriticalKind::LocalMin);

        let q = make_quadratic(3.0, 2).unwrap();
        assert_eq!(q.value(&[1.0, 1.0]), 3.0);
        assert_eq!(q.gradient(&[1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(q.laplacian(&[1.0, 1.0]), 6.0);
    }

    #[test]
    fn quadratic_rejects_nonpositive_stiffness() {
        assert!(make_quadratic(0.0, 1).is_err());
        assert!(make_quadratic(-1.0, 2).is_err());
        assert!(make_quadratic(f64::NAN, 1).is_err());
    }

    #[test]
    fn double_well_critical_points() {
        let v = double_well();
        let pts = v.critical_points();
        assert_eq!(pts.len(), 3);
        let expect = [(-1.0, CriticalKind::LocalMin), (0.0, CriticalKind::LocalMax), (1.0, CriticalKind::LocalMin)];
        for (p, (loc, kind)) in pts.iter().zip(expect) {
            assert!((p.location[0] - loc).abs() < 1e-12);
            assert_eq!(p.kind, kind);
        }
        assert!((v.value(&[0.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_wells_critical_points() {
        let v = asymmetric_wells(2.0).unwrap();
        let kinds: Vec<_> = v.critical_points().iter().map(|p| (p.location[0], p.kind)).collect();
        assert_eq!(kinds.len(), 3);
        assert!((kinds[0].0).abs() < 1e-12 && kinds[0].1 == CriticalKind::LocalMin);
        assert!((kinds[1].0 - 1.0).abs() < 1e-12 && kinds[1].1 == CriticalKind::LocalMax);
        assert!((kinds[2].0 - 2.0).abs() < 1e-12 && kinds[2].1 == CriticalKind::LocalMin);
    }

    #[test]
    fn growth_ratio_increases_for_double_well() {
        // |∇V|^2 / V = (x^3 - x)^2 / ((x^2 - 1)^2 / 4) = 4 x^2
        let v = double_well();
        let ratio = |x: f64| v.gradient(&[x])[0].powi(2) / v.value(&[x]);
        let r: Vec<f64> = [5.0, 10.0, 20.0].iter().map(|&x| ratio(x)).collect();
        assert!((r[1] - 400.0).abs() < 1e-6);
        assert!(r[0] < r[1] && r[1] < r[2]);
    }

    #[test]
    fn degenerate_critical_point_rejected() {
        // V = x^4: V'' vanishes at the only critical point.
        let err = make_polynomial_multiwell(&[0.0, 0.0, 0.0, 0.0, 1.0], &[0.3, -0.2]).unwrap_err();
        assert!(matches!(err, Error::DegenerateCriticalPoint { .. }), "{err}");
    }

    #[test]
    fn zero_and_negative_polynomials_rejected() {
        assert!(make_polynomial_multiwell(&[0.0, 0.0, 0.0], &[0.0]).is_err());
        // x^4 - x^2 dips below zero.
        assert!(make_polynomial_multiwell(&[0.0, 0.0, -1.0, 0.0, 1.0], &[0.5]).is_err());
        // odd degree
        assert!(make_polynomial_multiwell(&[0.0, 0.0, 0.0, 1.0], &[0.5]).is_err());
    }

    #[test]
    fn hypothesis_report_quadratic_fails_growth() {
        let q = make_quadratic(1.0, 1).unwrap();
        let rep = check_hypotheses(&q, 10.0, 1001).unwrap();
        assert!(rep.fitted_a >= 1.0);
        assert!((rep.fitted_a - 1.0).abs() < 1e-12);
        assert!(!rep.growth_ratio_unbounded);
        assert!((rep.growth_ratio_outer_min - 2.0).abs() < 1e-12);
        assert!(rep.nonnegative && rep.convex_outside_support);
        assert!(!q.warnings().is_empty());
    }

    #[test]
    fn hypothesis_report_double_well_passes() {
        let rep = check_hypotheses(&double_well(), 20.0, 2001).unwrap();
        assert!(rep.growth_ratio_unbounded);
        assert!(rep.nonnegative);
        assert!(rep.convex_outside_support);
        assert!(rep.all_pass());
    }

    #[test]
    fn hypothesis_check_needs_samples() {
        assert!(check_hypotheses(&double_well(), 10.0, 10).is_err());
    }

    #[test]
    fn bump_has_saddle_and_two_minima() {
        let starts: Vec<Vec<f64>> = (-8..=8)
            .flat_map(|i| (-4..=4).map(move |j| vec![0.25 * i as f64, 0.25 * j as f64]))
            .collect();
        let v = make_bump(vec![1.0, 2.0], 1.5, 1.0, &starts).unwrap();
        let mut kinds: Vec<_> = v.critical_points().iter().map(|p| p.kind).collect();
        kinds.sort_by_key(|k| *k as u8);
        assert_eq!(kinds, vec![CriticalKind::LocalMin, CriticalKind::LocalMin, CriticalKind::Saddle]);
        let x_star = (2.0f64 * 1.5f64.ln()).sqrt();
        for m in v.minima() {
            assert!((m.location[0].abs() - x_star).abs() < 1e-10);
            assert!(m.location[1].abs() < 1e-12);
        }
        let saddle = v.critical_points().iter().find(|p| p.kind == CriticalKind::Saddle).unwrap();
        let dir = saddle.unstable_direction.as_ref().unwrap();
        assert!((dir[0].abs() - 1.0).abs() < 1e-12);
        assert!((saddle.taylor_constant - 0.5).abs() < 1e-12);
    }

    #[test]
    fn polynomial_from_roots() {
        let p = Polynomial::from_roots(&[1.0, -1.0], 1.0);
        assert_eq!(p.coefficients(), &[-1.0, 0.0, 1.0]);
        let (v, dv, ddv) = p.eval_with_derivatives(3.0);
        assert_eq!((v, dv, ddv), (8.0, 6.0, 2.0));
    }
}
