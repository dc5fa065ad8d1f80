//! Tamed Euler–Maruyama integration of the `(Y, μ̄)` system
//!
//! ```text
//! dY = dB - g(t) ∇V(Y) dt - Y dt / (r + t),    dμ̄ = Y dt / (r + t)
//! ```
//!
//! with `X = Y + μ̄` reconstructed at record time.

mod exact;
mod flow;

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gain::GainSchedule;
use crate::potentials::PotentialSpec;

pub use exact::{exact_quadratic_path, ExactSampler};
pub use flow::{integrate_flow, integrate_flow_dense, FLOW_TOLERANCE};

/// A step counts as tamed when `dt |b|` exceeds this.
pub const TAMING_THRESHOLD: f64 = 0.1;

/// Quadrature used for the `μ̄` sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuBarRule {
    /// `dt · ((Y + Y') / 2) / (r + t + dt / 2)`.
    #[default]
    Midpoint,
    /// `dt · Y / (r + t)`.
    LeftPoint,
}

/// Everything needed to simulate an ensemble.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub potential: PotentialSpec,
    pub gain: GainSchedule,
    pub r: f64,
    pub x0: Vec<f64>,
    pub mu_bar0: Vec<f64>,
    pub horizon: f64,
    pub dt_base: f64,
    /// Record every k-th step (the first and last states are always kept).
    pub decimation: usize,
    pub seed: u64,
    pub n_paths: usize,
    /// Multiplies the Brownian increments; 0 gives the deterministic system.
    pub noise_scale: f64,
    pub mu_bar_rule: MuBarRule,
}

impl SimConfig {
    /// Defaults: `r = 1`, start at the origin, `T = 10`, `dt_base = 0.01`,
    /// decimation 100, seed 0, one path.
    pub fn new(potential: PotentialSpec, gain: GainSchedule) -> Self {
        let d = potential.dimension();
        SimConfig {
            potential,
            gain,
            r: 1.0,
            x0: vec![0.0; d],
            mu_bar0: vec![0.0; d],
            horizon: 10.0,
            dt_base: 0.01,
            decimation: 100,
            seed: 0,
            n_paths: 1,
            noise_scale: 1.0,
            mu_bar_rule: MuBarRule::Midpoint,
        }
    }

    pub fn dimension(&self) -> usize {
        self.potential.dimension()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::invalid("r must be positive"));
        }
        if self.x0.len() != d || self.mu_bar0.len() != d {
            return Err(Error::invalid(format!("x0 and mu_bar0 must have dimension {d}")));
        }
        if self.x0.iter().chain(&self.mu_bar0).any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("horizon must be finite and non-negative"));
        }
        if !(self.dt_base > 0.0) || !self.dt_base.is_finite() {
            return Err(Error::invalid("dt_base must be positive"));
        }
        if self.decimation == 0 {
            return Err(Error::invalid("decimation must be at least 1"));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::invalid("noise_scale must be non-negative"));
        }
        Ok(())
    }

    /// Radius of the box the diffusion is expected to stay in.
    pub fn state_radius(&self) -> f64 {
        let start: f64 = self
            .x0
            .iter()
            .zip(&self.mu_bar0)
            .map(|(x, m)| (x - m).abs())
            .fold(0.0, f64::max);
        let crit = self
            .potential
            .critical_points()
            .iter()
            .flat_map(|c| c.location.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        2.0 * start.max(crit).max(1.0)
    }

    /// Stability diagnostic `dt_base · g(T) · Lip(∇V)` on the state box.
    pub fn stability_number(&self) -> f64 {
        self.dt_base * self.gain.g(self.horizon) * self.potential.lipschitz_bound(self.state_radius())
    }

    /// Actual step `dt(t) = dt_base / (1 + g(t))`.
    #[inline]
    pub fn dt_at(&self, t: f64) -> f64 {
        let g = self.gain.g(t);
        self.dt_base.min(self.dt_base / (1.0 + g))
    }

    /// Number of steps to the horizon (identical for every path).
    pub fn step_count(&self) -> usize {
        let mut t = 0.0;
        let mut n = 0;
        while t < self.horizon {
            t = next_time(self, t).0;
            n += 1;
        }
        n
    }
}

/// Next grid time and step length; the last step lands on the horizon.
#[inline]
fn next_time(cfg: &SimConfig, t: f64) -> (f64, f64) {
    next_time_with_gain(cfg, t, cfg.gain.g(t))
}

#[inline(always)]
fn next_time_with_gain(cfg: &SimConfig, t: f64, g: f64) -> (f64, f64) {
    let dt = cfg.dt_base.min(cfg.dt_base / (1.0 + g));
    let remaining = cfg.horizon - t;
    // Avoid a sliver step when the horizon is within rounding reach.
    if dt >= remaining * (1.0 - 1e-9) {
        (cfg.horizon, remaining)
    } else {
        (t + dt, dt)
    }
}

/// State of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub y: Vec<f64>,
    pub mu_bar: Vec<f64>,
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// `dt |b|` before taming.
    pub taming_load: f64,
}

impl StepInfo {
    pub fn tamed(&self) -> bool {
        self.taming_load > TAMING_THRESHOLD
    }
}

/// The drift data shared by every step.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics<'a> {
    pub potential: &'a PotentialSpec,
    pub gain: &'a GainSchedule,
    pub r: f64,
    pub mu_bar_rule: MuBarRule,
}

impl<'a> Dynamics<'a> {
    pub fn of(cfg: &'a SimConfig) -> Self {
        Dynamics {
            potential: &cfg.potential,
            gain: &cfg.gain,
            r: cfg.r,
            mu_bar_rule: cfg.mu_bar_rule,
        }
    }

    /// Advance `state` by `dt` with Brownian increment `noise` (covariance
    /// `dt · Id`). `grad` is scratch space of the state dimension.
    #[inline]
    pub fn step(&self, state: &mut State, dt: f64, noise: &[f64], grad: &mut [f64]) -> Result<StepInfo> {
        let g = self.gain.g(state.t);
        self.step_with_gain(state, g, dt, noise, grad)
    }

    /// [`Self::step`] with `g(t)` already evaluated.
    #[inline]
    fn step_with_gain(&self, state: &mut State, g: f64, dt: f64, noise: &[f64], grad: &mut [f64]) -> Result<StepInfo> {
        let t = state.t;
        self.potential.gradient_into(&state.y, grad);
        let norm_b = g * grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let load = dt * norm_b;
        let tame = g / (1.0 + load);
        let inv_rt = 1.0 / (self.r + t);
        let mid_weight = 0.5 * dt / (self.r + t + 0.5 * dt);
        let mut finite = true;
        for k in 0..state.y.len() {
            let y = state.y[k];
            let y_next = y + noise[k] - dt * tame * grad[k] - dt * y * inv_rt;
            state.mu_bar[k] += match self.mu_bar_rule {
                MuBarRule::Midpoint => mid_weight * (y + y_next),
                MuBarRule::LeftPoint => dt * y * inv_rt,
            };
            state.y[k] = y_next;
            finite &= y_next.is_finite() && state.mu_bar[k].is_finite();
        }
        state.t = t + dt;
        if !finite || !load.is_finite() {
            return Err(Error::BlowUp { t, path_index: 0 });
        }
        Ok(StepInfo { taming_load: load })
    }

    /// Scalar version of the step; returns `(Y', Δμ̄, dt |b|)`.
    #[inline(always)]
    fn step_scalar(&self, t: f64, g: f64, y: f64, dt: f64, noise: f64) -> (f64, f64, f64) {
        let mut grad = 0.0;
        self.potential
            .gradient_into(std::slice::from_ref(&y), std::slice::from_mut(&mut grad));
        let load = dt * g * grad.abs();
        let y_next = y + noise - dt * (g / (1.0 + load)) * grad - dt * y / (self.r + t);
        let dm = match self.mu_bar_rule {
            MuBarRule::Midpoint => 0.5 * dt * (y + y_next) / (self.r + t + 0.5 * dt),
            MuBarRule::LeftPoint => dt * y / (self.r + t),
        };
        (y_next, dm, load)
    }
}

/// One tamed Euler–Maruyama step of `(t, Y, μ̄)`.
pub fn step_y(cfg: &SimConfig, state: &State, dt: f64, noise: &[f64]) -> Result<(State, StepInfo)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let mut next = state.clone();
    let mut grad = vec![0.0; state.y.len()];
    let info = Dynamics::of(cfg).step(&mut next, dt, noise, &mut grad)?;
    Ok((next, info))
}

/// A simulated path, decimated.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub dimension: usize,
    pub times: Vec<f64>,
    /// Row-major `times.len() × dimension`.
    pub y: Vec<f64>,
    pub mu_bar: Vec<f64>,
    pub x: Vec<f64>,
    pub terminal_y: Vec<f64>,
    /// `∫_0^t Y_s ds / (r + s)` at the last step, accumulated separately
    /// from `μ̄`.
    pub mu_bar_integral_tail: Vec<f64>,
    pub seed_stream_id: u64,
    pub steps: u64,
    pub tamed_steps: u64,
    /// Time of the step that produced a non-finite state.
    pub blow_up: Option<f64>,
}

impl PathRecord {
    fn new(dimension: usize, seed_stream_id: u64, capacity: usize) -> Self {
        PathRecord {
            dimension,
            times: Vec::with_capacity(capacity),
            y: Vec::with_capacity(capacity * dimension),
            mu_bar: Vec::with_capacity(capacity * dimension),
            x: Vec::with_capacity(capacity * dimension),
            terminal_y: vec![0.0; dimension],
            mu_bar_integral_tail: vec![0.0; dimension],
            seed_stream_id,
            steps: 0,
            tamed_steps: 0,
            blow_up: None,
        }
    }

    pub(crate) fn push(&mut self, t: f64, y: &[f64], mu_bar: &[f64]) {
        self.times.push(t);
        self.y.extend_from_slice(y);
        self.mu_bar.extend_from_slice(mu_bar);
        self.x.extend(y.iter().zip(mu_bar).map(|(a, b)| a + b));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn y_at(&self, i: usize) -> &[f64] {
        &self.y[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn mu_bar_at(&self, i: usize) -> &[f64] {
        &self.mu_bar[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn x_at(&self, i: usize) -> &[f64] {
        &self.x[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Component `k` of `Y` along the recorded times.
    pub fn y_component(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.y.iter().skip(k).step_by(self.dimension).copied()
    }

    pub fn x_component(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().skip(k).step_by(self.dimension).copied()
    }

    pub fn mu_bar_component(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.mu_bar.iter().skip(k).step_by(self.dimension).copied()
    }

    pub fn terminal_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn terminal_mu_bar(&self) -> &[f64] {
        self.mu_bar_at(self.len() - 1)
    }

    pub fn terminal_x(&self) -> &[f64] {
        self.x_at(self.len() - 1)
    }

    pub fn tamed_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.tamed_steps as f64 / self.steps as f64
        }
    }

    /// Write `t, X_1..X_d, Y_1..Y_d, mubar_1..mubar_d`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_paths_csv(std::slice::from_ref(self), out, false)
    }
}

/// Full-resolution hook called at `t = 0` and after every step.
pub trait StepObserver {
    /// Return `false` to stop the path early.
    fn observe(&mut self, t: f64, y: &[f64], mu_bar: &[f64]) -> bool;
}

/// Observer that never stops the path.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl StepObserver for NoObserver {
    #[inline]
    fn observe(&mut self, _: f64, _: &[f64], _: &[f64]) -> bool {
        true
    }
}

impl<F: FnMut(f64, &[f64], &[f64]) -> bool> StepObserver for F {
    #[inline]
    fn observe(&mut self, t: f64, y: &[f64], mu_bar: &[f64]) -> bool {
        self(t, y, mu_bar)
    }
}

/// Deterministic per-path generator: stream `path_index` of the seed.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

pub fn simulate_path(cfg: &SimConfig, path_index: u64) -> Result<PathRecord> {
    simulate_path_observed(cfg, path_index, &mut NoObserver)
}

/// Simulate one path, feeding every step to `observer`.
pub fn simulate_path_observed<O: StepObserver>(cfg: &SimConfig, path_index: u64, observer: &mut O) -> Result<PathRecord> {
    cfg.validate()?;
    if path_index >= cfg.n_paths as u64 {
        return Err(Error::invalid(format!("path index {path_index} out of range (n_paths = {})", cfg.n_paths)));
    }
    let d = cfg.dimension();
    let mut rng = path_rng(cfg.seed, path_index);
    let y0: Vec<f64> = cfg.x0.iter().zip(&cfg.mu_bar0).map(|(x, m)| x - m).collect();
    let mut record = PathRecord::new(d, path_index, 1024);
    record.push(0.0, &y0, &cfg.mu_bar0);
    if d == 1 {
        simulate_scalar(cfg, &mut rng, y0[0], observer, &mut record);
    } else {
        simulate_vector(cfg, &mut rng, y0, observer, &mut record);
    }
    let last = record.len() - 1;
    record.terminal_y = record.y_at(last).to_vec();
    Ok(record)
}

fn simulate_scalar<O: StepObserver>(cfg: &SimConfig, rng: &mut ChaCha8Rng, y0: f64, observer: &mut O, record: &mut PathRecord) {
    let dynamics = Dynamics::of(cfg);
    let (mut t, mut y, mut m) = (0.0, y0, cfg.mu_bar0[0]);
    let mut tail = 0.0;
    let mut keep_going = observer.observe(0.0, &[y], &[m]);
    let mut since_record = 0usize;
    while keep_going && t < cfg.horizon {
        let g = cfg.gain.g(t);
        let (t_next, dt) = next_time_with_gain(cfg, t, g);
        let z: f64 = rng.sample(StandardNormal);
        let noise = dt.sqrt() * cfg.noise_scale * z;
        let (y_next, dm, load) = dynamics.step_scalar(t, g, y, dt, noise);
        record.steps += 1;
        if !(y_next.is_finite() && dm.is_finite() && load.is_finite()) {
            record.blow_up = Some(t);
            break;
        }
        if load > TAMING_THRESHOLD {
            record.tamed_steps += 1;
        }
        y = y_next;
        m += dm;
        tail += dm;
        t = t_next;
        since_record += 1;
        keep_going = observer.observe(t, &[y], &[m]);
        if since_record == cfg.decimation || t >= cfg.horizon || !keep_going {
            record.push(t, &[y], &[m]);
            since_record = 0;
        }
    }
    record.mu_bar_integral_tail = vec![tail];
}

fn simulate_vector<O: StepObserver>(cfg: &SimConfig, rng: &mut ChaCha8Rng, y0: Vec<f64>, observer: &mut O, record: &mut PathRecord) {
    let d = y0.len();
    let dynamics = Dynamics::of(cfg);
    let mut state = State {
        t: 0.0,
        y: y0,
        mu_bar: cfg.mu_bar0.clone(),
    };
    let mut noise = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut tail = vec![0.0; d];
    let mut before = vec![0.0; d];
    let mut keep_going = observer.observe(0.0, &state.y, &state.mu_bar);
    let mut since_record = 0usize;
    while keep_going && state.t < cfg.horizon {
        let g = cfg.gain.g(state.t);
        let (t_next, dt) = next_time_with_gain(cfg, state.t, g);
        let sd = dt.sqrt() * cfg.noise_scale;
        for n in noise.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *n = sd * z;
        }
        let t = state.t;
        before.copy_from_slice(&state.mu_bar);
        record.steps += 1;
        match dynamics.step_with_gain(&mut state, g, dt, &noise, &mut grad) {
            Ok(info) => {
                if info.tamed() {
                    record.tamed_steps += 1;
                }
            }
            Err(_) => {
                record.blow_up = Some(t);
                break;
            }
        }
        state.t = t_next;
        for k in 0..d {
            tail[k] += state.mu_bar[k] - before[k];
        }
        since_record += 1;
        keep_going = observer.observe(state.t, &state.y, &state.mu_bar);
        if since_record == cfg.decimation || state.t >= cfg.horizon || !keep_going {
            record.push(state.t, &state.y, &state.mu_bar);
            since_record = 0;
        }
    }
    record.mu_bar_integral_tail = tail;
}

/// Terminal `Y` of path `path_index` at step sizes `h`, `h/2`, ...,
/// `h / 2^(levels-1)` with `h = dt_at(0)`, all driven by one Brownian path
/// (coarse increments are sums of fine ones). Needs a fixed step, i.e. a
/// constant gain, and a horizon that is a whole number of coarse steps.
pub fn coupled_terminal_y(cfg: &SimConfig, levels: usize, path_index: u64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if levels == 0 || levels > 20 {
        return Err(Error::invalid("levels must lie in 1..=20"));
    }
    let coarse = cfg.dt_at(0.0);
    if (cfg.dt_at(cfg.horizon) - coarse).abs() > 1e-15 * coarse {
        return Err(Error::invalid("coupled runs need a constant gain"));
    }
    let n_coarse = (cfg.horizon / coarse).round();
    if (n_coarse * coarse - cfg.horizon).abs() > 1e-9 * cfg.horizon.max(1.0) {
        return Err(Error::invalid("horizon must be a whole number of coarse steps"));
    }
    let d = cfg.dimension();
    let fine_per_coarse = 1usize << (levels - 1);
    let fine_dt = coarse / fine_per_coarse as f64;
    let dynamics = Dynamics::of(cfg);
    let mut rng = path_rng(cfg.seed, path_index);
    let y0: Vec<f64> = cfg.x0.iter().zip(&cfg.mu_bar0).map(|(x, m)| x - m).collect();
    let mut states: Vec<State> = (0..levels)
        .map(|_| State {
            t: 0.0,
            y: y0.clone(),
            mu_bar: cfg.mu_bar0.clone(),
        })
        .collect();
    let mut fine = vec![0.0; fine_per_coarse * d];
    let mut noise = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let sd = fine_dt.sqrt() * cfg.noise_scale;
    for step in 0..n_coarse as usize {
        for v in fine.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = sd * z;
        }
        // Level k takes 2^k steps per coarse step.
        for (k, state) in states.iter_mut().enumerate() {
            let sub = 1usize << k;
            let block = fine_per_coarse / sub;
            let h = coarse / sub as f64;
            for j in 0..sub {
                noise.iter_mut().for_each(|n| *n = 0.0);
                for f in 0..block {
                    let row = (j * block + f) * d;
                    for c in 0..d {
                        noise[c] += fine[row + c];
                    }
                }
                dynamics.step(state, h, &noise, &mut grad).map_err(|_| Error::BlowUp {
                    t: state.t,
                    path_index,
                })?;
            }
            // Pin the clock to the coarse grid.
            state.t = (step + 1) as f64 * coarse;
        }
    }
    Ok(states.into_iter().map(|s| s.y).collect())
}

/// Worker count: `threads` if given, else rayon's default.
pub fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Simulate all `n_paths` paths in parallel; results are in path order
/// and do not depend on the worker count.
pub fn run_ensemble(cfg: &SimConfig, threads: Option<usize>) -> Result<Vec<PathRecord>> {
    cfg.validate()?;
    with_pool(threads, || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| simulate_path(cfg, i))
            .collect::<Result<Vec<_>>>()
    })?
}

/// As [`run_ensemble`], with a fresh observer per path returned alongside
/// each record.
pub fn run_ensemble_observed<O, F>(cfg: &SimConfig, threads: Option<usize>, make: F) -> Result<Vec<(PathRecord, O)>>
where
    O: StepObserver + Send,
    F: Fn(u64) -> O + Sync + Send,
{
    cfg.validate()?;
    with_pool(threads, || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut obs = make(i);
                simulate_path_observed(cfg, i, &mut obs).map(|rec| (rec, obs))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// Exact-sampler ensemble of a 1-D quadratic configuration on `times`.
pub fn run_exact_ensemble(cfg: &SimConfig, times: &[f64], threads: Option<usize>) -> Result<Vec<PathRecord>> {
    let sampler = exact::sampler_for(cfg, times)?;
    with_pool(threads, || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| sampler.sample(cfg.seed, i))
            .collect()
    })
}

/// [`coupled_terminal_y`] for every path.
pub fn run_coupled(cfg: &SimConfig, levels: usize, threads: Option<usize>) -> Result<Vec<Vec<Vec<f64>>>> {
    cfg.validate()?;
    with_pool(threads, || {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| coupled_terminal_y(cfg, levels, i))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Number of paths that produced a non-finite state.
pub fn blow_up_count(paths: &[PathRecord]) -> usize {
    paths.iter().filter(|p| p.blow_up.is_some()).count()
}

/// Write paths as CSV: `t, X_1..X_d, Y_1..Y_d, mubar_1..mubar_d`, with a
/// leading `path` column when `with_path_column` is set.
pub fn write_paths_csv<W: Write>(paths: &[PathRecord], out: W, with_path_column: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = paths.first().map_or(1, |p| p.dimension);
    let mut header = Vec::new();
    if with_path_column {
        header.push("path".to_string());
    }
    header.push("t".to_string());
    for prefix in ["X", "Y", "mubar"] {
        header.extend((1..=d).map(|k| format!("{prefix}_{k}")));
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for p in paths {
        for i in 0..p.len() {
            row.clear();
            if with_path_column {
                row.push(p.seed_stream_id.to_string());
            }
            row.push(p.times[i].to_string());
            row.extend(p.x_at(i).iter().map(f64::to_string));
            row.extend(p.y_at(i).iter().map(f64::to_string));
            row.extend(p.mu_bar_at(i).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io("<paths csv>", e))?;
    Ok(())
}

pub fn write_paths_csv_file(paths: &[PathRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_paths_csv(paths, std::io::BufWriter::new(file), true)
}

/// Per-time ensemble mean and variance of each component.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub dimension: usize,
    pub times: Vec<f64>,
    pub count: Vec<usize>,
    /// Row-major `times × dimension`.
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub var_y: Vec<f64>,
    pub mean_mu_bar: Vec<f64>,
    pub var_mu_bar: Vec<f64>,
}

/// Summarize on the record grid of the first path. Paths share the grid
/// (the step schedule is deterministic); shorter paths drop out of the
/// later rows.
pub fn summarize(paths: &[PathRecord]) -> Result<EnsembleSummary> {
    let first = paths.first().ok_or(Error::EmptyWindow)?;
    let d = first.dimension;
    let n_t = paths.iter().map(PathRecord::len).max().unwrap_or(0);
    let reference = paths.iter().find(|p| p.len() == n_t).expect("longest path");
    let mut s = EnsembleSummary {
        dimension: d,
        times: reference.times.clone(),
        count: vec![0; n_t],
        mean_x: vec![0.0; n_t * d],
        var_x: vec![0.0; n_t * d],
        mean_y: vec![0.0; n_t * d],
        var_y: vec![0.0; n_t * d],
        mean_mu_bar: vec![0.0; n_t * d],
        var_mu_bar: vec![0.0; n_t * d],
    };
    for i in 0..n_t {
        let rows: Vec<&PathRecord> = paths.iter().filter(|p| p.len() > i).collect();
        s.count[i] = rows.len();
        for k in 0..d {
            let idx = i * d + k;
            let stats = |get: &dyn Fn(&PathRecord) -> f64| {
                let n = rows.len() as f64;
                let mean = rows.iter().map(|p| get(p)).sum::<f64>() / n;
                let var = if rows.len() > 1 {
                    rows.iter().map(|p| (get(p) - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                (mean, var)
            };
            (s.mean_x[idx], s.var_x[idx]) = stats(&|p| p.x[idx]);
            (s.mean_y[idx], s.var_y[idx]) = stats(&|p| p.y[idx]);
            (s.mean_mu_bar[idx], s.var_mu_bar[idx]) = stats(&|p| p.mu_bar[idx]);
        }
    }
    Ok(s)
}

impl EnsembleSummary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dimension;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "n".to_string()];
        for name in ["mean_X", "var_X", "mean_Y", "var_Y", "mean_mubar", "var_mubar"] {
            header.extend((1..=d).map(|k| format!("{name}_{k}")));
        }
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string(), self.count[i].to_string()];
            for col in [&self.mean_x, &self.var_x, &self.mean_y, &self.var_y, &self.mean_mu_bar, &self.var_mu_bar] {
                row.extend(col[i * d..(i + 1) * d].iter().map(f64::to_string));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<summary csv>", e))?;
        Ok(())
    }
}
