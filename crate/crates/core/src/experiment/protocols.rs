//! What each experiment measures and asserts.

use statrs::distribution::{ContinuousCDF, Normal};

use super::{Check, Diagnostic, ExperimentConfig, Report, Sampler};
use crate::diagnostics::{
    apt_deviation, classify_terminal, lil_envelope_check, occupation_measure, occupation_measure_centered, tail_oscillation,
    trichotomy, weak_order_ratio, Centering, EmpiricalMeasure, TrichotomyLabel, TrichotomyVerdict, Which, FOURIER_FREQUENCIES,
};
use crate::error::{Error, Result};
use crate::oracle::{QuadraticLaw, ORACLE_REL_TOL};
use crate::potentials::{CriticalKind, PotentialSpec};
use crate::simulator::{
    run_coupled, run_ensemble, run_ensemble_observed, run_exact_ensemble, summarize, write_paths_csv, PathRecord,
    SimConfig, StepObserver,
};

/// Above this many CSV rows a free-form run skips `paths.csv`.
const MAX_PATH_ROWS: usize = 1_000_000;
/// Combined standard errors allowed in oracle comparisons.
const Z_LIMIT: f64 = 4.0;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    threads: Option<usize>,
    report: &'a mut Report,
}

impl Ctx<'_> {
    fn account(&mut self, paths: &[PathRecord]) {
        self.report.paths_run += paths.len();
        for p in paths {
            if p.blow_up.is_some() {
                self.report.blow_ups += 1;
            }
            self.report.max_tamed_fraction = self.report.max_tamed_fraction.max(p.tamed_fraction());
        }
    }

    /// Simulate, account, and drop blown-up paths.
    fn simulate(&mut self, sim: &SimConfig) -> Result<Vec<PathRecord>> {
        let paths = match self.cfg.sampler {
            Sampler::Euler => run_ensemble(sim, self.threads)?,
            Sampler::Exact => {
                let mut grid = self.cfg.exact_grid();
                let scale = sim.horizon / self.cfg.sim.horizon;
                grid.iter_mut().for_each(|t| *t *= scale);
                run_exact_ensemble(sim, &grid, self.threads)?
            }
        };
        self.account(&paths);
        Ok(live(paths))
    }

    fn push(&mut self, check: Check) {
        self.report.checks.push(check);
    }
}

fn live(paths: Vec<PathRecord>) -> Vec<PathRecord> {
    paths.into_iter().filter(|p| p.blow_up.is_none()).collect()
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn fraction<T>(items: &[T], pred: impl Fn(&T) -> bool) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().filter(|x| pred(x)).count() as f64 / items.len() as f64
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Sample mean and variance with their standard errors.
struct Moments {
    n: f64,
    mean: f64,
    var: f64,
    m4: f64,
}

impl Moments {
    fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Moments { n, mean, var, m4 }
    }

    fn se_mean(&self) -> f64 {
        (self.var / self.n).sqrt()
    }

    fn se_var(&self) -> f64 {
        ((self.m4 - self.var * self.var).max(0.0) / self.n).sqrt()
    }
}

fn z_score(empirical: f64, se: f64, exact: f64) -> f64 {
    let oracle_se = ORACLE_REL_TOL * exact.abs().max(1.0);
    (empirical - exact) / se.hypot(oracle_se)
}

pub(crate) fn quadratic_law(sim: &SimConfig) -> Result<QuadraticLaw> {
    match sim.potential.quadratic_stiffness() {
        Some(c) if sim.dimension() == 1 => QuadraticLaw::new(c, sim.gain.clone(), sim.r, sim.x0[0], sim.mu_bar0[0]),
        _ => Err(Error::NotQuadratic { expected_dim: 1 }),
    }
}

pub(super) fn run(cfg: &ExperimentConfig, threads: Option<usize>, report: &mut Report) -> Result<()> {
    let mut ctx = Ctx { cfg, threads, report };
    match cfg.experiment.as_deref() {
        Some("quadratic_exact_law") => exact_law(&mut ctx),
        Some("quadratic_ergodic") => quadratic_ergodic(&mut ctx),
        Some("as_convergence") => as_convergence(&mut ctx),
        Some("ergodic_minima") => ergodic_minima(&mut ctx),
        Some("xt_over_logt") => xt_over_logt(&mut ctx),
        Some("lil_envelope") => lil_envelope(&mut ctx),
        Some("unstable_escape") => unstable_escape(&mut ctx),
        Some("apt_flow") => apt_flow(&mut ctx),
        Some("diffusive_regime") => diffusive_regime(&mut ctx),
        Some("determinism_numerics") => determinism_numerics(&mut ctx),
        Some("double_well_trichotomy") => double_well_trichotomy(&mut ctx),
        _ => free_form(&mut ctx),
    }
}

/// Terminal mean and variance of `Y` and `μ̄` against the exact law, plus
/// the oracle-vs-ensemble table on the record grid.
fn oracle_compare(ctx: &mut Ctx, paths: &[PathRecord], law: &QuadraticLaw) -> Result<()> {
    let summary = summarize(paths)?;
    let table = law.table(&summary.times)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .enumerate()
        .map(|(i, o)| {
            vec![
                fmt(o.t),
                fmt(o.mean_y),
                fmt(summary.mean_y[i]),
                fmt(o.var_y),
                fmt(summary.var_y[i]),
                fmt(o.mean_mubar),
                fmt(summary.mean_mu_bar[i]),
                fmt(o.var_mubar),
                fmt(summary.var_mu_bar[i]),
            ]
        })
        .collect();
    ctx.report.write_table(
        "oracle_vs_empirical.csv",
        &[
            "t",
            "oracle_mean_Y",
            "mean_Y",
            "oracle_var_Y",
            "var_Y",
            "oracle_mean_mubar",
            "mean_mubar",
            "oracle_var_mubar",
            "var_mubar",
        ],
        &rows,
    )?;

    // Terminal values from the paths themselves: early-stopped or
    // shorter paths would not line up with the grid.
    let t = paths.iter().map(|p| p.terminal_time()).fold(f64::NEG_INFINITY, f64::max);
    let at_end: Vec<&PathRecord> = paths.iter().filter(|p| p.terminal_time() == t).collect();
    let ys: Vec<f64> = at_end.iter().map(|p| p.terminal_y[0]).collect();
    let ms: Vec<f64> = at_end.iter().map(|p| p.terminal_mu_bar()[0]).collect();
    let mut rows = Vec::new();
    for (label, sample, (mean, var)) in [("Y", ys, law.law_of_y(t)?), ("mubar", ms, law.law_of_mubar(t)?)] {
        let m = Moments::of(&sample);
        let z_mean = z_score(m.mean, m.se_mean(), mean);
        let z_var = z_score(m.var, m.se_var(), var);
        let target = format!("|z| <= {Z_LIMIT}");
        ctx.push(Check::assert(format!("z mean_{label}(T)"), z_mean, &target, z_mean.abs() <= Z_LIMIT));
        ctx.push(Check::assert(format!("z var_{label}(T)"), z_var, &target, z_var.abs() <= Z_LIMIT));
        rows.push(vec![
            label.to_string(),
            fmt(t),
            fmt(mean),
            fmt(m.mean),
            fmt(m.se_mean()),
            fmt(var),
            fmt(m.var),
            fmt(m.se_var()),
            fmt(z_mean),
            fmt(z_var),
        ]);
    }
    ctx.report.write_table(
        "terminal_law.csv",
        &[
            "quantity",
            "t",
            "oracle_mean",
            "mean",
            "se_mean",
            "oracle_var",
            "var",
            "se_var",
            "z_mean",
            "z_var",
        ],
        &rows,
    )
}

fn exact_law(ctx: &mut Ctx) -> Result<()> {
    let law = quadratic_law(&ctx.cfg.sim)?;
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    oracle_compare(ctx, &paths, &law)
}

fn write_histogram(ctx: &mut Ctx, file: &str, m: &EmpiricalMeasure, k: usize, range: Option<(f64, f64)>, bins: usize) -> Result<()> {
    let h = match range {
        Some((lo, hi)) => m.histogram(k, lo, hi, bins)?,
        None => m.histogram_auto(k, bins)?,
    };
    let out = ctx.report.create(file)?;
    h.write_text(out)
}

fn quadratic_ergodic(ctx: &mut Ctx) -> Result<()> {
    let law = quadratic_law(&ctx.cfg.sim)?;
    let limit = law.limit_measure()?;
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    let occ = occupation_measure_centered(&paths, Which::X, ctx.cfg.diag.burn_in, Centering::TerminalMuBar)?;
    let var = occ.variance(0);
    let rel = var / limit.variance - 1.0;
    let ks = occ.ks_normal(0, 0.0, limit.variance)?;
    ctx.push(Check::info("oracle limit variance", limit.variance));
    ctx.push(Check::info("centered occupation variance", var));
    ctx.push(Check::assert("relative variance error", rel, "|.| <= 0.05", rel.abs() <= 0.05));
    ctx.push(Check::assert("KS distance to N(0, limit variance)", ks, "< 0.02", ks < 0.02));
    let mut rows = vec![vec![
        "variance".to_string(),
        fmt(limit.variance),
        fmt(var),
    ]];
    for u in FOURIER_FREQUENCIES {
        let emp = occ.expectation(|x| (u * x[0]).cos());
        let exact = (-0.5 * u * u * limit.variance).exp();
        ctx.push(Check::info(format!("characteristic function gap at u = {u}"), emp - exact));
        rows.push(vec![format!("re_phi_{u}"), fmt(exact), fmt(emp)]);
    }
    rows.push(vec!["ks".to_string(), "0".to_string(), fmt(ks)]);
    ctx.report.write_table("ergodic.csv", &["statistic", "oracle", "empirical"], &rows)?;
    let sd = limit.variance.sqrt();
    write_histogram(ctx, "occupation_X_centered.txt", &occ, 0, Some((-5.0 * sd, 5.0 * sd)), 100)
}

fn normal_abs_below(mean: f64, var: f64, bound: f64) -> f64 {
    if !(var > 0.0) {
        return if mean.abs() < bound { 1.0 } else { 0.0 };
    }
    let n = Normal::new(mean, var.sqrt()).expect("positive variance");
    n.cdf(bound) - n.cdf(-bound)
}

fn as_convergence(ctx: &mut Ctx) -> Result<()> {
    const Y_BOUND: f64 = 0.05;
    const OSC_BOUND: f64 = 0.02;
    const CAUCHY_BOUND: f64 = 0.01;
    let law = quadratic_law(&ctx.cfg.sim)?;
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    let horizon = ctx.cfg.sim.horizon;
    let mut rows = Vec::with_capacity(paths.len());
    let mut stats = Vec::with_capacity(paths.len());
    let mut t_half = 0.0;
    for p in &paths {
        let idx = p.times.partition_point(|&t| t <= 0.5 * horizon).saturating_sub(1);
        t_half = p.times[idx];
        let gap = p.terminal_mu_bar()[0] - p.mu_bar_at(idx)[0];
        let osc = tail_oscillation(p);
        stats.push((p.terminal_y[0], osc, gap));
        rows.push(vec![p.seed_stream_id.to_string(), fmt(p.terminal_y[0]), fmt(osc), fmt(gap)]);
    }
    ctx.report
        .write_table("as_convergence.csv", &["path", "Y_T", "tail_oscillation", "mubar_T_minus_mubar_half"], &rows)?;

    let small_y = fraction(&stats, |s| s.0.abs() < Y_BOUND);
    let settled = fraction(&stats, |s| s.1 < OSC_BOUND);
    let cauchy = fraction(&stats, |s| s.2.abs() < CAUCHY_BOUND);
    ctx.push(Check::assert(format!("fraction |Y_T| < {Y_BOUND}"), small_y, "= 1", small_y == 1.0));
    ctx.push(Check::assert(format!("fraction tail oscillation < {OSC_BOUND}"), settled, "= 1", settled == 1.0));
    ctx.push(Check::assert(format!("fraction |mubar_T - mubar_T/2| < {CAUCHY_BOUND}"), cauchy, ">= 0.99", cauchy >= 0.99));

    // What the exact law says these fractions should be.
    let (my, vy) = law.law_of_y(horizon)?;
    ctx.push(Check::info("oracle sd of Y_T", vy.sqrt()));
    ctx.push(Check::info(format!("oracle P(|Y_T| < {Y_BOUND})"), normal_abs_below(my, vy, Y_BOUND)));
    let (mh, vh) = law.law_of_y(t_half)?;
    let tr = law.transition(t_half, horizon)?;
    let gap_mean = tr.mean_gain * mh;
    let gap_var = tr.mean_gain * tr.mean_gain * vh + tr.var_mubar;
    ctx.push(Check::info(
        format!("oracle P(|mubar_T - mubar_T/2| < {CAUCHY_BOUND})"),
        normal_abs_below(gap_mean, gap_var, CAUCHY_BOUND),
    ));
    ctx.push(Check::info("median tail oscillation", median(&stats.iter().map(|s| s.1).collect::<Vec<_>>())));
    Ok(())
}

fn ergodic_minima(ctx: &mut Ctx) -> Result<()> {
    const RADIUS: f64 = 0.1;
    let p = ctx.cfg.sim.potential.clone();
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    let occ = occupation_measure(&paths, Which::Y, ctx.cfg.diag.burn_in)?;
    let minima: Vec<&[f64]> = p.minima().map(|c| c.location.as_slice()).collect();
    let unstable: Vec<&[f64]> = p
        .critical_points()
        .iter()
        .filter(|c| c.kind != CriticalKind::LocalMin)
        .map(|c| c.location.as_slice())
        .collect();
    let on_minima = occ.mass_near_any(&minima, RADIUS);
    let on_unstable = occ.mass_near_any(&unstable, RADIUS);
    ctx.push(Check::assert("occupation mass near minima", on_minima, ">= 0.98", on_minima >= 0.98));
    ctx.push(Check::assert("occupation mass near unstable points", on_unstable, "<= 0.01", on_unstable <= 0.01));
    classify_fractions(ctx, &paths, &p)?;
    if p.dimension() == 1 {
        write_histogram(ctx, "occupation_Y.txt", &occ, 0, Some((-2.0, 2.0)), 200)?;
    }
    Ok(())
}

/// Fraction of paths settled at each critical point: every minimum at
/// least 10%, unstable points none.
fn classify_fractions(ctx: &mut Ctx, paths: &[PathRecord], p: &PotentialSpec) -> Result<()> {
    let eps = ctx.cfg.diag.eps;
    let mut counts = vec![0usize; p.critical_points().len()];
    let mut undecided = 0usize;
    for path in paths {
        match classify_terminal(path, p, eps)? {
            Some(cp) => {
                let idx = p.critical_points().iter().position(|c| std::ptr::eq(c, cp)).expect("critical point of p");
                counts[idx] += 1;
            }
            None => undecided += 1,
        }
    }
    let n = paths.len().max(1) as f64;
    let mut rows = Vec::new();
    for (cp, &count) in p.critical_points().iter().zip(&counts) {
        let frac = count as f64 / n;
        let at = cp.location.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ");
        if cp.kind == CriticalKind::LocalMin {
            ctx.push(Check::assert(format!("fraction settled at minimum {at}"), frac, ">= 0.1", frac >= 0.1));
        } else {
            ctx.push(Check::assert(format!("fraction settled at {:?} {at}", cp.kind), frac, "= 0", count == 0));
        }
        rows.push(vec![at, format!("{:?}", cp.kind), fmt(frac)]);
    }
    ctx.push(Check::info("fraction undecided", undecided as f64 / n));
    rows.push(vec![String::new(), "Undecided".into(), fmt(undecided as f64 / n)]);
    ctx.report.write_table("classification.csv", &["location", "kind", "fraction"], &rows)
}

fn write_trichotomy(ctx: &mut Ctx, file: &str, v: &TrichotomyVerdict, d: usize) -> Result<()> {
    let out = ctx.report.create(file)?;
    v.write_csv(out, d)
}

fn xt_over_logt(ctx: &mut Ctx) -> Result<()> {
    let eps = ctx.cfg.diag.eps;
    let d = ctx.cfg.sim.dimension();
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    let v = trichotomy(&paths, &ctx.cfg.sim.potential, eps)?;
    write_trichotomy(ctx, "trichotomy.csv", &v, d)?;
    let rates: Vec<bool> = v
        .labels
        .iter()
        .filter_map(|l| match l {
            TrichotomyLabel::DivergedLogRate { y_inf, slope } => {
                Some(y_inf.iter().zip(slope).all(|(m, s)| (s - m).abs() <= 0.15 * m.abs()))
            }
            _ => None,
        })
        .collect();
    let good = fraction(&rates, |&ok| ok);
    ctx.push(Check::info("fraction DivergedLogRate", v.diverged));
    ctx.push(Check::info("fraction ConvergedToMubarInf", v.converged));
    ctx.push(Check::info("fraction Undecided", v.undecided));
    ctx.push(Check::assert(
        "fraction of diverged paths with slope within 15% of the minimum",
        good,
        ">= 0.95",
        !rates.is_empty() && good >= 0.95,
    ));

    let entry = ctx.cfg.experiment.as_deref().and_then(super::find);
    if let Some(extra) = entry.and_then(|e| e.companion) {
        let other = ctx.cfg.with_overrides(extra)?;
        let paths = ctx.simulate(&other.sim)?;
        let v = trichotomy(&paths, &other.sim.potential, eps)?;
        write_trichotomy(ctx, "trichotomy_companion.csv", &v, d)?;
        ctx.push(Check::assert("companion fraction ConvergedToMubarInf", v.converged, ">= 0.05", v.converged >= 0.05));
        ctx.push(Check::assert("companion fraction DivergedLogRate", v.diverged, ">= 0.05", v.diverged >= 0.05));
        ctx.push(Check::info("companion fraction Undecided", v.undecided));
    }
    Ok(())
}

fn double_well_trichotomy(ctx: &mut Ctx) -> Result<()> {
    let d = ctx.cfg.sim.dimension();
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    let v = trichotomy(&paths, &ctx.cfg.sim.potential, ctx.cfg.diag.eps)?;
    write_trichotomy(ctx, "trichotomy.csv", &v, d)?;
    ctx.push(Check::assert("fraction ConvergedToMubarInf", v.converged, "= 0", v.converged == 0.0));
    ctx.push(Check::assert("fraction DivergedLogRate", v.diverged, ">= 0.95", v.diverged >= 0.95));
    ctx.push(Check::info("fraction Undecided", v.undecided));
    Ok(())
}

/// The minimum nearest to the end of the path.
fn settled_minimum<'a>(p: &PathRecord, potential: &'a PotentialSpec) -> Option<&'a [f64]> {
    potential
        .minima()
        .map(|c| {
            let dist: f64 = c.location.iter().zip(&p.terminal_y).map(|(a, b)| (a - b) * (a - b)).sum();
            (dist, c.location.as_slice())
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, m)| m)
}

fn lil_fractions(ctx: &mut Ctx, paths: &[PathRecord], only_classified: bool) -> Result<Vec<f64>> {
    let p = &ctx.cfg.sim.potential;
    let mut out = Vec::new();
    let mut rows = Vec::new();
    for path in paths {
        let m = if only_classified {
            match classify_terminal(path, p, ctx.cfg.diag.eps)? {
                Some(cp) if cp.kind == CriticalKind::LocalMin => Some(cp.location.as_slice()),
                _ => None,
            }
        } else {
            settled_minimum(path, p)
        };
        let Some(m) = m else { continue };
        let f = lil_envelope_check(path, m, &ctx.cfg.sim.gain, ctx.cfg.diag.lil_t0)?;
        out.push(f);
        rows.push(vec![path.seed_stream_id.to_string(), fmt(f)]);
    }
    ctx.report.write_table("lil.csv", &["path", "fraction_inside"], &rows)?;
    Ok(out)
}

fn lil_envelope(ctx: &mut Ctx) -> Result<()> {
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    let fractions = lil_fractions(ctx, &paths, false)?;
    let med = median(&fractions);
    ctx.push(Check::assert("median fraction inside envelope", med, ">= 0.99", med >= 0.99));
    ctx.push(Check::info("minimum fraction inside envelope", quantile(&fractions, 0.0)));
    Ok(())
}

/// Stops a path at its first exit from a ball.
struct Escape {
    center: Vec<f64>,
    radius: f64,
    exit: Option<f64>,
}

impl StepObserver for Escape {
    fn observe(&mut self, t: f64, y: &[f64], _: &[f64]) -> bool {
        let dist: f64 = y.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dist > self.radius {
            self.exit = Some(t);
            false
        } else {
            true
        }
    }
}

fn unstable_escape(ctx: &mut Ctx) -> Result<()> {
    let sim = &ctx.cfg.sim;
    let y0: Vec<f64> = sim.x0.iter().zip(&sim.mu_bar0).map(|(x, m)| x - m).collect();
    let (idx, _) = sim
        .potential
        .nearest_critical_point(&y0)
        .ok_or_else(|| Error::invalid("potential has no critical points"))?;
    let center = sim.potential.critical_points()[idx].location.clone();
    let radius = ctx.cfg.diag.eps;
    let runs = run_ensemble_observed(sim, ctx.threads, |_| Escape {
        center: center.clone(),
        radius,
        exit: None,
    })?;
    let (paths, exits): (Vec<PathRecord>, Vec<Option<f64>>) = runs.into_iter().map(|(p, o)| (p, o.exit)).unzip();
    ctx.account(&paths);
    let rows: Vec<Vec<String>> = paths
        .iter()
        .zip(&exits)
        .map(|(p, e)| vec![p.seed_stream_id.to_string(), e.map(fmt).unwrap_or_default()])
        .collect();
    ctx.report.write_table("escape.csv", &["path", "exit_time"], &rows)?;
    let exited = fraction(&exits, |e| e.is_some_and(|t| t < sim.horizon));
    let times: Vec<f64> = exits.iter().flatten().copied().collect();
    ctx.push(Check::assert(format!("fraction leaving the {radius}-ball before t = {}", sim.horizon), exited, "= 1", exited == 1.0));
    ctx.push(Check::info("median exit time", median(&times)));
    ctx.push(Check::info("latest exit time", quantile(&times, 1.0)));
    Ok(())
}

/// Median APT deviation per base point; `true` if strictly decreasing.
fn apt_medians(ctx: &mut Ctx, paths: &[PathRecord]) -> Result<bool> {
    let cfg = ctx.cfg;
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &u in &cfg.diag.apt_bases {
        let dev = paths
            .iter()
            .map(|p| apt_deviation(p, &cfg.sim.potential, &cfg.sim.gain, u, cfg.diag.apt_window))
            .collect::<Result<Vec<_>>>()?;
        let med = median(&dev);
        medians.push(med);
        ctx.push(Check::info(format!("median deviation at base {u}"), med));
        rows.push(vec![
            fmt(u),
            fmt(med),
            fmt(quantile(&dev, 0.25)),
            fmt(quantile(&dev, 0.75)),
            dev.len().to_string(),
        ]);
    }
    ctx.report.write_table("apt.csv", &["base", "median", "q25", "q75", "n"], &rows)?;
    let worst = medians.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max);
    ctx.push(Check::assert("largest ratio of consecutive medians", worst, "< 1", worst < 1.0));
    Ok(worst < 1.0)
}

fn apt_flow(ctx: &mut Ctx) -> Result<()> {
    let paths = ctx.simulate(&ctx.cfg.sim)?;
    apt_medians(ctx, &paths).map(|_| ())
}

/// Full-resolution running maximum of the first component of `X`.
struct RunningMax {
    max: f64,
}

impl StepObserver for RunningMax {
    fn observe(&mut self, _: f64, y: &[f64], mu_bar: &[f64]) -> bool {
        self.max = self.max.max(y[0] + mu_bar[0]);
        true
    }
}

fn diffusive_regime(ctx: &mut Ctx) -> Result<()> {
    let base = ctx.cfg.sim.clone();
    let horizons = [base.horizon / 100.0, base.horizon / 10.0, base.horizon];
    let mut medians = Vec::new();
    let mut rows = Vec::new();
    let mut variances = Vec::new();
    for (j, &h) in horizons.iter().enumerate() {
        let mut sim = base.clone();
        sim.horizon = h;
        sim.seed = base.seed + j as u64;
        // Keep the number of records per path fixed across horizons.
        sim.decimation = ((base.decimation as f64 * h / base.horizon).round() as usize).max(1);
        let runs = run_ensemble_observed(&sim, ctx.threads, |_| RunningMax { max: f64::NEG_INFINITY })?;
        let (paths, maxima): (Vec<PathRecord>, Vec<f64>) = runs.into_iter().map(|(p, o)| (p, o.max)).unzip();
        ctx.account(&paths);
        let paths = live(paths);
        let occ = occupation_measure_centered(&paths, Which::X, ctx.cfg.diag.burn_in, Centering::WindowMean)?;
        let med = median(&maxima);
        let var = occ.variance(0);
        ctx.push(Check::info(format!("median running max of X at T = {h}"), med));
        rows.push(vec![fmt(h), fmt(med), fmt(var)]);
        medians.push(med);
        variances.push(var);
    }
    ctx.report
        .write_table("running_max.csv", &["horizon", "median_running_max", "occupation_variance"], &rows)?;
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    let smallest_step = medians.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    ctx.push(Check::assert("smallest increase of the median running max", smallest_step, "> 0", increasing));
    let least = variances.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.push(Check::assert("smallest occupation variance of X", least, ">= 0.25", least >= 0.25));
    Ok(())
}

fn paths_csv_bytes(paths: &[PathRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_paths_csv(paths, &mut buf, true)?;
    Ok(buf)
}

fn determinism_numerics(ctx: &mut Ctx) -> Result<()> {
    let sim = ctx.cfg.sim.clone();

    // Same seed, different worker counts.
    let mut small = sim.clone();
    small.n_paths = sim.n_paths.min(200);
    let a = run_ensemble(&small, Some(1))?;
    let b = run_ensemble(&small, Some(ctx.threads.unwrap_or(4).max(2)))?;
    ctx.account(&a);
    ctx.account(&b);
    let same = paths_csv_bytes(&a)? == paths_csv_bytes(&b)?;
    ctx.push(Check::assert("identical path CSV across worker counts", f64::from(u8::from(same)), "= 1", same));

    // Coupled Brownian increments at dt, dt/2, dt/4: the variance of Y_T
    // has bias c·dt + O(dt²), so successive differences halve.
    let levels = run_coupled(&sim, 3, ctx.threads)?;
    let finite: Vec<&Vec<Vec<f64>>> = levels.iter().filter(|l| l.iter().flatten().all(|v| v.is_finite())).collect();
    ctx.report.blow_ups += levels.len() - finite.len();
    ctx.report.paths_run += levels.len();
    let vars: Vec<f64> = (0..3)
        .map(|k| Moments::of(&finite.iter().map(|l| l[k][0]).collect::<Vec<_>>()).var)
        .collect();
    let ratio = weak_order_ratio([vars[0], vars[1], vars[2]]);
    let dt0 = sim.dt_at(0.0);
    let rows: Vec<Vec<String>> = vars
        .iter()
        .enumerate()
        .map(|(k, v)| vec![fmt(dt0 / f64::from(1u32 << k)), fmt(*v)])
        .collect();
    ctx.report.write_table("weak_order.csv", &["dt", "var_Y_T"], &rows)?;
    ctx.push(Check::assert("weak-order ratio", ratio, "in [1.5, 3]", (1.5..=3.0).contains(&ratio)));
    let blow_ups = ctx.report.blow_ups as f64;
    ctx.push(Check::assert("blow-up paths", blow_ups, "= 0", blow_ups == 0.0));
    ctx.push(Check::info("max tamed fraction", ctx.report.max_tamed_fraction));
    Ok(())
}

/// Selected diagnostics on a user-defined configuration.
fn free_form(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let paths = ctx.simulate(&cfg.sim)?;
    if paths.is_empty() {
        return Ok(());
    }
    let d = cfg.sim.dimension();
    let summary = summarize(&paths)?;
    summary.write_csv(ctx.report.create("summary.csv")?)?;
    let rows: usize = paths.iter().map(PathRecord::len).sum();
    if rows <= MAX_PATH_ROWS {
        write_paths_csv(&paths, ctx.report.create("paths.csv")?, true)?;
    } else {
        ctx.push(Check::info("paths.csv skipped, rows", rows as f64));
    }
    for diag in &cfg.diagnostics {
        match diag {
            Diagnostic::Occupation => {
                for (which, file) in [(Which::Y, "occupation_Y.txt"), (Which::X, "occupation_X.txt")] {
                    let occ = occupation_measure(&paths, which, cfg.diag.burn_in)?;
                    let label = if which == Which::Y { "Y" } else { "X" };
                    ctx.push(Check::info(format!("occupation mean of {label}_1"), occ.mean(0)));
                    ctx.push(Check::info(format!("occupation variance of {label}_1"), occ.variance(0)));
                    write_histogram(ctx, file, &occ, 0, None, 100)?;
                }
            }
            Diagnostic::Trichotomy => {
                let v = trichotomy(&paths, &cfg.sim.potential, cfg.diag.eps)?;
                write_trichotomy(ctx, "trichotomy.csv", &v, d)?;
                ctx.push(Check::info("fraction ConvergedToMubarInf", v.converged));
                ctx.push(Check::info("fraction DivergedLogRate", v.diverged));
                ctx.push(Check::info("fraction Undecided", v.undecided));
            }
            Diagnostic::Lil => {
                let fractions = lil_fractions(ctx, &paths, true)?;
                if fractions.is_empty() {
                    ctx.push(Check::info("paths settled at a minimum", 0.0));
                } else {
                    let med = median(&fractions);
                    ctx.push(Check::assert("median fraction inside envelope", med, ">= 0.99", med >= 0.99));
                }
            }
            Diagnostic::Apt => {
                apt_medians(ctx, &paths)?;
            }
            Diagnostic::OracleCompare => {
                let law = quadratic_law(&cfg.sim)?;
                oracle_compare(ctx, &paths, &law)?;
            }
        }
    }
    Ok(())
}
