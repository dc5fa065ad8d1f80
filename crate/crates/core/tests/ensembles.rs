//! Ensemble-level checks of the diagnostics against exact answers.

use selfdiff::diagnostics::{
    ergodic_average, lil_envelope_check, supermartingale_check, trichotomy, TrichotomyLabel, FOURIER_FREQUENCIES,
};
use selfdiff::gain::GainSchedule;
use selfdiff::oracle::QuadraticLaw;
use selfdiff::potentials::{double_well, make_quadratic};
use selfdiff::simulator::{run_ensemble, run_exact_ensemble, PathRecord, SimConfig};

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn quadratic(gain: GainSchedule) -> SimConfig {
    let mut cfg = SimConfig::new(make_quadratic(1.0, 1).unwrap(), gain);
    cfg.x0 = vec![1.0];
    cfg
}

#[test]
fn exact_and_euler_ensembles_agree() {
    let mut cfg = quadratic(GainSchedule::constant(1.0).unwrap());
    cfg.horizon = 2.0;
    cfg.dt_base = 0.01;
    cfg.decimation = 1000;
    cfg.n_paths = 4000;
    cfg.seed = 21;
    let euler = run_ensemble(&cfg, None).unwrap();
    let exact = run_exact_ensemble(&cfg, &[1.0, 2.0], None).unwrap();
    let pick = |paths: &[PathRecord], f: &dyn Fn(&PathRecord) -> f64| paths.iter().map(f).collect::<Vec<_>>();
    for f in [
        &(|p: &PathRecord| p.terminal_y[0]) as &dyn Fn(&PathRecord) -> f64,
        &|p: &PathRecord| p.terminal_mu_bar()[0],
    ] {
        let (ma, va) = mean_var(&pick(&euler, f));
        let (mb, vb) = mean_var(&pick(&exact, f));
        let n = cfg.n_paths as f64;
        assert!((ma - mb).abs() < 4.0 * ((va + vb) / n).sqrt(), "means {ma} {mb}");
        assert!((va - vb).abs() < 4.0 * (2.0 * (va * va + vb * vb) / n).sqrt(), "variances {va} {vb}");
    }
}

#[test]
fn double_well_drift_is_a_supermartingale_where_positive() {
    let mut cfg = SimConfig::new(double_well(), GainSchedule::power(1.0, 1.0).unwrap());
    cfg.x0 = vec![1.5];
    cfg.horizon = 20.0;
    cfg.dt_base = 0.05;
    cfg.decimation = 5;
    cfg.n_paths = 200;
    cfg.seed = 22;
    let paths = run_ensemble(&cfg, None).unwrap();
    let check = supermartingale_check(&paths, &cfg.potential, &cfg.gain, cfg.r).unwrap();
    assert!(check.samples > 100);
    assert!(check.pass(), "{check:?}");
}

#[test]
fn unique_minimum_converges_with_oracle_spread() {
    // Case 1: 0 is the only minimum, so every path converges and the
    // spread of the μ̄_∞ estimates matches the exact law of μ̄_T.
    let mut cfg = quadratic(GainSchedule::power(1.0, 1.0).unwrap());
    cfg.horizon = 200.0;
    cfg.dt_base = 0.1;
    cfg.decimation = 200;
    cfg.n_paths = 200;
    cfg.seed = 23;
    let paths = run_ensemble(&cfg, None).unwrap();
    let v = trichotomy(&paths, &cfg.potential, 1.0).unwrap();
    assert_eq!(v.converged, 1.0);
    assert!(v.labels.iter().all(|l| matches!(l, TrichotomyLabel::ConvergedToMubarInf { .. })));
    let est: Vec<f64> = v.mu_bar_inf_estimates().iter().map(|m| m[0]).collect();
    let law = QuadraticLaw::new(1.0, cfg.gain.clone(), cfg.r, 1.0, 0.0).unwrap();
    let (mean, var) = law.law_of_mubar(cfg.horizon).unwrap();
    let (m, s2) = mean_var(&est);
    assert!((m - mean).abs() < 4.0 * (var / est.len() as f64).sqrt(), "{m} vs {mean}");
    assert!((s2.sqrt() / var.sqrt() - 1.0).abs() < 0.2, "sd {} vs {}", s2.sqrt(), var.sqrt());
}

#[test]
fn lil_fraction_does_not_depend_on_decimation() {
    let mut cfg = quadratic(GainSchedule::power(1.0, 1.0).unwrap());
    cfg.horizon = 100.0;
    cfg.dt_base = 0.1;
    cfg.n_paths = 50;
    cfg.seed = 24;
    let median = |dec: usize| {
        let mut c = cfg.clone();
        c.decimation = dec;
        let mut f: Vec<f64> = run_ensemble(&c, None)
            .unwrap()
            .iter()
            .map(|p| lil_envelope_check(p, &[0.0], &c.gain, 10.0).unwrap())
            .collect();
        f.sort_by(f64::total_cmp);
        f[f.len() / 2]
    };
    let (a, b) = (median(50), median(200));
    assert!((a - b).abs() <= 0.01, "{a} vs {b}");
    assert!(a >= 0.99);
}

#[test]
fn ergodic_averages_match_the_gaussian_characteristic_function() {
    let mut cfg = quadratic(GainSchedule::constant(1.0).unwrap());
    cfg.horizon = 200.0;
    cfg.dt_base = 0.02;
    cfg.decimation = 10;
    cfg.n_paths = 100;
    cfg.seed = 25;
    let paths = run_ensemble(&cfg, None).unwrap();
    for u in FOURIER_FREQUENCIES {
        // Per path, centered at that path's own limit of μ̄.
        let averages: Vec<f64> = paths
            .iter()
            .map(|p| {
                let center = p.terminal_mu_bar()[0];
                *ergodic_average(std::slice::from_ref(p), |x| (u * (x[0] - center)).cos())[0].last().unwrap()
            })
            .collect();
        let (m, _) = mean_var(&averages);
        let exact = (-u * u / 4.0).exp();
        assert!((m - exact).abs() < 0.03, "u = {u}: {m} vs {exact}");
    }
    let ones = ergodic_average(&paths[..3], |_| 1.0);
    assert!(ones.iter().flatten().all(|&v| (v - 1.0).abs() < 1e-12));
}
