use proptest::prelude::*;

use selfdiff::diagnostics::{classify_terminal, occupation_measure, trichotomy, Which};
use selfdiff::gain::GainSchedule;
use selfdiff::potentials::{double_well, make_quadratic, make_wells};
use selfdiff::simulator::{run_ensemble, simulate_path, SimConfig};

fn gain(kind: u8) -> GainSchedule {
    match kind {
        0 => GainSchedule::constant(1.5).unwrap(),
        1 => GainSchedule::power(1.0, 1.0).unwrap(),
        _ => GainSchedule::log_growth(1.0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn x_is_y_plus_mubar(seed in 0u64..1000, x0 in -2.0f64..2.0, m0 in -1.0f64..1.0, kind in 0u8..3, dec in 1usize..20) {
        let mut cfg = SimConfig::new(double_well(), gain(kind));
        cfg.x0 = vec![x0];
        cfg.mu_bar0 = vec![m0];
        cfg.horizon = 3.0;
        cfg.dt_base = 0.02;
        cfg.decimation = dec;
        cfg.seed = seed;
        let p = simulate_path(&cfg, 0).unwrap();
        prop_assert!((p.y[0] - (x0 - m0)).abs() < 1e-15);
        for i in 0..p.len() {
            prop_assert_eq!(p.x_at(i)[0], p.y_at(i)[0] + p.mu_bar_at(i)[0]);
        }
        prop_assert_eq!(p.terminal_time(), 3.0);
    }

    #[test]
    fn occupation_mass_is_one_for_any_decimation(seed in 0u64..1000, dec in 1usize..40, burn_in in 0.0f64..0.8) {
        let mut cfg = SimConfig::new(make_quadratic(1.0, 1).unwrap(), gain(0));
        cfg.horizon = 4.0;
        cfg.dt_base = 0.02;
        cfg.n_paths = 3;
        cfg.decimation = dec;
        cfg.seed = seed;
        let paths = run_ensemble(&cfg, Some(1)).unwrap();
        for which in [Which::X, Which::Y] {
            let m = occupation_measure(&paths, which, burn_in).unwrap();
            prop_assert!((m.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn classification_ignores_path_order(seed in 0u64..1000, shift in 1usize..7) {
        let mut cfg = SimConfig::new(double_well(), gain(1));
        cfg.horizon = 30.0;
        cfg.dt_base = 0.1;
        cfg.decimation = 20;
        cfg.n_paths = 8;
        cfg.seed = seed;
        let p = double_well();
        let paths = run_ensemble(&cfg, Some(1)).unwrap();
        let mut rotated = paths.clone();
        rotated.rotate_left(shift);
        let label = |rec| classify_terminal(rec, &p, 0.3).unwrap().map(|c| c.location.clone());
        for (i, rec) in rotated.iter().enumerate() {
            prop_assert_eq!(label(rec), label(&paths[(i + shift) % paths.len()]));
        }
    }

    #[test]
    fn trichotomy_fractions_sum_to_one(seed in 0u64..1000, eps in 0.05f64..0.49) {
        let mut cfg = SimConfig::new(make_wells(&[0.0, 2.0]).unwrap(), gain(1));
        cfg.x0 = vec![1.0];
        cfg.horizon = 160.0;
        cfg.dt_base = 0.5;
        cfg.decimation = 50;
        cfg.n_paths = 6;
        cfg.seed = seed;
        let paths = run_ensemble(&cfg, Some(1)).unwrap();
        let v = trichotomy(&paths, &cfg.potential, eps).unwrap();
        prop_assert!((v.converged + v.diverged + v.undecided - 1.0).abs() < 1e-12);
        prop_assert!(v.undecided >= -1e-12);
        prop_assert_eq!(v.labels.len(), 6);
    }
}
