//! Canned experiments, one per acceptance criterion plus a trichotomy demo.

/// A named preset with the claim it exercises.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub mapping: &'static str,
    pub summary: &'static str,
    /// Acceptance criterion number, if the preset is one.
    pub criterion: Option<u8>,
    /// Preset keys; a config naming the preset overrides them.
    pub preset: &'static str,
    /// Overrides for a second ensemble run alongside the first.
    pub companion: Option<&'static str>,
}

impl CatalogEntry {
    /// `name (mapping)`, the form `selfdiff list` prints.
    pub fn title(&self) -> String {
        format!("{} ({})", self.name, self.mapping)
    }
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        name: "quadratic_exact_law",
        mapping: "§2 Gaussian law of (Y, μ̄)",
        summary: "Euler ensemble at T=5 against the exact mean and variance of Y and μ̄",
        criterion: Some(1),
        preset: "
potential.kind = quadratic
potential.c = 1
gain.family = constant
gain.g0 = 1
sim.r = 1
sim.x0 = 1
sim.mu_bar0 = 0
sim.horizon = 5
sim.dt_base = 0.01
sim.decimation = 10
sim.n_paths = 10000
sim.seed = 1
",
        companion: None,
    },
    CatalogEntry {
        name: "quadratic_ergodic",
        mapping: "§2 Corollary",
        summary: "per-path centered occupation measure of X against N(0, 1/(2 g c))",
        criterion: Some(2),
        preset: "
potential.kind = quadratic
potential.c = 1
gain.family = constant
gain.g0 = 1
sim.r = 1
sim.x0 = 1
sim.mu_bar0 = 0
sim.horizon = 200
sim.dt_base = 0.01
sim.decimation = 100
sim.n_paths = 10000
sim.seed = 2
diag.burn_in = 0.5
",
        companion: None,
    },
    CatalogEntry {
        name: "as_convergence",
        mapping: "§2 last Prop.",
        summary: "growing gain: Y_T near 0, settled tail and Cauchy μ̄",
        criterion: Some(3),
        preset: "
potential.kind = quadratic
potential.c = 1
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 1
sim.mu_bar0 = 0
sim.horizon = 1000
sim.dt_base = 0.25
sim.decimation = 1000
sim.n_paths = 1000
sim.seed = 3
",
        companion: None,
    },
    CatalogEntry {
        name: "ergodic_minima",
        mapping: "§5 Theorem th:ergo",
        summary: "double well: occupation mass of Y on the minima, both minima selected",
        criterion: Some(4),
        preset: "
potential.kind = double_well
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 0
sim.mu_bar0 = 0
sim.horizon = 1000
sim.dt_base = 0.5
sim.decimation = 1000
sim.n_paths = 10000
sim.seed = 4
diag.burn_in = 0.5
diag.eps = 0.45
",
        companion: None,
    },
    CatalogEntry {
        name: "xt_over_logt",
        mapping: "§6 Theorem",
        summary: "double well: slope of X on log t matches the selected minimum; asymmetric wells show both outcomes",
        criterion: Some(5),
        preset: "
potential.kind = double_well
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 0
sim.mu_bar0 = 0
sim.horizon = 10000
sim.dt_base = 0.5
sim.decimation = 10000
sim.n_paths = 40
sim.seed = 5
diag.eps = 0.4
",
        companion: Some(
            "
potential.kind = wells
potential.wells = 0, 2
sim.x0 = 1
sim.seed = 55
",
        ),
    },
    CatalogEntry {
        name: "lil_envelope",
        mapping: "§4 Prop. propcvYai",
        summary: "exact sampler: fraction of time inside the iterated-log envelope",
        criterion: Some(6),
        preset: "
potential.kind = quadratic
potential.c = 1
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 1
sim.mu_bar0 = 0
sim.horizon = 1000
sim.sampler = exact
sim.exact_points = 2001
sim.n_paths = 1000
sim.seed = 6
diag.lil_t0 = 10
",
        companion: None,
    },
    CatalogEntry {
        name: "unstable_escape",
        mapping: "§4 Props. maxY/saddleY",
        summary: "double well started at the maximum: every path leaves the eps-ball",
        criterion: Some(7),
        preset: "
potential.kind = double_well
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 0
sim.mu_bar0 = 0
sim.horizon = 100
sim.dt_base = 0.1
sim.decimation = 100
sim.n_paths = 1000
sim.seed = 7
diag.eps = 0.2
",
        companion: None,
    },
    CatalogEntry {
        name: "apt_flow",
        mapping: "§5 Prop. pta",
        summary: "median distance to the gradient flow over time-changed windows shrinks",
        criterion: Some(8),
        preset: "
potential.kind = double_well
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 0
sim.mu_bar0 = 0
sim.horizon = 13
sim.dt_base = 0.02
sim.decimation = 1
sim.n_paths = 500
sim.seed = 8
diag.apt_bases = 10, 20, 40, 80
diag.apt_window = 1
",
        companion: None,
    },
    CatalogEntry {
        name: "diffusive_regime",
        mapping: "§2 first Prop.",
        summary: "constant gain: running max of X grows with the horizon, X does not concentrate",
        criterion: Some(9),
        preset: "
potential.kind = quadratic
potential.c = 1
gain.family = constant
gain.g0 = 1
sim.r = 1
sim.x0 = 0
sim.mu_bar0 = 0
sim.horizon = 10000
sim.dt_base = 0.1
sim.decimation = 100
sim.n_paths = 500
sim.seed = 9
diag.burn_in = 0.5
",
        companion: None,
    },
    CatalogEntry {
        name: "determinism_numerics",
        mapping: "simulator invariants",
        summary: "byte-identical reruns, no blow-ups, weak order one under step halving",
        criterion: Some(10),
        preset: "
potential.kind = quadratic
potential.c = 1
gain.family = constant
gain.g0 = 1
sim.r = 1
sim.x0 = 1
sim.mu_bar0 = 0
sim.horizon = 5
sim.dt_base = 0.02
sim.decimation = 50
sim.n_paths = 10000
sim.seed = 10
",
        companion: None,
    },
    CatalogEntry {
        name: "double_well_trichotomy",
        mapping: "§6 Theorem, case 0 not a minimum",
        summary: "fractions per trichotomy label for the symmetric double well",
        criterion: None,
        preset: "
potential.kind = double_well
gain.family = power
gain.alpha = 1
gain.g0 = 1
sim.r = 1
sim.x0 = 0
sim.mu_bar0 = 0
sim.horizon = 1000
sim.dt_base = 0.5
sim.decimation = 1000
sim.n_paths = 200
sim.seed = 11
diag.eps = 0.4
",
        companion: None,
    },
];

pub fn find(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name)
}

pub fn preset(name: &str) -> Option<&'static str> {
    find(name).map(|e| e.preset)
}

/// One line per canned experiment.
pub fn list_experiments() -> Vec<String> {
    CATALOG.iter().map(|e| format!("{:<58} {}", e.title(), e.summary)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::ExperimentConfig;

    #[test]
    fn listing_names_the_claims() {
        let text = list_experiments().join("\n");
        for needle in ["quadratic_ergodic (§2 Corollary)", "xt_over_logt (§6 Theorem)", "apt_flow (§5 Prop. pta)"] {
            assert!(text.contains(needle), "{needle}");
        }
    }

    #[test]
    fn every_criterion_has_one_preset() {
        for c in 1..=10u8 {
            assert_eq!(CATALOG.iter().filter(|e| e.criterion == Some(c)).count(), 1, "criterion {c}");
        }
    }

    #[test]
    fn presets_parse() {
        for e in CATALOG {
            let cfg = ExperimentConfig::parse(&format!("experiment = {}\n", e.name)).unwrap();
            assert_eq!(cfg.name, e.name);
            if let Some(extra) = e.companion {
                cfg.with_overrides(extra).unwrap();
            }
        }
    }
}
