//! Strict `key = value` experiment definitions with dotted sections.
//!
//! ```text
//! # comment
//! name = quick_look
//! potential.kind = double_well
//! gain.family = power
//! sim.horizon = 100
//! diagnostics = occupation, trichotomy
//! ```
//!
//! Unknown keys, duplicate keys and malformed values are errors that carry
//! the line and key. `experiment = <canned name>` starts from that preset;
//! the remaining keys override it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::gain::{make_schedule, GainFamily, GainParams, GainSchedule};
use crate::potentials::{asymmetric_wells, double_well, make_bump, make_polynomial_multiwell, make_quadratic, make_wells, PotentialSpec};
use crate::simulator::SimConfig;

/// Current report format.
pub const FORMAT_VERSION: u32 = 1;

const KNOWN_KEYS: &[&str] = &[
    "name",
    "experiment",
    "potential.kind",
    "potential.c",
    "potential.dimension",
    "potential.wells",
    "potential.coefficients",
    "potential.starts",
    "potential.stiffness",
    "potential.amplitude",
    "potential.width",
    "potential.separation",
    "gain.family",
    "gain.g0",
    "gain.a",
    "gain.alpha",
    "gain.beta",
    "sim.r",
    "sim.x0",
    "sim.mu_bar0",
    "sim.horizon",
    "sim.dt_base",
    "sim.decimation",
    "sim.seed",
    "sim.n_paths",
    "sim.sampler",
    "sim.exact_points",
    "diagnostics",
    "diag.burn_in",
    "diag.eps",
    "diag.lil_t0",
    "diag.apt_bases",
    "diag.apt_window",
    "output.dir",
    "report.version",
];

/// How paths are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Euler,
    /// Exact Gaussian sampler (1-D quadratic only) on a uniform grid.
    Exact,
}

/// Diagnostics a free-form run can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    Occupation,
    Trichotomy,
    Lil,
    Apt,
    OracleCompare,
}

impl Diagnostic {
    pub fn key(self) -> &'static str {
        match self {
            Diagnostic::Occupation => "occupation",
            Diagnostic::Trichotomy => "trichotomy",
            Diagnostic::Lil => "lil",
            Diagnostic::Apt => "apt",
            Diagnostic::OracleCompare => "oracle_compare",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "occupation" => Diagnostic::Occupation,
            "trichotomy" => Diagnostic::Trichotomy,
            "lil" => Diagnostic::Lil,
            "apt" => Diagnostic::Apt,
            "oracle_compare" => Diagnostic::OracleCompare,
            _ => return None,
        })
    }
}

/// Diagnostic tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagParams {
    pub burn_in: f64,
    pub eps: f64,
    pub lil_t0: f64,
    pub apt_bases: Vec<f64>,
    pub apt_window: f64,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub experiment: Option<String>,
    pub sim: SimConfig,
    pub sampler: Sampler,
    pub exact_points: usize,
    pub diagnostics: Vec<Diagnostic>,
    pub diag: DiagParams,
    pub output_dir: PathBuf,
    pub format_version: u32,
    /// Every key with its effective value, for the manifest.
    pub resolved: BTreeMap<String, String>,
}

fn config_err(line: Option<usize>, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: Some(key.to_string()),
        message: message.into(),
    }
}

/// Raw entries with the line each came from (`None` for preset values).
type Entries = BTreeMap<String, (String, Option<usize>)>;

fn parse_lines(text: &str, preset: bool) -> Result<Entries> {
    let mut out = Entries::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = (!preset).then_some(idx + 1);
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                line: line_no,
                key: None,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(config_err(line_no, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(config_err(line_no, key, "empty value"));
        }
        if out.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
            return Err(config_err(line_no, key, "duplicate key"));
        }
    }
    Ok(out)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<(&str, Option<usize>)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn required(&self, key: &str) -> Result<(&str, Option<usize>)> {
        self.raw(key).ok_or_else(|| config_err(None, key, "required key is missing"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse()
                .map_err(|_| config_err(line, key, format!("cannot parse `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| config_err(line, key, format!("expected a comma-separated list of numbers, found `{v}`"))),
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw(key).and_then(|(_, l)| l)
    }
}

/// Newton starts on a uniform grid over `[-radius, radius]^d`.
fn default_grid(d: usize, radius: f64) -> Vec<Vec<f64>> {
    let n: usize = match d {
        1 => 33,
        2 => 17,
        3 => 9,
        _ => 5,
    };
    let axis: Vec<f64> = (0..n).map(|i| -radius + 2.0 * radius * i as f64 / (n - 1) as f64).collect();
    let mut grid = vec![Vec::new()];
    for _ in 0..d {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    grid
}

fn build_potential(r: &Reader) -> Result<PotentialSpec> {
    let (kind, line) = r.raw("potential.kind").unwrap_or(("quadratic", None));
    let wrap = |e: Error| config_err(line, "potential.kind", e.to_string());
    match kind {
        "quadratic" => make_quadratic(r.parse("potential.c", 1.0)?, r.parse("potential.dimension", 1usize)?).map_err(wrap),
        "double_well" => Ok(double_well()),
        "asymmetric_wells" => asymmetric_wells(r.parse("potential.separation", 2.0)?).map_err(wrap),
        "wells" => {
            let wells = r
                .list("potential.wells")?
                .ok_or_else(|| config_err(line, "potential.wells", "wells potential needs potential.wells"))?;
            make_wells(&wells).map_err(wrap)
        }
        "polynomial" => {
            let coeffs = r
                .list("potential.coefficients")?
                .ok_or_else(|| config_err(line, "potential.coefficients", "polynomial potential needs coefficients"))?;
            let starts = r.list("potential.starts")?.unwrap_or_default();
            make_polynomial_multiwell(&coeffs, &starts).map_err(wrap)
        }
        "bump" => {
            let stiffness = r.list("potential.stiffness")?.unwrap_or_else(|| vec![1.0, 2.0]);
            let width = r.parse("potential.width", 1.0)?;
            let starts = match r.raw("potential.starts") {
                None => default_grid(stiffness.len(), 3.0 * width),
                Some((v, l)) => v
                    .split(';')
                    .map(|pt| pt.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| config_err(l, "potential.starts", "expected points `x,y;x,y`"))?,
            };
            make_bump(stiffness, r.parse("potential.amplitude", 1.5)?, width, &starts).map_err(wrap)
        }
        other => Err(config_err(
            line,
            "potential.kind",
            format!("unknown kind `{other}` (quadratic, double_well, asymmetric_wells, wells, polynomial, bump)"),
        )),
    }
}

fn build_gain(r: &Reader) -> Result<GainSchedule> {
    let (family, line) = r.required("gain.family")?;
    let family = match family {
        "constant" => GainFamily::Constant,
        "log" | "log_growth" => GainFamily::LogGrowth,
        "power" | "power_log" => GainFamily::PowerLog {
            alpha: r.parse("gain.alpha", 1.0)?,
            beta: r.parse("gain.beta", 0.0)?,
        },
        other => {
            return Err(config_err(
                line,
                "gain.family",
                format!("unknown family `{other}` (constant, log_growth, power_log)"),
            ))
        }
    };
    let d = family.default_params();
    let params = GainParams {
        g0: r.parse("gain.g0", d.g0)?,
        a: r.parse("gain.a", d.a)?,
    };
    make_schedule(family, params).map_err(|e| config_err(line, "gain.family", e.to_string()))
}

fn point(r: &Reader, key: &str, d: usize) -> Result<Vec<f64>> {
    match r.list(key)? {
        None => Ok(vec![0.0; d]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; d]),
        Some(v) if v.len() == d => Ok(v),
        Some(v) => Err(config_err(r.line(key), key, format!("expected {d} components, found {}", v.len()))),
    }
}

impl ExperimentConfig {
    /// Parse a definition; `preset` supplies the text of a canned
    /// experiment when the file names one.
    pub fn parse_with(text: &str, preset: impl Fn(&str) -> Option<&'static str>) -> Result<Self> {
        let own = parse_lines(text, false)?;
        let mut entries = Entries::new();
        if let Some((name, line)) = own.get("experiment") {
            let base = preset(name).ok_or_else(|| config_err(*line, "experiment", format!("no canned experiment `{name}`")))?;
            entries = parse_lines(base, true)?;
        }
        entries.extend(own);
        Self::from_entries(entries)
    }

    fn from_entries(entries: Entries) -> Result<Self> {
        let r = Reader { entries };
        let potential = build_potential(&r)?;
        let gain = build_gain(&r)?;
        let d = potential.dimension();
        let mut sim = SimConfig::new(potential, gain);
        sim.r = r.parse("sim.r", 1.0)?;
        sim.x0 = point(&r, "sim.x0", d)?;
        sim.mu_bar0 = point(&r, "sim.mu_bar0", d)?;
        sim.horizon = r.parse("sim.horizon", 10.0)?;
        sim.dt_base = r.parse("sim.dt_base", 0.01)?;
        sim.decimation = r.parse("sim.decimation", 100usize)?;
        sim.seed = r.parse("sim.seed", 0u64)?;
        sim.n_paths = r.parse("sim.n_paths", 100usize)?;
        sim.validate().map_err(|e| Error::Config {
            line: None,
            key: None,
            message: e.to_string(),
        })?;
        let sampler = match r.raw("sim.sampler").unwrap_or(("euler", None)) {
            ("euler", _) => Sampler::Euler,
            ("exact", _) => Sampler::Exact,
            (other, line) => return Err(config_err(line, "sim.sampler", format!("unknown sampler `{other}` (euler, exact)"))),
        };
        let diagnostics = match r.raw("diagnostics") {
            None => Vec::new(),
            Some((v, line)) => v
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    Diagnostic::parse(s).ok_or_else(|| {
                        config_err(
                            line,
                            "diagnostics",
                            format!("unknown diagnostic `{s}` (occupation, trichotomy, lil, apt, oracle_compare)"),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let diag = DiagParams {
            burn_in: r.parse("diag.burn_in", 0.5)?,
            eps: r.parse("diag.eps", 0.4)?,
            lil_t0: r.parse("diag.lil_t0", 10.0)?,
            apt_bases: r.list("diag.apt_bases")?.unwrap_or_else(|| vec![10.0, 20.0, 40.0, 80.0]),
            apt_window: r.parse("diag.apt_window", 1.0)?,
        };
        let format_version = r.parse("report.version", FORMAT_VERSION)?;
        if format_version != FORMAT_VERSION {
            return Err(config_err(
                r.line("report.version"),
                "report.version",
                format!("unsupported report version {format_version} (this build writes {FORMAT_VERSION})"),
            ));
        }
        let name = r.parse("name", r.raw("experiment").map_or("experiment".to_string(), |(v, _)| v.to_string()))?;
        let output_dir = PathBuf::from(r.parse("output.dir", format!("out/{name}"))?);
        let exact_points = r.parse("sim.exact_points", 2001usize)?;
        if exact_points < 2 {
            return Err(config_err(r.line("sim.exact_points"), "sim.exact_points", "need at least 2 grid points"));
        }
        let resolved = r.entries.iter().map(|(k, (v, _))| (k.clone(), v.clone())).collect();
        Ok(ExperimentConfig {
            name,
            experiment: r.raw("experiment").map(|(v, _)| v.to_string()),
            sim,
            sampler,
            exact_points,
            diagnostics,
            diag,
            output_dir,
            format_version,
            resolved,
        })
    }

    /// The grid used by the exact sampler: uniform on `[0, horizon]`.
    pub fn exact_grid(&self) -> Vec<f64> {
        let n = self.exact_points;
        (0..n).map(|i| self.sim.horizon * i as f64 / (n - 1) as f64).collect()
    }

    /// Copy with `key = value` overrides applied (same validation as a file).
    pub fn with_overrides(&self, overrides: &str) -> Result<Self> {
        let mut entries: Entries = self.resolved.iter().map(|(k, v)| (k.clone(), (v.clone(), None))).collect();
        entries.extend(parse_lines(overrides, false)?);
        Self::from_entries(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse_with(text, |_| None)
    }

    #[test]
    fn minimal_config() {
        let cfg = parse("gain.family = constant\n").unwrap();
        assert_eq!(cfg.sim.dimension(), 1);
        assert_eq!(cfg.sampler, Sampler::Euler);
        assert_eq!(cfg.sim.decimation, 100);
    }

    #[test]
    fn missing_gain_family_names_the_key() {
        let err = parse("name = x\nsim.horizon = 3\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key.as_deref(), Some("gain.family")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse("gain.family = constant\n\nsim.horizn = 3\n").unwrap_err();
        match err {
            Error::Config { line, key, .. } => {
                assert_eq!(line, Some(3));
                assert_eq!(key.as_deref(), Some("sim.horizn"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_values() {
        assert!(parse("gain.family = constant\nsim.horizon = ten\n").is_err());
        assert!(parse("gain.family = constant\njust text\n").is_err());
        assert!(parse("gain.family = constant\ngain.family = log\n").is_err());
        assert!(parse("gain.family = quadratic\n").is_err());
        assert!(parse("gain.family = constant\nsim.r = 0\n").is_err());
        assert!(parse("gain.family = constant\nreport.version = 7\n").is_err());
    }

    #[test]
    fn presets_are_overridden() {
        let preset = "gain.family = constant\nsim.horizon = 5\nsim.n_paths = 10\n";
        let cfg = ExperimentConfig::parse_with("experiment = demo\nsim.horizon = 7 # longer\n", |n| (n == "demo").then_some(preset)).unwrap();
        assert_eq!(cfg.sim.horizon, 7.0);
        assert_eq!(cfg.sim.n_paths, 10);
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.resolved["sim.horizon"], "7");
        let again = cfg.with_overrides("sim.n_paths = 3").unwrap();
        assert_eq!(again.sim.n_paths, 3);
        assert_eq!(again.sim.horizon, 7.0);
    }

    #[test]
    fn potentials_and_lists() {
        let cfg = parse("gain.family = power\npotential.kind = wells\npotential.wells = 0, 2\nsim.x0 = 1\ndiagnostics = trichotomy, lil\n").unwrap();
        assert_eq!(cfg.sim.potential.minima().count(), 2);
        assert_eq!(cfg.sim.x0, vec![1.0]);
        assert_eq!(cfg.diagnostics, vec![Diagnostic::Trichotomy, Diagnostic::Lil]);
        let asym = parse("gain.family = power\npotential.kind = asymmetric_wells\n").unwrap();
        assert_eq!(asym.sim.potential.critical_points().len(), 3);
        let bump = parse("gain.family = constant\npotential.kind = bump\nsim.x0 = 0.5, 0\n").unwrap();
        assert_eq!(bump.sim.dimension(), 2);
        assert!(parse("gain.family = constant\npotential.kind = bump\nsim.x0 = 1,2,3\n").is_err());
    }
}
