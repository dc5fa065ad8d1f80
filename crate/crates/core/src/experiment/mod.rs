//! Config-driven experiment runs: parse, simulate, diagnose, write a report
//! directory.
//!
//! A run directory holds `manifest.txt` (the resolved config, itself a
//! valid config file), the CSV and histogram outputs, `summary.txt` and a
//! gnuplot script `plot.gp`. Only the manifest carries a timestamp.

mod catalog;
mod config;
mod protocols;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub use catalog::{find, list_experiments, CatalogEntry, CATALOG};
pub use config::{DiagParams, Diagnostic, ExperimentConfig, Sampler, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::oracle::{write_oracle_csv, QuadraticLaw};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SELFDIFF_THREADS";

/// Blow-up paths above this fraction fail the run with [`ExitStatus::BlowUp`].
pub const MAX_BLOW_UP_FRACTION: f64 = 1e-3;

/// Schema versions of every file a run can write, echoed in the manifest.
pub const SCHEMAS: &[(&str, u32)] = &[
    ("paths.csv", 1),
    ("summary.csv", 1),
    ("oracle.csv", 1),
    ("oracle_vs_empirical.csv", 1),
    ("terminal_law.csv", 1),
    ("ergodic.csv", 1),
    ("as_convergence.csv", 1),
    ("classification.csv", 1),
    ("trichotomy.csv", 1),
    ("trichotomy_companion.csv", 1),
    ("lil.csv", 1),
    ("escape.csv", 1),
    ("apt.csv", 1),
    ("running_max.csv", 1),
    ("weak_order.csv", 1),
    ("histogram.txt", 1),
];

impl ExperimentConfig {
    /// Parse a definition, resolving `experiment = <name>` from the catalog.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, catalog::preset)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// A canned experiment with its preset values.
    pub fn canned(name: &str) -> Result<Self> {
        Self::parse(&format!("experiment = {name}\n"))
    }

    /// The effective configuration as `key = value` lines that parse back
    /// to the same experiment.
    pub fn manifest_body(&self) -> String {
        let mut map = self.resolved.clone();
        let sim = &self.sim;
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let family = sim.gain.family();
        let params = sim.gain.params();
        map.entry("potential.kind".into()).or_insert_with(|| "quadratic".into());
        map.insert("gain.family".into(), family.label().into());
        map.insert("gain.g0".into(), params.g0.to_string());
        map.insert("gain.a".into(), params.a.to_string());
        if let crate::gain::GainFamily::PowerLog { alpha, beta } = family {
            map.insert("gain.alpha".into(), alpha.to_string());
            map.insert("gain.beta".into(), beta.to_string());
        }
        map.insert("name".into(), self.name.clone());
        map.insert("sim.r".into(), sim.r.to_string());
        map.insert("sim.x0".into(), join(&sim.x0));
        map.insert("sim.mu_bar0".into(), join(&sim.mu_bar0));
        map.insert("sim.horizon".into(), sim.horizon.to_string());
        map.insert("sim.dt_base".into(), sim.dt_base.to_string());
        map.insert("sim.decimation".into(), sim.decimation.to_string());
        map.insert("sim.seed".into(), sim.seed.to_string());
        map.insert("sim.n_paths".into(), sim.n_paths.to_string());
        map.insert(
            "sim.sampler".into(),
            match self.sampler {
                Sampler::Euler => "euler".into(),
                Sampler::Exact => "exact".into(),
            },
        );
        map.insert("sim.exact_points".into(), self.exact_points.to_string());
        if !self.diagnostics.is_empty() {
            map.insert(
                "diagnostics".into(),
                self.diagnostics.iter().map(|d| d.key()).collect::<Vec<_>>().join(", "),
            );
        }
        map.insert("diag.burn_in".into(), self.diag.burn_in.to_string());
        map.insert("diag.eps".into(), self.diag.eps.to_string());
        map.insert("diag.lil_t0".into(), self.diag.lil_t0.to_string());
        map.insert("diag.apt_bases".into(), join(&self.diag.apt_bases));
        map.insert("diag.apt_window".into(), self.diag.apt_window.to_string());
        map.insert("output.dir".into(), self.output_dir.display().to_string());
        map.insert("report.version".into(), self.format_version.to_string());
        map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Worker cap from [`THREADS_ENV`]; unset, empty or `0` means no cap.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::Config {
                line: None,
                key: Some(THREADS_ENV.into()),
                message: format!("expected a worker count, found `{v}`"),
            }),
        },
    }
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    AssertionFailure,
    ConfigError,
    BlowUp,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::AssertionFailure => 1,
            ExitStatus::ConfigError => 2,
            ExitStatus::BlowUp => 3,
        }
    }

    /// Status for an error that aborted the run.
    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config { .. } => ExitStatus::ConfigError,
            _ => ExitStatus::AssertionFailure,
        }
    }
}

/// One measured quantity; `pass` is `None` for informational values.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: Option<bool>,
}

impl Check {
    pub fn assert(name: impl Into<String>, value: f64, target: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            value,
            target: target.into(),
            pass: Some(pass),
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Check {
            name: name.into(),
            value,
            target: String::new(),
            pass: None,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "INFO",
        };
        // Adding zero folds -0 into +0.
        write!(f, "{tag}  {} = {:.6}", self.name, self.value + 0.0)?;
        if !self.target.is_empty() {
            write!(f, " (target {})", self.target)?;
        }
        Ok(())
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: String,
    /// Catalog title for canned experiments.
    pub title: Option<String>,
    pub out_dir: PathBuf,
    pub checks: Vec<Check>,
    pub paths_run: usize,
    pub blow_ups: usize,
    pub max_tamed_fraction: f64,
    /// Files written, relative to `out_dir`.
    pub files: Vec<String>,
}

impl Report {
    fn new(cfg: &ExperimentConfig) -> Self {
        Report {
            name: cfg.name.clone(),
            title: cfg.experiment.as_deref().and_then(find).map(|e| e.title()),
            out_dir: cfg.output_dir.clone(),
            checks: Vec::new(),
            paths_run: 0,
            blow_ups: 0,
            max_tamed_fraction: 0.0,
            files: Vec::new(),
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.pass == Some(false))
    }

    pub fn passed(&self) -> bool {
        self.failed().next().is_none()
    }

    pub fn blow_up_fraction(&self) -> f64 {
        if self.paths_run == 0 {
            0.0
        } else {
            self.blow_ups as f64 / self.paths_run as f64
        }
    }

    pub fn status(&self) -> ExitStatus {
        if self.blow_up_fraction() > MAX_BLOW_UP_FRACTION {
            ExitStatus::BlowUp
        } else if self.passed() {
            ExitStatus::Pass
        } else {
            ExitStatus::AssertionFailure
        }
    }

    /// `name: PASS (k/k checks)` or `name: FAIL (...; failed: a, b)`.
    pub fn summary_line(&self) -> String {
        let asserted = self.checks.iter().filter(|c| c.pass.is_some()).count();
        let failed: Vec<&str> = self.failed().map(|c| c.name.as_str()).collect();
        let verdict = match self.status() {
            ExitStatus::Pass => "PASS",
            ExitStatus::BlowUp => "BLOW-UP",
            _ => "FAIL",
        };
        let mut line = format!("{}: {verdict} ({}/{asserted} checks", self.name, asserted - failed.len());
        if !failed.is_empty() {
            line.push_str(&format!("; failed: {}", failed.join(", ")));
        }
        if self.blow_ups > 0 {
            line.push_str(&format!("; {} blow-up paths", self.blow_ups));
        }
        line.push(')');
        line
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        match &self.title {
            Some(t) => s.push_str(&format!("experiment {t}\n")),
            None => s.push_str(&format!("experiment {}\n", self.name)),
        }
        s.push_str(&format!(
            "paths {}, blow-ups {}, max tamed fraction {:.6}\n",
            self.paths_run, self.blow_ups, self.max_tamed_fraction
        ));
        for c in &self.checks {
            s.push_str(&format!("{c}\n"));
        }
        s.push_str(&self.summary_line());
        s.push('\n');
        s
    }

    pub(crate) fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    /// Create `file` in the output directory and record it.
    pub(crate) fn create(&mut self, file: &str) -> Result<std::io::BufWriter<fs::File>> {
        let path = self.path(file);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        if !self.files.iter().any(|x| x == file) {
            self.files.push(file.to_string());
        }
        Ok(std::io::BufWriter::new(f))
    }

    /// Write a CSV table of preformatted cells.
    pub(crate) fn write_table(&mut self, file: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(file)?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io(self.path(file), e))
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn gnuplot_script(report: &Report) -> String {
    let mut s = String::from("# gnuplot script: gnuplot plot.gp\nset terminal pngcairo size 900,600\nset key autotitle columnhead\n");
    for file in &report.files {
        let stem = file.rsplit_once('.').map_or(file.as_str(), |(a, _)| a);
        if file.ends_with(".txt") {
            s.push_str(&format!(
                "set datafile separator whitespace\nset output '{stem}.png'\nplot '{file}' using 1:2 with boxes notitle\n"
            ));
        } else if file.ends_with(".csv") {
            s.push_str(&format!(
                "set datafile separator ','\nset output '{stem}.png'\nplot '{file}' using 1:2 with linespoints\n"
            ));
        }
    }
    s
}

/// Run an experiment, writing the report directory. Errors are returned
/// only for configuration, oracle or I/O failures; failed assertions and
/// blow-ups are reported through [`Report::status`].
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Report> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut report = Report::new(cfg);
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    protocols::run(cfg, threads, &mut report)?;

    let mut manifest = String::from("# selfdiff run manifest\n");
    manifest.push_str(&format!("# created_unix = {started}\n"));
    manifest.push_str(&format!("# selfdiff_version = {}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!(
        "# threads = {}\n",
        threads.map_or_else(|| "auto".to_string(), |n| n.to_string())
    ));
    for (file, version) in SCHEMAS {
        if report.files.iter().any(|f| f == file) || (*file == "histogram.txt" && report.files.iter().any(|f| f.ends_with(".txt"))) {
            manifest.push_str(&format!("# schema {file} = v{version}\n"));
        }
    }
    manifest.push_str(&cfg.manifest_body());
    write_file(&cfg.output_dir.join("manifest.txt"), &manifest)?;
    write_file(&cfg.output_dir.join("plot.gp"), &gnuplot_script(&report))?;
    write_file(&cfg.output_dir.join("summary.txt"), &report.summary_text())?;
    Ok(report)
}

/// Oracle table of a 1-D quadratic configuration on its exact-sampler grid.
pub fn oracle_table<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<()> {
    let law = protocols::quadratic_law(&cfg.sim)?;
    let rows = law.table(&cfg.exact_grid())?;
    write_oracle_csv(&rows, out)
}

/// The law behind [`oracle_table`].
pub fn quadratic_law(cfg: &ExperimentConfig) -> Result<QuadraticLaw> {
    protocols::quadratic_law(&cfg.sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(extra: &str, dir: &Path) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "gain.family = constant\nsim.horizon = 2\nsim.dt_base = 0.02\nsim.decimation = 10\nsim.n_paths = 20\noutput.dir = {}\n{extra}",
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn manifest_round_trips() {
        let cfg = ExperimentConfig::canned("lil_envelope").unwrap();
        let again = ExperimentConfig::parse(&cfg.manifest_body()).unwrap();
        assert_eq!(again.manifest_body(), cfg.manifest_body());
        assert_eq!(again.sim.gain, cfg.sim.gain);
        assert_eq!(again.sampler, Sampler::Exact);
    }

    #[test]
    fn free_form_run_writes_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny("diagnostics = occupation, oracle_compare\n", dir.path());
        let report = run_experiment(&cfg, Some(1)).unwrap();
        assert_eq!(report.paths_run, 20);
        for f in ["manifest.txt", "summary.txt", "plot.gp", "summary.csv", "paths.csv", "oracle_vs_empirical.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("sim.seed = 0"));
        assert!(manifest.contains("# schema paths.csv = v1"));
        assert_eq!(report.status(), ExitStatus::Pass, "{}", report.summary_text());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(ExitStatus::Pass.code(), 0);
        assert_eq!(ExitStatus::BlowUp.code(), 3);
        let err = ExperimentConfig::parse("sim.horizon = 1\n").unwrap_err();
        assert_eq!(ExitStatus::of_error(&err).code(), 2);
        let mut r = Report::new(&ExperimentConfig::parse("gain.family = constant\n").unwrap());
        r.checks.push(Check::assert("x", 1.0, "< 0", false));
        r.paths_run = 1000;
        assert_eq!(r.status(), ExitStatus::AssertionFailure);
        r.blow_ups = 2;
        assert_eq!(r.status(), ExitStatus::BlowUp);
        assert!(r.summary_line().contains("failed: x"));
    }
}
