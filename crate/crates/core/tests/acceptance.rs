//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every canned criterion experiment at full size, so expect several
//! minutes in the optimized test profile. Criteria listed in
//! `KNOWN_UNATTAINABLE` print their honest verdict; for those the suite
//! instead requires the measurements to agree with the exact law's
//! prediction of the failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use selfdiff::experiment::{run_experiment, threads_from_env, ExperimentConfig, Report, CATALOG};

/// Criteria whose thresholds the exact law itself rules out.
const KNOWN_UNATTAINABLE: &[u8] = &[3];

fn run(name: &str, dir: &Path, overrides: &str, threads: Option<usize>) -> Report {
    let cfg = ExperimentConfig::canned(name)
        .and_then(|c| c.with_overrides(&format!("output.dir = {}\n{overrides}", dir.display())))
        .unwrap_or_else(|e| panic!("{name}: {e}"));
    run_experiment(&cfg, threads).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Bytes of every CSV and histogram file in a report directory, plus the
/// manifest without its comments and output directory (those name the
/// run, not the result).
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "txt") && !p.ends_with("summary.txt"))
        .map(|p| {
            let mut bytes = fs::read(&p).unwrap();
            if p.ends_with("manifest.txt") {
                let text = String::from_utf8(bytes).unwrap();
                bytes = text
                    .lines()
                    .filter(|l| !l.starts_with('#') && !l.starts_with("output.dir"))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes();
            }
            (p.file_name().unwrap().to_string_lossy().into_owned(), bytes)
        })
        .collect()
}

fn value(report: &Report, check: &str) -> f64 {
    report.check(check).unwrap_or_else(|| panic!("{}: no check `{check}`", report.name)).value
}

/// The C3 failure must be the one the exact law predicts: the measured
/// fraction with |Y_T| < 0.05 within 5 binomial standard errors of the
/// Gaussian prediction, and that prediction itself below 1.
fn c3_failure_matches_oracle(report: &Report) -> Result<String, String> {
    let n = report.paths_run as f64;
    let measured = value(report, "fraction |Y_T| < 0.05");
    let predicted = value(report, "oracle P(|Y_T| < 0.05)");
    let se = (predicted * (1.0 - predicted) / n).sqrt();
    let note = format!(
        "measured {measured:.4}, exact law predicts {predicted:.4} (sd of Y_T {:.4}); median tail oscillation {:.4}",
        value(report, "oracle sd of Y_T"),
        value(report, "median tail oscillation")
    );
    if predicted < 0.999 && (measured - predicted).abs() <= 5.0 * se + 1e-3 {
        Ok(note)
    } else {
        Err(note)
    }
}

fn main() -> ExitCode {
    let threads = threads_from_env().expect("SELFDIFF_THREADS");
    let root = tempfile::tempdir().expect("temp dir");
    let started = Instant::now();
    let mut reports: Vec<(u8, Report)> = Vec::new();
    let mut unexpected = Vec::new();

    let mut criteria: Vec<_> = CATALOG.iter().filter_map(|e| e.criterion.map(|c| (c, e))).collect();
    criteria.sort_by_key(|(c, _)| *c);
    for (c, entry) in criteria {
        let t = Instant::now();
        let mut report = run(entry.name, &root.path().join(entry.name), "", threads);
        let mut extra = String::new();
        if c == 10 {
            // Whole-run determinism: the same manifest twice, different
            // worker counts, compared file by file.
            let a = run("unstable_escape", &root.path().join("rerun_a"), "sim.n_paths = 200", Some(1));
            let b = run("unstable_escape", &root.path().join("rerun_b"), "sim.n_paths = 200", Some(2));
            let same = outputs(&a.out_dir) == outputs(&b.out_dir) && !outputs(&a.out_dir).is_empty();
            let total_blow_ups: usize = reports.iter().map(|(_, r)| r.blow_ups).sum::<usize>() + report.blow_ups;
            let total_paths: usize = reports.iter().map(|(_, r)| r.paths_run).sum::<usize>() + report.paths_run;
            report.checks.push(selfdiff::experiment::Check::assert(
                "identical report files on rerun",
                f64::from(u8::from(same)),
                "= 1",
                same,
            ));
            report.checks.push(selfdiff::experiment::Check::assert(
                "blow-up paths across all criteria",
                total_blow_ups as f64,
                "= 0",
                total_blow_ups == 0,
            ));
            extra = format!("; {total_paths} paths simulated across criteria");
        }
        let pass = report.passed() && report.blow_ups == 0;
        println!(
            "criterion {c:>2} {}: {} ({:.1}s{extra})",
            entry.title(),
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        for check in &report.checks {
            println!("      {check}");
        }
        if KNOWN_UNATTAINABLE.contains(&c) {
            let verdict = c3_failure_matches_oracle(&report);
            match &verdict {
                Ok(note) => println!("      known unattainable, consistent with the exact law: {note}"),
                Err(note) => println!("      known unattainable, but NOT consistent with the exact law: {note}"),
            }
            if verdict.is_err() {
                unexpected.push(c);
            }
        } else if !pass {
            unexpected.push(c);
        }
        reports.push((c, report));
    }

    let passed = reports.iter().filter(|(_, r)| r.passed() && r.blow_ups == 0).count();
    println!(
        "acceptance: {passed}/{} criteria PASS in {:.0}s; known unattainable: {:?}",
        reports.len(),
        started.elapsed().as_secs_f64(),
        KNOWN_UNATTAINABLE
    );
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
