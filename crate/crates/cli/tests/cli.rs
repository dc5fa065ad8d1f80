use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn selfdiff(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_selfdiff"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("SELFDIFF_THREADS", n),
        None => cmd.env_remove("SELFDIFF_THREADS"),
    };
    cmd.output().expect("run selfdiff")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn list_names_the_catalog() {
    let out = selfdiff(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["quadratic_ergodic (§2 Corollary)", "xt_over_logt (§6 Theorem)", "apt_flow (§5 Prop. pta)"] {
        assert!(text.contains(needle), "{needle}");
    }
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn config_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let missing = write_config(dir.path(), "a.cfg", "name = x\nsim.horizon = 2\n");
    let out = selfdiff(&["run", &missing], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gain.family"));

    let unknown = write_config(dir.path(), "b.cfg", "gain.family = constant\nsim.horizn = 2\n");
    let out = selfdiff(&["run", &unknown], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("sim.horizn"), "{err}");

    let ok = write_config(dir.path(), "c.cfg", "gain.family = constant\nsim.n_paths = 2\nsim.horizon = 1\n");
    assert_eq!(selfdiff(&["run", &ok], Some("many")).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "2")] {
        let out_dir = dir.path().join(tag);
        let cfg = write_config(
            dir.path(),
            &format!("{tag}.cfg"),
            &format!(
                "potential.kind = double_well\ngain.family = power\nsim.horizon = 4\nsim.dt_base = 0.05\nsim.decimation = 4\nsim.n_paths = 30\nsim.seed = 9\ndiagnostics = occupation\noutput.dir = {}\n",
                out_dir.display()
            ),
        );
        let out = selfdiff(&["run", &cfg], Some(threads));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        assert!(manifest.contains("sim.seed = 9") && manifest.contains("created_unix"));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "txt") && !p.ends_with("manifest.txt"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        bodies.push(files);
    }
    assert!(bodies[0].iter().any(|(n, _)| n == "paths.csv"));
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn failed_assertion_exits_1() {
    // A step far too coarse for the oracle comparison to pass.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "coarse.cfg",
        &format!(
            "gain.family = constant\nsim.x0 = 1\nsim.horizon = 5\nsim.dt_base = 1.8\nsim.decimation = 1\nsim.n_paths = 4000\ndiagnostics = oracle_compare\noutput.dir = {}\n",
            dir.path().join("out").display()
        ),
    );
    let out = selfdiff(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn oracle_prints_the_exact_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.cfg", "gain.family = constant\nsim.x0 = 1\nsim.horizon = 4\nsim.exact_points = 5\n");
    let out = selfdiff(&["oracle", &cfg], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,mean_Y,var_Y,mean_mubar,var_mubar");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[1], "0,1,0,0,0");

    let dw = write_config(dir.path(), "d.cfg", "gain.family = constant\npotential.kind = double_well\n");
    assert_eq!(selfdiff(&["oracle", &dw], None).status.code(), Some(1));
}
