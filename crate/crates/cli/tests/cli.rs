use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_second-lab");

fn second_lab(args: &[&str], extra_env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in extra_env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_file(dir: &Path, name: &str, text: &str, threads: &str) -> Output {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, text).unwrap();
    let out = dir.join(name);
    second_lab(
        &["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[("SECOND_LAB_THREADS", threads)],
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_ENSEMBLE: &str = r#"
scenario = "raman-pi2"
run = "compare"
[grid]
points = 21
[mcwf]
enabled = true
n = 400
seed = 11
"#;

#[test]
fn presets_lists_models_and_figures() {
    let o = second_lab(&["presets"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["two-level", "raman-pi2", "raman-phase", "cz-two-body", "cz-single-10", "readout"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert!(text.contains("figure configs (7)"));
    for f in ["fig2", "fig3", "fig4", "fig5", "supp1", "supp2", "supp3"] {
        assert!(text.contains(&format!("figs/{f}.toml")));
    }
}

#[test]
fn version_matches_package() {
    let o = second_lab(&["version"], &[]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), format!("second-lab {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn run_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_file(dir.path(), "small", SMALL_ENSEMBLE, "2");
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["curves.csv", "meta.txt", "plot.gp"] {
        assert!(dir.path().join("small").join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("small/curves.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t_us,"));
    assert!(header.contains("P_M_"));
    assert_eq!(csv.lines().count(), 22);
}

#[test]
fn meta_file_reproduces_curves() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_file(dir.path(), "first", SMALL_ENSEMBLE, "1");
    assert!(first.status.success(), "{}", stderr(&first));
    let meta = fs::read_to_string(dir.path().join("first/meta.txt")).unwrap();
    let again = run_file(dir.path(), "again", &meta, "3");
    assert!(again.status.success(), "{}", stderr(&again));
    let a = fs::read(dir.path().join("first/curves.csv")).unwrap();
    let b = fs::read(dir.path().join("again/curves.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(meta, fs::read_to_string(dir.path().join("again/meta.txt")).unwrap());
}

#[test]
fn seed_flag_changes_ensemble_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    let text = "scenario = \"two-level\"\nrun = \"compare\"\n[grid]\npoints = 11\n[mcwf]\nenabled = true\nn = 300\nconditioning = \"none\"\n";
    fs::write(&cfg, text).unwrap();
    let read = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = second_lab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed], &[]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("curves.csv")).unwrap()
    };
    let a = read("1", "a");
    let b = read("2", "b");
    let cols = |csv: &str, keep: &dyn Fn(&str) -> bool| -> Vec<String> {
        let mut lines = csv.lines();
        let idx: Vec<usize> =
            lines.next().unwrap().split(',').enumerate().filter(|(_, h)| keep(h)).map(|(i, _)| i).collect();
        lines.flat_map(|l| idx.iter().map(|&i| l.split(',').nth(i).unwrap().to_string()).collect::<Vec<_>>()).collect()
    };
    let deterministic = |h: &str| !h.contains("_M_");
    let ensemble = |h: &str| h.starts_with("P_M_");
    assert_eq!(cols(&a, &deterministic), cols(&b, &deterministic));
    assert_ne!(cols(&a, &ensemble), cols(&b, &ensemble));
}

#[test]
fn zero_rate_trajectory_matches_unitary() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
scenario = "two-level"
run = "trajectory"
[model]
gamma_x_mhz = 0.0
gamma_y_mhz = 0.0
"#;
    let o = run_file(dir.path(), "z", text, "1");
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("z/curves.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let s = header.iter().position(|h| h.starts_with("P_S_")).unwrap();
    let label = &header[s]["P_S_".len()..];
    let u = header.iter().position(|h| *h == format!("P_U_{label}")).unwrap();
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[s] - v[u]).abs() < 1e-8);
    }
}

#[test]
fn shipped_figure_runs_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3");
    let o = second_lab(&["run", "fig3", "--out", out.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
    assert!(csv.lines().next().unwrap().contains("dphi_S_"));
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run_file(dir.path(), "u", "scenario = \"two-level\"\nrun = \"trajectory\"\nbogus = 1\n", "1");
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("bogus"));
    let foreign = run_file(dir.path(), "f", "scenario = \"readout\"\nrun = \"p0\"\n[model]\nb_mhz = 1.0\n", "1");
    assert_eq!(foreign.status.code(), Some(2));
    assert!(stderr(&foreign).contains("b_mhz"));
    let scan = run_file(dir.path(), "s", "scenario = \"two-level\"\nrun = \"scan\"\n", "1");
    assert_eq!(scan.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
scenario = "custom"
run = "trajectory"
[model]
duration_us = 1.0
labels = ["g", "e"]
couplings = [{ from = "g", to = "e", waveform = { kind = "constant", mhz = 1e300 } }]
"#;
    let o = run_file(dir.path(), "n", text, "1");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn empty_ensemble_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
scenario = "custom"
run = "mcwf"
[model]
duration_us = 1.0
labels = ["g", "e", "x"]
couplings = [{ from = "g", to = "e", waveform = { kind = "constant", mhz = 1.0 } }]
[mcwf]
n = 50
conditioning = "end_postselect"
postselect = ["x"]
"#;
    let o = run_file(dir.path(), "e", text, "1");
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_5() {
    let o = second_lab(&["run", "/nonexistent/dir/config.toml"], &[]);
    assert_eq!(o.status.code(), Some(5));
}
