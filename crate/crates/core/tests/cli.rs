use std::path::Path;
use std::process::Command;

use gbm_fem::cli::{run_cli, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK};
use gbm_fem::config::{bounds_comparison, lumping_comparison, MeshSpec, RunConfig, TimeSpec};
use gbm_fem::mesh::build_structured_mesh;
use gbm_fem::output::{write_csv, CSV_HEADER};
use gbm_fem::scheme::{run, SchemeVariant};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["gbm-fem"];
    full.extend_from_slice(args);
    let code = run_cli(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn small_config(variant: SchemeVariant) -> RunConfig {
    let mut c = bounds_comparison(variant);
    c.mesh = MeshSpec::unit_square(6);
    c.time = TimeSpec::with_dt(0.05, 0.01);
    c
}

fn write_config(dir: &Path, name: &str, c: &RunConfig) -> String {
    let path = dir.join(name);
    std::fs::write(&path, c.to_toml().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_csv_summary_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &small_config(SchemeVariant::ImexLumped));
    let out_dir = dir.path().join("out");
    let (code, out, err) = cli(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap(), "--snapshot-every", "2"]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    let csv = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("0,0.0000000000000000e0,"));
    for step in [0, 2, 4] {
        let vtk = std::fs::read_to_string(out_dir.join(format!("snapshot_{step:06}.vtk"))).unwrap();
        assert!(vtk.contains("POINT_DATA 49"));
    }
    assert!(!out_dir.join("snapshot_000001.vtk").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("bounds_preserved = true"));
    assert!(summary.contains("envelope.far-from-K.status"));
    assert!(summary.contains("equilibrium = "));
}

#[test]
fn preset_configs_round_trip_to_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = cli(&["write-preset", "bounds-comparison", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let files: Vec<&str> = out.lines().collect();
    assert_eq!(files.len(), 2);
    for (file, variant) in files.iter().zip([SchemeVariant::ImexLumped, SchemeVariant::ExplicitLumped]) {
        let parsed = RunConfig::from_file(Path::new(file)).unwrap();
        assert_eq!(parsed, bounds_comparison(variant));
        let out_dir = dir.path().join(variant.name());
        let (code, _, err) = cli(&["run", file, "--output-dir", out_dir.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{err}");
        let mut expected = Vec::new();
        write_csv(&mut expected, &run(&bounds_comparison(variant)).unwrap().diagnostics).unwrap();
        assert_eq!(std::fs::read(out_dir.join("diagnostics.csv")).unwrap(), expected);
    }
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
}

#[test]
fn lumping_preset_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) =
        cli(&["run", "--preset", "lumping-comparison", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    let csv = std::fs::read_to_string(dir.path().join("lumping-comparison/comparison.csv")).unwrap();
    let lumped = column(&csv, "minT_imex-lumped");
    let consistent = column(&csv, "minT_imex-consistent");
    assert_eq!(lumped.len(), 101);
    assert!(lumped.iter().all(|&x| x >= 0.0));
    assert!(consistent.iter().any(|&x| x < 0.0));
    assert!(dir.path().join("lumping-comparison/imex-consistent/summary.txt").exists());
}

#[test]
fn compare_identical_configs_has_zero_differences() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", &small_config(SchemeVariant::ImexLumped));
    let b = write_config(dir.path(), "b.toml", &small_config(SchemeVariant::ImexLumped));
    let out_dir = dir.path().join("cmp");
    let (code, _, err) = cli(&["compare", &a, &b, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let csv = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    for name in ["diff_minT", "diff_maxT", "diff_minN", "diff_maxN", "diff_minPhi", "diff_maxPhi", "diff_energy_acc"] {
        assert!(column(&csv, name).iter().all(|&x| x == 0.0), "{name}");
    }
}

#[test]
fn compare_rejects_different_grids() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", &small_config(SchemeVariant::ImexLumped));
    let mut other = small_config(SchemeVariant::ExplicitLumped);
    other.time = TimeSpec::with_dt(0.05, 0.005);
    let b = write_config(dir.path(), "b.toml", &other);
    let (code, _, err) = cli(&["compare", &a, &b, "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("do not share"), "{err}");
}

#[test]
fn check_mesh_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("square.mesh");
    let mut buf = Vec::new();
    build_structured_mesh(4, 4, 1.0, 1.0).unwrap().write_to(&mut buf).unwrap();
    std::fs::write(&good, buf).unwrap();
    let (code, out, _) = cli(&["check-mesh", good.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("non-obtuse: true"));

    let obtuse = dir.path().join("obtuse.mesh");
    std::fs::write(&obtuse, "3 1\n0 0\n2 0\n1 0.3\n0 1 2\n").unwrap();
    let (code, out, _) = cli(&["check-mesh", obtuse.to_str().unwrap()]);
    assert_eq!(code, EXIT_NUMERICAL);
    assert!(out.contains("element 0 has an obtuse angle"), "{out}");

    let empty = dir.path().join("empty.mesh");
    std::fs::write(&empty, "").unwrap();
    let (code, _, err) = cli(&["check-mesh", empty.to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("parse error"), "{err}");
}

#[test]
fn config_errors_exit_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = small_config(SchemeVariant::ImexLumped).to_toml().unwrap().replace("rho = 1.0", "rho = [1]");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let (code, _, err) = cli(&["run", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("rho") && err.contains("line"), "{err}");

    let (code, _, _) = cli(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
    let (code, _, _) = cli(&["run"]);
    assert_eq!(code, EXIT_INPUT);
    let (code, _, _) = cli(&["run", "--preset", "nonsense"]);
    assert_eq!(code, EXIT_INPUT);
}

#[test]
fn obtuse_mesh_in_config_names_the_element() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("obtuse.mesh"), "3 1\n0 0\n2 0\n1 0.3\n0 1 2\n").unwrap();
    let mut c = small_config(SchemeVariant::ImexLumped);
    c.mesh = MeshSpec::File { path: "obtuse.mesh".into() };
    let cfg = write_config(dir.path(), "c.toml", &c);
    let (code, _, err) = cli(&["run", &cfg, "--output-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, EXIT_INPUT);
    assert!(err.contains("element 0"), "{err}");
}

#[test]
fn numerical_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config(SchemeVariant::ImexLumped);
    c.solver.max_iter = Some(1);
    c.solver.tol = 1e-15;
    let cfg = write_config(dir.path(), "c.toml", &c);
    let (code, _, err) = cli(&["run", &cfg, "--output-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, EXIT_NUMERICAL, "{err}");
    assert!(err.contains("step 1"), "{err}");
}

#[test]
fn threads_flag_keeps_results_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &lumping_comparison(SchemeVariant::ImexLumped));
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let (code, _, err) = cli(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code, EXIT_OK, "{err}");
        csvs.push(std::fs::read(out_dir.join("diagnostics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_gbm-fem");
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.mesh");
    std::fs::write(&empty, "").unwrap();
    let output = Command::new(exe).args(["check-mesh", empty.to_str().unwrap()]).output().unwrap();
    assert_eq!(output.status.code(), Some(EXIT_INPUT));
    assert!(String::from_utf8_lossy(&output.stderr).contains("parse error"));
    let status = Command::new(exe).arg("--help").output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&status.stdout).contains("check-mesh"));
}
