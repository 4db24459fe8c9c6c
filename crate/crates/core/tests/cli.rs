use std::path::Path;
use std::process::Command;

use qkinetic::config::RunConfig;
use serde_json::{json, Value};

fn qk(cmd: &str, config: Option<&Path>, out: &Path) -> (i32, String) {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qkinetic"));
    c.arg(cmd).arg("--out").arg(out).arg("--quiet");
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    let o = c.output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn write_config(dir: &Path, v: &Value) -> std::path::PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

/// A run small enough for a test: n = 8, coarse angular rule.
fn small() -> Value {
    json!({
        "potential": {"kind": "gaussian", "amplitude": 1.0, "width": 1.0},
        "kernel": {"statistics": "bose_einstein", "eps": 0.5, "eps_list": [0.3]},
        "grid": {"n": 8, "L": 5.0},
        "quadrature": {"n_r": 4, "n_phi": 4},
        "initial": {"kind": "perturbed_maxwellian", "rho": 1.0, "temperature": 1.0, "anisotropy": 0.3},
        "evolve": {"model": "landau", "dt": 0.01, "t_final": 0.02},
        "limit": {"t_final": 0.01, "control_floor": false}
    })
}

#[test]
fn moments_reports_gaussian_values() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = qk("moments", Some(&write_config(d.path(), &small())), d.path());
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(d.path().join("moments.csv")).unwrap();
    assert!(csv.starts_with("a,I_a,Iprime_a\n"));
    let row = csv.lines().find(|l| l.starts_with("3,")).unwrap();
    let cols: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
    assert!((cols[1] - 0.125).abs() < 1e-10 && (cols[2] - 0.75).abs() < 1e-10, "{row}");
    assert!(stdout.contains("a1_holds,true"));
    assert!(d.path().join("assumptions.json").exists());
}

#[test]
fn validation_errors_exit_with_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(qk("moments", None, d.path()).0, 2);
    let mut v = small();
    v["grid"]["size"] = json!(3);
    assert_eq!(qk("moments", Some(&write_config(d.path(), &v)), d.path()).0, 2);
    let mut v = small();
    v["kernel"]["eps"] = json!(1.5);
    assert_eq!(qk("moments", Some(&write_config(d.path(), &v)), d.path()).0, 2);
    let o = Command::new(env!("CARGO_BIN_EXE_qkinetic")).arg("no-such-command").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fermi_dirac_data_above_the_cap_is_a_precondition_error() {
    let d = tempfile::tempdir().unwrap();
    let mut v = small();
    v["kernel"] = json!({"statistics": "fermi_dirac", "eps": 1.0, "eps_list": [0.5]});
    v["initial"] = json!({"kind": "maxwellian", "rho": 20.0, "u": [0.0, 0.0, 0.0], "temperature": 0.5});
    v["evolve"]["model"] = json!("uu");
    assert_eq!(qk("evolve", Some(&write_config(d.path(), &v)), d.path()).0, 2);
}

#[test]
fn single_eps_limit_study_is_degenerate() {
    let d = tempfile::tempdir().unwrap();
    let (code, stdout) = qk("limit-study", Some(&write_config(d.path(), &small())), d.path());
    assert_eq!(code, 3, "{stdout}");
    assert!(stdout.contains("degenerate=true"));
}

#[test]
fn evolve_writes_outputs_and_echoes_the_config() {
    let d = tempfile::tempdir().unwrap();
    let p = write_config(d.path(), &small());
    let (code, _) = qk("evolve", Some(&p), d.path());
    assert_eq!(code, 0);
    let diag = std::fs::read_to_string(d.path().join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 3);
    assert!(d.path().join("final.skf").exists());
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("evolve_summary.json")).unwrap()).unwrap();
    let echoed = RunConfig::from_json(&summary["config"].to_string()).unwrap();
    let (mut loaded, _) = RunConfig::load(&p).unwrap();
    loaded.output.directory = Some(d.path().to_path_buf());
    assert_eq!(echoed, loaded);
    assert_eq!(summary["steps"], json!(2));
}
