//! End-to-end tests of the `acqc` binary: file formats, exit codes, and the
//! analyze/compile/run/verify flow.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

static DIR_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir() -> PathBuf {
    let n = DIR_COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!("acqc-cli-test-{}-{n}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn acqc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acqc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn sc_z_matrix_json() -> String {
    let zero = "[0.0, 0.0]";
    let one = "[1.0, 0.0]";
    let neg = "[-1.0, 0.0]";
    format!(
        r#"{{"dim": 4, "entries": [
            [{one}, {zero}, {zero}, {zero}],
            [{zero}, {zero}, {one}, {zero}],
            [{zero}, {one}, {zero}, {zero}],
            [{zero}, {zero}, {zero}, {neg}]
        ]}}"#
    )
}

#[test]
fn analyze_sc_z() {
    let dir = scratch_dir();
    let path = dir.join("scz.json");
    fs::write(&path, sc_z_matrix_json()).unwrap();
    let out = acqc(&["analyze", path.to_str().unwrap()]);
    let report = stdout_json(&out);
    assert!((report["g1"][0].as_f64().unwrap()).abs() < 1e-9);
    assert!((report["g2"][0].as_f64().unwrap() + 1.0).abs() < 1e-9);
    assert!((report["entangling_power"].as_f64().unwrap() - 2.0 / 9.0).abs() < 1e-9);
    let alpha = report["alpha"].as_array().unwrap();
    assert!((alpha[0].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    assert!(alpha[2].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(report["acqc"]["valid"], serde_json::json!(true));
    let psi0 = report["acqc"]["psi0"].as_array().unwrap();
    assert!((psi0[0][0].as_f64().unwrap().abs() - 1.0).abs() < 1e-9);
}

#[test]
fn analyze_rejects_cnot_with_reason() {
    let dir = scratch_dir();
    let path = dir.join("cnot.json");
    let zero = "[0.0, 0.0]";
    let one = "[1.0, 0.0]";
    fs::write(
        &path,
        format!(
            r#"{{"dim": 4, "entries": [
                [{one}, {zero}, {zero}, {zero}],
                [{zero}, {one}, {zero}, {zero}],
                [{zero}, {zero}, {zero}, {one}],
                [{zero}, {zero}, {one}, {zero}]
            ]}}"#
        ),
    )
    .unwrap();
    let out = acqc(&["analyze", path.to_str().unwrap()]);
    let report = stdout_json(&out);
    assert_eq!(report["acqc"]["valid"], serde_json::json!(false));
    assert_eq!(
        report["acqc"]["reason"],
        serde_json::json!("WrongNonlocalClass")
    );
}

#[test]
fn malformed_matrix_is_an_error() {
    let dir = scratch_dir();
    let path = dir.join("bad.json");
    fs::write(&path, r#"{"dim": 4, "entries": []}"#).unwrap();
    let out = acqc(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    // non-unitary input is also an error, not a report
    fs::write(
        &path,
        r#"{"dim": 4, "entries": [
            [[2.0,0.0],[0.0,0.0],[0.0,0.0],[0.0,0.0]],
            [[0.0,0.0],[1.0,0.0],[0.0,0.0],[0.0,0.0]],
            [[0.0,0.0],[0.0,0.0],[1.0,0.0],[0.0,0.0]],
            [[0.0,0.0],[0.0,0.0],[0.0,0.0],[1.0,0.0]]
        ]}"#,
    )
    .unwrap();
    let out = acqc(&["analyze", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compile_run_verify_flow() {
    let dir = scratch_dir();
    let circuit = dir.join("bell.txt");
    fs::write(&circuit, "qubits 2\nh 0\ncnot 0 1\nmeasure 0 1\n").unwrap();
    let schedule = dir.join("schedule.json");

    // compile on each named backend
    for backend in ["u1c", "u2c", "scz"] {
        let out = acqc(&[
            "compile",
            circuit.to_str().unwrap(),
            "--backend",
            backend,
            "-o",
            schedule.to_str().unwrap(),
        ]);
        let cost = stdout_json(&out);
        assert_eq!(cost["backend"], serde_json::json!(backend));
        assert!(cost["interactions"].as_u64().unwrap() >= 4);
        assert_eq!(cost["readouts"], serde_json::json!(2));

        // schedule file round-trips through the documented format
        let body: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&schedule).unwrap()).unwrap();
        assert_eq!(body["interaction"]["dim"], serde_json::json!(4));
        assert_eq!(body["psi0"].as_array().unwrap().len(), 2);
        let ops = body["ops"].as_array().unwrap();
        assert!(ops.iter().any(|op| op["op"] == "interact"));
        assert!(ops.iter().any(|op| op["op"] == "reset"));
        assert!(ops.iter().filter(|op| op["op"] == "readout").count() == 2);

        // Bell statistics: only correlated outcomes
        let out = acqc(&[
            "run",
            schedule.to_str().unwrap(),
            "--shots",
            "500",
            "--seed",
            "3",
        ]);
        let report = stdout_json(&out);
        let counts = report["counts"].as_object().unwrap();
        let correlated = counts.get("00").and_then(|v| v.as_u64()).unwrap_or(0)
            + counts.get("11").and_then(|v| v.as_u64()).unwrap_or(0);
        assert_eq!(correlated, 500, "backend {backend}: {counts:?}");

        // verification passes in both modes
        for mode in ["state", "unitary"] {
            let out = acqc(&[
                "verify",
                circuit.to_str().unwrap(),
                schedule.to_str().unwrap(),
                "--mode",
                mode,
            ]);
            let report = stdout_json(&out);
            assert_eq!(report["pass"], serde_json::json!(true));
            assert!(report["fidelity"].as_f64().unwrap() > 1.0 - 1e-9);
        }
    }
}

#[test]
fn verify_flags_corrupted_schedule_with_exit_2() {
    let dir = scratch_dir();
    let circuit = dir.join("bell.txt");
    fs::write(&circuit, "qubits 2\nh 0\ncnot 0 1\n").unwrap();
    let schedule = dir.join("schedule.json");
    let out = acqc(&[
        "compile",
        circuit.to_str().unwrap(),
        "--backend",
        "u2c",
        "-o",
        schedule.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // drop the first ancilla gate
    let mut body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&schedule).unwrap()).unwrap();
    let ops = body["ops"].as_array_mut().unwrap();
    let pos = ops.iter().position(|op| op["op"] == "ancilla").unwrap();
    ops.remove(pos);
    fs::write(&schedule, serde_json::to_string(&body).unwrap()).unwrap();

    let out = acqc(&[
        "verify",
        circuit.to_str().unwrap(),
        schedule.to_str().unwrap(),
        "--mode",
        "state",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], serde_json::json!(false));
    assert!(report["fidelity"].as_f64().unwrap() < 0.999);
}

#[test]
fn generic_backend_from_matrix_file() {
    let dir = scratch_dir();
    let matrix = dir.join("scz.json");
    fs::write(&matrix, sc_z_matrix_json()).unwrap();
    let circuit = dir.join("circ.txt");
    fs::write(&circuit, "qubits 2\nh 1\ncz 0 1\n").unwrap();
    let schedule = dir.join("schedule.json");
    let backend = format!("generic:{}", matrix.to_str().unwrap());
    let out = acqc(&[
        "compile",
        circuit.to_str().unwrap(),
        "--backend",
        &backend,
        "-o",
        schedule.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = acqc(&[
        "verify",
        circuit.to_str().unwrap(),
        schedule.to_str().unwrap(),
        "--mode",
        "unitary",
    ]);
    let report = stdout_json(&out);
    assert_eq!(report["pass"], serde_json::json!(true));
}

#[test]
fn evolve_critical_xy_gate() {
    let out = acqc(&[
        "evolve",
        "--hamiltonian",
        "xy",
        "--chi",
        "1.0",
        "--time",
        &format!("{}", std::f64::consts::PI / 4.0),
    ]);
    let m = stdout_json(&out);
    assert_eq!(m["dim"], serde_json::json!(4));
    let entries = m["entries"].as_array().unwrap();
    // corners 1, center block i-swap
    assert!((entries[0][0][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((entries[1][2][1].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(entries[1][1][0].as_f64().unwrap().abs() < 1e-12);

    // general coefficients route
    let out = acqc(&[
        "evolve",
        "--hamiltonian",
        "general:1.5707963267948966,1.5707963267948966,0",
        "--chi",
        "1.0",
        "--time",
        "0.5",
    ]);
    assert!(out.status.success());

    // bad rate is an error
    let out = acqc(&["evolve", "--hamiltonian", "xy", "--chi", "0", "--time", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_single_shot_exposes_final_state() {
    let dir = scratch_dir();
    let circuit = dir.join("x.txt");
    fs::write(&circuit, "qubits 1\nh 0\nh 0\n").unwrap();
    let schedule = dir.join("schedule.json");
    acqc(&[
        "compile",
        circuit.to_str().unwrap(),
        "--backend",
        "scz",
        "-o",
        schedule.to_str().unwrap(),
    ]);
    let out = acqc(&[
        "run",
        schedule.to_str().unwrap(),
        "--shots",
        "1",
        "--seed",
        "0",
    ]);
    let report = stdout_json(&out);
    let state = report["final_state"].as_array().unwrap();
    assert_eq!(state.len(), 2);
    // H·H = I: the register returns to |0⟩ up to phase
    let a0 = state[0].as_array().unwrap();
    let mag = (a0[0].as_f64().unwrap().powi(2) + a0[1].as_f64().unwrap().powi(2)).sqrt();
    assert!((mag - 1.0).abs() < 1e-9);
}

#[test]
fn parse_error_reports_location() {
    let dir = scratch_dir();
    let circuit = dir.join("bad.txt");
    fs::write(&circuit, "qubits 2\nh 7\n").unwrap();
    let schedule = dir.join("schedule.json");
    let out = acqc(&[
        "compile",
        circuit.to_str().unwrap(),
        "--backend",
        "u1c",
        "-o",
        schedule.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn demo_exits_clean() {
    let out = acqc(&["demo"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout
        .lines()
        .all(|l| l.is_empty() || l.starts_with("PASS")));
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
}
