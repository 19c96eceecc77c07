//! `acqc` — analyze two-qubit interactions for ancilla-controlled
//! computation, compile circuits to ancilla-only schedules, run them on the
//! statevector machine, and verify schedules against a reference
//! simulation.
//!
//! All reports are JSON on standard output. Exit codes: 0 on success, 2
//! when a verification lands below threshold, 1 on errors.

mod formats;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use serde_json::json;

use acqc_core::acqc::{effective_two_qubit_gate, validate};
use acqc_core::compile::{
    compile_with_options, parse_circuit, verify, Backend, CompileOptions, VerifyMode,
};
use acqc_core::hamiltonians::{h_general, xxz_evolution, xy_evolution};
use acqc_core::invariants::{entangling_power, local_invariants};
use acqc_core::kak::{kak_decompose, CanonicalAngles};
use acqc_core::qmat::{equal_up_to_global_phase, kron, Unitary2, Unitary4};
use acqc_core::sim::{sample_counts, MachineState, ShotRun};

use formats::{amplitudes_to_json, state2_to_json, MatrixJson, ScheduleJson};

#[derive(Parser)]
#[command(
    name = "acqc",
    version,
    about = "Ancilla-controlled quantum computation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a 4x4 unitary: invariants, canonical decomposition, validity.
    Analyze {
        /// Matrix file (JSON: {"dim": 4, "entries": [[[re, im], ...], ...]})
        matrix: PathBuf,
    },
    /// Lower a circuit to an ancilla-primitive schedule.
    Compile {
        /// Circuit file (line format with a `qubits N` header)
        circuit: PathBuf,
        /// Backend: u1c, u2c, scz, or generic:<matrix.json>
        #[arg(long)]
        backend: String,
        /// Output path for the schedule JSON
        #[arg(short, long)]
        output: PathBuf,
        /// Fold local corrections into adjacent single-qubit gates
        #[arg(long)]
        fold_corrections: bool,
    },
    /// Execute a schedule with seeded shots and report outcome counts.
    Run {
        schedule: PathBuf,
        #[arg(long, default_value_t = 1024)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a schedule against a reference simulation of the circuit.
    Verify {
        circuit: PathBuf,
        schedule: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::State)]
        mode: ModeArg,
        /// Fidelity below this exits with code 2
        #[arg(long, default_value_t = 1.0 - 1e-6)]
        threshold: f64,
    },
    /// Emit the evolution of a two-qubit exchange Hamiltonian.
    Evolve {
        /// xy, xxz, or general:a1,a2,a3
        #[arg(long)]
        hamiltonian: String,
        #[arg(long, default_value_t = 1.0)]
        chi: f64,
        #[arg(long)]
        time: f64,
    },
    /// Print the library's worked identities with pass/fail lines.
    Demo,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    State,
    Unitary,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Analyze { matrix } => analyze(&matrix),
        Command::Compile {
            circuit,
            backend,
            output,
            fold_corrections,
        } => cmd_compile(&circuit, &backend, &output, fold_corrections),
        Command::Run {
            schedule,
            shots,
            seed,
        } => cmd_run(&schedule, shots, seed),
        Command::Verify {
            circuit,
            schedule,
            mode,
            threshold,
        } => cmd_verify(&circuit, &schedule, mode, threshold),
        Command::Evolve {
            hamiltonian,
            chi,
            time,
        } => cmd_evolve(&hamiltonian, chi, time),
        Command::Demo => Ok(demo()),
    }
}

fn read_to_string(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_unitary4(path: &PathBuf) -> Result<Unitary4, String> {
    let text = read_to_string(path)?;
    let m: MatrixJson =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    m.to_unitary4()
}

fn analyze(path: &PathBuf) -> Result<ExitCode, String> {
    let gate = load_unitary4(path)?;
    let inv = local_invariants(&gate).map_err(|e| e.to_string())?;
    let ep = entangling_power(&gate).map_err(|e| e.to_string())?;
    let dec = kak_decompose(&gate).map_err(|e| e.to_string())?;

    let acqc_report = match validate(&gate) {
        Ok(cert) => {
            let effective = effective_two_qubit_gate(&cert, 1).map_err(|e| e.to_string())?;
            json!({
                "valid": true,
                "psi0": state2_to_json(&cert.psi0),
                "p_core": MatrixJson::from_unitary2(&cert.p_core),
                "eigenphase": cert.eigenphase_theta,
                "pre_map": MatrixJson::from_unitary2(&cert.pre_map),
                "post_map": MatrixJson::from_unitary2(&cert.post_map),
                "effective_gate": MatrixJson::from_unitary4(&effective),
            })
        }
        Err(reason) => json!({
            "valid": false,
            "reason": reason.kind(),
            "detail": reason.detail(),
        }),
    };

    let report = json!({
        "g1": [inv.g1.re, inv.g1.im],
        "g2": [inv.g2.re, inv.g2.im],
        "entangling_power": ep,
        "alpha": dec.angles.as_array(),
        "locals": [
            MatrixJson::from_unitary2(&dec.ka1),
            MatrixJson::from_unitary2(&dec.kr1),
            MatrixJson::from_unitary2(&dec.ka2),
            MatrixJson::from_unitary2(&dec.kr2),
        ],
        "phase": dec.phase,
        "acqc": acqc_report,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn backend_from_arg(arg: &str) -> Result<Backend, String> {
    match arg {
        "u1c" => Ok(Backend::u1c()),
        "u2c" => Ok(Backend::u2c()),
        "scz" => Ok(Backend::sc_z()),
        other => {
            let path = other.strip_prefix("generic:").ok_or_else(|| {
                format!("unknown backend `{other}` (use u1c, u2c, scz, or generic:<matrix.json>)")
            })?;
            let gate = load_unitary4(&PathBuf::from(path))?;
            Backend::generic(&gate).map_err(|e| e.to_string())
        }
    }
}

fn cmd_compile(
    circuit_path: &PathBuf,
    backend_arg: &str,
    output: &PathBuf,
    fold_corrections: bool,
) -> Result<ExitCode, String> {
    let text = read_to_string(circuit_path)?;
    let circuit = parse_circuit(&text).map_err(|e| format!("{}: {e}", circuit_path.display()))?;
    let backend = backend_from_arg(backend_arg)?;
    let (schedule, report) =
        compile_with_options(&circuit, &backend, CompileOptions { fold_corrections })
            .map_err(|e| e.to_string())?;

    let schedule_json = ScheduleJson::from_schedule(&schedule);
    let body = serde_json::to_string_pretty(&schedule_json).unwrap();
    fs::write(output, body).map_err(|e| format!("{}: {e}", output.display()))?;

    let cost = json!({
        "backend": backend.name(),
        "interactions": report.interactions,
        "ancilla_gates": report.ancilla_gates,
        "resets": report.resets,
        "readouts": report.readouts,
        "per_gate": report.per_gate.iter().map(|g| json!({
            "gate": g.gate,
            "interactions": g.interactions,
            "ancilla_gates": g.ancilla_gates,
        })).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&cost).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(schedule_path: &PathBuf, shots: usize, seed: u64) -> Result<ExitCode, String> {
    let text = read_to_string(schedule_path)?;
    let parsed: ScheduleJson =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", schedule_path.display()))?;
    let schedule = parsed.to_schedule()?;
    let width = parsed.register_width();
    let mut register = vec![C64::ZERO; 1 << width];
    register[0] = C64::from(1.0);

    let run = ShotRun {
        n_register: width,
        psi0: schedule.psi0,
        register: &register,
        schedule: &schedule.ops,
        interaction: &schedule.interaction,
    };
    let counts = sample_counts(&run, shots, seed).map_err(|e| e.to_string())?;

    let mut report = json!({ "counts": counts, "shots": shots, "seed": seed });
    if shots == 1 {
        // expose the register statevector of the single execution
        let mut machine =
            MachineState::new(width, schedule.psi0, &register, seed).map_err(|e| e.to_string())?;
        machine
            .run_schedule(&schedule.ops, &schedule.interaction)
            .map_err(|e| e.to_string())?;
        let (_, reg) = machine.split_register().map_err(|e| e.to_string())?;
        report["final_state"] = json!(amplitudes_to_json(&reg));
    }
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    circuit_path: &PathBuf,
    schedule_path: &PathBuf,
    mode: ModeArg,
    threshold: f64,
) -> Result<ExitCode, String> {
    let text = read_to_string(circuit_path)?;
    let circuit = parse_circuit(&text).map_err(|e| format!("{}: {e}", circuit_path.display()))?;
    let sched_text = read_to_string(schedule_path)?;
    let parsed: ScheduleJson = serde_json::from_str(&sched_text)
        .map_err(|e| format!("{}: {e}", schedule_path.display()))?;
    let schedule = parsed.to_schedule()?;

    let mode = match mode {
        ModeArg::State => VerifyMode::State,
        ModeArg::Unitary => VerifyMode::Unitary,
    };
    let fidelity = verify(&circuit, &schedule, mode).map_err(|e| e.to_string())?;
    let pass = fidelity >= threshold;
    let report = json!({ "fidelity": fidelity, "threshold": threshold, "pass": pass });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_evolve(hamiltonian: &str, chi: f64, time: f64) -> Result<ExitCode, String> {
    let gate = match hamiltonian {
        "xy" => xy_evolution(time, chi).map_err(|e| e.to_string())?,
        "xxz" => xxz_evolution(time, chi).map_err(|e| e.to_string())?,
        other => {
            let coeffs = other.strip_prefix("general:").ok_or_else(|| {
                format!("unknown hamiltonian `{other}` (use xy, xxz, or general:a1,a2,a3)")
            })?;
            let parts: Vec<f64> = coeffs
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
                .collect::<Result<_, _>>()?;
            if parts.len() != 3 {
                return Err(format!(
                    "general takes three coefficients, found {}",
                    parts.len()
                ));
            }
            let angles = CanonicalAngles::new(parts[0], parts[1], parts[2]);
            h_general(&angles, chi)
                .map_err(|e| e.to_string())?
                .evolve(time)
        }
    };
    let report = MatrixJson::from_unitary4(&gate);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn demo() -> ExitCode {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool| {
        println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
        all_ok &= ok;
    };

    let sc_z = Unitary4::SWAP * Unitary4::CONTROLLED_Z;
    let u1c = acqc_core::hamiltonians::xy_critical();
    let u2c = acqc_core::hamiltonians::xxz_critical();

    // quoted invariants
    let quoted = [
        ("G(CNOT) = (0, 1)", Unitary4::CNOT, (0.0, 1.0)),
        ("G(SWAP) = (-1, -3)", Unitary4::SWAP, (-1.0, -3.0)),
        ("G(SC(Z)) = (0, -1)", sc_z, (0.0, -1.0)),
        ("G(XXZ critical) = (-1/2, -2)", u2c, (-0.5, -2.0)),
    ];
    for (name, gate, (g1, g2)) in quoted {
        let inv = local_invariants(&gate).unwrap();
        check(
            name,
            (inv.g1 - C64::from(g1)).norm() < 1e-9 && (inv.g2 - C64::from(g2)).norm() < 1e-9,
        );
    }

    check(
        "XY critical gate = (s ⊗ s) · SC(Z)",
        u1c.max_abs_diff(&(kron(&Unitary2::PHASE_S, &Unitary2::PHASE_S) * sc_z)) < 1e-10,
    );

    let r = acqc_core::hamiltonians::xxz_cz_rotation();
    check(
        "(R ⊗ R) · (XXZ critical)² = C(Z)",
        (kron(&r, &r) * u2c * u2c).max_abs_diff(&Unitary4::CONTROLLED_Z) < 1e-9,
    );

    let h = Unitary2::HADAMARD;
    let (x, y, z) = (Unitary2::PAULI_X, Unitary2::PAULI_Y, Unitary2::PAULI_Z);
    let (s, sdg) = (Unitary2::PHASE_S, Unitary2::PHASE_S_DAG);
    let lhs = kron(&x, &x) * u1c * kron(&(h * y), &z) * u1c * kron(&(x * s), &(h * sdg * h));
    check(
        "CNOT from two XY-critical applications",
        equal_up_to_global_phase(&lhs, &Unitary4::CNOT, 1e-9).0,
    );

    for (name, gate) in [("SC(Z)", sc_z), ("XY critical", u1c), ("XXZ critical", u2c)] {
        let ok = validate(&gate)
            .map(|cert| cert.psi0.amplitude(0).norm() > 1.0 - 1e-9)
            .unwrap_or(false);
        check(&format!("{name} certified with ancilla |0⟩"), ok);
    }
    check(
        "SWAP rejected (not entangling)",
        validate(&Unitary4::SWAP).is_err(),
    );
    check(
        "CNOT rejected (wrong nonlocal class)",
        validate(&Unitary4::CNOT).is_err(),
    );

    let cert = validate(&sc_z).unwrap();
    let triple = effective_two_qubit_gate(&cert, 1).unwrap();
    check(
        "triple interaction realizes SC(Z) between register qubits",
        equal_up_to_global_phase(&triple, &sc_z, 1e-9).0,
    );

    let cert = validate(&u2c).unwrap();
    let doubled = effective_two_qubit_gate(&cert, 2).unwrap();
    let want = kron(&Unitary2::PAULI_Z, &Unitary2::PHASE_S) * Unitary4::CONTROLLED_Z;
    check(
        "XXZ doubled-middle sandwich realizes (Z ⊗ s) · C(Z)",
        equal_up_to_global_phase(&doubled, &want, 1e-9).0,
    );

    // Bell circuit end to end on the XXZ backend
    let circuit = parse_circuit("qubits 2\nh 0\ncnot 0 1\nmeasure 0 1\n").unwrap();
    let backend = Backend::u2c();
    let (schedule, _) =
        compile_with_options(&circuit, &backend, CompileOptions::default()).unwrap();
    let fidelity = verify(&circuit, &schedule, VerifyMode::Unitary).unwrap();
    check(
        "Bell circuit compiles and verifies on u2c",
        fidelity > 1.0 - 1e-9,
    );
    let mut register = vec![C64::ZERO; 4];
    register[0] = C64::from(1.0);
    let run = ShotRun {
        n_register: 2,
        psi0: schedule.psi0,
        register: &register,
        schedule: &schedule.ops,
        interaction: &schedule.interaction,
    };
    let counts = sample_counts(&run, 2000, 7).unwrap();
    let correlated = counts.get("00").unwrap_or(&0) + counts.get("11").unwrap_or(&0);
    check("Bell statistics perfectly correlated", correlated == 2000);

    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
