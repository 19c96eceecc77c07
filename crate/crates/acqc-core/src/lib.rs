//! Analysis, certification, compilation and simulation for ancilla-controlled
//! quantum computation (ACQC): a model in which register qubits are touched
//! only through one fixed two-qubit interaction with a fully controllable
//! ancilla qubit, and all dynamics stay unitary.
//!
//! The crate is organised around that pipeline:
//!
//! - [`qmat`] — dense 2x2 / 4x4 complex linear algebra, Hermitian
//!   exponentials, phase-insensitive comparison.
//! - [`invariants`] — Makhlin local invariants, local equivalence and
//!   entangling power of two-qubit gates.
//! - [`entanglement`] — concurrence, Schmidt decomposition and separability
//!   of pure two-qubit states.
//! - [`kak`] — canonical (KAK) decomposition of `U(4)`, canonical angles and
//!   their relation to the local invariants.
//! - [`acqc`] — validity certification of a candidate interaction, the
//!   single- and two-qubit ancilla protocols, and the entangling-witness
//!   search for rejected ancilla states.
//! - [`hamiltonians`] — the XY and XXZ two-qubit Hamiltonians and the general
//!   exchange family, with closed-form evolutions cross-checked against the
//!   generic matrix exponential.
//! - [`sim`] — a statevector machine for `n` register qubits plus one
//!   ancilla, executing schedules of ancilla-level primitives with seeded
//!   measurement.
//! - [`compile`] — lowering of ordinary gate circuits to ancilla-only
//!   schedules for a validated interaction backend, with dual-simulation
//!   verification.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats and the CLI live in
//! the companion `acqc-cli` crate.

#![cfg_attr(not(test), no_std)]
// indexed loops are the clearest form for the fixed-size matrix kernels here
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod acqc;
pub mod compile;
pub mod entanglement;
pub mod hamiltonians;
pub mod invariants;
pub mod kak;
pub mod qmat;
pub mod rng;
pub mod sim;
