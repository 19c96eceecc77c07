//! Statevector machine for `n` register qubits plus one ancilla, executing
//! schedules of ancilla-level primitives.
//!
//! The register is never addressed directly: the only primitives are the
//! fixed interaction against one register qubit, unitaries on the ancilla,
//! ancilla reset, and readout (which routes a register qubit through the
//! ancilla before measuring). The ancilla occupies the most significant
//! amplitude index bit; register qubit `q` sits at bit `n_register − 1 − q`.
//!
//! Measurement randomness comes from the crate's SplitMix64 generator, one
//! split stream per shot, so every statistic is reproducible from the seed.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64 as C64;

use crate::acqc::swap_action;
use crate::qmat::{State2, Unitary2, Unitary4};
use crate::rng::SplitMix64;

/// Memory guard: at most 2^21 amplitudes.
pub const MAX_REGISTER_QUBITS: usize = 20;

/// Ancilla purity threshold for reset: `tr ρ² > 1 − 1e-6`.
pub const RESET_PURITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    RegisterTooLarge {
        n_register: usize,
    },
    InvalidIndex {
        index: usize,
        n_register: usize,
    },
    DimensionMismatch {
        expected: usize,
        got: usize,
    },
    NotNormalized {
        norm: f64,
    },
    /// Reset demanded while the ancilla is still entangled with the register.
    ResetOnEntangledAncilla {
        purity: f64,
    },
    /// The interaction/initial-state pair admits no swap action, so the
    /// readout basis correction cannot be derived.
    ReadoutCorrectionUnavailable,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RegisterTooLarge { n_register } => {
                write!(
                    f,
                    "register of {n_register} qubits exceeds the guard of {MAX_REGISTER_QUBITS}"
                )
            }
            Self::InvalidIndex { index, n_register } => {
                write!(
                    f,
                    "register index {index} out of range for {n_register} qubits"
                )
            }
            Self::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} amplitudes, got {got}")
            }
            Self::NotNormalized { norm } => write!(f, "state norm {norm} is not 1"),
            Self::ResetOnEntangledAncilla { purity } => {
                write!(f, "ancilla reset while entangled (purity {purity})")
            }
            Self::ReadoutCorrectionUnavailable => {
                write!(f, "no swap action for this interaction and ancilla state")
            }
        }
    }
}

impl core::error::Error for SimError {}

/// One ancilla-level instruction.
#[derive(Clone, Debug)]
pub enum Primitive {
    /// Apply the fixed interaction between the ancilla and one register qubit.
    Interact { register_index: usize },
    /// Apply a unitary to the ancilla alone.
    AncillaGate { u: Unitary2 },
    /// Verify the ancilla is separable and re-prepare it in ψ0.
    ResetAncilla,
    /// Swap a register qubit into the ancilla via the interaction, undo the
    /// residual ancilla frame, and measure the ancilla.
    Readout { register_index: usize },
}

/// One recorded measurement: primitive step index, outcome bit, and the
/// probability with which that outcome occurred.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub step: usize,
    pub outcome: u8,
    pub probability: f64,
}

/// The full machine: statevector, reset target, seeded randomness and the
/// measurement log.
#[derive(Clone, Debug)]
pub struct MachineState {
    n_register: usize,
    amplitudes: Vec<C64>,
    psi0: State2,
    rng: SplitMix64,
    step: usize,
    log: Vec<MeasurementRecord>,
}

impl MachineState {
    /// Tensor `ψ0 ⊗ register` as the initial state.
    pub fn new(
        n_register: usize,
        psi0: State2,
        register: &[C64],
        seed: u64,
    ) -> Result<Self, SimError> {
        Self::with_rng(n_register, psi0, register, SplitMix64::new(seed))
    }

    pub fn with_rng(
        n_register: usize,
        psi0: State2,
        register: &[C64],
        rng: SplitMix64,
    ) -> Result<Self, SimError> {
        if n_register == 0 || n_register > MAX_REGISTER_QUBITS {
            return Err(SimError::RegisterTooLarge { n_register });
        }
        let dim = 1usize << n_register;
        if register.len() != dim {
            return Err(SimError::DimensionMismatch {
                expected: dim,
                got: register.len(),
            });
        }
        let norm = libm::sqrt(register.iter().map(|z| z.norm_sqr()).sum());
        if libm::fabs(norm - 1.0) > 1e-9 {
            return Err(SimError::NotNormalized { norm });
        }
        let mut amplitudes = Vec::with_capacity(dim * 2);
        for a in 0..2 {
            for r in register {
                amplitudes.push(psi0.amplitude(a) * r);
            }
        }
        Ok(Self {
            n_register,
            amplitudes,
            psi0,
            rng,
            step: 0,
            log: Vec::new(),
        })
    }

    pub fn n_register(&self) -> usize {
        self.n_register
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn measurement_log(&self) -> &[MeasurementRecord] {
        &self.log
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.amplitudes.iter().map(|z| z.norm_sqr()).sum())
    }

    fn ancilla_bit(&self) -> usize {
        1 << self.n_register
    }

    fn qubit_bit(&self, q: usize) -> usize {
        1 << (self.n_register - 1 - q)
    }

    /// Reduced ancilla density matrix.
    fn ancilla_rho(&self) -> [[C64; 2]; 2] {
        let half = self.ancilla_bit();
        let mut rho = [[C64::ZERO; 2]; 2];
        for r in 0..half {
            let lo = self.amplitudes[r];
            let hi = self.amplitudes[half + r];
            rho[0][0] += lo * lo.conj();
            rho[0][1] += lo * hi.conj();
            rho[1][0] += hi * lo.conj();
            rho[1][1] += hi * hi.conj();
        }
        rho
    }

    /// `tr ρ²` of the ancilla — 1 iff the ancilla is separable.
    pub fn ancilla_purity(&self) -> f64 {
        let rho = self.ancilla_rho();
        let det = (rho[0][0] * rho[1][1] - rho[0][1] * rho[1][0]).re;
        1.0 - 2.0 * det
    }

    /// Splits off the ancilla factor if it is separable within the reset
    /// tolerance, returning the (canonically phased) ancilla state and the
    /// normalized register statevector.
    pub fn split_register(&self) -> Result<(State2, Vec<C64>), SimError> {
        let purity = self.ancilla_purity();
        if purity < 1.0 - RESET_PURITY_TOL {
            return Err(SimError::ResetOnEntangledAncilla { purity });
        }
        let rho = self.ancilla_rho();
        let (a, b, d) = (rho[0][0].re, rho[0][1], rho[1][1].re);
        let disc = libm::sqrt(libm::fmax((a - d) * (a - d) + 4.0 * b.norm_sqr(), 0.0));
        let l1 = 0.5 * (a + d + disc);
        let chi = if b.norm() > 1e-15 {
            State2::normalized([b, C64::from(l1 - a)]).expect("dominant eigenvector")
        } else if a >= d {
            State2::ZERO
        } else {
            State2::ONE
        }
        .with_canonical_phase();
        let half = self.ancilla_bit();
        let mut reg = Vec::with_capacity(half);
        for r in 0..half {
            reg.push(
                chi.amplitude(0).conj() * self.amplitudes[r]
                    + chi.amplitude(1).conj() * self.amplitudes[half + r],
            );
        }
        let norm = libm::sqrt(reg.iter().map(|z| z.norm_sqr()).sum::<f64>());
        for z in reg.iter_mut() {
            *z /= norm;
        }
        Ok((chi, reg))
    }

    /// Applies the 4x4 interaction on the (ancilla, register `q`) pair.
    fn interact(&mut self, k: &Unitary4, q: usize) -> Result<(), SimError> {
        if q >= self.n_register {
            return Err(SimError::InvalidIndex {
                index: q,
                n_register: self.n_register,
            });
        }
        let abit = self.ancilla_bit();
        let qbit = self.qubit_bit(q);
        let dim = self.amplitudes.len();
        for base in 0..dim {
            if base & abit != 0 || base & qbit != 0 {
                continue;
            }
            let idx = [base, base | qbit, base | abit, base | abit | qbit];
            let mut v = [C64::ZERO; 4];
            for (slot, &i) in v.iter_mut().zip(idx.iter()) {
                *slot = self.amplitudes[i];
            }
            for (row, &i) in idx.iter().enumerate() {
                let mut acc = C64::ZERO;
                for (col, amp) in v.iter().enumerate() {
                    acc += k.entry(row, col) * amp;
                }
                self.amplitudes[i] = acc;
            }
        }
        Ok(())
    }

    fn ancilla_gate(&mut self, u: &Unitary2) {
        let half = self.ancilla_bit();
        for r in 0..half {
            let lo = self.amplitudes[r];
            let hi = self.amplitudes[half + r];
            self.amplitudes[r] = u.entry(0, 0) * lo + u.entry(0, 1) * hi;
            self.amplitudes[half + r] = u.entry(1, 0) * lo + u.entry(1, 1) * hi;
        }
    }

    /// Verified projection: the ancilla must already be separable; its
    /// factor is replaced by ψ0.
    fn reset_ancilla(&mut self) -> Result<(), SimError> {
        let purity = self.ancilla_purity();
        if purity < 1.0 - RESET_PURITY_TOL {
            return Err(SimError::ResetOnEntangledAncilla { purity });
        }
        let (_, reg) = self.split_register()?;
        let half = self.ancilla_bit();
        for r in 0..half {
            self.amplitudes[r] = self.psi0.amplitude(0) * reg[r];
            self.amplitudes[half + r] = self.psi0.amplitude(1) * reg[r];
        }
        Ok(())
    }

    /// Interact, undo the swap-action frame `f`, then measure the ancilla in
    /// the computational basis; collapse, log, and re-prepare the ancilla.
    fn readout(&mut self, k: &Unitary4, q: usize) -> Result<(), SimError> {
        let (f, _) = swap_action(k, &self.psi0).ok_or(SimError::ReadoutCorrectionUnavailable)?;
        self.interact(k, q)?;
        self.ancilla_gate(&f.adjoint());

        let half = self.ancilla_bit();
        let mut p1 = 0.0;
        for r in 0..half {
            p1 += self.amplitudes[half + r].norm_sqr();
        }
        let outcome = u8::from(self.rng.next_f64() < p1);
        let probability = if outcome == 1 { p1 } else { 1.0 - p1 };
        let keep = if outcome == 1 { half } else { 0 };
        let scale = 1.0 / libm::sqrt(probability);
        let mut reg = Vec::with_capacity(half);
        for r in 0..half {
            reg.push(self.amplitudes[keep + r] * scale);
        }
        // ancilla is now exactly |outcome⟩; re-prepare it in ψ0
        for r in 0..half {
            self.amplitudes[r] = self.psi0.amplitude(0) * reg[r];
            self.amplitudes[half + r] = self.psi0.amplitude(1) * reg[r];
        }
        self.log.push(MeasurementRecord {
            step: self.step,
            outcome,
            probability,
        });
        Ok(())
    }

    /// Applies one primitive; `k` is the machine's fixed interaction.
    pub fn apply_primitive(&mut self, prim: &Primitive, k: &Unitary4) -> Result<(), SimError> {
        match prim {
            Primitive::Interact { register_index } => self.interact(k, *register_index)?,
            Primitive::AncillaGate { u } => self.ancilla_gate(u),
            Primitive::ResetAncilla => self.reset_ancilla()?,
            Primitive::Readout { register_index } => self.readout(k, *register_index)?,
        }
        self.step += 1;
        Ok(())
    }

    /// Applies primitives in order.
    pub fn run_schedule(&mut self, schedule: &[Primitive], k: &Unitary4) -> Result<(), SimError> {
        for prim in schedule {
            self.apply_primitive(prim, k)?;
        }
        Ok(())
    }
}

/// Everything needed to run one schedule repeatedly.
#[derive(Clone, Debug)]
pub struct ShotRun<'a> {
    pub n_register: usize,
    pub psi0: State2,
    pub register: &'a [C64],
    pub schedule: &'a [Primitive],
    pub interaction: &'a Unitary4,
}

/// Runs `shots` independent executions, each on a split RNG stream, and
/// histograms the readout bitstrings (readouts concatenated in schedule
/// order).
pub fn sample_counts(
    run: &ShotRun<'_>,
    shots: usize,
    seed: u64,
) -> Result<BTreeMap<String, usize>, SimError> {
    let mut master = SplitMix64::new(seed);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..shots {
        let child = master.split();
        let mut machine = MachineState::with_rng(run.n_register, run.psi0, run.register, child)?;
        machine.run_schedule(run.schedule, run.interaction)?;
        let mut key = String::new();
        for rec in machine.measurement_log() {
            key.push(if rec.outcome == 1 { '1' } else { '0' });
        }
        *counts.entry(key).or_insert(0) += 1;
    }
    Ok(counts)
}
