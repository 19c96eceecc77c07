//! Closed-form exchange Hamiltonians and their evolutions: the general
//! family `H = -χ(a1 X⊗X + a2 Y⊗Y + a3 Z⊗Z)` (ħ = 1), the XY special case,
//! and the XXZ case whose critical-time gate is the `SC(s)`-class
//! interaction. The closed forms are the implementation; the generic
//! Hermitian exponential is the cross-check.

use core::f64::consts::PI;
use core::fmt;

use num_complex::Complex64 as C64;

use crate::kak::CanonicalAngles;
use crate::qmat::{expm_hermitian, phase, Hermitian4, Unitary2, Unitary4};

const fn c(re: f64, im: f64) -> C64 {
    C64 { re, im }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HamiltonianError {
    /// The interaction rate χ must be positive.
    NonPositiveRate { chi: f64 },
}

impl fmt::Display for HamiltonianError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositiveRate { chi } => write!(f, "rate chi must be positive, got {chi}"),
        }
    }
}

impl core::error::Error for HamiltonianError {}

/// `H = -χ (a1 X⊗X + a2 Y⊗Y + a3 Z⊗Z)`, with χ an explicit rate (1/time).
///
/// Applied for `t = 1/(2χ)` this generates exactly the canonical gate
/// `M(a1, a2, a3)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsingGenerator {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub chi: f64,
}

impl IsingGenerator {
    pub fn hamiltonian(&self) -> Hermitian4 {
        let (xx, yy, zz) = (
            crate::kak::pauli_xx(),
            crate::kak::pauli_yy(),
            crate::kak::pauli_zz(),
        );
        let mut m = [[c(0.0, 0.0); 4]; 4];
        for r in 0..4 {
            for cc in 0..4 {
                m[r][cc] =
                    -(xx[r][cc] * self.a1 + yy[r][cc] * self.a2 + zz[r][cc] * self.a3) * self.chi;
            }
        }
        Hermitian4::new(m).expect("real combination of Hermitian terms")
    }

    /// `exp(-i H t)`.
    pub fn evolve(&self, t: f64) -> Unitary4 {
        expm_hermitian(&self.hamiltonian(), t)
    }
}

/// The generator whose `t = 1/(2χ)` evolution is `M(angles)`.
pub fn h_general(angles: &CanonicalAngles, chi: f64) -> Result<IsingGenerator, HamiltonianError> {
    if chi <= 0.0 {
        return Err(HamiltonianError::NonPositiveRate { chi });
    }
    Ok(IsingGenerator {
        a1: angles.alpha1,
        a2: angles.alpha2,
        a3: angles.alpha3,
        chi,
    })
}

/// The XY exchange generator `H = -χ(X⊗X + Y⊗Y)`.
pub fn xy_generator(chi: f64) -> Result<IsingGenerator, HamiltonianError> {
    if chi <= 0.0 {
        return Err(HamiltonianError::NonPositiveRate { chi });
    }
    Ok(IsingGenerator {
        a1: 1.0,
        a2: 1.0,
        a3: 0.0,
        chi,
    })
}

/// The XXZ generator `H = -(χ/2)(2 X⊗X + 2 Y⊗Y + Z⊗Z)`.
pub fn xxz_generator(chi: f64) -> Result<IsingGenerator, HamiltonianError> {
    if chi <= 0.0 {
        return Err(HamiltonianError::NonPositiveRate { chi });
    }
    Ok(IsingGenerator {
        a1: 1.0,
        a2: 1.0,
        a3: 0.5,
        chi,
    })
}

/// Closed-form XY evolution: identity corners, `cos 2χt / i sin 2χt` on the
/// center block.
pub fn xy_evolution(t: f64, chi: f64) -> Result<Unitary4, HamiltonianError> {
    if chi <= 0.0 {
        return Err(HamiltonianError::NonPositiveRate { chi });
    }
    let (co, si) = (libm::cos(2.0 * chi * t), libm::sin(2.0 * chi * t));
    let mut m = [[c(0.0, 0.0); 4]; 4];
    m[0][0] = c(1.0, 0.0);
    m[1][1] = c(co, 0.0);
    m[1][2] = c(0.0, si);
    m[2][1] = c(0.0, si);
    m[2][2] = c(co, 0.0);
    m[3][3] = c(1.0, 0.0);
    Ok(Unitary4::new(m).expect("closed form is unitary"))
}

/// Closed-form XXZ evolution: `e^{iχt/2}` prefactor, `e^{-iχt}`-dressed
/// center block.
pub fn xxz_evolution(t: f64, chi: f64) -> Result<Unitary4, HamiltonianError> {
    if chi <= 0.0 {
        return Err(HamiltonianError::NonPositiveRate { chi });
    }
    let pre = phase(0.5 * chi * t);
    let e = phase(-chi * t);
    let (co, si) = (libm::cos(2.0 * chi * t), libm::sin(2.0 * chi * t));
    let mut m = [[c(0.0, 0.0); 4]; 4];
    m[0][0] = pre;
    m[1][1] = pre * e * co;
    m[1][2] = pre * e * c(0.0, si);
    m[2][1] = pre * e * c(0.0, si);
    m[2][2] = pre * e * co;
    m[3][3] = pre;
    Ok(Unitary4::new(m).expect("closed form is unitary"))
}

/// The XY gate at the critical time `t = π/(4χ)`: i-swap center block.
pub fn xy_critical() -> Unitary4 {
    xy_evolution(PI / 4.0, 1.0).expect("chi = 1")
}

/// The XXZ gate at the critical time `t = π/(4χ)`: corners `e^{iπ/8}`,
/// center entries `i e^{-iπ/8}`.
pub fn xxz_critical() -> Unitary4 {
    xxz_evolution(PI / 4.0, 1.0).expect("chi = 1")
}

/// The single-qubit rotation `R = e^{-iπ/8}|0⟩⟨0| − e^{i3π/8}|1⟩⟨1|`;
/// applied to each qubit it carries the squared XXZ critical gate onto
/// `C(Z)` exactly.
pub fn xxz_cz_rotation() -> Unitary2 {
    let m = [
        [phase(-PI / 8.0), c(0.0, 0.0)],
        [c(0.0, 0.0), -phase(3.0 * PI / 8.0)],
    ];
    Unitary2::new(m).expect("diagonal phases")
}
