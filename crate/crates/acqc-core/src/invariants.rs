//! Makhlin local invariants of two-qubit gates, the local-equivalence test
//! they induce, and entangling power.
//!
//! Two gates `V`, `V'` in `U(4)` are locally equivalent — equal up to
//! single-qubit unitaries on each side — iff their invariant pairs
//! `(G1, G2)` coincide. The invariants are computed from
//! `m(V) = (Q† V Q)ᵀ (Q† V Q)` in the magic (Bell-like) basis `Q`, under
//! which local gates become orthogonal matrices.

use num_complex::Complex64 as C64;

use crate::qmat::{Mat4, MatrixError, Unitary4, TOL_UNITARY};

/// Default tolerance for invariant comparison: two orders above the
/// arithmetic noise of the 4x4 pipeline.
pub const TOL_EQUIV: f64 = 1e-8;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

const fn c(re: f64, im: f64) -> C64 {
    C64 { re, im }
}

/// The pair `(G1, G2)`; `G1` is complex in general, `G2` is real for every
/// gate displayed in closed form here but its imaginary part is retained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalInvariants {
    pub g1: C64,
    pub g2: C64,
}

impl LocalInvariants {
    pub fn close_to(&self, other: &Self, tol: f64) -> bool {
        (self.g1 - other.g1).norm() < tol && (self.g2 - other.g2).norm() < tol
    }
}

/// The fixed basis change to the magic basis.
#[derive(Clone, Copy, Debug)]
pub struct MagicBasisMatrix {
    pub q: Unitary4,
}

const Q_ENTRIES: Mat4 = [
    [
        c(FRAC_1_SQRT_2, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(0.0, FRAC_1_SQRT_2),
    ],
    [
        c(0.0, 0.0),
        c(0.0, FRAC_1_SQRT_2),
        c(FRAC_1_SQRT_2, 0.0),
        c(0.0, 0.0),
    ],
    [
        c(0.0, 0.0),
        c(0.0, FRAC_1_SQRT_2),
        c(-FRAC_1_SQRT_2, 0.0),
        c(0.0, 0.0),
    ],
    [
        c(FRAC_1_SQRT_2, 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(0.0, -FRAC_1_SQRT_2),
    ],
];

/// The magic basis matrix `Q` (columns are phased Bell states).
pub fn magic_basis() -> MagicBasisMatrix {
    MagicBasisMatrix {
        q: Unitary4::new(Q_ENTRIES).expect("Q is unitary"),
    }
}

fn check_unitary(v: &Unitary4) -> Result<(), MatrixError> {
    let dev = v.unitarity_deviation();
    if dev > TOL_UNITARY {
        return Err(MatrixError::NotUnitary { deviation: dev });
    }
    Ok(())
}

/// `m(V) = (Q† V Q)ᵀ (Q† V Q)`; symmetric and unitary.
pub fn makhlin_m(v: &Unitary4) -> Result<Unitary4, MatrixError> {
    check_unitary(v)?;
    let q = magic_basis().q;
    let tilde = q.adjoint() * *v * q;
    Ok(tilde.transpose() * tilde)
}

/// The local invariants `G1 = tr²[m] / (16 det V)` and
/// `G2 = (tr²[m] − tr[m²]) / (4 det V)`.
pub fn local_invariants(v: &Unitary4) -> Result<LocalInvariants, MatrixError> {
    let m = makhlin_m(v)?;
    let det = v.det();
    let tr = m.trace();
    let tr_m2 = (m * m).trace();
    let tr2 = tr * tr;
    Ok(LocalInvariants {
        g1: tr2 / (det * 16.0),
        g2: (tr2 - tr_m2) / (det * 4.0),
    })
}

/// Local equivalence by invariant comparison; no witness locals are
/// produced here (the canonical decomposition does that).
pub fn locally_equivalent(a: &Unitary4, b: &Unitary4, tol: f64) -> Result<bool, MatrixError> {
    let ia = local_invariants(a)?;
    let ib = local_invariants(b)?;
    Ok(ia.close_to(&ib, tol))
}

/// Entangling power `e_p = (2/9)(1 − |G1|)`, in `[0, 2/9]`.
pub fn entangling_power(v: &Unitary4) -> Result<f64, MatrixError> {
    let inv = local_invariants(v)?;
    Ok(2.0 / 9.0 * (1.0 - inv.g1.norm()))
}

/// A gate is non-entangling iff it is locally equivalent to the identity or
/// to SWAP; this tests against both classes rather than shortcutting on
/// `|G1| = 1`.
pub fn is_entangling(v: &Unitary4, tol: f64) -> Result<bool, MatrixError> {
    let inv = local_invariants(v)?;
    let identity_class = LocalInvariants {
        g1: c(1.0, 0.0),
        g2: c(3.0, 0.0),
    };
    let swap_class = LocalInvariants {
        g1: c(-1.0, 0.0),
        g2: c(-3.0, 0.0),
    };
    Ok(!inv.close_to(&identity_class, tol) && !inv.close_to(&swap_class, tol))
}
