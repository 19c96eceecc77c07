//! Dense complex linear algebra at the two fixed dimensions the gate model
//! needs: 2x2 and 4x4 matrices and 2- and 4-component state vectors.
//!
//! Matrices are stored row-major. Validated constructors enforce the type
//! invariants (unitarity, hermiticity, unit norm, finite entries) at the
//! crate boundary; internal combinators preserve them by construction.

use core::fmt;
use core::ops::Mul;

use num_complex::Complex64 as C64;

/// Max-abs-entry tolerance for the unitarity / hermiticity / norm invariants.
pub const TOL_UNITARY: f64 = 1e-10;

/// Off-diagonal mass threshold at which the Jacobi eigensolver stops.
const TOL_JACOBI: f64 = 1e-13;

pub type Mat2 = [[C64; 2]; 2];
pub type Mat4 = [[C64; 4]; 4];

const fn c(re: f64, im: f64) -> C64 {
    C64 { re, im }
}

const ZERO: C64 = c(0.0, 0.0);
const ONE: C64 = c(1.0, 0.0);
const IM: C64 = c(0.0, 1.0);
const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Unit complex number `e^{i phi}`.
pub fn phase(phi: f64) -> C64 {
    c(libm::cos(phi), libm::sin(phi))
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixError {
    /// `U†U` deviates from the identity by more than [`TOL_UNITARY`].
    NotUnitary { deviation: f64 },
    /// `H` deviates from `H†` by more than [`TOL_UNITARY`].
    NotHermitian { deviation: f64 },
    /// State vector norm differs from 1 by more than [`TOL_UNITARY`].
    NotNormalized { norm: f64 },
    /// A NaN or infinity appeared in the input.
    NonFinite,
    /// Two vectors of different lengths were compared.
    LengthMismatch { left: usize, right: usize },
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotUnitary { deviation } => {
                write!(f, "matrix is not unitary (deviation {deviation:.3e})")
            }
            Self::NotHermitian { deviation } => {
                write!(f, "matrix is not Hermitian (deviation {deviation:.3e})")
            }
            Self::NotNormalized { norm } => {
                write!(f, "state is not normalized (norm {norm})")
            }
            Self::NonFinite => write!(f, "non-finite entry"),
            Self::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
        }
    }
}

impl core::error::Error for MatrixError {}

fn finite(z: C64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

// ---------------------------------------------------------------------------
// raw fixed-size helpers
// ---------------------------------------------------------------------------

pub(crate) fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for cc in 0..2 {
            let mut acc = ZERO;
            for k in 0..2 {
                acc += a[r][k] * b[k][cc];
            }
            out[r][cc] = acc;
        }
    }
    out
}

pub(crate) fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            let mut acc = ZERO;
            for k in 0..4 {
                acc += a[r][k] * b[k][cc];
            }
            out[r][cc] = acc;
        }
    }
    out
}

pub(crate) fn mat2_adjoint(a: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for cc in 0..2 {
            out[r][cc] = a[cc][r].conj();
        }
    }
    out
}

pub(crate) fn mat4_adjoint(a: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            out[r][cc] = a[cc][r].conj();
        }
    }
    out
}

pub(crate) fn mat4_transpose(a: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            out[r][cc] = a[cc][r];
        }
    }
    out
}

pub(crate) fn mat4_trace(a: &Mat4) -> C64 {
    a[0][0] + a[1][1] + a[2][2] + a[3][3]
}

fn det3(m: [[C64; 3]; 3]) -> C64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Exact 4x4 determinant by cofactor expansion along the first row.
pub(crate) fn mat4_det(a: &Mat4) -> C64 {
    let mut det = ZERO;
    let mut sign = ONE;
    for col in 0..4 {
        let mut minor = [[ZERO; 3]; 3];
        for (mr, r) in (1..4).enumerate() {
            let mut mc = 0;
            for cc in 0..4 {
                if cc == col {
                    continue;
                }
                minor[mr][mc] = a[r][cc];
                mc += 1;
            }
        }
        det += sign * a[0][col] * det3(minor);
        sign = -sign;
    }
    det
}

fn mat2_max_abs_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut m = 0.0_f64;
    for r in 0..2 {
        for cc in 0..2 {
            m = m.max((a[r][cc] - b[r][cc]).norm());
        }
    }
    m
}

fn mat4_max_abs_diff(a: &Mat4, b: &Mat4) -> f64 {
    let mut m = 0.0_f64;
    for r in 0..4 {
        for cc in 0..4 {
            m = m.max((a[r][cc] - b[r][cc]).norm());
        }
    }
    m
}

fn unitarity_deviation2(m: &Mat2) -> f64 {
    let prod = mat2_mul(&mat2_adjoint(m), m);
    let mut dev = 0.0_f64;
    for r in 0..2 {
        for cc in 0..2 {
            let want = if r == cc { ONE } else { ZERO };
            dev = dev.max((prod[r][cc] - want).norm());
        }
    }
    dev
}

fn unitarity_deviation4(m: &Mat4) -> f64 {
    let prod = mat4_mul(&mat4_adjoint(m), m);
    let mut dev = 0.0_f64;
    for r in 0..4 {
        for cc in 0..4 {
            let want = if r == cc { ONE } else { ZERO };
            dev = dev.max((prod[r][cc] - want).norm());
        }
    }
    dev
}

// ---------------------------------------------------------------------------
// Unitary2
// ---------------------------------------------------------------------------

/// A 2x2 unitary, the currency for single-qubit gates and local factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2 {
    m: Mat2,
}

impl Unitary2 {
    pub const IDENTITY: Self = Self {
        m: [[ONE, ZERO], [ZERO, ONE]],
    };
    pub const PAULI_X: Self = Self {
        m: [[ZERO, ONE], [ONE, ZERO]],
    };
    pub const PAULI_Y: Self = Self {
        m: [[ZERO, c(0.0, -1.0)], [IM, ZERO]],
    };
    pub const PAULI_Z: Self = Self {
        m: [[ONE, ZERO], [ZERO, c(-1.0, 0.0)]],
    };
    pub const HADAMARD: Self = Self {
        m: [
            [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
            [c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
        ],
    };
    /// The phase gate `s = diag(1, i)`.
    pub const PHASE_S: Self = Self {
        m: [[ONE, ZERO], [ZERO, IM]],
    };
    pub const PHASE_S_DAG: Self = Self {
        m: [[ONE, ZERO], [ZERO, c(0.0, -1.0)]],
    };
    /// The pi/8 gate `T = diag(1, e^{i pi/4})`.
    pub const PHASE_T: Self = Self {
        m: [[ONE, ZERO], [ZERO, c(FRAC_1_SQRT_2, FRAC_1_SQRT_2)]],
    };
    pub const PHASE_T_DAG: Self = Self {
        m: [[ONE, ZERO], [ZERO, c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)]],
    };

    /// Validates unitarity within [`TOL_UNITARY`].
    pub fn new(entries: Mat2) -> Result<Self, MatrixError> {
        if entries.iter().flatten().any(|z| !finite(*z)) {
            return Err(MatrixError::NonFinite);
        }
        let dev = unitarity_deviation2(&entries);
        if dev > TOL_UNITARY {
            return Err(MatrixError::NotUnitary { deviation: dev });
        }
        Ok(Self { m: entries })
    }

    /// Rotation `R(phi) = diag(1, e^{i phi})`.
    pub fn rotation(phi: f64) -> Self {
        Self {
            m: [[ONE, ZERO], [ZERO, phase(phi)]],
        }
    }

    pub fn entry(&self, r: usize, col: usize) -> C64 {
        self.m[r][col]
    }

    pub fn entries(&self) -> Mat2 {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: mat2_adjoint(&self.m),
        }
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    /// `e^{i phi} U`.
    pub fn phase_shifted(&self, phi: f64) -> Self {
        let p = phase(phi);
        let mut m = self.m;
        for row in m.iter_mut() {
            for z in row.iter_mut() {
                *z *= p;
            }
        }
        Self { m }
    }

    pub fn apply(&self, s: &State2) -> State2 {
        let v = s.amplitudes();
        State2::from_raw([
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        mat2_max_abs_diff(&self.m, &other.m)
    }

    /// Entrywise comparison, no phase slack.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Self) -> Self {
        Self {
            m: mat2_mul(&self.m, &rhs.m),
        }
    }
}

// ---------------------------------------------------------------------------
// Unitary4
// ---------------------------------------------------------------------------

/// A 4x4 unitary on (ancilla ⊗ register) or (qubit1 ⊗ qubit2); the qubit
/// order in use is stated wherever it matters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary4 {
    m: Mat4,
}

impl Unitary4 {
    pub const IDENTITY: Self = Self {
        m: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ONE, ZERO, ZERO],
            [ZERO, ZERO, ONE, ZERO],
            [ZERO, ZERO, ZERO, ONE],
        ],
    };
    pub const SWAP: Self = Self {
        m: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ZERO, ONE, ZERO],
            [ZERO, ONE, ZERO, ZERO],
            [ZERO, ZERO, ZERO, ONE],
        ],
    };
    pub const CONTROLLED_Z: Self = Self {
        m: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ONE, ZERO, ZERO],
            [ZERO, ZERO, ONE, ZERO],
            [ZERO, ZERO, ZERO, c(-1.0, 0.0)],
        ],
    };
    /// Control on the first tensor factor.
    pub const CNOT: Self = Self {
        m: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ONE, ZERO, ZERO],
            [ZERO, ZERO, ZERO, ONE],
            [ZERO, ZERO, ONE, ZERO],
        ],
    };

    /// Validates unitarity within [`TOL_UNITARY`].
    pub fn new(entries: Mat4) -> Result<Self, MatrixError> {
        if entries.iter().flatten().any(|z| !finite(*z)) {
            return Err(MatrixError::NonFinite);
        }
        let dev = unitarity_deviation4(&entries);
        if dev > TOL_UNITARY {
            return Err(MatrixError::NotUnitary { deviation: dev });
        }
        Ok(Self { m: entries })
    }

    pub(crate) fn from_raw(m: Mat4) -> Self {
        debug_assert!(unitarity_deviation4(&m) < 1e-7);
        Self { m }
    }

    #[cfg(test)]
    pub(crate) fn from_raw_for_tests(m: Mat4) -> Self {
        Self { m }
    }

    pub fn entry(&self, r: usize, col: usize) -> C64 {
        self.m[r][col]
    }

    pub fn entries(&self) -> Mat4 {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            m: mat4_adjoint(&self.m),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: mat4_transpose(&self.m),
        }
    }

    pub fn det(&self) -> C64 {
        mat4_det(&self.m)
    }

    pub fn trace(&self) -> C64 {
        mat4_trace(&self.m)
    }

    /// `e^{i phi} U`.
    pub fn phase_shifted(&self, phi: f64) -> Self {
        let p = phase(phi);
        let mut m = self.m;
        for row in m.iter_mut() {
            for z in row.iter_mut() {
                *z *= p;
            }
        }
        Self { m }
    }

    pub fn apply(&self, s: &State4) -> State4 {
        let v = s.amplitudes();
        let mut out = [ZERO; 4];
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (k, amp) in v.iter().enumerate() {
                acc += self.m[r][k] * amp;
            }
            *slot = acc;
        }
        State4::from_raw(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        mat4_max_abs_diff(&self.m, &other.m)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn unitarity_deviation(&self) -> f64 {
        unitarity_deviation4(&self.m)
    }
}

impl Mul for Unitary4 {
    type Output = Unitary4;

    fn mul(self, rhs: Self) -> Self {
        Self {
            m: mat4_mul(&self.m, &rhs.m),
        }
    }
}

/// Kronecker product; realizes every `a ⊗ b` local operator.
pub fn kron(a: &Unitary2, b: &Unitary2) -> Unitary4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[2 * i + k][2 * j + l] = a.entry(i, j) * b.entry(k, l);
                }
            }
        }
    }
    Unitary4::from_raw(m)
}

// ---------------------------------------------------------------------------
// states
// ---------------------------------------------------------------------------

/// A single-qubit pure state, unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State2 {
    v: [C64; 2],
}

impl State2 {
    pub const ZERO: Self = Self { v: [ONE, ZERO] };
    pub const ONE: Self = Self { v: [ZERO, ONE] };
    pub const PLUS: Self = Self {
        v: [c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)],
    };
    pub const MINUS: Self = Self {
        v: [c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0)],
    };
    pub const PLUS_I: Self = Self {
        v: [c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)],
    };

    pub fn new(v: [C64; 2]) -> Result<Self, MatrixError> {
        if v.iter().any(|z| !finite(*z)) {
            return Err(MatrixError::NonFinite);
        }
        let norm = libm::sqrt(v[0].norm_sqr() + v[1].norm_sqr());
        if libm::fabs(norm - 1.0) > TOL_UNITARY {
            return Err(MatrixError::NotNormalized { norm });
        }
        Ok(Self { v })
    }

    /// Normalizes a nonzero raw vector.
    pub fn normalized(v: [C64; 2]) -> Result<Self, MatrixError> {
        let norm = libm::sqrt(v[0].norm_sqr() + v[1].norm_sqr());
        if !norm.is_finite() || norm < 1e-12 {
            return Err(MatrixError::NotNormalized { norm });
        }
        Ok(Self {
            v: [v[0] / norm, v[1] / norm],
        })
    }

    pub(crate) fn from_raw(v: [C64; 2]) -> Self {
        Self { v }
    }

    pub fn amplitude(&self, i: usize) -> C64 {
        self.v[i]
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        self.v
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.v[0].conj() * other.v[0] + self.v[1].conj() * other.v[1]
    }

    pub fn tensor(&self, other: &Self) -> State4 {
        State4::from_raw([
            self.v[0] * other.v[0],
            self.v[0] * other.v[1],
            self.v[1] * other.v[0],
            self.v[1] * other.v[1],
        ])
    }

    /// The canonical orthogonal state `(-b*, a*)` for `(a, b)`.
    pub fn orthogonal(&self) -> Self {
        Self {
            v: [-self.v[1].conj(), self.v[0].conj()],
        }
    }

    /// Rescales so the largest-magnitude amplitude is real positive.
    pub fn with_canonical_phase(&self) -> Self {
        let i = if self.v[0].norm() >= self.v[1].norm() {
            0
        } else {
            1
        };
        let p = self.v[i] / self.v[i].norm();
        Self {
            v: [self.v[0] * p.conj(), self.v[1] * p.conj()],
        }
    }
}

/// A two-qubit pure state, unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State4 {
    v: [C64; 4],
}

impl State4 {
    pub fn new(v: [C64; 4]) -> Result<Self, MatrixError> {
        if v.iter().any(|z| !finite(*z)) {
            return Err(MatrixError::NonFinite);
        }
        let norm = libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum());
        if libm::fabs(norm - 1.0) > TOL_UNITARY {
            return Err(MatrixError::NotNormalized { norm });
        }
        Ok(Self { v })
    }

    pub fn normalized(v: [C64; 4]) -> Result<Self, MatrixError> {
        let norm = libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum());
        if !norm.is_finite() || norm < 1e-12 {
            return Err(MatrixError::NotNormalized { norm });
        }
        Ok(Self {
            v: [v[0] / norm, v[1] / norm, v[2] / norm, v[3] / norm],
        })
    }

    pub(crate) fn from_raw(v: [C64; 4]) -> Self {
        Self { v }
    }

    pub fn amplitude(&self, i: usize) -> C64 {
        self.v[i]
    }

    pub fn amplitudes(&self) -> [C64; 4] {
        self.v
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.v
            .iter()
            .zip(other.v.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Hermitian4 and the exponential map
// ---------------------------------------------------------------------------

/// A 4x4 Hermitian matrix; generator side of the evolutions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hermitian4 {
    m: Mat4,
}

impl Hermitian4 {
    pub const ZERO: Self = Self { m: [[ZERO; 4]; 4] };

    pub fn new(entries: Mat4) -> Result<Self, MatrixError> {
        if entries.iter().flatten().any(|z| !finite(*z)) {
            return Err(MatrixError::NonFinite);
        }
        let adj = mat4_adjoint(&entries);
        let dev = mat4_max_abs_diff(&entries, &adj);
        if dev > TOL_UNITARY {
            return Err(MatrixError::NotHermitian { deviation: dev });
        }
        Ok(Self { m: entries })
    }

    pub fn entry(&self, r: usize, col: usize) -> C64 {
        self.m[r][col]
    }

    pub fn entries(&self) -> Mat4 {
        self.m
    }

    /// Eigendecomposition by cyclic Jacobi rotations. Returns ascending
    /// eigenvalues and the matching orthonormal eigenvector columns.
    pub fn eigh(&self) -> ([f64; 4], Mat4) {
        let mut a = self.m;
        let mut v = Unitary4::IDENTITY.entries();

        for _ in 0..64 {
            let mut off = 0.0_f64;
            for p in 0..4 {
                for q in (p + 1)..4 {
                    off += a[p][q].norm_sqr();
                }
            }
            if off < TOL_JACOBI * TOL_JACOBI {
                break;
            }
            for p in 0..4 {
                for q in (p + 1)..4 {
                    jacobi_rotate_hermitian(&mut a, &mut v, p, q);
                }
            }
        }

        let mut vals = [a[0][0].re, a[1][1].re, a[2][2].re, a[3][3].re];
        // sort ascending, carrying eigenvector columns along
        let mut order = [0usize, 1, 2, 3];
        for i in 0..4 {
            for j in (i + 1)..4 {
                if vals[order[j]] < vals[order[i]] {
                    order.swap(i, j);
                }
            }
        }
        let sorted_vals = [
            vals[order[0]],
            vals[order[1]],
            vals[order[2]],
            vals[order[3]],
        ];
        let mut sorted_vecs = [[ZERO; 4]; 4];
        for (new_col, &old_col) in order.iter().enumerate() {
            for r in 0..4 {
                sorted_vecs[r][new_col] = v[r][old_col];
            }
        }
        vals = sorted_vals;
        (vals, sorted_vecs)
    }
}

/// One Jacobi step zeroing `a[p][q]` of a Hermitian matrix, accumulating the
/// rotation into the eigenvector columns of `v`.
///
/// With `a_pq = r e^{i phi}` the rotation is `R = P G`, `P = diag(1, e^{-i phi})`
/// on the (p, q) block and `G` the real Golub-style rotation whose angle
/// solves `tan 2θ = 2r / (a_qq - a_pp)`.
fn jacobi_rotate_hermitian(a: &mut Mat4, v: &mut Mat4, p: usize, q: usize) {
    let apq = a[p][q];
    let r = apq.norm();
    if r < 1e-300 {
        return;
    }
    let ph = apq / r;
    let app = a[p][p].re;
    let aqq = a[q][q].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta >= 0.0 {
        1.0 / (theta + libm::sqrt(theta * theta + 1.0))
    } else {
        -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
    };
    let cs = 1.0 / libm::sqrt(t * t + 1.0);
    let sn = t * cs;

    // R block: [[c, s], [-s ph†, c ph†]]; A <- R† A R.
    for row in 0..4 {
        let cp = a[row][p];
        let cq = a[row][q];
        a[row][p] = cp * cs - cq * (ph.conj() * sn);
        a[row][q] = cp * sn + cq * (ph.conj() * cs);
    }
    for col in 0..4 {
        let rp = a[p][col];
        let rq = a[q][col];
        a[p][col] = rp * cs - rq * (ph * sn);
        a[q][col] = rp * sn + rq * (ph * cs);
    }
    for row in 0..4 {
        let cp = v[row][p];
        let cq = v[row][q];
        v[row][p] = cp * cs - cq * (ph.conj() * sn);
        v[row][q] = cp * sn + cq * (ph.conj() * cs);
    }
    // clean the eliminated pair exactly
    a[p][q] = ZERO;
    a[q][p] = ZERO;
    a[p][p] = c(a[p][p].re, 0.0);
    a[q][q] = c(a[q][q].re, 0.0);
}

/// `exp(-i h t)` via the eigendecomposition of `h`.
pub fn expm_hermitian(h: &Hermitian4, t: f64) -> Unitary4 {
    let (vals, vecs) = h.eigh();
    let mut m = [[ZERO; 4]; 4];
    for (k, lambda) in vals.iter().enumerate() {
        let p = phase(-lambda * t);
        for r in 0..4 {
            for cc in 0..4 {
                m[r][cc] += p * vecs[r][k] * vecs[cc][k].conj();
            }
        }
    }
    Unitary4::from_raw(m)
}

// ---------------------------------------------------------------------------
// phase-insensitive comparison
// ---------------------------------------------------------------------------

/// True (with the extracted phase) iff `a = e^{i phi} b` entrywise within
/// `tol`. The phase is read off the largest-magnitude entry of `b`, so
/// structurally zero entries of sparse gates never end up in a denominator.
pub fn equal_up_to_global_phase(a: &Unitary4, b: &Unitary4, tol: f64) -> (bool, f64) {
    let (mut best, mut br, mut bc) = (0.0_f64, 0, 0);
    for r in 0..4 {
        for cc in 0..4 {
            let n = b.entry(r, cc).norm();
            if n > best {
                best = n;
                br = r;
                bc = cc;
            }
        }
    }
    let phi = (a.entry(br, bc) * b.entry(br, bc).conj()).arg();
    let shifted = b.phase_shifted(phi);
    (a.max_abs_diff(&shifted) <= tol, phi)
}

/// 2x2 variant of [`equal_up_to_global_phase`].
pub fn equal_up_to_global_phase2(a: &Unitary2, b: &Unitary2, tol: f64) -> (bool, f64) {
    let (mut best, mut br, mut bc) = (0.0_f64, 0, 0);
    for r in 0..2 {
        for cc in 0..2 {
            let n = b.entry(r, cc).norm();
            if n > best {
                best = n;
                br = r;
                bc = cc;
            }
        }
    }
    let phi = (a.entry(br, bc) * b.entry(br, bc).conj()).arg();
    let shifted = b.phase_shifted(phi);
    (a.max_abs_diff(&shifted) <= tol, phi)
}

/// `|⟨a|b⟩|` for equal-length unit vectors.
pub fn state_fidelity(a: &[C64], b: &[C64]) -> Result<f64, MatrixError> {
    if a.len() != b.len() {
        return Err(MatrixError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut acc = ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    Ok(acc.norm())
}

/// True iff `|⟨a|b⟩| >= 1 - tol`.
pub fn state_equal_up_to_phase(a: &[C64], b: &[C64], tol: f64) -> Result<bool, MatrixError> {
    Ok(state_fidelity(a, b)? >= 1.0 - tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn constants_are_unitary() {
        for u in [
            Unitary2::IDENTITY,
            Unitary2::PAULI_X,
            Unitary2::PAULI_Y,
            Unitary2::PAULI_Z,
            Unitary2::HADAMARD,
            Unitary2::PHASE_S,
            Unitary2::PHASE_S_DAG,
            Unitary2::PHASE_T,
            Unitary2::PHASE_T_DAG,
        ] {
            assert!(Unitary2::new(u.entries()).is_ok());
        }
        for u in [
            Unitary4::IDENTITY,
            Unitary4::SWAP,
            Unitary4::CONTROLLED_Z,
            Unitary4::CNOT,
        ] {
            assert!(Unitary4::new(u.entries()).is_ok());
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let mut m = Unitary2::IDENTITY.entries();
        m[0][0] = c(2.0, 0.0);
        assert!(matches!(
            Unitary2::new(m),
            Err(MatrixError::NotUnitary { .. })
        ));
        let mut m4 = Unitary4::IDENTITY.entries();
        m4[3][3] = c(0.5, 0.0);
        assert!(matches!(
            Unitary4::new(m4),
            Err(MatrixError::NotUnitary { .. })
        ));
        let mut nan = Unitary2::IDENTITY.entries();
        nan[0][1] = c(f64::NAN, 0.0);
        assert!(matches!(Unitary2::new(nan), Err(MatrixError::NonFinite)));
    }

    #[test]
    fn kron_identity() {
        let k = kron(&Unitary2::IDENTITY, &Unitary2::IDENTITY);
        assert!(k.approx_eq(&Unitary4::IDENTITY, 0.0));
    }

    #[test]
    fn kron_phase_s_diagonal() {
        let k = kron(&Unitary2::PHASE_S, &Unitary2::PHASE_S);
        let want = [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, IM, ZERO, ZERO],
            [ZERO, ZERO, IM, ZERO],
            [ZERO, ZERO, ZERO, c(-1.0, 0.0)],
        ];
        assert!(k.approx_eq(&Unitary4::new(want).unwrap(), 1e-15));
    }

    #[test]
    fn kron_hadamard_uniform_superposition() {
        let hh = kron(&Unitary2::HADAMARD, &Unitary2::HADAMARD);
        let out = hh.apply(&State2::ZERO.tensor(&State2::ZERO));
        for i in 0..4 {
            assert!((out.amplitude(i) - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn expm_zero_generator_is_identity() {
        let u = expm_hermitian(&Hermitian4::ZERO, 1.0);
        assert!(u.approx_eq(&Unitary4::IDENTITY, 1e-14));
    }

    #[test]
    fn eigh_reconstructs_random_hermitian() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let mut m = [[ZERO; 4]; 4];
            for r in 0..4 {
                m[r][r] = c(rng.next_f64() * 2.0 - 1.0, 0.0);
                for cc in (r + 1)..4 {
                    let z = c(rng.next_f64() - 0.5, rng.next_f64() - 0.5);
                    m[r][cc] = z;
                    m[cc][r] = z.conj();
                }
            }
            let h = Hermitian4::new(m).unwrap();
            let (vals, vecs) = h.eigh();
            // residual of A v_k = lambda_k v_k
            for k in 0..4 {
                for r in 0..4 {
                    let mut av = ZERO;
                    for j in 0..4 {
                        av += m[r][j] * vecs[j][k];
                    }
                    let res = (av - vecs[r][k] * vals[k]).norm();
                    assert!(res < 1e-11, "eigen residual {res}");
                }
            }
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            // eigenvector matrix is unitary
            assert!(Unitary4::new(vecs).is_ok());
        }
    }

    #[test]
    fn expm_group_law_short() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..10 {
            let mut m = [[ZERO; 4]; 4];
            for r in 0..4 {
                m[r][r] = c(rng.next_f64() * 2.0 - 1.0, 0.0);
                for cc in (r + 1)..4 {
                    let z = c(rng.next_f64() - 0.5, rng.next_f64() - 0.5);
                    m[r][cc] = z;
                    m[cc][r] = z.conj();
                }
            }
            let h = Hermitian4::new(m).unwrap();
            let (t1, t2) = (rng.next_f64() * 3.0 - 1.5, rng.next_f64() * 3.0 - 1.5);
            let lhs = expm_hermitian(&h, t1) * expm_hermitian(&h, t2);
            let rhs = expm_hermitian(&h, t1 + t2);
            assert!(lhs.approx_eq(&rhs, 1e-10));
        }
    }

    #[test]
    fn global_phase_detected() {
        let a = Unitary4::CNOT;
        let b = a.phase_shifted(core::f64::consts::PI / 3.0);
        let (eq, phi) = equal_up_to_global_phase(&b, &a, 1e-12);
        assert!(eq);
        assert!((phi - core::f64::consts::PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cnot_not_swap() {
        let (eq, _) = equal_up_to_global_phase(&Unitary4::CNOT, &Unitary4::SWAP, 1e-6);
        assert!(!eq);
    }

    #[test]
    fn state_phase_equality() {
        let z = State2::ZERO;
        let zp = Unitary2::IDENTITY.phase_shifted(0.7).apply(&z);
        assert!(state_equal_up_to_phase(&z.amplitudes(), &zp.amplitudes(), 1e-12).unwrap());
        assert!(!state_equal_up_to_phase(
            &State2::PLUS.amplitudes(),
            &State2::MINUS.amplitudes(),
            1e-6
        )
        .unwrap());
        assert!(matches!(
            state_fidelity(&z.amplitudes(), &[ONE, ZERO, ZERO, ZERO]),
            Err(MatrixError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn det_of_swap() {
        assert!((Unitary4::SWAP.det() - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((Unitary4::CNOT.det() - c(-1.0, 0.0)).norm() < 1e-15);
        assert!((Unitary4::IDENTITY.det() - ONE).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_state() {
        let s = State2::normalized([c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let o = s.orthogonal();
        assert!(s.inner(&o).norm() < 1e-15);
    }

    #[test]
    fn state_norm_validation() {
        assert!(matches!(
            State2::new([ONE, ONE]),
            Err(MatrixError::NotNormalized { .. })
        ));
        assert!(State2::new([c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]).is_ok());
    }
}
