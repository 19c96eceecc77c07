//! Canonical (KAK) decomposition of `U(4)`: every two-qubit gate factors as
//! `e^{i φ} (k_A¹ ⊗ k_R¹) · M(α) · (k_A² ⊗ k_R²)` with
//! `M(α) = exp((i/2)(α1 X⊗X + α2 Y⊗Y + α3 Z⊗Z))`, plus the closed-form
//! relation between the canonical angles and the local invariants, and the
//! angle solutions for interactions that admit ancilla-controlled
//! computation.
//!
//! Extraction route: transform to the magic basis, where `m = Vᵀ V` is
//! symmetric unitary with commuting real and imaginary parts; a real
//! orthogonal eigenbasis of the pair yields the angles from the eigenvalue
//! phases and the local factors from the eigenvector frames. The raw angles
//! are then folded into a canonical chamber by exact local moves.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;

use num_complex::Complex64 as C64;

use crate::invariants::{magic_basis, LocalInvariants};
use crate::qmat::{kron, phase, Mat2, Mat4, MatrixError, Unitary2, Unitary4, TOL_UNITARY};

const fn c(re: f64, im: f64) -> C64 {
    C64 { re, im }
}

const CZERO: C64 = c(0.0, 0.0);

/// Angles below this distance from a chamber boundary may be snapped onto it
/// while folding; the induced reconstruction error is far below the 1e-8
/// contract.
const TOL_SNAP: f64 = 1e-10;

pub(crate) fn pauli_xx() -> Mat4 {
    let mut m = [[CZERO; 4]; 4];
    m[0][3] = c(1.0, 0.0);
    m[1][2] = c(1.0, 0.0);
    m[2][1] = c(1.0, 0.0);
    m[3][0] = c(1.0, 0.0);
    m
}

pub(crate) fn pauli_yy() -> Mat4 {
    let mut m = [[CZERO; 4]; 4];
    m[0][3] = c(-1.0, 0.0);
    m[1][2] = c(1.0, 0.0);
    m[2][1] = c(1.0, 0.0);
    m[3][0] = c(-1.0, 0.0);
    m
}

pub(crate) fn pauli_zz() -> Mat4 {
    let mut m = [[CZERO; 4]; 4];
    m[0][0] = c(1.0, 0.0);
    m[1][1] = c(-1.0, 0.0);
    m[2][2] = c(-1.0, 0.0);
    m[3][3] = c(1.0, 0.0);
    m
}

/// Canonical angles `(α1, α2, α3)` of the nonlocal part.
///
/// Folding normalizes to `π/2 >= α1 >= α2 >= |α3|`. For most gates handled
/// here `α3 >= 0` as well; a genuinely chiral class (nonzero imaginary part
/// of `G1` with negative sign) keeps `α3 < 0`, since no local dressing can
/// change the sign of `Im G1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalAngles {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl CanonicalAngles {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Self {
        Self {
            alpha1,
            alpha2,
            alpha3,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha1, self.alpha2, self.alpha3]
    }

    /// Membership in the folded chamber `π/2 >= α1 >= α2 >= |α3|`.
    pub fn in_canonical_chamber(&self) -> bool {
        FRAC_PI_2 >= self.alpha1
            && self.alpha1 >= self.alpha2
            && self.alpha2 >= libm::fabs(self.alpha3)
    }

    pub fn close_to(&self, other: &Self, tol: f64) -> bool {
        libm::fabs(self.alpha1 - other.alpha1) < tol
            && libm::fabs(self.alpha2 - other.alpha2) < tol
            && libm::fabs(self.alpha3 - other.alpha3) < tol
    }
}

/// Local factors, canonical angles and global phase of one `U(4)` element:
/// `U = e^{i phase} (ka1 ⊗ kr1) · M(angles) · (ka2 ⊗ kr2)`.
#[derive(Clone, Copy, Debug)]
pub struct CanonicalDecomposition {
    pub ka1: Unitary2,
    pub kr1: Unitary2,
    pub ka2: Unitary2,
    pub kr2: Unitary2,
    pub angles: CanonicalAngles,
    pub phase: f64,
}

impl CanonicalDecomposition {
    pub fn reconstruct(&self) -> Unitary4 {
        let l1 = kron(&self.ka1, &self.kr1);
        let l2 = kron(&self.ka2, &self.kr2);
        (l1 * canonical_m(&self.angles) * l2).phase_shifted(self.phase)
    }
}

/// Parameters `(η, φ, ψ, θ)` of a general `U(2)` matrix
/// `p = e^{iη} [[e^{iφ} cos θ, e^{-iψ} sin θ], [e^{iψ} sin θ, -e^{-iφ} cos θ]]`.
/// (`psi_angle` is named to avoid collision with the ancilla state ψ.)
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlledGateParams {
    pub eta: f64,
    pub phi: f64,
    pub psi_angle: f64,
    pub theta: f64,
}

impl ControlledGateParams {
    /// The parameterised `U(2)` matrix `p`.
    pub fn matrix(&self) -> Unitary2 {
        let (ct, st) = (libm::cos(self.theta), libm::sin(self.theta));
        let e = phase(self.eta);
        let m: Mat2 = [
            [e * phase(self.phi) * ct, e * phase(-self.psi_angle) * st],
            [e * phase(self.psi_angle) * st, -(e * phase(-self.phi)) * ct],
        ];
        Unitary2::new(m).expect("parameterisation is unitary")
    }

    /// `cos²θ sin²φ`, the quantity the invariants of `SC(p)` depend on.
    pub fn invariant_coefficient(&self) -> f64 {
        let ct = libm::cos(self.theta);
        let sp = libm::sin(self.phi);
        ct * ct * sp * sp
    }
}

/// The requested parameters put `SC(p)` in the SWAP class, which cannot
/// entangle and is excluded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwapClassExcluded {
    /// The offending value of `cos²θ sin²φ` (1 means SWAP class).
    pub coefficient: f64,
}

impl fmt::Display for SwapClassExcluded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cos²θ sin²φ = {} puts SC(p) in the SWAP class, which is not entangling",
            self.coefficient
        )
    }
}

impl core::error::Error for SwapClassExcluded {}

/// Closed form of `M(α) = exp((i/2)(α1 XX + α2 YY + α3 ZZ))`:
/// two 2x2 blocks on the {00,11} and {01,10} subspaces with entries
/// `m1 = e^{iα3/2} cos α⁻`, `m2 = i e^{iα3/2} sin α⁻`,
/// `m3 = e^{-iα3/2} cos α⁺`, `m4 = i e^{-iα3/2} sin α⁺`,
/// where `α± = (α1 ± α2)/2`.
pub fn canonical_m(angles: &CanonicalAngles) -> Unitary4 {
    let am = 0.5 * (angles.alpha1 - angles.alpha2);
    let ap = 0.5 * (angles.alpha1 + angles.alpha2);
    let ez = phase(0.5 * angles.alpha3);
    let m1 = ez * libm::cos(am);
    let m2 = ez * c(0.0, 1.0) * libm::sin(am);
    let m3 = ez.conj() * libm::cos(ap);
    let m4 = ez.conj() * c(0.0, 1.0) * libm::sin(ap);
    let mut m = [[CZERO; 4]; 4];
    m[0][0] = m1;
    m[0][3] = m2;
    m[1][1] = m3;
    m[1][2] = m4;
    m[2][1] = m4;
    m[2][2] = m3;
    m[3][0] = m2;
    m[3][3] = m1;
    Unitary4::new(m).expect("closed form is unitary")
}

/// Closed-form `(G1, G2)` as functions of the canonical angles.
pub fn invariants_from_alpha(angles: &CanonicalAngles) -> LocalInvariants {
    let [a1, a2, a3] = angles.as_array();
    let (c1, c2, c3) = (libm::cos(a1), libm::cos(a2), libm::cos(a3));
    let (s1, s2, s3) = (libm::sin(a1), libm::sin(a2), libm::sin(a3));
    let cos_prod = c1 * c1 * c2 * c2 * c3 * c3;
    let sin_prod = s1 * s1 * s2 * s2 * s3 * s3;
    let g1_im = 0.25 * libm::sin(2.0 * a1) * libm::sin(2.0 * a2) * libm::sin(2.0 * a3);
    let g2 = 4.0 * cos_prod
        - 4.0 * sin_prod
        - libm::cos(2.0 * a1) * libm::cos(2.0 * a2) * libm::cos(2.0 * a3);
    LocalInvariants {
        g1: c(cos_prod - sin_prod, g1_im),
        g2: c(g2, 0.0),
    }
}

/// Canonical-chamber angle solutions for an interaction whose nonlocal
/// class should be `SC(p)` with `p` given by `params`: the full solution
/// family is `α1 = (2n+1)π/2`, `α2 = (2m+1)π/2`, `sin²α3 = cos²θ sin²φ`;
/// only the chamber representative `(π/2, π/2, α3)` is returned since all
/// members are the same nonlocal class.
pub fn acqc_alpha_solutions(
    params: &ControlledGateParams,
) -> Result<Vec<CanonicalAngles>, SwapClassExcluded> {
    let coeff = params.invariant_coefficient();
    if coeff >= 1.0 - 1e-12 {
        return Err(SwapClassExcluded { coefficient: coeff });
    }
    let alpha3 = libm::asin(libm::sqrt(coeff));
    Ok(vec![CanonicalAngles::new(FRAC_PI_2, FRAC_PI_2, alpha3)])
}

// ---------------------------------------------------------------------------
// real symmetric 4x4 Jacobi (for the commuting Re/Im parts of m)
// ---------------------------------------------------------------------------

type RMat4 = [[f64; 4]; 4];

fn rmat_identity() -> RMat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn rmat_mul(a: &RMat4, b: &RMat4) -> RMat4 {
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += a[r][k] * b[k][cc];
            }
            out[r][cc] = acc;
        }
    }
    out
}

fn rmat_transpose(a: &RMat4) -> RMat4 {
    let mut out = [[0.0; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            out[r][cc] = a[cc][r];
        }
    }
    out
}

fn rmat_det(a: &RMat4) -> f64 {
    let mut m = [[CZERO; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            m[r][cc] = c(a[r][cc], 0.0);
        }
    }
    crate::qmat::mat4_det(&m).re
}

/// Cyclic Jacobi sweeps restricted to index pairs within `active`,
/// accumulating rotations into `v`.
fn jacobi_symmetric(a: &mut RMat4, v: &mut RMat4, active: &[usize]) {
    for _ in 0..64 {
        let mut off = 0.0;
        for (ii, &p) in active.iter().enumerate() {
            for &q in active.iter().skip(ii + 1) {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-26 {
            break;
        }
        for (ii, &p) in active.iter().enumerate() {
            for &q in active.iter().skip(ii + 1) {
                let apq = a[p][q];
                if libm::fabs(apq) < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let cs = 1.0 / libm::sqrt(t * t + 1.0);
                let sn = t * cs;
                for row in 0..4 {
                    let (cp, cq) = (a[row][p], a[row][q]);
                    a[row][p] = cp * cs - cq * sn;
                    a[row][q] = cp * sn + cq * cs;
                }
                for col in 0..4 {
                    let (rp, rq) = (a[p][col], a[q][col]);
                    a[p][col] = rp * cs - rq * sn;
                    a[q][col] = rp * sn + rq * cs;
                }
                for row in 0..4 {
                    let (cp, cq) = (v[row][p], v[row][q]);
                    v[row][p] = cp * cs - cq * sn;
                    v[row][q] = cp * sn + cq * cs;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
            }
        }
    }
}

/// Simultaneous diagonalization of commuting real symmetric `x`, `y`:
/// diagonalize `x`, then re-diagonalize `y` inside each (near-)degenerate
/// eigenvalue group of `x`. Returns the orthogonal eigenbasis and the
/// worst off-diagonal residual over both conjugated matrices.
fn diagonalize_pair(x: &RMat4, y: &RMat4, group_tol: f64) -> (RMat4, f64) {
    let mut a = *x;
    let mut p = rmat_identity();
    jacobi_symmetric(&mut a, &mut p, &[0, 1, 2, 3]);

    // sort columns by x-eigenvalue ascending
    let mut vals = [a[0][0], a[1][1], a[2][2], a[3][3]];
    let mut order = [0usize, 1, 2, 3];
    for i in 0..4 {
        for j in (i + 1)..4 {
            if vals[order[j]] < vals[order[i]] {
                order.swap(i, j);
            }
        }
    }
    let mut sorted = [[0.0; 4]; 4];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..4 {
            sorted[r][new_col] = p[r][old_col];
        }
    }
    p = sorted;
    let sorted_vals = [
        vals[order[0]],
        vals[order[1]],
        vals[order[2]],
        vals[order[3]],
    ];
    vals = sorted_vals;

    // fix y inside degenerate groups of x
    let mut yp = rmat_mul(&rmat_transpose(&p), &rmat_mul(y, &p));
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && libm::fabs(vals[end] - vals[start]) < group_tol {
            end += 1;
        }
        if end - start > 1 {
            let group: Vec<usize> = (start..end).collect();
            jacobi_symmetric(&mut yp, &mut p, &group);
        }
        start = end;
    }

    // residual over both conjugations
    let xp = rmat_mul(&rmat_transpose(&p), &rmat_mul(x, &p));
    let yp = rmat_mul(&rmat_transpose(&p), &rmat_mul(y, &p));
    let mut res = 0.0_f64;
    for r in 0..4 {
        for cc in 0..4 {
            if r != cc {
                res = libm::fmax(res, libm::fabs(xp[r][cc]));
                res = libm::fmax(res, libm::fabs(yp[r][cc]));
            }
        }
    }
    (p, res)
}

// ---------------------------------------------------------------------------
// decomposition
// ---------------------------------------------------------------------------

/// Working form `U = e^{i phase} · L1 · M(alphas) · L2` used while folding.
struct Working {
    phase: f64,
    l1: Unitary4,
    l2: Unitary4,
    alphas: [f64; 3],
}

impl Working {
    /// `α_i -> α_i − π`, absorbing `i σ_i⊗σ_i` into `L1`.
    fn shift_down(&mut self, i: usize) {
        self.alphas[i] -= PI;
        self.phase += FRAC_PI_2;
        self.l1 = self.l1 * sigma_pair(i);
    }

    /// `α_i -> α_i + π`.
    fn shift_up(&mut self, i: usize) {
        self.alphas[i] += PI;
        self.phase -= FRAC_PI_2;
        self.l1 = self.l1 * sigma_pair(i);
    }

    /// Exchange `α_i <-> α_j` by conjugating with the matching local Clifford.
    fn swap_axes(&mut self, i: usize, j: usize) {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (w, w_inv) = match (lo, hi) {
            // S maps (X,Y,Z) -> (Y,-X,Z); S⊗S conjugation swaps XX and YY
            (0, 1) => (Unitary2::PHASE_S, Unitary2::PHASE_S_DAG),
            // H maps (X,Y,Z) -> (Z,-Y,X); H⊗H conjugation swaps XX and ZZ
            (0, 2) => (Unitary2::HADAMARD, Unitary2::HADAMARD),
            // sqrt(X) maps (X,Y,Z) -> (X,Z,-Y); conjugation swaps YY and ZZ
            (1, 2) => (sqrt_x(), sqrt_x().adjoint()),
            _ => unreachable!("axis indices"),
        };
        // M(swapped) = (w⊗w) M (w⊗w)†  =>  M = (w⊗w)† M(swapped) (w⊗w)
        self.l1 = self.l1 * kron(&w_inv, &w_inv);
        self.l2 = kron(&w, &w) * self.l2;
        self.alphas.swap(i, j);
    }

    /// Negate the pair `(α_i, α_j)` by conjugating with `σ_k ⊗ I`, `k` the
    /// remaining axis.
    fn flip_pair(&mut self, i: usize, j: usize) {
        let k = 3 - i - j;
        let sigma = match k {
            0 => Unitary2::PAULI_X,
            1 => Unitary2::PAULI_Y,
            _ => Unitary2::PAULI_Z,
        };
        let loc = kron(&sigma, &Unitary2::IDENTITY);
        self.l1 = self.l1 * loc;
        self.l2 = loc * self.l2;
        self.alphas[i] = -self.alphas[i];
        self.alphas[j] = -self.alphas[j];
    }
}

fn sigma_pair(i: usize) -> Unitary4 {
    match i {
        0 => kron(&Unitary2::PAULI_X, &Unitary2::PAULI_X),
        1 => kron(&Unitary2::PAULI_Y, &Unitary2::PAULI_Y),
        _ => kron(&Unitary2::PAULI_Z, &Unitary2::PAULI_Z),
    }
}

fn sqrt_x() -> Unitary2 {
    let h = 0.5;
    Unitary2::new([[c(h, h), c(h, -h)], [c(h, -h), c(h, h)]]).expect("sqrt(X) is unitary")
}

/// Nearest tensor-factor split of a `U(2)⊗U(2)` element. The dominant 2x2
/// block fixes the register factor up to phase; the block overlaps fill in
/// the ancilla factor.
fn split_local(l: &Unitary4) -> Result<(Unitary2, Unitary2), MatrixError> {
    let block = |i: usize, j: usize| -> Mat2 {
        [
            [l.entry(2 * i, 2 * j), l.entry(2 * i, 2 * j + 1)],
            [l.entry(2 * i + 1, 2 * j), l.entry(2 * i + 1, 2 * j + 1)],
        ]
    };
    let fro = |b: &Mat2| -> f64 { b.iter().flatten().map(|z| z.norm_sqr()).sum() };

    let (mut best, mut bi, mut bj) = (-1.0, 0, 0);
    for i in 0..2 {
        for j in 0..2 {
            let f = fro(&block(i, j));
            if f > best {
                best = f;
                bi = i;
                bj = j;
            }
        }
    }
    let dominant = block(bi, bj);
    let det = dominant[0][0] * dominant[1][1] - dominant[0][1] * dominant[1][0];
    let det_root = det.sqrt();
    if det_root.norm() < 1e-8 {
        return Err(MatrixError::NotUnitary { deviation: 1.0 });
    }
    let mut kr = [[CZERO; 2]; 2];
    for r in 0..2 {
        for cc in 0..2 {
            kr[r][cc] = dominant[r][cc] / det_root;
        }
    }
    let kr = closest_unitary2(&kr)?;

    // ka[i][j] = tr(kr† B_ij) / 2
    let kr_adj = kr.adjoint();
    let mut ka = [[CZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let b = block(i, j);
            let mut tr = CZERO;
            for r in 0..2 {
                for k in 0..2 {
                    tr += kr_adj.entry(r, k) * b[k][r];
                }
            }
            ka[i][j] = tr * 0.5;
        }
    }
    let ka = closest_unitary2(&ka)?;
    Ok((ka, kr))
}

/// Polar projection of a near-unitary 2x2 matrix: `U = M (M†M)^{-1/2}`.
fn closest_unitary2(m: &Mat2) -> Result<Unitary2, MatrixError> {
    let madj = crate::qmat::mat2_adjoint(m);
    let g = crate::qmat::mat2_mul(&madj, m);
    // Hermitian psd 2x2 inverse square root by function calculus
    let (a, b, d) = (g[0][0].re, g[0][1], g[1][1].re);
    let tr = a + d;
    let disc = libm::sqrt(libm::fmax((a - d) * (a - d) + 4.0 * b.norm_sqr(), 0.0));
    let l1 = libm::fmax(0.5 * (tr + disc), 1e-300);
    let l2 = libm::fmax(0.5 * (tr - disc), 1e-300);
    let inv_sqrt = |l: f64| 1.0 / libm::sqrt(l);
    // eigenvectors
    let (v1, v2) = if b.norm() > 1e-15 {
        let v1 = [b, c(l1 - a, 0.0)];
        let n1 = libm::sqrt(v1[0].norm_sqr() + v1[1].norm_sqr());
        let v1 = [v1[0] / n1, v1[1] / n1];
        let v2 = [-v1[1].conj(), v1[0].conj()];
        (v1, v2)
    } else if a >= d {
        ([c(1.0, 0.0), CZERO], [CZERO, c(1.0, 0.0)])
    } else {
        ([CZERO, c(1.0, 0.0)], [c(1.0, 0.0), CZERO])
    };
    let mut g_inv_sqrt = [[CZERO; 2]; 2];
    for r in 0..2 {
        for cc in 0..2 {
            g_inv_sqrt[r][cc] =
                v1[r] * v1[cc].conj() * inv_sqrt(l1) + v2[r] * v2[cc].conj() * inv_sqrt(l2);
        }
    }
    Unitary2::new(crate::qmat::mat2_mul(m, &g_inv_sqrt))
}

/// Decomposes `v` into local factors, canonical angles and a global phase.
pub fn kak_decompose(v: &Unitary4) -> Result<CanonicalDecomposition, MatrixError> {
    let dev = v.unitarity_deviation();
    if dev > TOL_UNITARY {
        return Err(MatrixError::NotUnitary { deviation: dev });
    }

    // normalize to SU(4)
    let det = v.det();
    let global = det.arg() / 4.0;
    let v_su = v.phase_shifted(-global);

    // magic basis
    let q = magic_basis().q;
    let vm = q.adjoint() * v_su * q;
    let m = vm.transpose() * vm;

    // split into commuting real symmetric parts and diagonalize both
    let mut x = [[0.0; 4]; 4];
    let mut y = [[0.0; 4]; 4];
    for r in 0..4 {
        for cc in 0..4 {
            x[r][cc] = m.entry(r, cc).re;
            y[r][cc] = m.entry(r, cc).im;
        }
    }
    // symmetrize away roundoff
    for r in 0..4 {
        for cc in (r + 1)..4 {
            let sx = 0.5 * (x[r][cc] + x[cc][r]);
            x[r][cc] = sx;
            x[cc][r] = sx;
            let sy = 0.5 * (y[r][cc] + y[cc][r]);
            y[r][cc] = sy;
            y[cc][r] = sy;
        }
    }

    let mut chosen: Option<RMat4> = None;
    for group_tol in [1e-10, 1e-8, 1e-6, 1e-4, 1e-2] {
        let (p, res) = diagonalize_pair(&x, &y, group_tol);
        if res < 5e-9 {
            chosen = Some(p);
            break;
        }
    }
    let mut p = chosen.ok_or(MatrixError::NotUnitary { deviation: dev })?;

    // eigenphases of m: diag(Pᵀ X P) + i diag(Pᵀ Y P) = e^{2iλ};
    // order columns by phase ascending so degenerate spectra resolve
    // deterministically, then restore det P = +1
    {
        let xp = rmat_mul(&rmat_transpose(&p), &rmat_mul(&x, &p));
        let yp = rmat_mul(&rmat_transpose(&p), &rmat_mul(&y, &p));
        let mut phases = [0.0_f64; 4];
        for k in 0..4 {
            phases[k] = libm::atan2(yp[k][k], xp[k][k]);
        }
        let mut order = [0usize, 1, 2, 3];
        for i in 0..4 {
            for j in (i + 1)..4 {
                if phases[order[j]] < phases[order[i]] {
                    order.swap(i, j);
                }
            }
        }
        let mut sorted = [[0.0; 4]; 4];
        for (new_col, &old_col) in order.iter().enumerate() {
            for r in 0..4 {
                sorted[r][new_col] = p[r][old_col];
            }
        }
        p = sorted;
    }
    if rmat_det(&p) < 0.0 {
        for row in p.iter_mut() {
            row[3] = -row[3];
        }
    }

    let xp = rmat_mul(&rmat_transpose(&p), &rmat_mul(&x, &p));
    let yp = rmat_mul(&rmat_transpose(&p), &rmat_mul(&y, &p));
    let mut lambdas = [0.0_f64; 4];
    for k in 0..4 {
        lambdas[k] = 0.5 * libm::atan2(yp[k][k], xp[k][k]);
    }

    // Σλ must be ≡ 0 (mod 2π) so the left frame lands in SO(4)
    let mut sum: f64 = lambdas.iter().sum();
    let k_round = libm::round(sum / PI) as i64;
    if k_round.rem_euclid(2) != 0 {
        // shift the largest λ by -π (its e^{2iλ} is unchanged)
        let mut imax = 0;
        for i in 1..4 {
            if lambdas[i] > lambdas[imax] {
                imax = i;
            }
        }
        lambdas[imax] -= PI;
        sum -= PI;
    }
    if libm::round(sum / (2.0 * PI)) as i64 != 0 {
        // bring the sum near zero with one more ±π pair on the extremes
        let delta = libm::round(sum / (2.0 * PI)) * 2.0 * PI;
        let mut imax = 0;
        let mut imin = 0;
        for i in 1..4 {
            if lambdas[i] > lambdas[imax] {
                imax = i;
            }
            if lambdas[i] < lambdas[imin] {
                imin = i;
            }
        }
        if delta > 0.0 {
            lambdas[imax] -= PI;
            lambdas[if imax == imin { (imin + 1) % 4 } else { imin }] -= PI;
        } else {
            lambdas[imin] += PI;
            lambdas[if imax == imin { (imax + 1) % 4 } else { imax }] += PI;
        }
    }

    // left/right orthogonal frames: V_magic = O1 · diag(e^{iλ}) · O2
    let o2 = rmat_transpose(&p);
    let mut o1 = [[CZERO; 4]; 4];
    {
        // O1 = V_magic · P · diag(e^{-iλ})
        let vm_e = vm.entries();
        for r in 0..4 {
            for cc in 0..4 {
                let mut acc = CZERO;
                for k in 0..4 {
                    acc += vm_e[r][k] * p[k][cc];
                }
                o1[r][cc] = acc * phase(-lambdas[cc]);
            }
        }
    }
    // O1 is real orthogonal up to roundoff; drop the imaginary dust
    let mut o1r = [[0.0_f64; 4]; 4];
    let mut imag_dust = 0.0_f64;
    for r in 0..4 {
        for cc in 0..4 {
            imag_dust = libm::fmax(imag_dust, libm::fabs(o1[r][cc].im));
            o1r[r][cc] = o1[r][cc].re;
        }
    }
    if imag_dust > 1e-6 {
        return Err(MatrixError::NotUnitary {
            deviation: imag_dust,
        });
    }

    let to_u4 = |r: &RMat4| -> Unitary4 {
        let mut m = [[CZERO; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = c(r[i][j], 0.0);
            }
        }
        Unitary4::new(m).expect("orthogonal frame")
    };
    let o1u = to_u4(&o1r);
    let o2u = to_u4(&o2);

    // back to the computational basis
    let l1 = q * o1u * q.adjoint();
    let l2 = q * o2u * q.adjoint();

    let alphas = [
        lambdas[0] + lambdas[1],
        lambdas[1] + lambdas[3],
        lambdas[0] + lambdas[3],
    ];

    let mut w = Working {
        phase: global,
        l1,
        l2,
        alphas,
    };
    fold_to_chamber(&mut w);

    // split the local frames into tensor factors
    let (ka1, kr1) = split_local(&w.l1)?;
    let (ka2, kr2) = split_local(&w.l2)?;

    let angles = CanonicalAngles::new(w.alphas[0], w.alphas[1], w.alphas[2]);
    let mut dec = CanonicalDecomposition {
        ka1,
        kr1,
        ka2,
        kr2,
        angles,
        phase: w.phase,
    };

    // polish the global phase against the source
    let rec = dec.reconstruct();
    let (mut best, mut br, mut bc) = (0.0_f64, 0, 0);
    for r in 0..4 {
        for cc in 0..4 {
            let n = rec.entry(r, cc).norm();
            if n > best {
                best = n;
                br = r;
                bc = cc;
            }
        }
    }
    dec.phase += (v.entry(br, bc) * rec.entry(br, bc).conj()).arg();

    Ok(dec)
}

/// Folds the working angles into `π/2 >= α1 >= α2 >= |α3|` (and `α3 >= 0`
/// whenever a boundary fold permits) by exact moves.
fn fold_to_chamber(w: &mut Working) {
    // center each angle into (-π/2, π/2]
    for i in 0..3 {
        while w.alphas[i] > FRAC_PI_2 {
            w.shift_down(i);
        }
        while w.alphas[i] <= -FRAC_PI_2 {
            w.shift_up(i);
        }
    }

    // at most one negative entry (pair flips preserve the sign product)
    loop {
        let negatives: Vec<usize> = (0..3).filter(|&i| w.alphas[i] < 0.0).collect();
        if negatives.len() < 2 {
            break;
        }
        w.flip_pair(negatives[0], negatives[1]);
    }

    // sort by magnitude descending (swaps preserve signs in place)
    for i in 0..3 {
        for j in (i + 1)..3 {
            if libm::fabs(w.alphas[j]) > libm::fabs(w.alphas[i]) + 1e-15 {
                w.swap_axes(i, j);
            }
        }
    }

    // funnel a lone negative to the last slot
    for i in 0..2 {
        if w.alphas[i] < 0.0 {
            w.flip_pair(i, 2);
        }
    }

    // boundary positivization of α3
    if w.alphas[2] < 0.0 {
        if -w.alphas[2] <= TOL_SNAP {
            w.alphas[2] = -w.alphas[2];
        } else if libm::fabs(w.alphas[0] - FRAC_PI_2) <= TOL_SNAP {
            w.alphas[0] = FRAC_PI_2;
            w.flip_pair(0, 2);
            w.shift_up(0);
        }
    }
    // a chiral class (Im G1 < 0 strictly) keeps its negative α3

    // snap exact representations of the frequent boundary values
    for i in 0..3 {
        if libm::fabs(w.alphas[i] - FRAC_PI_2) <= TOL_SNAP {
            w.alphas[i] = FRAC_PI_2;
        } else if libm::fabs(w.alphas[i]) <= TOL_SNAP {
            w.alphas[i] = 0.0;
        }
    }
    // restore exact ordering after snapping
    for i in 0..3 {
        for j in (i + 1)..3 {
            if libm::fabs(w.alphas[j]) > libm::fabs(w.alphas[i]) {
                w.swap_axes(i, j);
            }
        }
    }
}
