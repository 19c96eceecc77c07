//! Pure-state two-qubit entanglement: concurrence, Schmidt decomposition,
//! separability testing and factorization of (near-)product states.

use core::fmt;

use num_complex::Complex64 as C64;

use crate::qmat::{MatrixError, State2, State4, TOL_UNITARY};

/// Default concurrence threshold below which a state counts as separable.
/// Concurrence is quadratic in the amplitudes, so this tolerates roughly
/// 1e-4 of amplitude noise.
pub const TOL_SEPARABLE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum EntanglementError {
    /// Factorization was requested for a state with nonzero concurrence.
    NotSeparable {
        concurrence: f64,
    },
    Matrix(MatrixError),
}

impl fmt::Display for EntanglementError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NotSeparable { concurrence } => {
                write!(f, "state is entangled (concurrence {concurrence:.3e})")
            }
            Self::Matrix(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EntanglementError {}

impl From<MatrixError> for EntanglementError {
    fn from(e: MatrixError) -> Self {
        Self::Matrix(e)
    }
}

/// Schmidt form `sum_i λ_i |u_i⟩|v_i⟩` with λ1 >= λ2 >= 0.
#[derive(Clone, Copy, Debug)]
pub struct SchmidtForm {
    pub coeffs: [f64; 2],
    pub basis_a: [State2; 2],
    pub basis_b: [State2; 2],
}

impl SchmidtForm {
    /// Rebuilds the state this form describes.
    pub fn reconstruct(&self) -> State4 {
        let mut v = [C64::ZERO; 4];
        for k in 0..2 {
            let t = self.basis_a[k].tensor(&self.basis_b[k]);
            for (slot, amp) in v.iter_mut().zip(t.amplitudes()) {
                *slot += amp * self.coeffs[k];
            }
        }
        State4::normalized(v).expect("Schmidt coefficients are normalized")
    }
}

fn check_norm(s: &State4) -> Result<(), MatrixError> {
    let norm = libm::sqrt(s.amplitudes().iter().map(|z| z.norm_sqr()).sum());
    if libm::fabs(norm - 1.0) > TOL_UNITARY {
        return Err(MatrixError::NotNormalized { norm });
    }
    Ok(())
}

/// Concurrence `C = 2 |a00 a11 − a01 a10|`; zero iff the state is a product.
pub fn concurrence(s: &State4) -> Result<f64, MatrixError> {
    check_norm(s)?;
    let a = s.amplitudes();
    Ok(2.0 * (a[0] * a[3] - a[1] * a[2]).norm())
}

/// Schmidt decomposition via the 2x2 amplitude matrix `A[i][j] = ⟨ij|s⟩`:
/// the right basis comes from the eigenvectors of `A†A`, the left from
/// applying `A`. Since `A = Σ λ_k u_k v_kᵀ` with a plain transpose, the
/// B-side kets are the conjugated eigenvectors.
pub fn schmidt(s: &State4) -> Result<SchmidtForm, MatrixError> {
    check_norm(s)?;
    let a = s.amplitudes();
    // A†A, a 2x2 Hermitian with closed-form eigensystem
    let g00 = a[0].norm_sqr() + a[2].norm_sqr();
    let g11 = a[1].norm_sqr() + a[3].norm_sqr();
    let g01 = a[0].conj() * a[1] + a[2].conj() * a[3];
    let tr = g00 + g11;
    let disc = libm::sqrt(libm::fmax(
        (g00 - g11) * (g00 - g11) + 4.0 * g01.norm_sqr(),
        0.0,
    ));
    let l1 = 0.5 * (tr + disc);

    // eigenvector of A†A for the dominant eigenvalue
    let w1 = if g01.norm() > 1e-15 {
        State2::normalized([g01, C64::from(l1 - g00)]).expect("nonzero eigenvector")
    } else if g00 >= g11 {
        State2::ZERO
    } else {
        State2::ONE
    };
    let w2 = w1.orthogonal();

    let sigma1 = libm::sqrt(l1);
    // σ1 σ2 = |det A| exactly; this avoids the cancellation in tr − disc
    let det_a = a[0] * a[3] - a[1] * a[2];
    let sigma2 = det_a.norm() / sigma1;

    let apply_a = |w: &State2| -> [C64; 2] {
        let v = w.amplitudes();
        [a[0] * v[0] + a[1] * v[1], a[2] * v[0] + a[3] * v[1]]
    };
    let u1 = State2::normalized(apply_a(&w1)).expect("dominant singular vector");
    let u2 = if sigma2 > 1e-9 {
        State2::normalized(apply_a(&w2)).expect("second singular vector")
    } else {
        u1.orthogonal()
    };

    // B-side kets are conjugated right singular vectors
    let conj2 = |w: &State2| {
        State2::normalized([w.amplitude(0).conj(), w.amplitude(1).conj()]).expect("unit")
    };
    Ok(SchmidtForm {
        coeffs: [sigma1, sigma2],
        basis_a: [u1, u2],
        basis_b: [conj2(&w1), conj2(&w2)],
    })
}

/// True iff the concurrence is below `tol`.
pub fn is_separable(s: &State4, tol: f64) -> Result<bool, MatrixError> {
    Ok(concurrence(s)? < tol)
}

/// Splits a separable state into its tensor factors (dominant Schmidt pair).
/// The returned pair tensors back to the input up to global phase.
pub fn factorize(s: &State4) -> Result<(State2, State2), EntanglementError> {
    let conc = concurrence(s)?;
    if conc >= TOL_SEPARABLE {
        return Err(EntanglementError::NotSeparable { concurrence: conc });
    }
    let form = schmidt(s)?;
    Ok((form.basis_a[0], form.basis_b[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmat::{state_equal_up_to_phase, Unitary4};
    use crate::rng::{random_state2, random_state4, SplitMix64};

    fn bell() -> State4 {
        let r = core::f64::consts::FRAC_1_SQRT_2;
        State4::new([C64::from(r), C64::ZERO, C64::ZERO, C64::from(r)]).unwrap()
    }

    #[test]
    fn concurrence_extremes() {
        assert!((concurrence(&bell()).unwrap() - 1.0).abs() < 1e-12);
        let product = State2::ZERO.tensor(&State2::ONE);
        assert!(concurrence(&product).unwrap() < 1e-15);
    }

    #[test]
    fn concurrence_partial() {
        let v = [
            C64::from(libm::sqrt(0.8)),
            C64::ZERO,
            C64::ZERO,
            C64::from(libm::sqrt(0.2)),
        ];
        let s = State4::new(v).unwrap();
        assert!((concurrence(&s).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn concurrence_rejects_unnormalized() {
        let raw = bell().amplitudes().map(|z| z * 2.0);
        let bad = State4::from_raw(raw);
        assert!(matches!(
            concurrence(&bad),
            Err(MatrixError::NotNormalized { .. })
        ));
    }

    #[test]
    fn schmidt_product_and_bell() {
        let p = State2::PLUS.tensor(&State2::ONE);
        let form = schmidt(&p).unwrap();
        assert!((form.coeffs[0] - 1.0).abs() < 1e-12);
        assert!(form.coeffs[1].abs() < 1e-9);

        let form = schmidt(&bell()).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((form.coeffs[0] - r).abs() < 1e-12);
        assert!((form.coeffs[1] - r).abs() < 1e-12);
    }

    #[test]
    fn schmidt_reconstruction_random() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..100 {
            let s = random_state4(&mut rng);
            let form = schmidt(&s).unwrap();
            let sq = form.coeffs[0] * form.coeffs[0] + form.coeffs[1] * form.coeffs[1];
            assert!((sq - 1.0).abs() < 1e-9);
            assert!(form.basis_a[0].inner(&form.basis_a[1]).norm() < 1e-9);
            assert!(form.basis_b[0].inner(&form.basis_b[1]).norm() < 1e-9);
            let rec = form.reconstruct();
            let fid = rec.inner(&s).norm();
            assert!(fid > 1.0 - 1e-10, "reconstruction fidelity {fid}");
            // the two entanglement computations agree
            let c2 = 2.0 * form.coeffs[0] * form.coeffs[1];
            assert!((concurrence(&s).unwrap() - c2).abs() < 1e-9);
        }
    }

    #[test]
    fn separability_of_interaction_outputs() {
        // SC(Z) on |0⟩|φ⟩ stays separable for random φ
        let k = Unitary4::SWAP * Unitary4::CONTROLLED_Z;
        let mut rng = SplitMix64::new(23);
        for _ in 0..20 {
            let phi = random_state2(&mut rng);
            let out = k.apply(&State2::ZERO.tensor(&phi));
            assert!(is_separable(&out, TOL_SEPARABLE).unwrap());
            let (fa, fb) = factorize(&out).unwrap();
            // K|0⟩|φ⟩ = |φ⟩|0⟩
            assert!(state_equal_up_to_phase(&fa.amplitudes(), &phi.amplitudes(), 1e-10).unwrap());
            assert!(
                state_equal_up_to_phase(&fb.amplitudes(), &State2::ZERO.amplitudes(), 1e-10)
                    .unwrap()
            );
        }
    }

    #[test]
    fn cnot_entangles_plus() {
        // ancilla-control CNOT on |+⟩|0⟩ gives a Bell state
        let s = State2::PLUS.tensor(&State2::ZERO);
        let out = Unitary4::CNOT.apply(&s);
        assert!(!is_separable(&out, TOL_SEPARABLE).unwrap());
        assert!(matches!(
            factorize(&out),
            Err(EntanglementError::NotSeparable { .. })
        ));
    }

    #[test]
    fn factorize_roundtrip_random_products() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..100 {
            let a = random_state2(&mut rng);
            let b = random_state2(&mut rng);
            let s = a.tensor(&b);
            let (fa, fb) = factorize(&s).unwrap();
            assert!(state_equal_up_to_phase(&fa.amplitudes(), &a.amplitudes(), 1e-10).unwrap());
            assert!(state_equal_up_to_phase(&fb.amplitudes(), &b.amplitudes(), 1e-10).unwrap());
            let rec = fa.tensor(&fb);
            assert!(rec.inner(&s).norm() > 1.0 - 1e-10);
        }
    }
}
