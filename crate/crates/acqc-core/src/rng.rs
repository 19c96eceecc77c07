//! Deterministic pseudo-randomness for measurement sampling and randomized
//! checks.
//!
//! The single generator is SplitMix64 (Steele, Lea & Flood): 64 bits of
//! state advanced by a Weyl increment and finalized with an avalanching
//! mixer. It is splittable — [`SplitMix64::split`] derives an independent
//! child stream — so per-shot generators can be forked reproducibly from one
//! seed.

use num_complex::Complex64 as C64;

use crate::qmat::{Mat2, Mat4, State2, State4, Unitary2, Unitary4};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 generator; the crate's only source of randomness.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Forks an independent child stream.
    pub fn split(&mut self) -> Self {
        Self {
            state: self.next_u64() ^ GOLDEN_GAMMA.rotate_left(17),
        }
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 < 1e-300 {
            u1 = 1e-300;
        }
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    fn gaussian_c64(&mut self) -> C64 {
        C64 {
            re: self.gaussian(),
            im: self.gaussian(),
        }
    }
}

/// Haar-ish random state: normalized Gaussian amplitudes.
pub fn random_state2(rng: &mut SplitMix64) -> State2 {
    loop {
        if let Ok(s) = State2::normalized([rng.gaussian_c64(), rng.gaussian_c64()]) {
            return s;
        }
    }
}

/// Haar-ish random two-qubit state.
pub fn random_state4(rng: &mut SplitMix64) -> State4 {
    loop {
        let v = [
            rng.gaussian_c64(),
            rng.gaussian_c64(),
            rng.gaussian_c64(),
            rng.gaussian_c64(),
        ];
        if let Ok(s) = State4::normalized(v) {
            return s;
        }
    }
}

/// Haar-ish random `U(2)`: Gram-Schmidt on Gaussian columns.
pub fn random_unitary2(rng: &mut SplitMix64) -> Unitary2 {
    let mut cols = [[C64::ZERO; 2]; 2];
    for col in cols.iter_mut() {
        *col = [rng.gaussian_c64(), rng.gaussian_c64()];
    }
    gram_schmidt_2(&mut cols);
    let mut m: Mat2 = [[C64::ZERO; 2]; 2];
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            m[i][j] = *z;
        }
    }
    Unitary2::new(m).expect("orthonormalized columns")
}

/// Haar-ish random `U(4)`: Gram-Schmidt on Gaussian columns.
pub fn random_unitary4(rng: &mut SplitMix64) -> Unitary4 {
    let mut cols = [[C64::ZERO; 4]; 4];
    for col in cols.iter_mut() {
        *col = [
            rng.gaussian_c64(),
            rng.gaussian_c64(),
            rng.gaussian_c64(),
            rng.gaussian_c64(),
        ];
    }
    gram_schmidt_4(&mut cols);
    let mut m: Mat4 = [[C64::ZERO; 4]; 4];
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            m[i][j] = *z;
        }
    }
    Unitary4::new(m).expect("orthonormalized columns")
}

fn gram_schmidt_2(cols: &mut [[C64; 2]; 2]) {
    for j in 0..2 {
        for k in 0..j {
            let mut proj = C64::ZERO;
            for i in 0..2 {
                proj += cols[k][i].conj() * cols[j][i];
            }
            for i in 0..2 {
                let corr = proj * cols[k][i];
                cols[j][i] -= corr;
            }
        }
        let norm = libm::sqrt(cols[j].iter().map(|z| z.norm_sqr()).sum());
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
}

fn gram_schmidt_4(cols: &mut [[C64; 4]; 4]) {
    for j in 0..4 {
        // re-orthogonalize twice for numerical safety
        for _ in 0..2 {
            for k in 0..j {
                let mut proj = C64::ZERO;
                for i in 0..4 {
                    proj += cols[k][i].conj() * cols[j][i];
                }
                for i in 0..4 {
                    let corr = proj * cols[k][i];
                    cols[j][i] -= corr;
                }
            }
        }
        let norm = libm::sqrt(cols[j].iter().map(|z| z.norm_sqr()).sum());
        for z in cols[j].iter_mut() {
            *z /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_from_seed() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn split_streams_diverge() {
        let mut parent = SplitMix64::new(7);
        let mut child = parent.split();
        let (a, b) = (parent.next_u64(), child.next_u64());
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_range() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..20 {
            let u = random_unitary4(&mut rng);
            assert!(u.unitarity_deviation() < 1e-12);
            let v = random_unitary2(&mut rng);
            assert!(Unitary2::new(v.entries()).is_ok());
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SplitMix64::new(99);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let g = rng.gaussian();
            sum += g;
            sq += g * g;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
