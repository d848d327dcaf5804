//! Pure and mixed register states.
//!
//! Basis index convention: qubit 0 is the most significant bit, so on three
//! qubits `|q0 q1 q2> = |1 0 0>` is index 4.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{QalError, Result};
use crate::linalg::{trace, CMatrix, C64, ONE, ZERO};
use crate::op::HermitianOp;

/// Bit mask of qubit `q` on an `n`-qubit register.
#[inline]
pub fn qubit_mask(n_qubits: usize, q: usize) -> usize {
    1usize << (n_qubits - 1 - q)
}

/// Amplitude vector of `2^n` entries. The norm is not forced to one:
/// unnormalized evolution keeps the success probability in `norm_sq()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl PureState {
    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0).expect("index 0 is always valid")
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(QalError::InvalidArgument(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if amps.len() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: amps.len() });
        }
        Ok(Self { n_qubits, amps })
    }

    /// Haar-random pure state from normalized complex Gaussians.
    pub fn haar_random(n_qubits: usize, rng: &mut impl Rng) -> Self {
        let dim = 1usize << n_qubits;
        let amps = (0..dim).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let mut s = Self { n_qubits, amps };
        s.normalize().expect("Gaussian vector is nonzero");
        s
    }

    pub fn random_basis(n_qubits: usize, rng: &mut impl Rng) -> Self {
        let idx = rng.random_range(0..1usize << n_qubits);
        Self::basis(n_qubits, idx).expect("index in range")
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the previous squared norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_sq();
        if n2 <= 0.0 || !n2.is_finite() {
            return Err(QalError::DegenerateStep);
        }
        let inv = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(n2)
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|<a|b>|^2 / (<a|a><b|b>)`, insensitive to global phase and norm.
    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.inner(other).norm_sqr() / (self.norm_sq() * other.norm_sq())
    }

    /// `<psi|O|psi> / <psi|psi>`.
    pub fn expectation(&self, op: &HermitianOp) -> Result<f64> {
        let ov = op.apply(&self.amps)?;
        let num: C64 = self.amps.iter().zip(&ov).map(|(a, b)| a.conj() * b).sum();
        Ok(num.re / self.norm_sq())
    }

    /// Probability that qubit `q` reads 1.
    pub fn prob_one(&self, q: usize) -> f64 {
        let m = qubit_mask(self.n_qubits, q);
        self.amps.iter().enumerate().filter(|(i, _)| i & m != 0).map(|(_, a)| a.norm_sqr()).sum::<f64>()
            / self.norm_sq()
    }

    pub fn to_density(&self) -> DensityState {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityState { n_qubits: self.n_qubits, matrix: &v * v.adjoint() }
    }

    /// Appends `extra` qubits in `|0>` after the existing ones.
    pub fn with_ancillas(&self, extra: usize) -> PureState {
        let mut amps = vec![ZERO; self.amps.len() << extra];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i << extra] = *a;
        }
        PureState { n_qubits: self.n_qubits + extra, amps }
    }
}

/// Density matrix; the trace may be below one after post-selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    n_qubits: usize,
    matrix: CMatrix,
}

impl DensityState {
    pub fn new(n_qubits: usize, matrix: CMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        Ok(Self { n_qubits, matrix })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self { n_qubits, matrix: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0) }
    }

    pub fn from_pure(s: &PureState) -> Self {
        s.to_density()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// Divides by the trace and returns the previous trace.
    pub fn normalize(&mut self) -> Result<f64> {
        let t = self.trace();
        if t <= 0.0 || !t.is_finite() {
            return Err(QalError::DegenerateStep);
        }
        self.matrix /= C64::new(t, 0.0);
        Ok(t)
    }

    /// `Tr(O rho) / Tr(rho)`.
    pub fn expectation(&self, op: &HermitianOp) -> Result<f64> {
        if op.dim() != self.dim() {
            return Err(QalError::DimensionMismatch { expected: self.dim(), found: op.dim() });
        }
        // Tr(O rho) = sum_ij O_ij rho_ji, with rho Hermitian rho_ji = conj(rho_ij)
        let o = op.matrix();
        let num: C64 = o.iter().zip(self.matrix.iter()).map(|(a, b)| a * b.conj()).sum();
        Ok(num.re / self.trace())
    }

    /// Probability that qubit `q` reads 1.
    pub fn prob_one(&self, q: usize) -> f64 {
        let m = qubit_mask(self.n_qubits, q);
        (0..self.dim()).filter(|i| i & m != 0).map(|i| self.matrix[(i, i)].re).sum::<f64>() / self.trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_hermitian, random_vector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qubit_zero_is_most_significant() {
        let s = PureState::basis(3, 4).unwrap();
        assert!((s.prob_one(0) - 1.0).abs() < 1e-15);
        assert!(s.prob_one(1).abs() < 1e-15);
        assert!(s.prob_one(2).abs() < 1e-15);
    }

    #[test]
    fn haar_state_is_normalized_and_seeded() {
        let a = PureState::haar_random(5, &mut ChaCha8Rng::seed_from_u64(1));
        let b = PureState::haar_random(5, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!((a.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expectation_identity_and_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = PureState::from_amplitudes(2, random_vector(4, &mut rng)).unwrap();
        assert!((s.expectation(&HermitianOp::identity(2)).unwrap() - 1.0).abs() < 1e-12);
        let p0 = HermitianOp::from_diagonal(1, &[1.0, 0.0]).unwrap();
        let one = PureState::basis(1, 1).unwrap();
        assert!(one.expectation(&p0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn expectation_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_hermitian(4, &mut rng);
        let psi = random_vector(4, &mut rng);
        let mut oracle = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                oracle += psi[i].conj() * m[(i, j)] * psi[j];
            }
        }
        let op = HermitianOp::new(2, m).unwrap();
        let s = PureState::from_amplitudes(2, psi).unwrap();
        assert!((s.expectation(&op).unwrap() - oracle.re).abs() < 1e-10);
        assert!((s.to_density().expectation(&op).unwrap() - oracle.re).abs() < 1e-10);
    }

    #[test]
    fn ancilla_is_least_significant() {
        let s = PureState::basis(2, 3).unwrap().with_ancillas(1);
        assert_eq!(s.n_qubits(), 3);
        assert_eq!(s.amplitudes()[6], ONE);
    }

    #[test]
    fn zero_state_cannot_be_normalized() {
        let mut s = PureState::from_amplitudes(1, vec![ZERO, ZERO]).unwrap();
        assert!(matches!(s.normalize(), Err(QalError::DegenerateStep)));
    }
}
