use std::sync::OnceLock;

use crate::error::{QalError, Result};
use crate::linalg::{eigh, hermiticity_deviation, CMatrix, Eigen, C64};

const HERMITIAN_TOL: f64 = 1e-10;

/// Hermitian operator on `n_qubits` with a lazily cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct HermitianOp {
    n_qubits: usize,
    matrix: CMatrix,
    eigen: OnceLock<Eigen>,
}

impl HermitianOp {
    /// Validates Hermiticity and stores the symmetrized matrix `(M + M†)/2`.
    pub fn new(n_qubits: usize, matrix: CMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let dev = hermiticity_deviation(&matrix);
        if dev > HERMITIAN_TOL * scale {
            return Err(QalError::NotHermitian(dev));
        }
        let sym = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { n_qubits, matrix: sym, eigen: OnceLock::new() })
    }

    pub fn identity(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self { n_qubits, matrix: CMatrix::identity(dim, dim), eigen: OnceLock::new() }
    }

    pub fn zero(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self { n_qubits, matrix: CMatrix::zeros(dim, dim), eigen: OnceLock::new() }
    }

    pub fn from_diagonal(n_qubits: usize, diag: &[f64]) -> Result<Self> {
        let dim = 1 << n_qubits;
        if diag.len() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: diag.len() });
        }
        let mut m = CMatrix::zeros(dim, dim);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Ok(Self { n_qubits, matrix: m, eigen: OnceLock::new() })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn eigen(&self) -> Result<&Eigen> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let e = eigh(&self.matrix)?;
        Ok(self.eigen.get_or_init(|| e))
    }

    /// `V exp(scale E) V†`.
    pub fn matrix_exp(&self, scale: C64) -> Result<CMatrix> {
        Ok(self.eigen()?.reconstruct_with(|e| (scale * e).exp()))
    }

    /// `O v` for a vector of matching dimension.
    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.dim() {
            return Err(QalError::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        let x = nalgebra::DVectorView::from_slice(v, v.len());
        Ok((&self.matrix * x).iter().cloned().collect())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n_qubits: self.n_qubits, matrix: &self.matrix * C64::new(s, 0.0), eigen: OnceLock::new() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff, unitarity_deviation, I, ONE, ZERO};
    use crate::random::random_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!(matches!(HermitianOp::new(1, m), Err(QalError::NotHermitian(_))));
    }

    #[test]
    fn exp_of_zero_scale_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = HermitianOp::new(2, random_hermitian(4, &mut rng)).unwrap();
        let e = h.matrix_exp(ZERO).unwrap();
        assert!(max_abs_diff(&e, &CMatrix::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn exp_of_pauli_z() {
        let z = HermitianOp::from_diagonal(1, &[1.0, -1.0]).unwrap();
        let u = z.matrix_exp(-I * std::f64::consts::FRAC_PI_2).unwrap();
        let expected = [(-I * std::f64::consts::FRAC_PI_2).exp(), (I * std::f64::consts::FRAC_PI_2).exp()];
        assert!((u[(0, 0)] - expected[0]).norm() < 1e-12);
        assert!((u[(1, 1)] - expected[1]).norm() < 1e-12);
        assert!(u[(0, 1)].norm() < 1e-12 && u[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn semigroup_and_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = HermitianOp::new(3, random_hermitian(8, &mut rng)).unwrap();
        let a = h.matrix_exp(C64::new(-0.3, 0.0)).unwrap();
        let b = h.matrix_exp(C64::new(-0.6, 0.0)).unwrap();
        assert!(max_abs_diff(&(&a * &a), &b) < 1e-9);
        let u = h.matrix_exp(C64::new(0.0, -1.3)).unwrap();
        assert!(unitarity_deviation(&u) < 1e-9);
    }

    #[test]
    fn contraction_for_nonnegative_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_hermitian(8, &mut rng);
        // shift to a positive semidefinite operator
        let lo = eigh(&m).unwrap().values[0];
        let psd = &m - CMatrix::identity(8, 8) * C64::new(lo, 0.0);
        let h = HermitianOp::new(3, psd).unwrap();
        let e = h.matrix_exp(C64::new(-0.7, 0.0)).unwrap();
        assert!(e.singular_values().iter().all(|&s| s <= 1.0 + 1e-12));
    }

    #[test]
    fn cached_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = HermitianOp::new(4, random_hermitian(16, &mut rng)).unwrap();
        let e = h.eigen().unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(max_abs_diff(&e.reconstruct(), h.matrix()) < 1e-8);
    }
}
