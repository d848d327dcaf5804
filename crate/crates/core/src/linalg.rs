//! Dense complex linear algebra shared by the simulator.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major). Hermitian
//! eigendecompositions first split the matrix into the connected components
//! of its sparsity graph, so operators with conserved quantities (particle
//! number, parity) are diagonalized block by block.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QalError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Largest entry of `|M - M†|`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest entry of `|U†U - I|`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let p = u.adjoint() * u;
    let n = p.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { ONE } else { ZERO };
            dev = dev.max((p[(i, j)] - target).norm());
        }
    }
    dev
}

/// Frobenius-free max-abs distance between two matrices of equal shape.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
///
/// `blocks` lists, per invariant subspace found by [`eigh`], the basis rows
/// it spans and the eigenvector columns that live on them.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
    pub blocks: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Eigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn block_vectors(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        CMatrix::from_fn(rows.len(), cols.len(), |i, j| self.vectors[(rows[i], cols[j])])
    }

    /// `V f(E) V†` for a scalar function of the eigenvalues, assembled block
    /// by block.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (rows, cols) in &self.blocks {
            let v = self.block_vectors(rows, cols);
            let mut scaled = v.clone();
            for (j, &c) in cols.iter().enumerate() {
                let s = f(self.values[c]);
                scaled.column_mut(j).iter_mut().for_each(|x| *x *= s);
            }
            let sub = scaled * v.adjoint();
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in rows.iter().enumerate() {
                    out[(r, c)] = sub[(i, j)];
                }
            }
        }
        out
    }

    /// `W† D W` with `W = V f(E) V†` and `D` diagonal. A diagonal `D` never
    /// couples invariant blocks, so the product is formed block by block.
    pub fn conjugate_diagonal(&self, f: impl Fn(f64) -> C64, diag: &[f64]) -> CMatrix {
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (rows, cols) in &self.blocks {
            let v = self.block_vectors(rows, cols);
            let mut scaled = v.clone();
            for (j, &c) in cols.iter().enumerate() {
                let s = f(self.values[c]);
                scaled.column_mut(j).iter_mut().for_each(|x| *x *= s);
            }
            let w = scaled * v.adjoint();
            let mut dw = w.clone();
            for (i, &r) in rows.iter().enumerate() {
                let d = diag[r];
                dw.row_mut(i).iter_mut().for_each(|x| *x *= d);
            }
            let sub = w.adjoint() * dw;
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in rows.iter().enumerate() {
                    out[(r, c)] = sub[(i, j)];
                }
            }
        }
        out
    }

    /// `V f(E) V† v` for a vector.
    pub fn apply_with(&self, f: impl Fn(f64) -> C64, v: &[C64]) -> Vec<C64> {
        let x = nalgebra::DVectorView::from_slice(v, v.len());
        let mut coeffs = self.vectors.adjoint() * x;
        for (c, &e) in coeffs.iter_mut().zip(&self.values) {
            *c *= f(e);
        }
        (&self.vectors * coeffs).iter().cloned().collect()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.reconstruct_with(|e| C64::new(e, 0.0))
    }
}

/// Connected components of the nonzero pattern of a square matrix.
fn components(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..j {
            let z = m[(i, j)];
            if z.re != 0.0 || z.im != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn eigh_block(block: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    const EPS: f64 = f64::EPSILON;
    let real = block.iter().all(|z| z.im == 0.0);
    if real {
        let r = block.map(|z| z.re);
        let e = nalgebra::SymmetricEigen::try_new(r, EPS, 0).ok_or(QalError::Eigen)?;
        Ok((e.eigenvalues.iter().cloned().collect(), e.eigenvectors.map(|x| C64::new(x, 0.0))))
    } else {
        let e = nalgebra::SymmetricEigen::try_new(block.clone(), EPS, 0).ok_or(QalError::Eigen)?;
        Ok((e.eigenvalues.iter().cloned().collect(), e.eigenvectors))
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eigh(m: &CMatrix) -> Result<Eigen> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(QalError::DimensionMismatch { expected: n, found: m.ncols() });
    }
    let groups = components(m);
    // (eigenvalue, group index, column within group)
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(groups.len());
    for (g, idx) in groups.iter().enumerate() {
        let block = CMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
        let (vals, vecs) = eigh_block(&block)?;
        for (c, v) in vals.iter().enumerate() {
            pairs.push((*v, g, c));
        }
        blocks.push(vecs);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    let mut cols = vec![Vec::new(); groups.len()];
    for (col, &(v, g, c)) in pairs.iter().enumerate() {
        values.push(v);
        cols[g].push(col);
        for (r, &row) in groups[g].iter().enumerate() {
            vectors[(row, col)] = blocks[g][(r, c)];
        }
    }
    Ok(Eigen { values, vectors, blocks: groups.into_iter().zip(cols).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_hermitian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigh_reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(16, &mut rng);
        let e = eigh(&h).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(max_abs_diff(&e.reconstruct(), &h) < 1e-10);
        assert!(unitarity_deviation(&e.vectors) < 1e-10);
    }

    #[test]
    fn eigh_handles_block_structure() {
        // two decoupled 2x2 blocks interleaved: {0,2} and {1,3}
        let mut h = CMatrix::zeros(4, 4);
        h[(0, 0)] = C64::new(1.0, 0.0);
        h[(2, 2)] = C64::new(-1.0, 0.0);
        h[(0, 2)] = C64::new(0.0, 0.5);
        h[(2, 0)] = C64::new(0.0, -0.5);
        h[(1, 1)] = C64::new(3.0, 0.0);
        h[(3, 3)] = C64::new(3.0, 0.0);
        h[(1, 3)] = C64::new(1.0, 0.0);
        h[(3, 1)] = C64::new(1.0, 0.0);
        let e = eigh(&h).unwrap();
        let r = (1.25f64).sqrt();
        let expected = [-r, r, 2.0, 4.0];
        for (a, b) in e.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(max_abs_diff(&e.reconstruct(), &h) < 1e-12);
    }

    #[test]
    fn block_conjugation_matches_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // block-diagonal Hermitian on rows {0,3,5} and {1,2,4,6,7}
        let a = random_hermitian(8, &mut rng);
        let inside = |i: usize| [0, 3, 5].contains(&i);
        let h = CMatrix::from_fn(8, 8, |i, j| if inside(i) == inside(j) { a[(i, j)] } else { ZERO });
        let e = eigh(&h).unwrap();
        assert_eq!(e.blocks.len(), 2);
        let f = |x: f64| C64::new(0.0, -0.8 * x).exp();
        let w = e.reconstruct_with(f);
        let dense = {
            let mut s = e.vectors.clone();
            for j in 0..8 {
                let z = f(e.values[j]);
                s.column_mut(j).iter_mut().for_each(|x| *x *= z);
            }
            s * e.vectors.adjoint()
        };
        assert!(max_abs_diff(&w, &dense) < 1e-12);
        let diag: Vec<f64> = (0..8).map(|i| (i % 3) as f64).collect();
        let d = CMatrix::from_fn(8, 8, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO });
        let oracle = dense.adjoint() * d * &dense;
        assert!(max_abs_diff(&e.conjugate_diagonal(f, &diag), &oracle) < 1e-12);
        let v: Vec<C64> = (0..8).map(|i| C64::new(i as f64, 1.0)).collect();
        let got = e.apply_with(f, &v);
        let want = &dense * nalgebra::DVector::from_vec(v);
        for (x, y) in got.iter().zip(want.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn norms_of_identity_and_projector() {
        let id = identity(8);
        assert!((trace_norm(&id) - 8.0).abs() < 1e-12);
        assert!((spectral_norm(&id) - 1.0).abs() < 1e-12);
        let mut p = CMatrix::zeros(4, 4);
        p[(2, 2)] = ONE;
        assert!((trace_norm(&p) - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norms_match_eigenvalue_oracle_for_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let h = random_hermitian(8, &mut rng);
            // oracle: eigenvalues via the plain complex solver, no block splitting
            let ev = nalgebra::SymmetricEigen::new(h.clone()).eigenvalues;
            let tn: f64 = ev.iter().map(|x| x.abs()).sum();
            let sn = ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!((trace_norm(&h) - tn).abs() < 1e-9);
            assert!((spectral_norm(&h) - sn).abs() < 1e-9);
        }
    }
}
