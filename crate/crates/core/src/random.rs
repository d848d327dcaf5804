//! Random matrices and states for tests and numerical checks.

use rand::Rng;

use crate::linalg::{CMatrix, C64};

pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn random_vector(dim: usize, rng: &mut impl Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= n);
    v
}

/// Random density matrix `A A† / Tr(A A†)`.
pub fn random_density(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let r = &a * a.adjoint();
    let t = crate::linalg::trace(&r);
    r / t
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMatrix {
    use rand_distr::StandardNormal;
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        q.column_mut(j).iter_mut().for_each(|a| *a *= phase);
    }
    q
}

/// Hermitian `V diag(l) V†` with `l` uniform in `[0, 1]`, so `0 <= M <= I`.
pub fn random_contraction(dim: usize, rng: &mut impl Rng) -> CMatrix {
    let v = random_unitary(dim, rng);
    let d = CMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new(rng.random(), 0.0) } else { C64::new(0.0, 0.0) });
    let m = &v * d * v.adjoint();
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Random Hermitian matrix scaled to trace norm `scale`.
pub fn random_unit_trace_norm(dim: usize, scale: f64, rng: &mut impl Rng) -> CMatrix {
    let h = random_hermitian(dim, rng);
    let t = crate::linalg::trace_norm(&h);
    h * C64::new(scale / t, 0.0)
}
