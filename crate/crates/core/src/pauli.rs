//! Pauli strings and sums of them.
//!
//! A [`PauliSum`] can be assembled into a dense matrix (iterated Kronecker
//! products) or applied matrix-free: each string maps a basis state to one
//! other basis state with a phase, so `P|j> = i^{n_y} (-1)^{|j & zy|} |j ^ xy>`.
//! Real-time evolution `exp(-iHt)|psi>` uses a Chebyshev expansion whose
//! coefficients are Bessel functions, truncated below 1e-16.

use serde::{Deserialize, Serialize};

use crate::error::{QalError, Result};
use crate::linalg::{CMatrix, C64, I, ONE, ZERO};
use crate::op::HermitianOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coefficient: f64,
    pub paulis: Vec<(usize, Pauli)>,
}

/// Bit masks of a Pauli string on an `n`-qubit register.
#[derive(Debug, Clone, Copy)]
struct StringMask {
    flip: usize,
    sign: usize,
    phase: C64,
}

impl PauliTerm {
    pub fn new(coefficient: f64, mut paulis: Vec<(usize, Pauli)>) -> Result<Self> {
        paulis.sort_by_key(|p| p.0);
        for w in paulis.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(QalError::DuplicateQubit(w[0].0));
            }
        }
        Ok(Self { coefficient, paulis })
    }

    pub fn identity(coefficient: f64) -> Self {
        Self { coefficient, paulis: Vec::new() }
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.paulis.iter().map(|p| p.0).max()
    }

    fn mask(&self, n_qubits: usize) -> StringMask {
        let mut flip = 0;
        let mut sign = 0;
        let mut ny = 0;
        for &(q, p) in &self.paulis {
            let bit = 1usize << (n_qubits - 1 - q);
            match p {
                Pauli::X => flip |= bit,
                Pauli::Z => sign |= bit,
                Pauli::Y => {
                    flip |= bit;
                    sign |= bit;
                    ny += 1;
                }
            }
        }
        let phase = [ONE, I, -ONE, -I][ny % 4];
        StringMask { flip, sign, phase }
    }

    /// Dense matrix on `n_qubits` by iterated Kronecker products (qubit 0 leftmost).
    pub fn to_dense(&self, n_qubits: usize) -> Result<CMatrix> {
        if let Some(q) = self.max_qubit() {
            if q >= n_qubits {
                return Err(QalError::QubitOutOfRange { index: q, n_qubits });
            }
        }
        let id = CMatrix::identity(2, 2);
        let mut m = CMatrix::from_element(1, 1, C64::new(self.coefficient, 0.0));
        for q in 0..n_qubits {
            let factor = match self.paulis.iter().find(|p| p.0 == q) {
                Some(&(_, p)) => p.matrix(),
                None => id.clone(),
            };
            m = m.kronecker(&factor);
        }
        Ok(m)
    }

    /// `<psi| P |psi>` of the bare string (coefficient excluded).
    pub fn string_expectation(&self, n_qubits: usize, psi: &[C64]) -> f64 {
        let m = self.mask(n_qubits);
        let mut acc = ZERO;
        for (j, &a) in psi.iter().enumerate() {
            if a == ZERO {
                continue;
            }
            let s = if (j & m.sign).count_ones() % 2 == 1 { -m.phase } else { m.phase };
            acc += psi[j ^ m.flip].conj() * s * a;
        }
        acc.re
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliSum {
    pub n_qubits: usize,
    pub terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(n_qubits: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        for t in &terms {
            if let Some(q) = t.max_qubit() {
                if q >= n_qubits {
                    return Err(QalError::QubitOutOfRange { index: q, n_qubits });
                }
            }
        }
        Ok(Self { n_qubits, terms })
    }

    pub fn zero(n_qubits: usize) -> Self {
        Self { n_qubits, terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Upper bound on the spectral norm: the sum of absolute coefficients.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }

    pub fn to_dense(&self) -> Result<CMatrix> {
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for t in &self.terms {
            m += t.to_dense(self.n_qubits)?;
        }
        Ok(m)
    }

    pub fn to_op(&self) -> Result<HermitianOp> {
        HermitianOp::new(self.n_qubits, self.to_dense()?)
    }

    fn masks(&self, n_total: usize, offset: usize) -> Vec<(StringMask, f64)> {
        // terms act on qubits offset..offset+n_qubits of an n_total register
        self.terms
            .iter()
            .map(|t| {
                let shifted = PauliTerm {
                    coefficient: t.coefficient,
                    paulis: t.paulis.iter().map(|&(q, p)| (q + offset, p)).collect(),
                };
                (shifted.mask(n_total), t.coefficient)
            })
            .collect()
    }

    /// `out = H psi` for `psi` on an `n_total`-qubit register, with this sum
    /// acting on the leading `n_qubits` qubits.
    pub fn apply_into(&self, n_total: usize, psi: &[C64], out: &mut [C64]) {
        let masks = self.masks(n_total, 0);
        apply_masks(&masks, psi, out);
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; psi.len()];
        self.apply_into(self.n_qubits, psi, &mut out);
        out
    }

    /// `<psi|H|psi>` (unnormalized).
    pub fn expectation(&self, psi: &[C64]) -> f64 {
        self.apply(psi).iter().zip(psi).map(|(h, p)| (p.conj() * h).re).sum()
    }

    /// `exp(-iHt) psi` on an `n_total`-qubit register (the sum acts on the
    /// leading qubits).
    pub fn evolve(&self, n_total: usize, psi: &mut [C64], t: f64) {
        let masks = self.masks(n_total, 0);
        chebyshev_evolve(&masks, self.norm_bound(), psi, t);
    }

    /// Reduced operator `(<x| ⊗ I) H (|x> ⊗ I)` for a state `x` on the first
    /// `data_qubits` qubits; the result acts on the remaining qubits.
    /// Strings with identical model parts are merged.
    pub fn induced(&self, data_qubits: usize, x: &[C64]) -> Result<PauliSum> {
        if data_qubits > self.n_qubits {
            return Err(QalError::InvalidArgument(format!(
                "{data_qubits} data qubits exceed the {}-qubit operator",
                self.n_qubits
            )));
        }
        if x.len() != 1 << data_qubits {
            return Err(QalError::DimensionMismatch { expected: 1 << data_qubits, found: x.len() });
        }
        let n_model = self.n_qubits - data_qubits;
        let mut merged: Vec<PauliTerm> = Vec::new();
        for t in &self.terms {
            let data: Vec<_> = t.paulis.iter().filter(|p| p.0 < data_qubits).cloned().collect();
            let model: Vec<_> =
                t.paulis.iter().filter(|p| p.0 >= data_qubits).map(|&(q, p)| (q - data_qubits, p)).collect();
            let weight = PauliTerm { coefficient: 1.0, paulis: data }.string_expectation(data_qubits, x);
            let c = t.coefficient * weight;
            match merged.iter_mut().find(|m| m.paulis == model) {
                Some(m) => m.coefficient += c,
                None => merged.push(PauliTerm { coefficient: c, paulis: model }),
            }
        }
        Ok(PauliSum { n_qubits: n_model, terms: merged })
    }
}

fn apply_masks(masks: &[(StringMask, f64)], psi: &[C64], out: &mut [C64]) {
    for o in out.iter_mut() {
        *o = ZERO;
    }
    for (m, c) in masks {
        let pos = m.phase * *c;
        let neg = -pos;
        if m.flip == 0 && m.sign == 0 {
            for (o, a) in out.iter_mut().zip(psi) {
                *o += pos * a;
            }
            continue;
        }
        for (j, &a) in psi.iter().enumerate() {
            let s = if (j & m.sign).count_ones() & 1 == 1 { neg } else { pos };
            out[j ^ m.flip] += s * a;
        }
    }
}

/// Bessel functions `J_0(x) .. J_{kmax}(x)` by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = {
        let m = kmax.max(ax.ceil() as usize) + 30 + (40.0 * ax.max(1.0)).sqrt() as usize;
        m + (m % 2)
    };
    let mut vals = vec![0.0; start + 2];
    vals[start + 1] = 0.0;
    vals[start] = 1e-280;
    for k in (1..=start).rev() {
        vals[k - 1] = 2.0 * k as f64 / ax * vals[k] - vals[k + 1];
        if vals[k - 1].abs() > 1e250 {
            for v in vals[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    // J_0 + 2 sum J_{2k} = 1
    let norm: f64 = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    for k in 0..=kmax {
        let v = vals[k] / norm;
        // J_k(-x) = (-1)^k J_k(x)
        out[k] = if x < 0.0 && k % 2 == 1 { -v } else { v };
    }
    out
}

fn chebyshev_evolve(masks: &[(StringMask, f64)], bound: f64, psi: &mut [C64], t: f64) {
    if t == 0.0 || bound == 0.0 {
        return;
    }
    let x = bound * t;
    let ax = x.abs();
    let kmax = (ax + 10.0 * ax.cbrt() + 40.0).ceil() as usize;
    let bessel = bessel_j_sequence(x, kmax);
    // truncate once the tail is negligible
    let mut last = kmax;
    while last > ax as usize + 1 && bessel[last].abs() < 1e-17 {
        last -= 1;
    }
    let dim = psi.len();
    let inv = 1.0 / bound;
    let scaled: Vec<(StringMask, f64)> = masks.iter().map(|(m, c)| (*m, c * inv)).collect();
    let mut prev = psi.to_vec();
    let mut cur = vec![ZERO; dim];
    apply_masks(&scaled, &prev, &mut cur);
    let mut next = vec![ZERO; dim];
    let mut acc: Vec<C64> = prev.iter().map(|a| a * bessel[0]).collect();
    // (-i)^k
    let mut phase = -I;
    for (a, c) in acc.iter_mut().zip(&cur) {
        *a += phase * (2.0 * bessel[1]) * c;
    }
    for k in 2..=last {
        apply_masks(&scaled, &cur, &mut next);
        for ((n, c), p) in next.iter_mut().zip(&cur).zip(&prev) {
            let _ = c;
            *n = *n * 2.0 - p;
        }
        phase *= -I;
        let w = phase * (2.0 * bessel[k]);
        for (a, n) in acc.iter_mut().zip(&next) {
            *a += w * n;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    psi.copy_from_slice(&acc);
}
