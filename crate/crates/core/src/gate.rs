//! Gates, circuits and the statevector kernels that apply them.
//!
//! Circuits compile lazily into a list of kernels in which runs of
//! single-qubit rotations on the same wire are multiplied into one 2x2
//! matrix. Density matrices are updated as `U (U rho)†`, which equals
//! `U rho U†` for Hermitian `rho`.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{QalError, Result};
use crate::linalg::{unitarity_deviation, CMatrix, C64, ONE, ZERO};
use crate::pauli::{PauliSum, PauliTerm};
use crate::state::{qubit_mask, DensityState, PureState};

const UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum GateKind {
    RotY(f64),
    RotZ(f64),
    Cnot,
    Cz,
    /// Dense unitary on `targets.len()` wires; the first target is the most
    /// significant bit of the local index.
    Dense(Arc<CMatrix>),
    /// `exp(-i H t)` with `H` acting on the targets in order.
    Evolution(Arc<PauliSum>, f64),
}

#[derive(Debug, Clone)]
pub struct Gate {
    kind: GateKind,
    targets: Vec<usize>,
}

type Mat2 = [C64; 4];

fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)]
}

fn rz(theta: f64) -> Mat2 {
    let p = C64::from_polar(1.0, -theta / 2.0);
    [p, ZERO, ZERO, p.conj()]
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    [a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]]
}

fn adj2(a: &Mat2) -> Mat2 {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

impl Gate {
    pub fn ry(q: usize, theta: f64) -> Self {
        Self { kind: GateKind::RotY(theta), targets: vec![q] }
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self { kind: GateKind::RotZ(theta), targets: vec![q] }
    }

    pub fn cnot(control: usize, target: usize) -> Result<Self> {
        Self::checked(GateKind::Cnot, vec![control, target])
    }

    pub fn cz(a: usize, b: usize) -> Result<Self> {
        Self::checked(GateKind::Cz, vec![a, b])
    }

    pub fn dense(targets: Vec<usize>, u: CMatrix) -> Result<Self> {
        let dim = 1usize << targets.len();
        if u.nrows() != dim || u.ncols() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: u.nrows() });
        }
        let dev = unitarity_deviation(&u);
        if dev > UNITARY_TOL {
            return Err(QalError::NotUnitary(dev));
        }
        Self::checked(GateKind::Dense(Arc::new(u)), targets)
    }

    pub fn evolution(targets: Vec<usize>, ham: Arc<PauliSum>, time: f64) -> Result<Self> {
        if ham.n_qubits != targets.len() {
            return Err(QalError::DimensionMismatch { expected: targets.len(), found: ham.n_qubits });
        }
        Self::checked(GateKind::Evolution(ham, time), targets)
    }

    fn checked(kind: GateKind, targets: Vec<usize>) -> Result<Self> {
        for (i, &a) in targets.iter().enumerate() {
            if targets[..i].contains(&a) {
                return Err(QalError::DuplicateQubit(a));
            }
        }
        Ok(Self { kind, targets })
    }

    pub fn kind(&self) -> &GateKind {
        &self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn arity(&self) -> usize {
        self.targets.len()
    }

    pub fn adjoint(&self) -> Gate {
        let kind = match &self.kind {
            GateKind::RotY(t) => GateKind::RotY(-t),
            GateKind::RotZ(t) => GateKind::RotZ(-t),
            GateKind::Cnot => GateKind::Cnot,
            GateKind::Cz => GateKind::Cz,
            GateKind::Dense(u) => GateKind::Dense(Arc::new(u.adjoint())),
            GateKind::Evolution(h, t) => GateKind::Evolution(h.clone(), -t),
        };
        Gate { kind, targets: self.targets.clone() }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        for &q in &self.targets {
            if q >= n_qubits {
                return Err(QalError::QubitOutOfRange { index: q, n_qubits });
            }
        }
        Ok(())
    }

    fn kernel(&self, n_qubits: usize) -> Kernel {
        let t = &self.targets;
        match &self.kind {
            GateKind::RotY(a) => Kernel::One(t[0], ry(*a)),
            GateKind::RotZ(a) => Kernel::One(t[0], rz(*a)),
            GateKind::Cnot => Kernel::Cnot(t[0], t[1]),
            GateKind::Cz => Kernel::Cz(t[0], t[1]),
            GateKind::Dense(u) => Kernel::Dense(t.clone(), u.clone(), Arc::new(u.adjoint())),
            GateKind::Evolution(h, time) => Kernel::Evolve(Arc::new(remap(h, t, n_qubits)), *time),
        }
    }

    /// Applies the gate to an amplitude vector of an `n_qubits` register.
    pub fn apply_to(&self, n_qubits: usize, amps: &mut [C64]) -> Result<()> {
        self.validate(n_qubits)?;
        self.kernel(n_qubits).apply(n_qubits, amps, false);
        Ok(())
    }

    pub fn apply_pure(&self, state: &mut PureState) -> Result<()> {
        let n = state.n_qubits();
        self.apply_to(n, state.amplitudes_mut())
    }

    pub fn apply_density(&self, state: &mut DensityState) -> Result<()> {
        let n = state.n_qubits();
        self.validate(n)?;
        let k = [self.kernel(n)];
        conjugate_columns(n, state.matrix_mut(), &k, false);
        Ok(())
    }
}

fn remap(h: &PauliSum, targets: &[usize], n_total: usize) -> PauliSum {
    let terms = h
        .terms
        .iter()
        .map(|t| PauliTerm {
            coefficient: t.coefficient,
            paulis: t.paulis.iter().map(|&(q, p)| (targets[q], p)).collect(),
        })
        .collect();
    PauliSum { n_qubits: n_total, terms }
}

#[derive(Debug, Clone)]
enum Kernel {
    One(usize, Mat2),
    Cnot(usize, usize),
    Cz(usize, usize),
    Dense(Vec<usize>, Arc<CMatrix>, Arc<CMatrix>),
    Evolve(Arc<PauliSum>, f64),
    /// Signed permutation from a run of CNOT/CZ gates, in gather form:
    /// `new[i] = sign[i] * old[src[i]]`, with the adjoint stored likewise.
    Perm(Arc<SignedPerm>),
}

#[derive(Debug)]
struct SignedPerm {
    src: Vec<u32>,
    sign: Vec<f64>,
    src_adj: Vec<u32>,
    sign_adj: Vec<f64>,
}

impl SignedPerm {
    fn from_run(n: usize, run: &[Kernel]) -> Self {
        let dim = 1usize << n;
        let mut src = vec![0u32; dim];
        let mut sign = vec![0.0; dim];
        let mut src_adj = vec![0u32; dim];
        let mut sign_adj = vec![0.0; dim];
        for j in 0..dim {
            let (mut i, mut s) = (j, 1.0);
            for k in run {
                match k {
                    Kernel::Cnot(c, t) => {
                        if i & qubit_mask(n, *c) != 0 {
                            i ^= qubit_mask(n, *t);
                        }
                    }
                    Kernel::Cz(a, b) => {
                        let m = qubit_mask(n, *a) | qubit_mask(n, *b);
                        if i & m == m {
                            s = -s;
                        }
                    }
                    _ => unreachable!("only CNOT/CZ runs are fused"),
                }
            }
            // E|j> = s|i>
            src[i] = j as u32;
            sign[i] = s;
            src_adj[j] = i as u32;
            sign_adj[j] = s;
        }
        Self { src, sign, src_adj, sign_adj }
    }
}

impl Kernel {
    fn apply(&self, n: usize, amps: &mut [C64], adjoint: bool) {
        match self {
            Kernel::One(q, m) => {
                let m = if adjoint { adj2(m) } else { *m };
                apply_one(n, amps, *q, &m)
            }
            Kernel::Cnot(c, t) => {
                let (mc, mt) = (qubit_mask(n, *c), qubit_mask(n, *t));
                for i in 0..amps.len() {
                    if i & mc != 0 && i & mt == 0 {
                        amps.swap(i, i | mt);
                    }
                }
            }
            Kernel::Cz(a, b) => {
                let m = qubit_mask(n, *a) | qubit_mask(n, *b);
                for (i, x) in amps.iter_mut().enumerate() {
                    if i & m == m {
                        *x = -*x;
                    }
                }
            }
            Kernel::Dense(t, u, ua) => apply_dense(n, amps, t, if adjoint { ua } else { u }),
            Kernel::Evolve(h, time) => h.evolve(n, amps, if adjoint { -time } else { *time }),
            Kernel::Perm(p) => {
                let (src, sign) = if adjoint { (&p.src_adj, &p.sign_adj) } else { (&p.src, &p.sign) };
                let old = amps.to_vec();
                for ((a, &j), &s) in amps.iter_mut().zip(src).zip(sign) {
                    *a = old[j as usize] * s;
                }
            }
        }
    }
}

fn apply_one(n: usize, amps: &mut [C64], q: usize, m: &Mat2) {
    let mask = qubit_mask(n, q);
    let dim = amps.len();
    let mut base = 0;
    while base < dim {
        for i in base..base + mask {
            let (a, b) = (amps[i], amps[i + mask]);
            amps[i] = m[0] * a + m[1] * b;
            amps[i + mask] = m[2] * a + m[3] * b;
        }
        base += 2 * mask;
    }
}

fn apply_dense(n: usize, amps: &mut [C64], targets: &[usize], u: &CMatrix) {
    let k = targets.len();
    let sub = 1usize << k;
    let masks: Vec<usize> = targets.iter().map(|&q| qubit_mask(n, q)).collect();
    let all: usize = masks.iter().sum();
    let offsets: Vec<usize> =
        (0..sub).map(|l| (0..k).filter(|&b| l & (1 << (k - 1 - b)) != 0).map(|b| masks[b]).sum()).collect();
    let mut buf = vec![ZERO; sub];
    for base in 0..amps.len() {
        if base & all != 0 {
            continue;
        }
        for (l, &o) in offsets.iter().enumerate() {
            buf[l] = amps[base + o];
        }
        for (r, &o) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (c, b) in buf.iter().enumerate() {
                acc += u[(r, c)] * b;
            }
            amps[base + o] = acc;
        }
    }
}

const MAX_PERM_QUBITS: usize = 16;

fn fuse_permutations(n: usize, kernels: Vec<Kernel>) -> Vec<Kernel> {
    if n > MAX_PERM_QUBITS {
        return kernels;
    }
    let is_perm = |k: &Kernel| matches!(k, Kernel::Cnot(..) | Kernel::Cz(..));
    let mut out = Vec::with_capacity(kernels.len());
    let mut run: Vec<Kernel> = Vec::new();
    let close = |run: &mut Vec<Kernel>, out: &mut Vec<Kernel>| {
        if run.len() >= 2 {
            out.push(Kernel::Perm(Arc::new(SignedPerm::from_run(n, run))));
            run.clear();
        } else {
            out.append(run);
        }
    };
    for k in kernels {
        if is_perm(&k) {
            run.push(k);
        } else {
            close(&mut run, &mut out);
            out.push(k);
        }
    }
    close(&mut run, &mut out);
    out
}

fn run(n: usize, kernels: &[Kernel], amps: &mut [C64], adjoint: bool) {
    if adjoint {
        kernels.iter().rev().for_each(|k| k.apply(n, amps, true));
    } else {
        kernels.iter().for_each(|k| k.apply(n, amps, false));
    }
}

fn apply_columns(n: usize, m: &mut CMatrix, kernels: &[Kernel], adjoint: bool) {
    let dim = m.nrows();
    m.as_mut_slice().par_chunks_mut(dim).for_each(|col| run(n, kernels, col, adjoint));
}

/// `m <- V m V†` where `V` is the kernel sequence (or its adjoint).
fn conjugate_columns(n: usize, m: &mut CMatrix, kernels: &[Kernel], adjoint: bool) {
    apply_columns(n, m, kernels, adjoint);
    m.adjoint_mut();
    apply_columns(n, m, kernels, adjoint);
}

/// Ordered gate list on a fixed register size.
#[derive(Debug, Clone)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    compiled: OnceLock<Vec<Kernel>>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, gates: Vec::new(), compiled: OnceLock::new() }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(n_qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        self.compiled = OnceLock::new();
        Ok(())
    }

    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits > self.n_qubits {
            return Err(QalError::DimensionMismatch { expected: self.n_qubits, found: other.n_qubits });
        }
        for g in &other.gates {
            self.push(g.clone())?;
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Same gates on a register with `extra` trailing qubits.
    pub fn widen(&self, extra: usize) -> Circuit {
        Circuit { n_qubits: self.n_qubits + extra, gates: self.gates.clone(), compiled: OnceLock::new() }
    }

    pub fn adjoint(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::adjoint).collect(),
            compiled: OnceLock::new(),
        }
    }

    fn kernels(&self) -> &[Kernel] {
        self.compiled.get_or_init(|| {
            let n = self.n_qubits;
            let mut out = Vec::new();
            let mut pending: Vec<Option<Mat2>> = vec![None; n];
            let flush = |q: usize, pending: &mut Vec<Option<Mat2>>, out: &mut Vec<Kernel>| {
                if let Some(m) = pending[q].take() {
                    out.push(Kernel::One(q, m));
                }
            };
            for g in &self.gates {
                match g.kernel(n) {
                    Kernel::One(q, m) => {
                        pending[q] = Some(match pending[q] {
                            Some(p) => mul2(&m, &p),
                            None => m,
                        });
                    }
                    k => {
                        // flushing everything keeps entangler runs contiguous
                        for q in 0..n {
                            flush(q, &mut pending, &mut out);
                        }
                        out.push(k);
                    }
                }
            }
            for q in 0..n {
                flush(q, &mut pending, &mut out);
            }
            fuse_permutations(n, out)
        })
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.n_qubits {
            return Err(QalError::DimensionMismatch { expected: self.n_qubits, found: n });
        }
        Ok(())
    }

    pub fn apply_slice(&self, amps: &mut [C64]) -> Result<()> {
        self.check_len(amps.len())?;
        run(self.n_qubits, self.kernels(), amps, false);
        Ok(())
    }

    pub fn apply_adjoint_slice(&self, amps: &mut [C64]) -> Result<()> {
        self.check_len(amps.len())?;
        run(self.n_qubits, self.kernels(), amps, true);
        Ok(())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let dim = 1usize << self.n_qubits;
        if len != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: len });
        }
        Ok(())
    }

    pub fn apply(&self, state: &mut PureState) -> Result<()> {
        self.check(state.n_qubits())?;
        self.apply_slice(state.amplitudes_mut())
    }

    pub fn apply_adjoint(&self, state: &mut PureState) -> Result<()> {
        self.check(state.n_qubits())?;
        self.apply_adjoint_slice(state.amplitudes_mut())
    }

    pub fn apply_density(&self, state: &mut DensityState) -> Result<()> {
        self.check(state.n_qubits())?;
        conjugate_columns(self.n_qubits, state.matrix_mut(), self.kernels(), false);
        Ok(())
    }

    pub fn apply_adjoint_density(&self, state: &mut DensityState) -> Result<()> {
        self.check(state.n_qubits())?;
        conjugate_columns(self.n_qubits, state.matrix_mut(), self.kernels(), true);
        Ok(())
    }

    /// `U† m U` for a Hermitian matrix `m`.
    pub fn conjugate_hermitian(&self, m: &mut CMatrix) -> Result<()> {
        self.check_len(m.nrows())?;
        conjugate_columns(self.n_qubits, m, self.kernels(), true);
        Ok(())
    }

    /// `U† D U` for a real diagonal `D`; columns where `D` vanishes are
    /// skipped in the first pass.
    pub fn conjugate_diagonal(&self, diag: &[f64]) -> Result<CMatrix> {
        let dim = 1usize << self.n_qubits;
        self.check_len(diag.len())?;
        let kernels = self.kernels();
        let n = self.n_qubits;
        // A = U† D, column j = d_j U†|j>
        let mut a = CMatrix::zeros(dim, dim);
        a.as_mut_slice().par_chunks_mut(dim).enumerate().for_each(|(j, col)| {
            if diag[j] != 0.0 {
                col[j] = C64::new(diag[j], 0.0);
                run(n, kernels, col, true);
            }
        });
        // U† (U† D)† = U† D U
        a.adjoint_mut();
        apply_columns(n, &mut a, kernels, true);
        Ok(a)
    }

    /// `U m` applied column by column.
    pub fn left_apply(&self, m: &mut CMatrix) -> Result<()> {
        self.check_len(m.nrows())?;
        apply_columns(self.n_qubits, m, self.kernels(), false);
        Ok(())
    }

    /// Dense unitary of the whole circuit.
    pub fn to_matrix(&self) -> CMatrix {
        let dim = 1usize << self.n_qubits;
        let mut m = CMatrix::identity(dim, dim);
        apply_columns(self.n_qubits, &mut m, self.kernels(), false);
        m
    }
}

/// Single-qubit rotation matrices, exposed for tests and oracles.
pub fn rot_y_matrix(theta: f64) -> CMatrix {
    let m = ry(theta);
    CMatrix::from_row_slice(2, 2, &m)
}

pub fn rot_z_matrix(theta: f64) -> CMatrix {
    let m = rz(theta);
    CMatrix::from_row_slice(2, 2, &m)
}

pub fn cnot_matrix() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    m
}
