//! Data-encoding unitaries, label projectors and the perturbation block.
//!
//! Classical vectors use a layered rotation circuit. With `d = ceil(l / 3n)`
//! blocks the circuit is
//!
//! ```text
//! G(x[0..3n]) BA  G(x[3n..6n]) BA  ...  G(x[3n(d-1)..3nd]) BA  (BA)^(floor(n/2) - 1)
//! ```
//!
//! in application order, with `x` zero-padded at the tail to length `3nd`.
//! Index conversion from the 1-indexed slice notation `x_{3n(k-1)+1 : 3nk}`
//! is the half-open range `3n(k-1) .. 3nk`. Within one block, qubit `i`
//! receives `RotY(y[i])`, then `RotZ(y[n+i])`, then `RotY(y[2n+i])`.
//!
//! The entangler `A` is a CNOT layer on pairs `(0,1), (2,3), ...` followed by
//! a layer on `(1,2), (3,4), ...`; `B` repeats the pattern with CZ.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, QalError, Result};
use crate::gate::{Circuit, Gate};
use crate::linalg::{kron, CMatrix, C64, ZERO};
use crate::measure::partial_trace;
use crate::op::HermitianOp;
use crate::pauli::{Pauli, PauliSum};
use crate::state::{qubit_mask, DensityState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassicalEncoderConfig {
    pub n_qubits: usize,
    pub data_dim: usize,
}

impl ClassicalEncoderConfig {
    pub fn new(n_qubits: usize, data_dim: usize) -> Result<Self> {
        if n_qubits < 2 {
            return Err(invalid(format!("classical encoder needs n >= 2, got {n_qubits}")));
        }
        if data_dim == 0 {
            return Err(invalid("data dimension must be positive"));
        }
        Ok(Self { n_qubits, data_dim })
    }

    /// Number of rotation blocks `d`.
    pub fn blocks(&self) -> usize {
        self.data_dim.div_ceil(3 * self.n_qubits)
    }

    pub fn padded_len(&self) -> usize {
        3 * self.n_qubits * self.blocks()
    }

    pub fn trailing_entanglers(&self) -> usize {
        self.n_qubits / 2 - 1
    }

    /// Total number of `BA` entangler pairs.
    pub fn entangler_count(&self) -> usize {
        self.blocks() + self.trailing_entanglers()
    }
}

/// One rotation block for `y` of length `3n`.
pub fn single_qubit_layer(y: &[f64], n_qubits: usize) -> Result<Circuit> {
    if y.len() != 3 * n_qubits {
        return Err(QalError::DimensionMismatch { expected: 3 * n_qubits, found: y.len() });
    }
    let mut c = Circuit::new(n_qubits);
    for i in 0..n_qubits {
        c.push(Gate::ry(i, y[i]))?;
        c.push(Gate::rz(i, y[n_qubits + i]))?;
        c.push(Gate::ry(i, y[2 * n_qubits + i]))?;
    }
    Ok(c)
}

/// The CNOT block `A` and the CZ block `B`.
pub fn entangler_blocks(n_qubits: usize) -> Result<(Circuit, Circuit)> {
    if n_qubits < 2 {
        return Err(invalid(format!("entangler needs n >= 2, got {n_qubits}")));
    }
    let mut a = Circuit::new(n_qubits);
    let mut b = Circuit::new(n_qubits);
    for first in [0, 1] {
        let mut c = first;
        while c + 1 < n_qubits {
            a.push(Gate::cnot(c, c + 1)?)?;
            b.push(Gate::cz(c, c + 1)?)?;
            c += 2;
        }
    }
    Ok((a, b))
}

pub fn encode_classical(x: &[f64], config: &ClassicalEncoderConfig) -> Result<Circuit> {
    if x.len() != config.data_dim {
        return Err(QalError::DimensionMismatch { expected: config.data_dim, found: x.len() });
    }
    let n = config.n_qubits;
    let mut padded = x.to_vec();
    padded.resize(config.padded_len(), 0.0);
    let (a, b) = entangler_blocks(n)?;
    let mut ba = a;
    ba.append(&b)?;
    let mut c = Circuit::new(n);
    for block in padded.chunks(3 * n) {
        c.append(&single_qubit_layer(block, n)?)?;
        c.append(&ba)?;
    }
    for _ in 0..config.trailing_entanglers() {
        c.append(&ba)?;
    }
    Ok(c)
}

/// `exp(-i H t)` as one dense gate on all qubits.
pub fn encode_hamiltonian(h: &HermitianOp, t: f64) -> Result<Circuit> {
    let u = h.matrix_exp(C64::new(0.0, -t))?;
    let n = h.n_qubits();
    Circuit::from_gates(n, vec![Gate::dense((0..n).collect(), u)?])
}

/// `(<x| ⊗ I) H (|x> ⊗ I)` for `|x>` on the first `data_qubits` qubits.
pub fn induced_hamiltonian(global: &HermitianOp, x: &[C64], data_qubits: usize) -> Result<HermitianOp> {
    let total = global.n_qubits();
    if data_qubits > total || x.len() != 1 << data_qubits {
        return Err(QalError::DimensionMismatch { expected: 1 << data_qubits.min(total), found: x.len() });
    }
    let n = total - data_qubits;
    let d = 1usize << n;
    let h = global.matrix();
    let m = CMatrix::from_fn(d, d, |i, j| {
        let mut acc = ZERO;
        for (a, xa) in x.iter().enumerate() {
            if *xa == ZERO {
                continue;
            }
            for (b, xb) in x.iter().enumerate() {
                acc += xa.conj() * h[(a * d + i, b * d + j)] * xb;
            }
        }
        acc
    });
    HermitianOp::new(n, m)
}

/// `tr_data( exp(-iH dt) (|x><x| ⊗ rho) exp(iH dt) )`.
pub fn lmr_channel_step(global: &HermitianOp, x: &[C64], rho: &DensityState, dt: f64) -> Result<DensityState> {
    if dt <= 0.0 {
        return Err(invalid("time step must be positive"));
    }
    let s = global.n_qubits() - rho.n_qubits();
    if x.len() != 1 << s {
        return Err(QalError::DimensionMismatch { expected: 1 << s, found: x.len() });
    }
    let xv = nalgebra::DVector::from_column_slice(x);
    let joint = kron(&(&xv * xv.adjoint()), rho.matrix());
    let u = global.matrix_exp(C64::new(0.0, -dt))?;
    let evolved = DensityState::new(global.n_qubits(), &u * joint * u.adjoint())?;
    let keep: Vec<usize> = (s..global.n_qubits()).collect();
    partial_trace(&evolved, &keep)
}

/// Which qubits carry the label and how outcomes map to labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub n_qubits: usize,
    pub k_classes: usize,
    pub measured: Vec<usize>,
}

impl LabelScheme {
    /// Labels on the first `ceil(log2 k)` qubits.
    pub fn new(n_qubits: usize, k_classes: usize) -> Result<Self> {
        if k_classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        let bits = usize::BITS - (k_classes - 1).leading_zeros();
        Self::with_measured(n_qubits, k_classes, (0..bits as usize).collect())
    }

    pub fn with_measured(n_qubits: usize, k_classes: usize, measured: Vec<usize>) -> Result<Self> {
        if k_classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        if 1usize << measured.len() < k_classes {
            return Err(invalid(format!("{} label qubits cannot hold {k_classes} classes", measured.len())));
        }
        for (i, &q) in measured.iter().enumerate() {
            if q >= n_qubits {
                return Err(QalError::QubitOutOfRange { index: q, n_qubits });
            }
            if measured[..i].contains(&q) {
                return Err(QalError::DuplicateQubit(q));
            }
        }
        Ok(Self { n_qubits, k_classes, measured })
    }

    pub fn label_qubits(&self) -> usize {
        self.measured.len()
    }

    pub fn n_outcomes(&self) -> usize {
        1 << self.measured.len()
    }

    /// Outcome of the label register for a basis index of the full register.
    #[inline]
    pub fn outcome(&self, index: usize) -> usize {
        self.measured.iter().fold(0, |acc, &q| (acc << 1) | usize::from(index & qubit_mask(self.n_qubits, q) != 0))
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.k_classes {
            return Err(invalid(format!("label {y} outside 0..{}", self.k_classes)));
        }
        Ok(())
    }

    /// Diagonal of `Pi_y` on the full register.
    pub fn projector_diagonal(&self, y: usize) -> Vec<f64> {
        (0..1usize << self.n_qubits).map(|i| if self.outcome(i) == y { 1.0 } else { 0.0 }).collect()
    }

    pub fn label_projector(&self, y: usize) -> Result<HermitianOp> {
        self.check_label(y)?;
        HermitianOp::from_diagonal(self.n_qubits, &self.projector_diagonal(y))
    }

    /// Unnormalized outcome weights `||Pi_o psi||^2` for every outcome `o`.
    pub fn outcome_weights(&self, amps: &[C64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_outcomes()];
        for (i, a) in amps.iter().enumerate() {
            w[self.outcome(i)] += a.norm_sqr();
        }
        w
    }

    /// Multiplies every amplitude whose outcome differs from `y` by `factor`.
    pub fn damp(&self, amps: &mut [C64], y: usize, factor: f64) {
        for (i, a) in amps.iter_mut().enumerate() {
            if self.outcome(i) != y {
                *a *= factor;
            }
        }
    }
}

/// `M_y` and its block encoding `U_y = M_y ⊗ Z + sqrt(I - M_y^2) ⊗ X`
/// (ancilla last).
#[derive(Debug, Clone)]
pub struct PerturbationOps {
    pub eta: f64,
    pub label: usize,
    pub m_y: CMatrix,
    pub u_y: CMatrix,
}

pub fn build_perturbation(y: usize, scheme: &LabelScheme, eta: f64) -> Result<PerturbationOps> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("learning rate {eta} outside [0, 1]")));
    }
    scheme.check_label(y)?;
    let d = scheme.n_outcomes();
    let m: Vec<f64> = (0..d).map(|o| if o == y { 1.0 } else { 1.0 - eta }).collect();
    let m_y = CMatrix::from_fn(d, d, |i, j| if i == j { C64::new(m[i], 0.0) } else { ZERO });
    let s_y =
        CMatrix::from_fn(d, d, |i, j| if i == j { C64::new((1.0 - m[i] * m[i]).max(0.0).sqrt(), 0.0) } else { ZERO });
    let z = Pauli::Z.matrix();
    let x = Pauli::X.matrix();
    let u_y = kron(&m_y, &z) + kron(&s_y, &x);
    Ok(PerturbationOps { eta, label: y, m_y, u_y })
}

impl PerturbationOps {
    /// `U_y` as a gate on the label qubits followed by the ancilla `ancilla`.
    pub fn gate(&self, scheme: &LabelScheme, ancilla: usize) -> Result<Gate> {
        let mut targets = scheme.measured.clone();
        targets.push(ancilla);
        Gate::dense(targets, self.u_y.clone())
    }
}

/// Per-sample payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Classical(Vec<f64>),
    Hamiltonian(PauliSum),
    QuantumState(Vec<C64>),
}

/// How a payload becomes a circuit `U(x)`.
#[derive(Debug, Clone)]
pub enum Encoder {
    Classical(ClassicalEncoderConfig),
    /// `exp(-i H_x t)` for Hamiltonian payloads on `n_qubits`.
    Hamiltonian {
        n_qubits: usize,
        time: f64,
    },
    /// `exp(-i H_{|x>} t)` with `H_{|x>}` induced by a fixed global operator
    /// on `data_qubits + n_qubits` qubits.
    QuantumState {
        global: Arc<PauliSum>,
        data_qubits: usize,
        time: f64,
    },
}

impl Encoder {
    pub fn n_qubits(&self) -> usize {
        match self {
            Encoder::Classical(c) => c.n_qubits,
            Encoder::Hamiltonian { n_qubits, .. } => *n_qubits,
            Encoder::QuantumState { global, data_qubits, .. } => global.n_qubits - data_qubits,
        }
    }

    /// Generator and time for evolution-type encoders.
    pub fn generator(&self, payload: &Payload) -> Result<Option<(PauliSum, f64)>> {
        match (self, payload) {
            (Encoder::Classical(_), Payload::Classical(_)) => Ok(None),
            (Encoder::Hamiltonian { n_qubits, time }, Payload::Hamiltonian(h)) => {
                if h.n_qubits != *n_qubits {
                    return Err(QalError::DimensionMismatch { expected: *n_qubits, found: h.n_qubits });
                }
                Ok(Some((h.clone(), *time)))
            }
            (Encoder::QuantumState { global, data_qubits, time }, Payload::QuantumState(x)) => {
                Ok(Some((global.induced(*data_qubits, x)?, *time)))
            }
            _ => Err(invalid("payload kind does not match the encoder")),
        }
    }

    pub fn encode(&self, payload: &Payload) -> Result<Circuit> {
        if let (Encoder::Classical(cfg), Payload::Classical(x)) = (self, payload) {
            return encode_classical(x, cfg);
        }
        let (h, t) = self.generator(payload)?.expect("evolution encoder");
        let n = h.n_qubits;
        Circuit::from_gates(n, vec![Gate::evolution((0..n).collect(), Arc::new(h), t)?])
    }
}

/// Convenience: `M_y` applied to a vector whose label register is measured
/// per `scheme`, i.e. `(Pi_y + (1 - eta)(I - Pi_y)) psi`.
pub fn apply_perturbation(scheme: &LabelScheme, amps: &mut [C64], y: usize, eta: f64) {
    scheme.damp(amps, y, 1.0 - eta);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{rot_y_matrix, rot_z_matrix, GateKind};
    use crate::linalg::{max_abs_diff, unitarity_deviation, ONE};
    use crate::pauli::PauliTerm;
    use crate::random::{random_density, random_hermitian, random_vector};
    use crate::state::PureState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_layer_is_identity() {
        let c = single_qubit_layer(&[0.0; 9], 3).unwrap();
        assert!(max_abs_diff(&c.to_matrix(), &CMatrix::identity(8, 8)) < 1e-14);
    }

    #[test]
    fn single_qubit_layer_pi_flips() {
        let c = single_qubit_layer(&[PI, 0.0, 0.0], 1).unwrap();
        let mut s = PureState::zero(1);
        c.apply(&mut s).unwrap();
        assert!((s.amplitudes()[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_qubit_layer_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let g = |i: usize| rot_y_matrix(y[4 + i]) * rot_z_matrix(y[2 + i]) * rot_y_matrix(y[i]);
        let oracle = kron(&g(0), &g(1));
        let c = single_qubit_layer(&y, 2).unwrap();
        assert!(max_abs_diff(&c.to_matrix(), &oracle) < 1e-10);
        assert!(single_qubit_layer(&y[..5], 2).is_err());
    }

    #[test]
    fn entangler_counts() {
        let (a, b) = entangler_blocks(2).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.gates()[0].targets(), &[0, 1]);
        assert!(matches!(b.gates()[0].kind(), GateKind::Cz));
        let (a, _) = entangler_blocks(10).unwrap();
        assert_eq!(a.len(), 9);
        // first layer controls 0,2,4,6,8 then 1,3,5,7
        let controls: Vec<usize> = a.gates().iter().map(|g| g.targets()[0]).collect();
        assert_eq!(controls, vec![0, 2, 4, 6, 8, 1, 3, 5, 7]);
        assert!(entangler_blocks(1).is_err());
    }

    #[test]
    fn cz_block_squared_is_identity() {
        let (_, b) = entangler_blocks(5).unwrap();
        let m = b.to_matrix();
        assert!(max_abs_diff(&(&m * &m), &CMatrix::identity(32, 32)) < 1e-14);
    }

    #[test]
    fn classical_gate_counts_for_100_pixels() {
        let cfg = ClassicalEncoderConfig::new(10, 100).unwrap();
        assert_eq!(cfg.blocks(), 4);
        assert_eq!(cfg.padded_len() - 100, 20);
        assert_eq!(cfg.entangler_count(), 8);
        let c = encode_classical(&vec![0.3; 100], &cfg).unwrap();
        let rot = c.gates().iter().filter(|g| g.arity() == 1).count();
        let cnot = c.gates().iter().filter(|g| matches!(g.kind(), GateKind::Cnot)).count();
        assert_eq!(rot, 4 * 30);
        assert_eq!(cnot, 8 * 9);
        // padding lands in the last block: its trailing rotations are zero
        let angles: Vec<f64> = c
            .gates()
            .iter()
            .filter_map(|g| match g.kind() {
                GateKind::RotY(t) | GateKind::RotZ(t) => Some(*t),
                _ => None,
            })
            .collect();
        let last = &angles[90..];
        assert_eq!(last.iter().filter(|t| **t == 0.0).count(), 20);
    }

    #[test]
    fn zero_input_is_pure_entangler_network() {
        let cfg = ClassicalEncoderConfig::new(4, 20).unwrap();
        let c = encode_classical(&vec![0.0; 20], &cfg).unwrap();
        let (a, b) = entangler_blocks(4).unwrap();
        let ba = b.to_matrix() * a.to_matrix();
        let mut oracle = CMatrix::identity(16, 16);
        for _ in 0..cfg.entangler_count() {
            oracle = &ba * oracle;
        }
        assert!(max_abs_diff(&c.to_matrix(), &oracle) < 1e-12);
    }

    #[test]
    fn one_pixel_changes_one_angle() {
        let cfg = ClassicalEncoderConfig::new(3, 12).unwrap();
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let mut x2 = x.clone();
        x2[7] += 0.5;
        let (c1, c2) = (encode_classical(&x, &cfg).unwrap(), encode_classical(&x2, &cfg).unwrap());
        let differing = c1
            .gates()
            .iter()
            .zip(c2.gates())
            .filter(|(a, b)| match (a.kind(), b.kind()) {
                (GateKind::RotY(s), GateKind::RotY(t)) | (GateKind::RotZ(s), GateKind::RotZ(t)) => s != t,
                _ => false,
            })
            .count();
        assert_eq!(differing, 1);
    }

    #[test]
    fn every_input_component_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ClassicalEncoderConfig::new(4, 24).unwrap();
        let x: Vec<f64> = (0..24).map(|_| rng.random::<f64>() * PI).collect();
        let base = {
            let mut s = PureState::zero(4);
            encode_classical(&x, &cfg).unwrap().apply(&mut s).unwrap();
            s
        };
        for i in 0..24 {
            let mut y = x.clone();
            y[i] += PI;
            let mut s = PureState::zero(4);
            encode_classical(&y, &cfg).unwrap().apply(&mut s).unwrap();
            assert!(s.fidelity(&base) < 1.0 - 1e-6, "component {i} has no effect");
        }
    }

    #[test]
    fn hamiltonian_encoding() {
        let z = HermitianOp::from_diagonal(1, &[1.0, -1.0]).unwrap();
        let u = encode_hamiltonian(&z, PI).unwrap().to_matrix();
        assert!(max_abs_diff(&u, &(-CMatrix::identity(2, 2))) < 1e-12);
        let id = encode_hamiltonian(&z, 0.0).unwrap().to_matrix();
        assert!(max_abs_diff(&id, &CMatrix::identity(2, 2)) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = HermitianOp::new(3, random_hermitian(8, &mut rng)).unwrap();
        let f = encode_hamiltonian(&h, 0.7).unwrap().to_matrix();
        let b = encode_hamiltonian(&h, -0.7).unwrap().to_matrix();
        assert!(max_abs_diff(&(f * b), &CMatrix::identity(8, 8)) < 1e-9);
    }

    #[test]
    fn induced_hamiltonian_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vector(4, &mut rng);
        let id = induced_hamiltonian(&HermitianOp::identity(4), &x, 2).unwrap();
        assert!(max_abs_diff(id.matrix(), &CMatrix::identity(4, 4)) < 1e-12);
        let o = random_hermitian(4, &mut rng);
        let xv = nalgebra::DVector::from_vec(x.clone());
        let proj = &xv * xv.adjoint();
        let h = HermitianOp::new(4, kron(&proj, &o)).unwrap();
        assert!(max_abs_diff(induced_hamiltonian(&h, &x, 2).unwrap().matrix(), &o) < 1e-12);
        // random operator: spectral range preserved
        let g = HermitianOp::new(4, random_hermitian(16, &mut rng)).unwrap();
        let r = induced_hamiltonian(&g, &x, 2).unwrap();
        let (ge, re) = (g.eigen().unwrap(), r.eigen().unwrap());
        assert!(re.values[0] >= ge.values[0] - 1e-9);
        assert!(re.values[3] <= ge.values[15] + 1e-9);
    }

    #[test]
    fn lmr_uncoupled_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ha = random_hermitian(2, &mut rng);
        let hb = random_hermitian(4, &mut rng);
        let global =
            HermitianOp::new(3, kron(&ha, &CMatrix::identity(4, 4)) + kron(&CMatrix::identity(2, 2), &hb)).unwrap();
        let x = random_vector(2, &mut rng);
        let rho = DensityState::new(2, random_density(4, &mut rng)).unwrap();
        let out = lmr_channel_step(&global, &x, &rho, 0.8).unwrap();
        let u = HermitianOp::new(2, hb).unwrap().matrix_exp(C64::new(0.0, -0.8)).unwrap();
        let exact = &u * rho.matrix() * u.adjoint();
        assert!(max_abs_diff(out.matrix(), &exact) < 1e-9);
    }

    #[test]
    fn lmr_error_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let global = HermitianOp::new(3, random_hermitian(8, &mut rng)).unwrap();
        let x = random_vector(2, &mut rng);
        let rho = DensityState::new(2, random_density(4, &mut rng)).unwrap();
        let hx = induced_hamiltonian(&global, &x, 1).unwrap();
        let err = |dt: f64| {
            let out = lmr_channel_step(&global, &x, &rho, dt).unwrap();
            let u = hx.matrix_exp(C64::new(0.0, -dt)).unwrap();
            crate::linalg::trace_norm(&(out.matrix() - &u * rho.matrix() * u.adjoint())) / 2.0
        };
        let e: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&d| err(d)).collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn perturbation_blocks() {
        let scheme = LabelScheme::new(3, 2).unwrap();
        let p = build_perturbation(1, &scheme, 0.1).unwrap();
        assert!(unitarity_deviation(&p.u_y) < 1e-12);
        // ancilla |0> block is M_y; |1>|0> block is sqrt(I - M^2)
        let block0 = CMatrix::from_fn(2, 2, |i, j| p.u_y[(2 * i, 2 * j)]);
        assert!(max_abs_diff(&block0, &p.m_y) < 1e-12);
        let block10 = CMatrix::from_fn(2, 2, |i, j| p.u_y[(2 * i + 1, 2 * j)]);
        assert!((block10[(0, 0)].re - 0.19f64.sqrt()).abs() < 1e-12);
        assert!((0.19f64.sqrt() - 0.435_890).abs() < 1e-6);
        assert!(block10[(1, 1)].norm() < 1e-15);
        let p0 = build_perturbation(0, &scheme, 0.0).unwrap();
        assert!(max_abs_diff(&p0.u_y, &kron(&CMatrix::identity(2, 2), &Pauli::Z.matrix())) < 1e-15);
        let p1 = build_perturbation(0, &scheme, 1.0).unwrap();
        assert!(max_abs_diff(&p1.m_y, &scheme_projector_2()) < 1e-15);
        assert!(build_perturbation(0, &scheme, 1.5).is_err());
        assert!(build_perturbation(2, &scheme, 0.1).is_err());
    }

    fn scheme_projector_2() -> CMatrix {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = ONE;
        m
    }

    #[test]
    fn label_projectors_partition_identity() {
        let scheme = LabelScheme::new(4, 2).unwrap();
        let p0 = scheme.label_projector(0).unwrap();
        let p1 = scheme.label_projector(1).unwrap();
        assert!(max_abs_diff(&(p0.matrix() + p1.matrix()), &CMatrix::identity(16, 16)) < 1e-15);
        assert!(max_abs_diff(&(p0.matrix() * p0.matrix()), p0.matrix()) < 1e-15);
        assert!((p0.matrix() * p1.matrix()).iter().all(|z| z.norm() == 0.0));
        let rank = scheme.projector_diagonal(0).iter().filter(|d| **d == 1.0).count();
        assert_eq!(rank, 8);
        let three = LabelScheme::new(4, 3).unwrap();
        assert_eq!(three.label_qubits(), 2);
        let rank3 = three.projector_diagonal(2).iter().filter(|d| **d == 1.0).count();
        assert_eq!(rank3, 4);
    }

    #[test]
    fn failure_operator_spectrum_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = ClassicalEncoderConfig::new(3, 9).unwrap();
        let x: Vec<f64> = (0..9).map(|_| rng.random::<f64>() * PI).collect();
        let u = encode_classical(&x, &cfg).unwrap().to_matrix();
        let scheme = LabelScheme::new(3, 2).unwrap();
        let p = scheme.label_projector(1).unwrap();
        let h = CMatrix::identity(8, 8) - u.adjoint() * p.matrix() * &u;
        let e = HermitianOp::new(3, h).unwrap();
        for v in &e.eigen().unwrap().values {
            assert!(*v > -1e-10 && *v < 1.0 + 1e-10);
        }
    }

    #[test]
    fn quantum_state_encoder_uses_induced_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let global = PauliSum::new(
            3,
            vec![
                PauliTerm::new(0.5, vec![(0, Pauli::X), (1, Pauli::Z), (2, Pauli::Y)]).unwrap(),
                PauliTerm::new(-0.3, vec![(0, Pauli::Z), (2, Pauli::X)]).unwrap(),
                PauliTerm::new(0.2, vec![(1, Pauli::Y)]).unwrap(),
            ],
        )
        .unwrap();
        let x = random_vector(2, &mut rng);
        let enc = Encoder::QuantumState { global: Arc::new(global.clone()), data_qubits: 1, time: 1.0 };
        assert_eq!(enc.n_qubits(), 2);
        let c = enc.encode(&Payload::QuantumState(x.clone())).unwrap();
        let dense = induced_hamiltonian(&global.to_op().unwrap(), &x, 1).unwrap();
        let oracle = dense.matrix_exp(C64::new(0.0, -1.0)).unwrap();
        assert!(max_abs_diff(&c.to_matrix(), &oracle) < 1e-10);
        assert!(enc.encode(&Payload::Classical(vec![0.0])).is_err());
    }
}
