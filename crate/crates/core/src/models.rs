//! Failure-probability Hamiltonians, their dataset average, spectral
//! diagnostics and the physics models used to generate quantum data.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::encoding::{Encoder, LabelScheme, Payload};
use crate::error::{invalid, QalError, Result};
use crate::gate::Circuit;
use crate::linalg::{CMatrix, C64};
use crate::op::HermitianOp;
use crate::pauli::{Pauli, PauliSum, PauliTerm};
use crate::state::PureState;

/// Golden-ratio frequency of the quasi-periodic potential.
pub fn golden_phi() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// `H_x = I - U† Pi U`.
pub fn sample_hamiltonian(u: &Circuit, pi: &HermitianOp) -> Result<HermitianOp> {
    let dim = pi.dim();
    if u.n_qubits() != pi.n_qubits() {
        return Err(QalError::DimensionMismatch { expected: u.n_qubits(), found: pi.n_qubits() });
    }
    let m = pi.matrix();
    let is_diag = (0..dim).all(|j| (0..dim).all(|i| i == j || m[(i, j)] == C64::new(0.0, 0.0)));
    let upu = if is_diag {
        let d: Vec<f64> = (0..dim).map(|i| m[(i, i)].re).collect();
        u.conjugate_diagonal(&d)?
    } else {
        let mut c = m.clone();
        u.conjugate_hermitian(&mut c)?;
        c
    };
    HermitianOp::new(pi.n_qubits(), CMatrix::identity(dim, dim) - upu)
}

/// `U(x)† Pi_y U(x)` for one sample, using the eigenbasis of the generator
/// for evolution encoders.
pub fn success_operator(encoder: &Encoder, payload: &Payload, label: usize, scheme: &LabelScheme) -> Result<CMatrix> {
    let diag = scheme.projector_diagonal(label);
    match encoder.generator(payload)? {
        None => encoder.encode(payload)?.conjugate_diagonal(&diag),
        Some((h, t)) => {
            let op = h.to_op()?;
            let e = op.eigen()?;
            Ok(e.conjugate_diagonal(|x| C64::new(0.0, -t * x).exp(), &diag))
        }
    }
}

const CHUNK: usize = 8;

/// `H_S = I - mean_x U(x)† Pi_y U(x)`; the sum is reduced in a fixed order.
pub fn average_hamiltonian(samples: &[Sample], encoder: &Encoder, scheme: &LabelScheme) -> Result<HermitianOp> {
    if samples.is_empty() {
        return Err(invalid("cannot average over an empty dataset"));
    }
    let n = encoder.n_qubits();
    let dim = 1usize << n;
    let partials: Vec<Result<CMatrix>> = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = CMatrix::zeros(dim, dim);
            for s in chunk {
                acc += success_operator(encoder, &s.payload, s.label, scheme)?;
            }
            Ok(acc)
        })
        .collect();
    let mut sum = CMatrix::zeros(dim, dim);
    for p in partials {
        sum += p?;
    }
    let mean = sum / C64::new(samples.len() as f64, 0.0);
    HermitianOp::new(n, CMatrix::identity(dim, dim) - mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub ground_energy: f64,
    pub gap: f64,
    /// Number of eigenvalues within 1e-8 of the ground energy.
    pub ground_degeneracy: usize,
    /// `(E, fraction of eigenvalues <= E)`.
    pub heavy_tail: Vec<(f64, f64)>,
}

impl SpectrumReport {
    pub fn fraction_below(&self, e: f64) -> f64 {
        let count = self.eigenvalues.partition_point(|&v| v <= e);
        count as f64 / self.eigenvalues.len() as f64
    }

    /// One row per eigenvalue.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, e) in self.eigenvalues.iter().enumerate() {
            s.push_str(&format!("{i},{e:.12e}\n"));
        }
        s
    }

    /// Ground energy, gap and heavy-tail table (eigenvalue list omitted).
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "ground_energy": self.ground_energy,
            "gap": self.gap,
            "ground_degeneracy": self.ground_degeneracy,
            "dimension": self.eigenvalues.len(),
            "heavy_tail": self.heavy_tail,
        })
    }
}

const DEGENERACY_TOL: f64 = 1e-8;

pub fn default_energy_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

pub fn spectrum(h: &HermitianOp, grid: &[f64]) -> Result<SpectrumReport> {
    let values = h.eigen()?.values.clone();
    let e0 = values[0];
    let ground_degeneracy = values.iter().take_while(|&&v| v - e0 < DEGENERACY_TOL).count();
    let gap = values.get(1).map_or(0.0, |e1| e1 - e0);
    let mut report =
        SpectrumReport { eigenvalues: values, ground_energy: e0, gap, ground_degeneracy, heavy_tail: Vec::new() };
    report.heavy_tail = grid.iter().map(|&e| (e, report.fraction_below(e))).collect();
    Ok(report)
}

/// Open chain `-(g/2) sum (XX + YY) - (V/2) sum_k cos(2 pi phi k) Z_k`,
/// sites `k = 1..n`.
pub fn aubry_andre_terms(n: usize, g: f64, v: f64) -> Result<PauliSum> {
    if n < 2 {
        return Err(invalid("Aubry-Andre chain needs n >= 2"));
    }
    let phi = golden_phi();
    let mut terms = Vec::new();
    for k in 0..n - 1 {
        for p in [Pauli::X, Pauli::Y] {
            terms.push(PauliTerm::new(-g / 2.0, vec![(k, p), (k + 1, p)])?);
        }
    }
    for k in 0..n {
        let site = (k + 1) as f64;
        terms.push(PauliTerm::new(-v / 2.0 * (2.0 * std::f64::consts::PI * phi * site).cos(), vec![(k, Pauli::Z)])?);
    }
    PauliSum::new(n, terms)
}

pub fn aubry_andre(n: usize, g: f64, v: f64) -> Result<HermitianOp> {
    aubry_andre_terms(n, g, v)?.to_op()
}

/// 1 for the localized phase `V/g > 2`, 0 for the delocalized phase.
pub fn aubry_andre_label(g: f64, v: f64) -> usize {
    usize::from(v / g > 2.0)
}

/// Periodic `-sum X_{k-1} Z_k X_{k+1} + h sum Y_k Y_{k+1}`.
pub fn cluster_ising_terms(n: usize, h: f64) -> Result<PauliSum> {
    if n < 3 {
        return Err(invalid("cluster-Ising ring needs n >= 3"));
    }
    let mut terms = Vec::new();
    for k in 0..n {
        terms.push(PauliTerm::new(-1.0, vec![((k + n - 1) % n, Pauli::X), (k, Pauli::Z), ((k + 1) % n, Pauli::X)])?);
    }
    for k in 0..n {
        terms.push(PauliTerm::new(h, vec![(k, Pauli::Y), ((k + 1) % n, Pauli::Y)])?);
    }
    PauliSum::new(n, terms)
}

pub fn cluster_ising(n: usize, h: f64) -> Result<HermitianOp> {
    cluster_ising_terms(n, h)?.to_op()
}

/// 1 for the antiferromagnetic phase `h > 1`, 0 for the SPT phase.
pub fn cluster_ising_label(h: f64) -> usize {
    usize::from(h > 1.0)
}

/// Sum of `n_terms` random `k`-body Pauli strings on distinct random sites
/// with coefficients uniform in `[-1, 1]`.
pub fn random_k_local(n_total: usize, n_terms: usize, k: usize, rng: &mut impl Rng) -> Result<PauliSum> {
    if k == 0 || k > n_total {
        return Err(invalid(format!("cannot place {k}-body terms on {n_total} qubits")));
    }
    let mut terms = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let sites = rand::seq::index::sample(rng, n_total, k);
        let paulis: Vec<(usize, Pauli)> = sites.iter().map(|q| (q, Pauli::ALL[rng.random_range(0..3)])).collect();
        let c = rng.random_range(-1.0..=1.0);
        terms.push(PauliTerm::new(c, paulis)?);
    }
    PauliSum::new(n_total, terms)
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub state: PureState,
    /// Dimension of the eigenspace within 1e-8 of the ground energy.
    pub degeneracy: usize,
}

impl GroundState {
    pub fn is_degenerate(&self) -> bool {
        self.degeneracy > 1
    }
}

pub fn ground_state(h: &HermitianOp) -> Result<GroundState> {
    let e = h.eigen()?;
    let e0 = e.values[0];
    let degeneracy = e.values.iter().take_while(|&&v| v - e0 < DEGENERACY_TOL).count();
    let amps: Vec<C64> = e.vectors.column(0).iter().cloned().collect();
    Ok(GroundState { energy: e0, state: PureState::from_amplitudes(h.n_qubits(), amps)?, degeneracy })
}
