//! Depolarizing noise and density-matrix training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::encoding::{build_perturbation, Encoder, LabelScheme, Payload};
use crate::error::{invalid, QalError, Result};
use crate::gate::{Circuit, Gate};
use crate::linalg::{CMatrix, C64};
use crate::measure::project_last_qubit;
use crate::state::{qubit_mask, DensityState};
use crate::trainer::{initial_pure, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepolarizingConvention {
    /// `(1 - p) rho + p / (4^m - 1) sum_{P != I} P rho P`.
    #[default]
    PauliMixing,
    /// `(1 - p) rho + p I/2^m ⊗ Tr_targets rho`.
    ReplaceWithIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p2: f64,
    pub p1: f64,
    #[serde(default)]
    pub convention: DepolarizingConvention,
}

impl NoiseModel {
    /// Single-qubit rate set to a tenth of the two-qubit rate.
    pub fn new(p2: f64) -> Result<Self> {
        Self::with_rates(p2, p2 / 10.0)
    }

    pub fn with_rates(p2: f64, p1: f64) -> Result<Self> {
        let m = Self { p2, p1, convention: DepolarizingConvention::PauliMixing };
        m.validate()?;
        Ok(m)
    }

    pub fn noiseless() -> Self {
        Self { p2: 0.0, p1: 0.0, convention: DepolarizingConvention::PauliMixing }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p1, self.p2] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("noise rate {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn rate_for(&self, arity: usize) -> f64 {
        if arity == 1 {
            self.p1
        } else {
            self.p2
        }
    }
}

/// `I/2^m ⊗ Tr_targets rho` with the identity on the target positions.
fn replace_targets(rho: &CMatrix, n: usize, qubits: &[usize]) -> CMatrix {
    let tmask: usize = qubits.iter().map(|&q| qubit_mask(n, q)).sum();
    let m = qubits.len();
    let offsets: Vec<usize> = (0..1usize << m)
        .map(|t| {
            qubits.iter().enumerate().filter(|(b, _)| t >> (m - 1 - b) & 1 == 1).map(|(_, &q)| qubit_mask(n, q)).sum()
        })
        .collect();
    let scale = 1.0 / (1usize << m) as f64;
    let dim = rho.nrows();
    CMatrix::from_fn(dim, dim, |i, j| {
        if (i ^ j) & tmask != 0 {
            return C64::new(0.0, 0.0);
        }
        let (bi, bj) = (i & !tmask, j & !tmask);
        offsets.iter().map(|&o| rho[(bi | o, bj | o)]).sum::<C64>() * scale
    })
}

/// Depolarizing channel on one or more qubits.
pub fn depolarize(rho: &mut DensityState, qubits: &[usize], p: f64, convention: DepolarizingConvention) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("noise rate {p} outside [0, 1]")));
    }
    let n = rho.n_qubits();
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n {
            return Err(QalError::QubitOutOfRange { index: q, n_qubits: n });
        }
        if qubits[..i].contains(&q) {
            return Err(QalError::DuplicateQubit(q));
        }
    }
    if p == 0.0 || qubits.is_empty() {
        return Ok(());
    }
    let r = replace_targets(rho.matrix(), n, qubits);
    let m = rho.matrix_mut();
    match convention {
        DepolarizingConvention::ReplaceWithIdentity => {
            *m *= C64::new(1.0 - p, 0.0);
            *m += r * C64::new(p, 0.0);
        }
        DepolarizingConvention::PauliMixing => {
            // sum over non-identity strings = 4^m R(rho) - rho
            let f = (1usize << (2 * qubits.len())) as f64;
            let c = p / (f - 1.0);
            *m *= C64::new(1.0 - p - c, 0.0);
            *m += r * C64::new(c * f, 0.0);
        }
    }
    Ok(())
}

fn noisy_gate(rho: &mut DensityState, gate: &Gate, model: &NoiseModel) -> Result<()> {
    gate.apply_density(rho)?;
    depolarize(rho, gate.targets(), model.rate_for(gate.arity()), model.convention)
}

/// Applies a circuit gate by gate with a depolarizing layer after every gate.
pub fn noisy_circuit(rho: &mut DensityState, circuit: &Circuit, model: &NoiseModel) -> Result<()> {
    circuit.gates().iter().try_for_each(|g| noisy_gate(rho, g, model))
}

pub fn noisy_circuit_adjoint(rho: &mut DensityState, circuit: &Circuit, model: &NoiseModel) -> Result<()> {
    circuit.gates().iter().rev().try_for_each(|g| noisy_gate(rho, &g.adjoint(), model))
}

/// One noisy step: ancilla `|0>`, `U(x)`, `U_y`, post-selection of the
/// ancilla on `0`, `U(x)†`. Returns the unnormalized state and the
/// probability of acceptance.
pub fn noisy_train_step(
    rho: &DensityState,
    sample: &Sample,
    encoder: &Encoder,
    scheme: &LabelScheme,
    eta: f64,
    model: &NoiseModel,
) -> Result<(DensityState, f64)> {
    let n = rho.n_qubits();
    let before = rho.trace();
    let zero = CMatrix::from_fn(2, 2, |i, j| if i == 0 && j == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let mut wide = DensityState::new(n + 1, crate::linalg::kron(rho.matrix(), &zero))?;
    let u = encoder.encode(&sample.payload)?;
    noisy_circuit(&mut wide, &u, model)?;
    let p = build_perturbation(sample.label, scheme, eta)?;
    noisy_gate(&mut wide, &p.gate(scheme, n)?, model)?;
    let mut out = project_last_qubit(&wide, 0)?;
    noisy_circuit_adjoint(&mut out, &u, model)?;
    let success = out.trace() / before;
    Ok((out, success))
}

/// Outcome probabilities after a (noisy) `U(x)`.
pub fn noisy_outcome_probabilities(
    rho: &DensityState,
    payload: &Payload,
    encoder: &Encoder,
    scheme: &LabelScheme,
    model: &NoiseModel,
) -> Result<Vec<f64>> {
    let mut s = rho.clone();
    noisy_circuit(&mut s, &encoder.encode(payload)?, model)?;
    let m = s.matrix();
    let mut w = vec![0.0; scheme.n_outcomes()];
    for i in 0..m.nrows() {
        w[scheme.outcome(i)] += m[(i, i)].re;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|p| *p /= total);
    Ok(w)
}

/// Mean single-shot accuracy with a noisy prediction circuit.
pub fn noisy_accuracy(
    rho: &DensityState,
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    model: &NoiseModel,
) -> Result<f64> {
    let acc: Vec<f64> = samples
        .par_iter()
        .map(|s| Ok(noisy_outcome_probabilities(rho, &s.payload, encoder, scheme, model)?[s.label]))
        .collect::<Result<_>>()?;
    Ok(acc.iter().sum::<f64>() / samples.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyRecord {
    pub step: usize,
    pub datum: usize,
    pub success_prob: f64,
    /// Filled at evaluation steps.
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NoisyTrace {
    pub records: Vec<NoisyRecord>,
    pub final_state: DensityState,
    pub final_accuracy: f64,
    pub acceptance_estimate: f64,
}

/// Density-matrix training. Datum draws and the initial state follow the
/// same seeded sequence as exact-mode training, so a noiseless run tracks
/// the exact trajectory.
pub fn noisy_train(
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
    model: &NoiseModel,
    eval_every: usize,
) -> Result<NoisyTrace> {
    config.validate()?;
    model.validate()?;
    if samples.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rho = initial_pure(encoder.n_qubits(), &config.init, &mut rng)?.to_density();
    let eval = |r: &DensityState| noisy_accuracy(r, samples, encoder, scheme, model);
    let mut records = vec![NoisyRecord { step: 0, datum: 0, success_prob: 1.0, train_accuracy: Some(eval(&rho)?) }];
    let mut acceptance = 1.0;
    for t in 0..config.steps {
        let datum = rng.random_range(0..samples.len());
        let (mut next, success) = noisy_train_step(&rho, &samples[datum], encoder, scheme, config.eta.at(t), model)?;
        next.normalize()?;
        rho = next;
        acceptance *= success;
        let last = t + 1 == config.steps;
        let train_accuracy = (eval_every > 0 && ((t + 1) % eval_every == 0 || last)).then(|| eval(&rho)).transpose()?;
        records.push(NoisyRecord { step: t + 1, datum, success_prob: success, train_accuracy });
    }
    let final_accuracy = eval(&rho)?;
    Ok(NoisyTrace { records, final_state: rho, final_accuracy, acceptance_estimate: acceptance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::ClassicalEncoderConfig;
    use crate::linalg::{kron, max_abs_diff};
    use crate::measure::partial_trace;
    use crate::pauli::Pauli;
    use crate::random::random_density;
    use crate::state::PureState;
    use crate::trainer::{train, train_step_exact};

    fn toy(n: usize, count: usize, seed: u64) -> (Vec<Sample>, Encoder, LabelScheme) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count)
            .map(|i| Sample {
                payload: Payload::Classical((0..3 * n).map(|_| rng.random::<f64>() * 3.0).collect()),
                label: i % 2,
            })
            .collect();
        (samples, Encoder::Classical(ClassicalEncoderConfig::new(n, 3 * n).unwrap()), LabelScheme::new(n, 2).unwrap())
    }

    fn paulis() -> Vec<CMatrix> {
        let mut v = vec![CMatrix::identity(2, 2)];
        v.extend(Pauli::ALL.iter().map(|p| p.matrix()));
        v
    }

    #[test]
    fn two_qubit_channel_matches_pauli_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho0 = DensityState::new(2, random_density(4, &mut rng)).unwrap();
        let p = 0.3;
        let mut expect = rho0.matrix() * C64::new(1.0 - p, 0.0);
        let ps = paulis();
        for (a, pa) in ps.iter().enumerate() {
            for (b, pb) in ps.iter().enumerate() {
                if a + b == 0 {
                    continue;
                }
                let s = kron(pa, pb);
                expect += &s * rho0.matrix() * &s * C64::new(p / 15.0, 0.0);
            }
        }
        let mut rho = rho0.clone();
        depolarize(&mut rho, &[0, 1], p, DepolarizingConvention::PauliMixing).unwrap();
        assert!(max_abs_diff(rho.matrix(), &expect) < 1e-12);
        let mut same = rho0.clone();
        depolarize(&mut same, &[1, 0], p, DepolarizingConvention::PauliMixing).unwrap();
        assert!(max_abs_diff(same.matrix(), &expect) < 1e-12);
    }

    #[test]
    fn single_qubit_channel_in_larger_register() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho0 = DensityState::new(3, random_density(8, &mut rng)).unwrap();
        let p = 0.17;
        let id = CMatrix::identity(2, 2);
        let mut expect = rho0.matrix() * C64::new(1.0 - p, 0.0);
        for s in &paulis()[1..] {
            let full = kron(&kron(&id, s), &id);
            expect += &full * rho0.matrix() * &full * C64::new(p / 3.0, 0.0);
        }
        let mut rho = rho0.clone();
        depolarize(&mut rho, &[1], p, DepolarizingConvention::PauliMixing).unwrap();
        assert!(max_abs_diff(rho.matrix(), &expect) < 1e-12);
    }

    #[test]
    fn channel_limits_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho0 = DensityState::new(3, random_density(8, &mut rng)).unwrap();
        let mut r = rho0.clone();
        depolarize(&mut r, &[2], 0.0, DepolarizingConvention::PauliMixing).unwrap();
        assert_eq!(r.matrix(), rho0.matrix());
        let half = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        for (conv, p) in
            [(DepolarizingConvention::ReplaceWithIdentity, 1.0), (DepolarizingConvention::PauliMixing, 0.75)]
        {
            let mut r = rho0.clone();
            depolarize(&mut r, &[1], p, conv).unwrap();
            assert!(max_abs_diff(partial_trace(&r, &[1]).unwrap().matrix(), &half) < 1e-12);
        }
        for p in [0.01, 0.4, 1.0] {
            for q in [vec![0], vec![0, 2], vec![0, 1, 2]] {
                let mut r = rho0.clone();
                depolarize(&mut r, &q, p, DepolarizingConvention::PauliMixing).unwrap();
                assert!((r.trace() - 1.0).abs() < 1e-12);
                assert!(crate::linalg::hermiticity_deviation(r.matrix()) < 1e-12);
                let e = crate::linalg::eigh(r.matrix()).unwrap();
                assert!(e.values[0] > -1e-9);
            }
        }
        assert!(depolarize(&mut r, &[0], 1.1, DepolarizingConvention::PauliMixing).is_err());
        assert!(depolarize(&mut r, &[3], 0.1, DepolarizingConvention::PauliMixing).is_err());
    }

    #[test]
    fn noiseless_step_matches_exact() {
        let (samples, enc, scheme) = toy(3, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = PureState::haar_random(3, &mut rng);
        for s in &samples {
            let exact = train_step_exact(&psi, s, &enc, &scheme, 0.2).unwrap();
            let (rho, p) =
                noisy_train_step(&psi.to_density(), s, &enc, &scheme, 0.2, &NoiseModel::noiseless()).unwrap();
            assert!((p - exact.success_prob).abs() < 1e-10);
            let want = exact.state.to_density().into_matrix() * C64::new(p, 0.0);
            assert!(max_abs_diff(rho.matrix(), &want) < 1e-10);
        }
    }

    #[test]
    fn noiseless_run_matches_exact_mode() {
        let (samples, enc, scheme) = toy(3, 5, 6);
        let cfg = TrainConfig::exact(0.2, 40, 8);
        let exact = train(&samples, &enc, &scheme, &cfg).unwrap();
        let noisy = noisy_train(&samples, &enc, &scheme, &cfg, &NoiseModel::noiseless(), 10).unwrap();
        let want = exact.pure_state().unwrap().to_density();
        assert!(max_abs_diff(noisy.final_state.matrix(), want.matrix()) < 1e-10);
        assert!((noisy.acceptance_estimate - exact.acceptance_estimate).abs() < 1e-10);
        assert_eq!(noisy.records.iter().filter(|r| r.train_accuracy.is_some()).count(), 5);
    }

    #[test]
    fn full_noise_gives_chance_accuracy() {
        let (samples, enc, scheme) = toy(3, 6, 7);
        let cfg = TrainConfig::exact(0.2, 20, 9);
        let model = NoiseModel::with_rates(1.0, 1.0).unwrap();
        let tr = noisy_train(&samples, &enc, &scheme, &cfg, &model, 0).unwrap();
        assert!((tr.final_accuracy - 0.5).abs() < 0.05, "{}", tr.final_accuracy);
        for r in &tr.records {
            assert!(r.success_prob <= 1.0 + 1e-12 && r.success_prob >= 0.0);
        }
    }

    #[test]
    fn model_defaults() {
        let m = NoiseModel::new(0.005).unwrap();
        assert!((m.p1 - 0.0005).abs() < 1e-15);
        assert!(NoiseModel::new(1.5).is_err());
    }
}
