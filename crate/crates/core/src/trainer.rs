//! The training loop.
//!
//! One step draws a sample `(x, y)`, applies `U(x)`, the perturbation `M_y`
//! on the label register and `U(x)†`. In exact mode `M_y` is applied as the
//! contraction it is and the state is renormalized, which equals
//! `(I - eta H_x)|psi>` up to normalization; the squared norm before
//! renormalization is the post-selection success probability. Sampled mode
//! runs the physical protocol with an ancilla, the block encoding `U_y` and a
//! sampled ancilla measurement. Oracle mode evolves a density matrix under
//! `exp(-beta H_S)` directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::encoding::{build_perturbation, Encoder, LabelScheme};
use crate::error::{invalid, QalError, Result};
use crate::linalg::{trace_norm, CMatrix, C64};
use crate::models::average_hamiltonian;
use crate::op::HermitianOp;
use crate::state::{DensityState, PureState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Exact,
    Sampled,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSchedule {
    Constant(f64),
    /// One rate per step; must have at least `steps` entries.
    PerStep(Vec<f64>),
}

impl EtaSchedule {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            EtaSchedule::Constant(e) => *e,
            EtaSchedule::PerStep(v) => v[step],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    HaarRandomPure,
    ComputationalBasisRandom,
    /// Density modes only.
    MaximallyMixed,
    Explicit(Vec<C64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectPolicy {
    /// A rejected ancilla outcome ends the trajectory; a fresh one is started.
    Abort,
    /// Keep the rejected branch and carry on (exploration only).
    ContinueOnReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub eta: EtaSchedule,
    pub steps: usize,
    pub seed: u64,
    pub init: InitPolicy,
    /// Stop once the full training loss drops below this value.
    pub loss_threshold: Option<f64>,
    pub reject: RejectPolicy,
    /// Trajectory restarts allowed in sampled mode.
    pub max_attempts: usize,
}

impl TrainConfig {
    pub fn exact(eta: f64, steps: usize, seed: u64) -> Self {
        Self {
            mode: TrainMode::Exact,
            eta: EtaSchedule::Constant(eta),
            steps,
            seed,
            init: InitPolicy::HaarRandomPure,
            loss_threshold: None,
            reject: RejectPolicy::Abort,
            max_attempts: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |e: f64| {
            if e > 0.0 && e <= 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("learning rate {e} outside (0, 1]")))
            }
        };
        match &self.eta {
            EtaSchedule::Constant(e) => check(*e)?,
            EtaSchedule::PerStep(v) => {
                if v.len() < self.steps {
                    return Err(invalid(format!("schedule has {} rates for {} steps", v.len(), self.steps)));
                }
                v.iter().try_for_each(|e| check(*e))?;
            }
        }
        if self.mode != TrainMode::Oracle && self.init == InitPolicy::MaximallyMixed {
            return Err(invalid("a maximally mixed start needs oracle mode"));
        }
        if self.mode == TrainMode::Sampled && self.max_attempts == 0 {
            return Err(invalid("max_attempts must be positive"));
        }
        Ok(())
    }

    /// `(beta, gamma)` after `t` steps.
    pub fn sums(&self, t: usize) -> (f64, f64) {
        (0..t).map(|s| self.eta.at(s)).fold((0.0, 0.0), |(b, g), e| (b + e, g + e * e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub attempt: usize,
    pub datum: usize,
    /// Failure probability of the drawn datum before the step (exact and
    /// sampled modes) or the conditional loss (oracle mode).
    pub loss: f64,
    pub success_prob: f64,
    pub beta: f64,
    pub gamma: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub enum TrainState {
    Pure(PureState),
    Mixed(DensityState),
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub seed: u64,
    pub mode: TrainMode,
    pub records: Vec<StepRecord>,
    pub final_state: TrainState,
    /// Exact mode: product of step success probabilities. Sampled mode:
    /// accepted trajectories over attempts. Oracle mode: `Tr sigma(beta)`.
    pub acceptance_estimate: f64,
    pub attempts: usize,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn pure_state(&self) -> Option<&PureState> {
        match &self.final_state {
            TrainState::Pure(p) => Some(p),
            TrainState::Mixed(_) => None,
        }
    }

    pub fn final_beta_gamma(&self) -> (f64, f64) {
        self.records.last().map_or((0.0, 0.0), |r| (r.beta, r.gamma))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,attempt,datum,loss,success_prob,beta,gamma,accepted\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                r.step, r.attempt, r.datum, r.loss, r.success_prob, r.beta, r.gamma, r.accepted
            ));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let (beta, gamma) = self.final_beta_gamma();
        serde_json::json!({
            "seed": self.seed,
            "mode": self.mode,
            "steps": self.records.len(),
            "final_step_loss": self.records.last().map(|r| r.loss),
            "acceptance_estimate": self.acceptance_estimate,
            "attempts": self.attempts,
            "beta": beta,
            "gamma": gamma,
            "stopped_early": self.stopped_early,
        })
    }
}

/// Failure probability `<psi|H_x|psi> / <psi|psi>` of one sample.
pub fn sample_loss(state: &PureState, sample: &Sample, encoder: &Encoder, scheme: &LabelScheme) -> Result<f64> {
    let mut s = state.clone();
    encoder.encode(&sample.payload)?.apply(&mut s)?;
    let w = scheme.outcome_weights(s.amplitudes());
    let total: f64 = w.iter().sum();
    Ok(1.0 - w.get(sample.label).copied().unwrap_or(0.0) / total)
}

/// Mean failure probability over a set of samples, i.e. `<psi|H_S|psi>`.
pub fn training_loss(state: &PureState, samples: &[Sample], encoder: &Encoder, scheme: &LabelScheme) -> Result<f64> {
    use rayon::prelude::*;
    if samples.is_empty() {
        return Err(invalid("empty sample set"));
    }
    let losses: Vec<f64> = samples.par_iter().map(|s| sample_loss(state, s, encoder, scheme)).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Result of one exact step: new normalized state, success probability and
/// the datum's failure probability before the step.
#[derive(Debug, Clone)]
pub struct ExactStep {
    pub state: PureState,
    pub success_prob: f64,
    pub prior_loss: f64,
}

pub fn train_step_exact(
    state: &PureState,
    sample: &Sample,
    encoder: &Encoder,
    scheme: &LabelScheme,
    eta: f64,
) -> Result<ExactStep> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("learning rate {eta} outside [0, 1]")));
    }
    let u = encoder.encode(&sample.payload)?;
    let mut s = state.clone();
    u.apply(&mut s)?;
    let w = scheme.outcome_weights(s.amplitudes());
    let total: f64 = w.iter().sum();
    let prior_loss = 1.0 - w.get(sample.label).copied().unwrap_or(0.0) / total;
    scheme.damp(s.amplitudes_mut(), sample.label, 1.0 - eta);
    u.apply_adjoint(&mut s)?;
    if s.norm_sq() <= 1e-24 * total {
        return Err(QalError::DegenerateStep);
    }
    let success_prob = s.normalize()? / total;
    Ok(ExactStep { state: s, success_prob, prior_loss })
}

#[derive(Debug, Clone)]
pub enum SampledOutcome {
    Accepted(PureState),
    /// Carries the normalized orthogonal branch for the continue policy.
    Rejected(PureState),
}

/// Physical step: ancilla in `|0>`, `U(x) ⊗ I`, `U_y`, ancilla measurement.
/// Returns the outcome and the probability of acceptance.
pub fn train_step_sampled(
    state: &PureState,
    sample: &Sample,
    encoder: &Encoder,
    scheme: &LabelScheme,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<(SampledOutcome, f64)> {
    let n = state.n_qubits();
    let u = encoder.encode(&sample.payload)?;
    let wide = u.widen(1);
    let mut s = state.with_ancillas(1);
    wide.apply(&mut s)?;
    let p = build_perturbation(sample.label, scheme, eta)?;
    p.gate(scheme, n)?.apply_pure(&mut s)?;
    let amps = s.amplitudes();
    let total = s.norm_sq();
    let p0: f64 = amps.iter().step_by(2).map(|a| a.norm_sqr()).sum::<f64>() / total;
    let accept = rng.random::<f64>() < p0;
    let branch: Vec<C64> = amps.iter().skip(usize::from(!accept)).step_by(2).cloned().collect();
    let mut post = PureState::from_amplitudes(n, branch)?;
    u.apply_adjoint(&mut post)?;
    post.normalize()?;
    Ok((if accept { SampledOutcome::Accepted(post) } else { SampledOutcome::Rejected(post) }, p0))
}

pub(crate) fn initial_pure(n: usize, init: &InitPolicy, rng: &mut impl Rng) -> Result<PureState> {
    match init {
        InitPolicy::HaarRandomPure => Ok(PureState::haar_random(n, rng)),
        InitPolicy::ComputationalBasisRandom => Ok(PureState::random_basis(n, rng)),
        InitPolicy::Explicit(v) => {
            let mut s = PureState::from_amplitudes(n, v.clone())?;
            s.normalize()?;
            Ok(s)
        }
        InitPolicy::MaximallyMixed => Err(invalid("a maximally mixed start needs oracle mode")),
    }
}

fn initial_density(n: usize, init: &InitPolicy, rng: &mut impl Rng) -> Result<DensityState> {
    match init {
        InitPolicy::MaximallyMixed => Ok(DensityState::maximally_mixed(n)),
        other => Ok(initial_pure(n, other, rng)?.to_density()),
    }
}

/// Observer called with `(steps done, state)` after initialization and after
/// every accepted step; returning `true` stops training.
pub type Observer<'a> = dyn FnMut(usize, &PureState) -> bool + 'a;

pub fn train(samples: &[Sample], encoder: &Encoder, scheme: &LabelScheme, config: &TrainConfig) -> Result<TrainTrace> {
    train_observed(samples, encoder, scheme, config, &mut |_, _| false)
}

pub fn train_observed(
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
    observer: &mut Observer<'_>,
) -> Result<TrainTrace> {
    config.validate()?;
    if samples.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match config.mode {
        TrainMode::Exact => train_exact(samples, encoder, scheme, config, &mut rng, observer),
        TrainMode::Sampled => train_sampled(samples, encoder, scheme, config, &mut rng, observer),
        TrainMode::Oracle => train_oracle(samples, encoder, scheme, config, &mut rng),
    }
}

fn below_threshold(
    state: &PureState,
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
) -> Result<bool> {
    match config.loss_threshold {
        Some(tau) => Ok(training_loss(state, samples, encoder, scheme)? < tau),
        None => Ok(false),
    }
}

fn train_exact(
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    observer: &mut Observer<'_>,
) -> Result<TrainTrace> {
    let mut state = initial_pure(encoder.n_qubits(), &config.init, rng)?;
    let mut records = Vec::with_capacity(config.steps);
    let (mut beta, mut gamma, mut acceptance) = (0.0, 0.0, 1.0);
    let mut stopped = observer(0, &state);
    for t in 0..config.steps {
        if stopped {
            break;
        }
        let eta = config.eta.at(t);
        let datum = rng.random_range(0..samples.len());
        let step = train_step_exact(&state, &samples[datum], encoder, scheme, eta)?;
        state = step.state;
        beta += eta;
        gamma += eta * eta;
        acceptance *= step.success_prob;
        records.push(StepRecord {
            step: t + 1,
            attempt: 0,
            datum,
            loss: step.prior_loss,
            success_prob: step.success_prob,
            beta,
            gamma,
            accepted: true,
        });
        stopped = observer(t + 1, &state) || below_threshold(&state, samples, encoder, scheme, config)?;
    }
    Ok(TrainTrace {
        seed: config.seed,
        mode: TrainMode::Exact,
        records,
        final_state: TrainState::Pure(state),
        acceptance_estimate: acceptance,
        attempts: 1,
        stopped_early: stopped,
    })
}

fn train_sampled(
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    observer: &mut Observer<'_>,
) -> Result<TrainTrace> {
    let n = encoder.n_qubits();
    let mut records = Vec::new();
    for attempt in 0..config.max_attempts {
        let mut state = initial_pure(n, &config.init, rng)?;
        let (mut beta, mut gamma) = (0.0, 0.0);
        let mut stopped = observer(0, &state);
        let mut aborted = false;
        for t in 0..config.steps {
            if stopped {
                break;
            }
            let eta = config.eta.at(t);
            let datum = rng.random_range(0..samples.len());
            let prior_loss = sample_loss(&state, &samples[datum], encoder, scheme)?;
            let (outcome, p0) = train_step_sampled(&state, &samples[datum], encoder, scheme, eta, rng)?;
            beta += eta;
            gamma += eta * eta;
            let accepted = matches!(outcome, SampledOutcome::Accepted(_));
            records.push(StepRecord {
                step: t + 1,
                attempt,
                datum,
                loss: prior_loss,
                success_prob: p0,
                beta,
                gamma,
                accepted,
            });
            match outcome {
                SampledOutcome::Accepted(s) => state = s,
                SampledOutcome::Rejected(s) => {
                    if config.reject == RejectPolicy::Abort {
                        aborted = true;
                        break;
                    }
                    state = s;
                }
            }
            stopped = observer(t + 1, &state) || below_threshold(&state, samples, encoder, scheme, config)?;
        }
        if !aborted {
            return Ok(TrainTrace {
                seed: config.seed,
                mode: TrainMode::Sampled,
                records,
                final_state: TrainState::Pure(state),
                acceptance_estimate: 1.0 / (attempt + 1) as f64,
                attempts: attempt + 1,
                stopped_early: stopped,
            });
        }
    }
    Err(QalError::NoAcceptedTrajectory(config.max_attempts))
}

fn train_oracle(
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainTrace> {
    let hs = average_hamiltonian(samples, encoder, scheme)?;
    let rho0 = initial_density(encoder.n_qubits(), &config.init, rng)?;
    let betas: Vec<f64> = (1..=config.steps).map(|t| config.sums(t).0).collect();
    let curve = predicted_tradeoff(&hs, &rho0, &betas)?;
    let records = curve
        .iter()
        .enumerate()
        .map(|(t, p)| StepRecord {
            step: t + 1,
            attempt: 0,
            datum: 0,
            loss: p.conditional_loss,
            success_prob: p.success_prob,
            beta: p.beta,
            gamma: config.sums(t + 1).1,
            accepted: true,
        })
        .collect();
    let beta = betas.last().copied().unwrap_or(0.0);
    let (sigma, success) = evolve_oracle(&rho0, &hs, beta)?;
    Ok(TrainTrace {
        seed: config.seed,
        mode: TrainMode::Oracle,
        records,
        final_state: TrainState::Mixed(sigma),
        acceptance_estimate: success,
        attempts: 1,
        stopped_early: false,
    })
}

/// `sigma(beta) = exp(-beta H) rho0 exp(-beta H)` and its trace.
pub fn evolve_oracle(rho0: &DensityState, hs: &HermitianOp, beta: f64) -> Result<(DensityState, f64)> {
    if rho0.dim() != hs.dim() {
        return Err(QalError::DimensionMismatch { expected: hs.dim(), found: rho0.dim() });
    }
    let e = hs.eigen()?;
    let v = &e.vectors;
    let mut r = v.adjoint() * rho0.matrix() * v;
    let w: Vec<f64> = e.values.iter().map(|x| (-beta * x).exp()).collect();
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            r[(i, j)] *= w[i] * w[j];
        }
    }
    let sigma = DensityState::new(rho0.n_qubits(), v * r * v.adjoint())?;
    let tr = sigma.trace();
    Ok((sigma, tr))
}

/// `exp(-beta H) psi` (unnormalized) and its squared norm.
pub fn evolve_oracle_pure(psi0: &PureState, hs: &HermitianOp, beta: f64) -> Result<(PureState, f64)> {
    let e = hs.eigen()?;
    let out = e.apply_with(|x| C64::new((-beta * x).exp(), 0.0), psi0.amplitudes());
    let s = PureState::from_amplitudes(psi0.n_qubits(), out)?;
    let n2 = s.norm_sq() / psi0.norm_sq();
    Ok((s, n2))
}

/// `Tr(H sigma) / Tr(sigma)`.
pub fn conditional_loss(hs: &HermitianOp, sigma: &DensityState) -> Result<f64> {
    let tr = sigma.trace();
    if tr < 1e-12 {
        return Err(QalError::VanishingSuccess(tr));
    }
    sigma.expectation(hs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub beta: f64,
    pub success_prob: f64,
    pub conditional_loss: f64,
}

/// Success probability and conditional loss of the oracle state along a
/// grid of `beta`, computed from the populations of `rho0` in the
/// eigenbasis of `H_S` (higher-order terms omitted).
pub fn predicted_tradeoff(hs: &HermitianOp, rho0: &DensityState, betas: &[f64]) -> Result<Vec<TradeoffPoint>> {
    let e = hs.eigen()?;
    let v = &e.vectors;
    let r = v.adjoint() * rho0.matrix() * v;
    let pops: Vec<f64> = (0..r.nrows()).map(|i| r[(i, i)].re.max(0.0)).collect();
    tradeoff_from_populations(&e.values, &pops, betas)
}

/// Same as [`predicted_tradeoff`] for a pure initial state.
pub fn predicted_tradeoff_pure(hs: &HermitianOp, psi0: &PureState, betas: &[f64]) -> Result<Vec<TradeoffPoint>> {
    let e = hs.eigen()?;
    let x = nalgebra::DVectorView::from_slice(psi0.amplitudes(), psi0.dim());
    let c = e.vectors.adjoint() * x;
    let norm = psi0.norm_sq();
    let pops: Vec<f64> = c.iter().map(|a| a.norm_sqr() / norm).collect();
    tradeoff_from_populations(&e.values, &pops, betas)
}

fn tradeoff_from_populations(energies: &[f64], pops: &[f64], betas: &[f64]) -> Result<Vec<TradeoffPoint>> {
    // shift by the ground energy so large beta does not underflow
    let g = energies[0];
    betas
        .iter()
        .map(|&beta| {
            let (mut z, mut ez) = (0.0, 0.0);
            for (&en, &p) in energies.iter().zip(pops) {
                let w = p * (-2.0 * beta * (en - g)).exp();
                z += w;
                ez += w * en;
            }
            let success = z * (-2.0 * beta * g).exp();
            if success < 1e-12 {
                return Err(QalError::VanishingSuccess(success));
            }
            Ok(TradeoffPoint { beta, success_prob: success, conditional_loss: ez / z })
        })
        .collect()
}

/// `|| mean_x (I - eta H_x) rho (I - eta H_x) - exp(-eta H_S) rho exp(-eta H_S) ||_1`.
pub fn verify_single_step_lemma(h_list: &[HermitianOp], rho: &DensityState, eta: f64) -> Result<f64> {
    let Some(first) = h_list.first() else {
        return Err(invalid("empty Hamiltonian list"));
    };
    let dim = first.dim();
    let id = CMatrix::identity(dim, dim);
    let mut lhs = CMatrix::zeros(dim, dim);
    let mut hs = CMatrix::zeros(dim, dim);
    for h in h_list {
        if h.dim() != dim || rho.dim() != dim {
            return Err(QalError::DimensionMismatch { expected: dim, found: h.dim().max(rho.dim()) });
        }
        let k = &id - h.matrix() * C64::new(eta, 0.0);
        lhs += &k * rho.matrix() * &k;
        hs += h.matrix();
    }
    let m = C64::new(h_list.len() as f64, 0.0);
    lhs /= m;
    let hs = HermitianOp::new(first.n_qubits(), hs / m)?;
    let (rhs, _) = evolve_oracle(rho, &hs, eta)?;
    Ok(trace_norm(&(lhs - rhs.matrix())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub beta: f64,
    pub eta: f64,
    pub steps: usize,
    pub gamma: f64,
    pub c4: f64,
}

/// Constant-probability schedule: `beta = 3 ln(1 + c2) / (c3 eps)`,
/// `c4 = exp(-6 (1 + c1) ln(1 + c2) / c3) c2 / 2`, `gamma = c3 c4 / 40`,
/// `eta = gamma / beta`, `T = ceil(beta^2 / gamma)`.
pub fn schedule_from_theorem(c1: f64, c2: f64, c3: f64, eps: f64, g: f64) -> Result<Schedule> {
    let open = |v: f64, name: &str| {
        if v > 0.0 && v < 1.0 {
            Ok(())
        } else {
            Err(invalid(format!("{name} = {v} outside (0, 1)")))
        }
    };
    open(c1, "c1")?;
    open(c3, "c3")?;
    if !(c2 > 0.0 && c2 <= 0.1) {
        return Err(invalid(format!("c2 = {c2} outside (0, 1/10]")));
    }
    if eps <= 0.0 {
        return Err(invalid("epsilon must be positive"));
    }
    if g < 0.0 || g / eps > c1 {
        return Err(invalid(format!("g / epsilon = {} exceeds c1 = {c1}", g / eps)));
    }
    let l = (1.0 + c2).ln();
    let beta = 3.0 * l / (c3 * eps);
    let c4 = (-6.0 * (1.0 + c1) * l / c3).exp() * c2 / 2.0;
    let gamma = c3 * c4 / 40.0;
    let eta = gamma / beta;
    let steps = (beta * beta / gamma).ceil() as usize;
    Ok(Schedule { beta, eta, steps, gamma, c4 })
}
