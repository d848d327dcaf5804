//! Prediction, accuracy, majority voting, generalization gaps and the
//! state-reuse protocol.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Sample;
use crate::encoding::{Encoder, LabelScheme, Payload};
use crate::error::{invalid, QalError, Result};
use crate::linalg::{spectral_norm, CMatrix, C64};
use crate::models::{average_hamiltonian, success_operator};
use crate::state::PureState;
use crate::trainer::{sample_loss, train_step_exact, TrainConfig};

/// Number of votes in a majority vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Votes {
    Finite(usize),
    Infinite,
}

impl Votes {
    pub fn new(k: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(invalid(format!("K = {k} must be odd")));
        }
        Ok(Votes::Finite(k))
    }
}

impl fmt::Display for Votes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Votes::Finite(k) => write!(f, "{k}"),
            Votes::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Votes {
    type Err = QalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Votes::Infinite),
            t => Votes::new(t.parse().map_err(|_| invalid(format!("bad vote count '{t}'")))?),
        }
    }
}

impl Serialize for Votes {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Votes::Finite(k) => s.serialize_u64(*k as u64),
            Votes::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Votes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        let r = match Raw::deserialize(d)? {
            Raw::N(k) => Votes::new(k),
            Raw::S(s) => s.parse(),
        };
        r.map_err(serde::de::Error::custom)
    }
}

/// Probabilities of every label-register outcome after `U(x)`.
pub fn outcome_probabilities(
    state: &PureState,
    payload: &Payload,
    encoder: &Encoder,
    scheme: &LabelScheme,
) -> Result<Vec<f64>> {
    let mut s = state.clone();
    encoder.encode(payload)?.apply(&mut s)?;
    let mut w = scheme.outcome_weights(s.amplitudes());
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|p| *p /= total);
    Ok(w)
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One shot: `None` when the outcome is not a valid label.
pub fn predict(
    state: &PureState,
    payload: &Payload,
    encoder: &Encoder,
    scheme: &LabelScheme,
    rng: &mut impl Rng,
) -> Result<Option<usize>> {
    let probs = outcome_probabilities(state, payload, encoder, scheme)?;
    let o = draw(&probs, rng);
    Ok((o < scheme.k_classes).then_some(o))
}

/// Probability that a majority of `K` shots is correct when one shot fails
/// with probability `h`.
pub fn k_accuracy(h: f64, k: Votes) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(invalid(format!("failure probability {h} outside [0, 1]")));
    }
    let k = match k {
        Votes::Infinite => {
            return Ok(if h < 0.5 {
                1.0
            } else if h > 0.5 {
                0.0
            } else {
                0.5
            })
        }
        Votes::Finite(k) if k % 2 == 0 => return Err(invalid(format!("K = {k} must be odd"))),
        Votes::Finite(k) => k,
    };
    if h == 0.0 {
        return Ok(1.0);
    }
    if h == 1.0 {
        return Ok(0.0);
    }
    let (lh, lq) = (h.ln(), (-h).ln_1p());
    let mut log_c = 0.0;
    let mut sum = 0.0;
    for r in 0..=(k - 1) / 2 {
        if r > 0 {
            log_c += ((k - r + 1) as f64).ln() - (r as f64).ln();
        }
        sum += (log_c + r as f64 * lh + (k - r) as f64 * lq).exp();
    }
    Ok(sum.min(1.0))
}

/// Failure probability `<psi|H_x|psi>` for every sample.
pub fn failure_probabilities(
    state: &PureState,
    samples: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
) -> Result<Vec<f64>> {
    samples.par_iter().map(|s| sample_loss(state, s, encoder, scheme)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAccuracy {
    pub k: Votes,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub gap: f64,
    pub k_accuracy: Vec<KAccuracy>,
    pub bound: Option<f64>,
}

impl EvalReport {
    pub fn k(&self, k: Votes) -> Option<f64> {
        self.k_accuracy.iter().find(|a| a.k == k).map(|a| a.accuracy)
    }
}

pub fn mean_k_accuracy(failures: &[f64], k: Votes) -> Result<f64> {
    let v: Vec<f64> = failures.iter().map(|&h| k_accuracy(h.clamp(0.0, 1.0), k)).collect::<Result<_>>()?;
    Ok(v.iter().sum::<f64>() / v.len().max(1) as f64)
}

/// Exact (shot-free) evaluation. `delta` adds the theoretical bound for the
/// training-set size.
pub fn evaluate(
    state: &PureState,
    train: &[Sample],
    test: &[Sample],
    ks: &[Votes],
    encoder: &Encoder,
    scheme: &LabelScheme,
    delta: Option<f64>,
) -> Result<EvalReport> {
    if train.is_empty() || test.is_empty() {
        return Err(invalid("evaluation needs nonempty train and test sets"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let tr = failure_probabilities(state, train, encoder, scheme)?;
    let te = failure_probabilities(state, test, encoder, scheme)?;
    let (train_loss, test_loss) = (mean(&tr), mean(&te));
    let k_accuracy =
        ks.iter().map(|&k| Ok(KAccuracy { k, accuracy: mean_k_accuracy(&te, k)? })).collect::<Result<_>>()?;
    let bound = delta.map(|d| generalization_bound(encoder.n_qubits(), train.len(), d)).transpose()?;
    Ok(EvalReport {
        train_loss,
        test_loss,
        train_accuracy: 1.0 - train_loss,
        test_accuracy: 1.0 - test_loss,
        gap: test_loss - train_loss,
        k_accuracy,
        bound,
    })
}

/// `sqrt(4 ln(2^(n+1) / delta) / N)`.
pub fn generalization_bound(n_qubits: usize, n_train: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid(format!("confidence {delta} outside (0, 1]")));
    }
    if n_train == 0 {
        return Err(invalid("training set size must be positive"));
    }
    let l = (n_qubits + 1) as f64 * std::f64::consts::LN_2 - delta.ln();
    Ok((4.0 * l / n_train as f64).sqrt())
}

/// Spectral-norm form of the gap: `|| H_S - H_D ||`.
pub fn spectral_gap(h_s: &CMatrix, h_d: &CMatrix) -> f64 {
    spectral_norm(&(h_s - h_d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistics {
    pub train_size: usize,
    pub pool_size: usize,
    pub gaps: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    /// The `1 - delta` quantile of the gaps.
    pub quantile: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Draws `repetitions` training sets of size `n_train` without replacement
/// from a pool and records `|| H_S - H_pool ||` for each.
pub fn empirical_gap_experiment(
    pool: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    n_train: usize,
    repetitions: usize,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<GapStatistics> {
    if n_train == 0 || n_train > pool.len() || repetitions == 0 {
        return Err(invalid(format!("cannot draw {n_train} of {} samples {repetitions} times", pool.len())));
    }
    let ops: Vec<CMatrix> =
        pool.par_iter().map(|s| success_operator(encoder, &s.payload, s.label, scheme)).collect::<Result<_>>()?;
    let dim = ops[0].nrows();
    let mean_of = |idx: &mut dyn Iterator<Item = usize>, m: usize| {
        let mut acc = CMatrix::zeros(dim, dim);
        idx.for_each(|i| acc += &ops[i]);
        acc / C64::new(m as f64, 0.0)
    };
    let h_pool = mean_of(&mut (0..ops.len()), ops.len());
    let mut gaps = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let idx = sample_indices(rng, ops.len(), n_train);
        gaps.push(spectral_gap(&mean_of(&mut idx.into_iter(), n_train), &h_pool));
    }
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let q = ((1.0 - delta) * repetitions as f64).ceil() as usize;
    let quantile = sorted[q.clamp(1, repetitions) - 1];
    let bound = generalization_bound(encoder.n_qubits(), n_train, delta)?;
    Ok(GapStatistics {
        train_size: n_train,
        pool_size: pool.len(),
        mean: gaps.iter().sum::<f64>() / repetitions as f64,
        max: sorted[repetitions - 1],
        quantile,
        bound,
        within_bound: quantile <= bound,
        gaps,
    })
}

/// Projective measurement `{U(x)† Pi_o U(x)}`; collapses `state` and returns
/// the outcome.
pub fn measure_label(
    state: &mut PureState,
    payload: &Payload,
    encoder: &Encoder,
    scheme: &LabelScheme,
    rng: &mut impl Rng,
) -> Result<usize> {
    let u = encoder.encode(payload)?;
    u.apply(state)?;
    let mut w = scheme.outcome_weights(state.amplitudes());
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|p| *p /= total);
    let o = draw(&w, rng);
    for (i, a) in state.amplitudes_mut().iter_mut().enumerate() {
        if scheme.outcome(i) != o {
            *a = C64::new(0.0, 0.0);
        }
    }
    u.apply_adjoint(state)?;
    state.normalize()?;
    Ok(o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseEvent {
    /// Training steps done when the prediction was made.
    pub step: usize,
    pub sample: usize,
    pub label: usize,
    pub outcome: usize,
    pub correct: bool,
    pub loss_before: f64,
    pub loss_after: f64,
    /// Steps until the training loss is below the threshold again; `None`
    /// when the step budget ran out first.
    pub recovery_steps: Option<usize>,
}

/// Trains in exact mode and, whenever the training loss is below `tau`,
/// predicts a held-out sample with a real measurement and keeps training
/// the collapsed state.
#[allow(clippy::too_many_arguments)]
pub fn reusability_run(
    train: &[Sample],
    held_out: &[Sample],
    encoder: &Encoder,
    scheme: &LabelScheme,
    config: &TrainConfig,
    tau: f64,
    n_predictions: usize,
    initial: PureState,
    rng: &mut impl Rng,
) -> Result<Vec<ReuseEvent>> {
    if train.is_empty() || held_out.is_empty() {
        return Err(invalid("reuse needs training and held-out samples"));
    }
    let hs = average_hamiltonian(train, encoder, scheme)?;
    let loss = |s: &PureState| s.expectation(&hs);
    let mut state = initial;
    let mut events = Vec::with_capacity(n_predictions);
    let mut t = 0usize;
    let step = |state: &mut PureState, t: &mut usize, rng: &mut dyn rand::RngCore| -> Result<()> {
        let datum = rng.random_range(0..train.len());
        *state = train_step_exact(state, &train[datum], encoder, scheme, config.eta.at(*t))?.state;
        *t += 1;
        Ok(())
    };
    while events.len() < n_predictions && t < config.steps {
        let before = loss(&state)?;
        if before < tau {
            let j = rng.random_range(0..held_out.len());
            let sample = &held_out[j];
            let at = t;
            let outcome = measure_label(&mut state, &sample.payload, encoder, scheme, rng)?;
            let after = loss(&state)?;
            let mut r = 0;
            while loss(&state)? >= tau && t < config.steps {
                step(&mut state, &mut t, rng)?;
                r += 1;
            }
            let recovered = loss(&state)? < tau;
            events.push(ReuseEvent {
                step: at,
                sample: j,
                label: sample.label,
                outcome,
                correct: outcome == sample.label,
                loss_before: before,
                loss_after: after,
                recovery_steps: recovered.then_some(r),
            });
            if events.len() == n_predictions || t >= config.steps {
                break;
            }
        }
        step(&mut state, &mut t, rng)?;
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseSummary {
    pub events: usize,
    pub correct: usize,
    pub median_recovery_correct: Option<f64>,
    pub median_recovery_wrong: Option<f64>,
    pub unrecovered: usize,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn summarize_reuse(events: &[ReuseEvent]) -> ReuseSummary {
    let rec = |c: bool| {
        events.iter().filter(|e| e.correct == c).filter_map(|e| e.recovery_steps.map(|r| r as f64)).collect::<Vec<_>>()
    };
    ReuseSummary {
        events: events.len(),
        correct: events.iter().filter(|e| e.correct).count(),
        median_recovery_correct: median(rec(true)),
        median_recovery_wrong: median(rec(false)),
        unrecovered: events.iter().filter(|e| e.recovery_steps.is_none()).count(),
    }
}
