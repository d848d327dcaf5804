//! Numerical checks of the convergence, block-encoding, majority-vote and
//! generalization statements. Each suite returns one [`Check`] per bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::encoding::{ClassicalEncoderConfig, Encoder, LabelScheme, Payload};
use crate::error::{invalid, Result};
use crate::eval::{empirical_gap_experiment, generalization_bound, k_accuracy, Votes};
use crate::linalg::{trace_norm, CMatrix, C64};
use crate::models::{average_hamiltonian, sample_hamiltonian};
use crate::op::HermitianOp;
use crate::random::{random_contraction, random_density, random_unit_trace_norm};
use crate::state::{DensityState, PureState};
use crate::trainer::{
    evolve_oracle, schedule_from_theorem, train_step_exact, train_step_sampled, verify_single_step_lemma,
    SampledOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(
        suite: &str,
        name: impl Into<String>,
        value: f64,
        threshold: f64,
        passed: bool,
        detail: impl Into<String>,
    ) -> Self {
        Self { suite: suite.into(), name: name.into(), passed, value, threshold, detail: detail.into() }
    }

    fn at_most(suite: &str, name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self::new(suite, name, value, threshold, value <= threshold, detail)
    }
}

pub const SUITES: &[&str] = &[
    "lemma-s1",
    "lemma-s2",
    "theorem-s3",
    "convergence",
    "theorem-s4",
    "block-encoding",
    "k-accuracy",
    "generalization",
];

pub fn run_suite(name: &str, seed: u64) -> Result<Vec<Check>> {
    match name {
        "lemma-s1" => lemma_s1(200, seed),
        "lemma-s2" => lemma_s2(200, 3, &[0.05, 0.1, 0.2], seed),
        "theorem-s3" => Ok(vec![averaged_dynamics(4, 50, 0.05, 500, seed)?]),
        "convergence" => Ok(vec![exponential_convergence(4, seed)?]),
        "theorem-s4" => theorem_s4(seed),
        "block-encoding" => block_encoding(1000, 10, 10_000, seed),
        "k-accuracy" => k_accuracy_monte_carlo(1_000_000, seed),
        "generalization" => generalization(seed),
        "all" => SUITES.iter().map(|s| run_suite(s, seed)).collect::<Result<Vec<_>>>().map(|v| v.concat()),
        other => Err(invalid(format!("unknown suite '{other}'"))),
    }
}

/// Classical toy data: `count` samples with uniform angles in `[0, pi]` and
/// alternating labels.
pub fn toy_classical(n: usize, count: usize, rng: &mut impl Rng) -> Result<(Vec<Sample>, Encoder, LabelScheme)> {
    toy_layered(n, 1, count, rng)
}

/// Like [`toy_classical`] with `layers` rotation blocks and the label read
/// from the last qubit, which gives `H_S` a spread-out spectrum.
pub fn toy_layered(
    n: usize,
    layers: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<Sample>, Encoder, LabelScheme)> {
    let dim = 3 * n * layers;
    let samples = (0..count)
        .map(|i| Sample {
            payload: Payload::Classical((0..dim).map(|_| rng.random::<f64>() * std::f64::consts::PI).collect()),
            label: i % 2,
        })
        .collect();
    let scheme = if layers == 1 { LabelScheme::new(n, 2)? } else { LabelScheme::with_measured(n, 2, vec![n - 1])? };
    Ok((samples, Encoder::Classical(ClassicalEncoderConfig::new(n, dim)?), scheme))
}

fn random_projector(dim: usize, rng: &mut impl Rng) -> CMatrix {
    if rng.random::<bool>() {
        return CMatrix::identity(dim, dim);
    }
    let v = crate::random::random_unitary(dim, rng);
    let rank = rng.random_range(1..=dim);
    let cols = v.columns(0, rank);
    &cols * cols.adjoint()
}

pub fn lemma_s1(draws: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_bab, mut worst_sym) = (0.0f64, 0.0f64);
    for _ in 0..draws {
        let dim = 1usize << rng.random_range(1..=3);
        let a = random_unit_trace_norm(dim, rng.random_range(0.0..=1.0), &mut rng);
        // every other draw uses projectors or the identity, where the bounds are tight
        let (b, c) = if rng.random::<bool>() {
            (random_contraction(dim, &mut rng), random_contraction(dim, &mut rng))
        } else {
            (random_projector(dim, &mut rng), random_projector(dim, &mut rng))
        };
        worst_bab = worst_bab.max(trace_norm(&(&b * &a * &b)));
        worst_sym = worst_sym.max(trace_norm(&(&b * &a * &c + &c * &a * &b)));
    }
    Ok(vec![
        Check::at_most("lemma-s1", "||BAB||_1 <= 1", worst_bab, 1.0 + 1e-9, format!("max over {draws} draws")),
        Check::at_most("lemma-s1", "||BAC + CAB||_1 <= 2", worst_sym, 2.0 + 1e-9, format!("max over {draws} draws")),
    ])
}

/// Random instances with `0 <= H_x <= I`: a few projector complements from
/// random circuits mixed with general contractions.
pub fn lemma_s2(instances: usize, n: usize, etas: &[f64], seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 1usize << n;
    let mut worst = vec![0.0f64; etas.len()];
    for i in 0..instances {
        let m = rng.random_range(1..=6);
        let hs: Vec<HermitianOp> = if i % 2 == 0 {
            let (samples, enc, scheme) = toy_classical(n, m, &mut rng)?;
            samples
                .iter()
                .map(|s| sample_hamiltonian(&enc.encode(&s.payload)?, &scheme.label_projector(s.label)?))
                .collect::<Result<_>>()?
        } else {
            (0..m).map(|_| HermitianOp::new(n, random_contraction(dim, &mut rng))).collect::<Result<_>>()?
        };
        let rho = DensityState::new(n, random_density(dim, &mut rng))?;
        for (w, &eta) in worst.iter_mut().zip(etas) {
            *w = w.max(verify_single_step_lemma(&hs, &rho, eta)?);
        }
    }
    Ok(etas
        .iter()
        .zip(worst)
        .map(|(&eta, w)| {
            Check::at_most(
                "lemma-s2",
                format!("deviation <= 4 eta^2 (eta = {eta})"),
                w,
                4.0 * eta * eta,
                format!("max over {instances} instances, n = {n}"),
            )
        })
        .collect())
}

/// Mean unnormalized state over `m` random datum sequences against
/// `exp(-beta H_S) rho0 exp(-beta H_S)`.
pub fn averaged_dynamics(n: usize, steps: usize, eta: f64, m: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (samples, enc, scheme) = toy_layered(n, 3, 8, &mut rng)?;
    let hs = average_hamiltonian(&samples, &enc, &scheme)?;
    let psi0 = PureState::haar_random(n, &mut rng);
    let dim = psi0.dim();
    let mut sum = CMatrix::zeros(dim, dim);
    let mut sum_sq = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for _ in 0..m {
        let mut psi = psi0.clone();
        let mut weight = 1.0;
        for _ in 0..steps {
            let s = &samples[rng.random_range(0..samples.len())];
            let step = train_step_exact(&psi, s, &enc, &scheme, eta)?;
            weight *= step.success_prob;
            psi = step.state;
        }
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes()) * C64::new(weight.sqrt(), 0.0);
        let outer = &v * v.adjoint();
        sum_sq += outer.map(|z| z.norm_sqr());
        sum += outer;
    }
    let mf = m as f64;
    let mean = sum / C64::new(mf, 0.0);
    // entrywise variance of the mean, bounded into trace norm through Frobenius
    let var: f64 = (0..dim * dim).map(|k| (sum_sq[k] / mf - mean[k].norm_sqr()).max(0.0)).sum::<f64>() / mf;
    let se = (dim as f64).sqrt() * (var / (mf - 1.0).max(1.0) * mf).sqrt() / mf.sqrt();
    let beta = eta * steps as f64;
    let (sigma, _) = evolve_oracle(&psi0.to_density(), &hs, beta)?;
    let dev = trace_norm(&(mean - sigma.matrix()));
    let gamma = steps as f64 * eta * eta;
    Ok(Check::at_most(
        "theorem-s3",
        "mean trajectory vs exp(-beta H) rho exp(-beta H)",
        dev,
        4.0 * gamma + 5.0 * se,
        format!("n = {n}, T = {steps}, eta = {eta}, {m} sequences, standard error {se:.3e}"),
    ))
}

/// Fits `log(excited / ground weight)` of the oracle state against `beta`
/// and compares the slope with `-2 gap`.
pub fn exponential_convergence(n: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (samples, enc, scheme) = toy_layered(n, 3, 8, &mut rng)?;
    let hs = average_hamiltonian(&samples, &enc, &scheme)?;
    let e = hs.eigen()?;
    let psi = PureState::haar_random(n, &mut rng);
    let c = e.vectors.adjoint() * nalgebra::DVector::from_column_slice(psi.amplitudes());
    let pops: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
    let g = e.values[0];
    let tol = 1e-9;
    let ground: f64 = e.values.iter().zip(&pops).filter(|(v, _)| **v <= g + tol).map(|(_, p)| p).sum();
    let gap = e.values.iter().find(|v| **v > g + tol).map(|v| v - g).ok_or_else(|| invalid("spectrum has no gap"))?;
    let log_ratio = |beta: f64| {
        let terms: Vec<f64> = e
            .values
            .iter()
            .zip(&pops)
            .filter(|(v, _)| **v > g + tol)
            .map(|(v, p)| p.ln() - 2.0 * beta * (v - g))
            .collect();
        let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln() - ground.ln()
    };
    let betas: Vec<f64> = (0..=20).map(|i| (2.0 + 0.5 * i as f64) / gap).collect();
    let ys: Vec<f64> = betas.iter().map(|&b| log_ratio(b)).collect();
    let (mb, my) = (betas.iter().sum::<f64>() / 21.0, ys.iter().sum::<f64>() / 21.0);
    let slope = betas.iter().zip(&ys).map(|(b, y)| (b - mb) * (y - my)).sum::<f64>()
        / betas.iter().map(|b| (b - mb).powi(2)).sum::<f64>();
    let rel = (slope / (-2.0 * gap) - 1.0).abs();
    let levels = 1 + e.values.windows(2).filter(|w| w[1] - w[0] > tol).count();
    Ok(Check::at_most(
        "convergence",
        "excited-weight decay slope vs -2 gap",
        rel,
        0.1,
        format!("{levels} distinct levels, gap {gap:.4e}, fitted slope {slope:.4e}, relative error {rel:.3e}"),
    ))
}

/// Oracle at the scheduled `beta` on a synthetic heavy-tailed `H_S`.
pub fn theorem_s4(seed: u64) -> Result<Vec<Check>> {
    let (c1, c2, c3, eps) = (0.5, 0.1, 0.5, 0.1);
    let n = 6;
    let dim = 1usize << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = 0.02;
    // a fifth of the spectrum within eps of the ground energy
    let low = dim / 5;
    let mut values: Vec<f64> = (0..dim)
        .map(|i| match i {
            0 => g,
            i if i < low => rng.random_range(g..g + eps),
            _ => rng.random_range(g + eps..1.0),
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let v = crate::random::random_unitary(dim, &mut rng);
    let d = CMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) });
    let hs = HermitianOp::new(n, &v * d * v.adjoint())?;
    let rho0 = DensityState::maximally_mixed(n);
    let overlap = values.iter().filter(|x| **x <= g + eps).count() as f64 / dim as f64;
    let s = schedule_from_theorem(c1, c2, c3, eps, g)?;
    let (sigma, success) = evolve_oracle(&rho0, &hs, s.beta)?;
    let loss = sigma.expectation(&hs)?;
    let detail = format!("beta {:.6}, c4 {:.4e}, T {}, low-energy overlap {overlap:.3}", s.beta, s.c4, s.steps);
    Ok(vec![
        Check::new("theorem-s4", "low-energy overlap >= c2", overlap, c2, overlap >= c2, "precondition"),
        Check::new("theorem-s4", "success >= c4", success, s.c4, success >= s.c4, detail.clone()),
        Check::at_most("theorem-s4", "conditional loss <= g + eps + c3", loss, g + eps + c3, detail),
    ])
}

pub fn block_encoding(draws: usize, freq_draws: usize, trials: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_fid = 0.0f64;
    let mut worst_prob = 0.0f64;
    let mut setups = Vec::new();
    for i in 0..draws {
        let n = rng.random_range(2..=4);
        let (samples, enc, scheme) = toy_classical(n, 2, &mut rng)?;
        let s = samples[rng.random_range(0..2)].clone();
        let eta = rng.random_range(0.01..1.0);
        let psi = PureState::haar_random(n, &mut rng);
        let exact = train_step_exact(&psi, &s, &enc, &scheme, eta)?;
        let mut accepted = None;
        for _ in 0..10_000 {
            let (o, p0) = train_step_sampled(&psi, &s, &enc, &scheme, eta, &mut rng)?;
            worst_prob = worst_prob.max((p0 - exact.success_prob).abs());
            if let SampledOutcome::Accepted(a) = o {
                accepted = Some(a);
                break;
            }
        }
        let a = accepted.ok_or_else(|| invalid("no accepted outcome in 10000 tries"))?;
        worst_fid = worst_fid.max(1.0 - a.fidelity(&exact.state));
        if i < freq_draws {
            setups.push((psi, s, enc, scheme, eta, exact.success_prob));
        }
    }
    let mut worst_z = 0.0f64;
    for (psi, s, enc, scheme, eta, p) in &setups {
        let mut hits = 0usize;
        for _ in 0..trials {
            let (o, _) = train_step_sampled(psi, s, enc, scheme, *eta, &mut rng)?;
            hits += usize::from(matches!(o, SampledOutcome::Accepted(_)));
        }
        let sd = (p * (1.0 - p) / trials as f64).sqrt().max(1e-12);
        worst_z = worst_z.max((hits as f64 / trials as f64 - p).abs() / sd);
    }
    Ok(vec![
        Check::at_most(
            "block-encoding",
            "accepted state infidelity",
            worst_fid,
            1e-9,
            format!("max over {draws} draws"),
        ),
        Check::at_most(
            "block-encoding",
            "ancilla probability vs ||(I - eta H)psi||^2",
            worst_prob,
            1e-10,
            "max absolute difference",
        ),
        Check::at_most(
            "block-encoding",
            "acceptance frequency z-score",
            worst_z,
            4.0,
            format!("{freq_draws} draws x {trials} trials"),
        ),
    ])
}

pub fn k_accuracy_monte_carlo(draws: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [(3usize, 0.2f64), (29, 0.4), (29, 0.1)]
        .into_iter()
        .map(|(k, h)| {
            let wins = (0..draws).filter(|_| (0..k).filter(|_| rng.random::<f64>() < h).count() <= (k - 1) / 2).count();
            let mc = wins as f64 / draws as f64;
            let exact = k_accuracy(h, Votes::new(k)?)?;
            let sd = (exact * (1.0 - exact) / draws as f64).sqrt();
            let z = (mc - exact).abs() / sd;
            Ok(Check::at_most(
                "k-accuracy",
                format!("K = {k}, h = {h}"),
                z,
                3.0,
                format!("analytic {exact:.6}, Monte Carlo {mc:.6}"),
            ))
        })
        .collect()
}

pub fn generalization(seed: u64) -> Result<Vec<Check>> {
    let b = generalization_bound(10, 500, 0.05)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pool, enc, scheme) = toy_classical(4, 500, &mut rng)?;
    let stats = empirical_gap_experiment(&pool, &enc, &scheme, 50, 200, 0.05, &mut rng)?;
    Ok(vec![
        Check::at_most(
            "generalization",
            "bound(n=10, N=500, delta=0.05) = 0.29149",
            (b - 0.29149).abs(),
            1e-4,
            format!("value {b:.6}"),
        ),
        Check::at_most(
            "generalization",
            "95th percentile spectral gap <= bound (n=4, N=50)",
            stats.quantile,
            stats.bound,
            format!("pool {}, 200 draws, max {:.4}", stats.pool_size, stats.max),
        ),
    ])
}
