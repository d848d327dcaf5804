//! Runners behind the subcommands. Each returns its results and, given an
//! output directory, writes CSV tables plus a config snapshot and manifest.

use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use anyhow::{bail, Context, Result};
use qal_core::data::{load_idx, persist, preprocess, split, LabeledDataset, Sample};
use qal_core::encoding::{ClassicalEncoderConfig, Encoder, LabelScheme};
use qal_core::eval::{
    evaluate, failure_probabilities, mean_k_accuracy, reusability_run, summarize_reuse, EvalReport, ReuseEvent,
    ReuseSummary, Votes,
};
use qal_core::models::{average_hamiltonian, default_energy_grid, random_k_local, spectrum, SpectrumReport};
use qal_core::noise::{noisy_train, NoiseModel, NoisyTrace};
use qal_core::trainer::{
    evolve_oracle_pure, train_observed, EtaSchedule, RejectPolicy, TrainConfig, TrainMode, TrainTrace,
};
use qal_core::{HermitianOp, PureState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DatasetSpec, ExperimentConfig};

/// Training, state initialization and measurements draw from this seed;
/// dataset generation and splitting from the config seed itself.
pub fn train_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.wrapping_add(1)
}

pub struct Prepared {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub encoder: Encoder,
    pub scheme: LabelScheme,
    hs: OnceLock<HermitianOp>,
}

impl Prepared {
    pub fn new(train: Vec<Sample>, test: Vec<Sample>, encoder: Encoder, scheme: LabelScheme) -> Self {
        Self { train, test, encoder, scheme, hs: OnceLock::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.encoder.n_qubits()
    }

    /// `H_S` over the training set, built on first use.
    pub fn hs(&self) -> Result<&HermitianOp> {
        if let Some(h) = self.hs.get() {
            return Ok(h);
        }
        let h = average_hamiltonian(&self.train, &self.encoder, &self.scheme)?;
        Ok(self.hs.get_or_init(|| h))
    }
}

fn split_sizes(ds: &LabeledDataset, train: usize, test: usize, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if ds.len() < train + test {
        bail!("dataset has {} samples, need {}", ds.len(), train + test);
    }
    let ds = ds.subsample(train + test, seed)?;
    let (a, b) = split(&ds, test, seed)?;
    Ok((a.samples, b.samples))
}

pub fn prepare(cfg: &ExperimentConfig, data_root: &Path) -> Result<Prepared> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed = cfg.seed;
    Ok(match &cfg.dataset {
        DatasetSpec::Idx { name, n_qubits, classes, side, scale, label_qubits, train_size, test_size } => {
            let dir = data_root.join(name);
            let raw = load_idx(&dir.join("train-images-idx3-ubyte.gz"), &dir.join("train-labels-idx1-ubyte.gz"))
                .with_context(|| format!("loading IDX files from {}", dir.display()))?;
            let ds = preprocess(&raw, *side, classes, *scale)?;
            let (train, test) = split_sizes(&ds, *train_size, *test_size, seed)?;
            let enc = Encoder::Classical(ClassicalEncoderConfig::new(*n_qubits, side * side)?);
            let scheme = match label_qubits {
                Some(qs) => LabelScheme::with_measured(*n_qubits, classes.len(), qs.clone())?,
                None => LabelScheme::new(*n_qubits, classes.len())?,
            };
            Prepared::new(train, test, enc, scheme)
        }
        DatasetSpec::AubryAndre { n_qubits, time, train_size, test_size } => {
            let ds = qal_core::data::gen_aubry_andre_dataset(train_size + test_size, *n_qubits, &mut rng)?;
            let (train, test) = split_sizes(&ds, *train_size, *test_size, seed)?;
            Prepared::new(
                train,
                test,
                Encoder::Hamiltonian { n_qubits: *n_qubits, time: *time },
                LabelScheme::new(*n_qubits, 2)?,
            )
        }
        DatasetSpec::ClusterIsing { data_qubits, model_qubits, terms, locality, time, train_size, test_size } => {
            let global = random_k_local(data_qubits + model_qubits, *terms, *locality, &mut rng)?;
            let ds = qal_core::data::gen_cluster_ising_dataset(train_size + test_size, *data_qubits, &mut rng)?;
            let (train, test) = split_sizes(&ds, *train_size, *test_size, seed)?;
            let enc = Encoder::QuantumState { global: Arc::new(global), data_qubits: *data_qubits, time: *time };
            Prepared::new(train, test, enc, LabelScheme::new(*model_qubits, 2)?)
        }
        DatasetSpec::Toy { n_qubits, train_size, test_size } => {
            let (mut samples, enc, scheme) =
                qal_core::verify::toy_classical(*n_qubits, train_size + test_size, &mut rng)?;
            let test = samples.split_off(*train_size);
            Prepared::new(samples, test, enc, scheme)
        }
    })
}

pub fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        mode: cfg.train.mode,
        eta: EtaSchedule::Constant(cfg.train.eta),
        steps: cfg.train.steps,
        seed: train_seed(cfg),
        init: cfg.train.init.clone(),
        loss_threshold: cfg.train.loss_threshold,
        reject: RejectPolicy::Abort,
        max_attempts: cfg.train.max_attempts,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.10}")
}

fn write_outputs(out: Option<&Path>, cfg: &ExperimentConfig, artifacts: Vec<(String, Vec<u8>)>) -> Result<()> {
    if let Some(dir) = out {
        persist(dir, &serde_json::to_value(cfg)?, &artifacts)?;
    }
    Ok(())
}

fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub step: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub k_accuracy: Vec<f64>,
    pub success_prob: f64,
}

pub struct TrainOutcome {
    pub trace: TrainTrace,
    pub curve: Vec<CurveRow>,
    pub report: EvalReport,
    pub state: PureState,
}

pub fn curve_csv(ks: &[Votes], rows: &[CurveRow]) -> String {
    let mut s = String::from("step,train_loss,train_acc,test_acc");
    for k in ks {
        s.push_str(&format!(",k_acc@{k}"));
    }
    s.push_str(",success_prob_estimate\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}", r.step, fmt(r.train_loss), fmt(r.train_accuracy), fmt(r.test_accuracy)));
        for a in &r.k_accuracy {
            s.push_str(&format!(",{}", fmt(*a)));
        }
        s.push_str(&format!(",{}\n", fmt(r.success_prob)));
    }
    s
}

pub fn run_train(cfg: &ExperimentConfig, p: &Prepared, out: Option<&Path>) -> Result<TrainOutcome> {
    if cfg.train.mode == TrainMode::Oracle {
        bail!("oracle mode is run through the tradeoff command");
    }
    let tc = train_config(cfg);
    let every = cfg.eval.every.max(1);
    let ks = &cfg.eval.ks;
    let rows: RefCell<Vec<(usize, EvalReport)>> = RefCell::new(Vec::new());
    let err: RefCell<Option<qal_core::QalError>> = RefCell::new(None);
    let mut observer = |step: usize, s: &PureState| {
        if step == 0 {
            rows.borrow_mut().clear();
        }
        if step % every == 0 || step == tc.steps {
            match evaluate(s, &p.train, &p.test, ks, &p.encoder, &p.scheme, None) {
                Ok(r) => rows.borrow_mut().push((step, r)),
                Err(e) => {
                    *err.borrow_mut() = Some(e);
                    return true;
                }
            }
        }
        false
    };
    let trace = train_observed(&p.train, &p.encoder, &p.scheme, &tc, &mut observer)?;
    if let Some(e) = err.into_inner() {
        return Err(e.into());
    }
    let state = trace.pure_state().context("training returned no pure state")?.clone();
    let last_attempt = trace.records.last().map_or(0, |r| r.attempt);
    let run: Vec<_> = trace.records.iter().filter(|r| r.attempt == last_attempt).collect();
    let mut rows = rows.into_inner();
    let last_step = run.len();
    if rows.last().map(|r| r.0) != Some(last_step) {
        rows.push((last_step, evaluate(&state, &p.train, &p.test, ks, &p.encoder, &p.scheme, None)?));
    }
    let curve: Vec<CurveRow> = rows
        .iter()
        .map(|(step, r)| CurveRow {
            step: *step,
            train_loss: r.train_loss,
            train_accuracy: r.train_accuracy,
            test_accuracy: r.test_accuracy,
            k_accuracy: r.k_accuracy.iter().map(|k| k.accuracy).collect(),
            success_prob: run[..*step].iter().map(|r| r.success_prob).product(),
        })
        .collect();
    let report = evaluate(&state, &p.train, &p.test, ks, &p.encoder, &p.scheme, Some(cfg.eval.delta))?;
    let summary = serde_json::json!({ "recipe": cfg.recipe, "trace": trace.summary_json(), "report": report });
    write_outputs(
        out,
        cfg,
        vec![
            ("curve.csv".into(), curve_csv(ks, &curve).into_bytes()),
            ("steps.csv".into(), trace.to_csv().into_bytes()),
            ("summary.json".into(), json_bytes(&summary)?),
        ],
    )?;
    Ok(TrainOutcome { trace, curve, report, state })
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub beta: f64,
    pub success_prob: f64,
    pub conditional_loss: f64,
    pub test_accuracy: Vec<f64>,
}

pub fn run_tradeoff(cfg: &ExperimentConfig, p: &Prepared, out: Option<&Path>) -> Result<Vec<TradeoffRow>> {
    let spec = cfg.tradeoff.clone().context("config has no tradeoff section")?;
    let ks = &cfg.eval.ks;
    let hs = p.hs()?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_seed(cfg));
    let psi0 = PureState::haar_random(p.n_qubits(), &mut rng);
    let mut rows = Vec::with_capacity(spec.points);
    for i in 0..spec.points {
        let beta = spec.beta_max * i as f64 / (spec.points - 1) as f64;
        let (mut phi, success) = evolve_oracle_pure(&psi0, hs, beta)?;
        if success < 1e-12 {
            return Err(qal_core::QalError::VanishingSuccess(success).into());
        }
        phi.normalize()?;
        let h = failure_probabilities(&phi, &p.test, &p.encoder, &p.scheme)?;
        rows.push(TradeoffRow {
            beta,
            success_prob: success,
            conditional_loss: phi.expectation(hs)?,
            test_accuracy: ks.iter().map(|&k| mean_k_accuracy(&h, k)).collect::<qal_core::Result<_>>()?,
        });
    }
    let mut csv = String::from("beta,success_prob,conditional_loss");
    for k in ks {
        csv.push_str(&format!(",test_acc@{k}"));
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!("{},{},{}", fmt(r.beta), fmt(r.success_prob), fmt(r.conditional_loss)));
        for a in &r.test_accuracy {
            csv.push_str(&format!(",{}", fmt(*a)));
        }
        csv.push('\n');
    }
    write_outputs(out, cfg, vec![("tradeoff.csv".into(), csv.into_bytes())])?;
    Ok(rows)
}

pub fn run_spectrum(cfg: &ExperimentConfig, p: &Prepared, out: Option<&Path>) -> Result<SpectrumReport> {
    let report = spectrum(p.hs()?, &default_energy_grid())?;
    let mut eig = String::from("index,energy\n");
    for (i, e) in report.eigenvalues.iter().enumerate() {
        eig.push_str(&format!("{i},{}\n", fmt(*e)));
    }
    write_outputs(
        out,
        cfg,
        vec![
            ("spectrum.csv".into(), report.to_csv().into_bytes()),
            ("eigenvalues.csv".into(), eig.into_bytes()),
            ("spectrum.json".into(), json_bytes(&report.summary_json())?),
        ],
    )?;
    Ok(report)
}

pub struct NoiseRun {
    pub p2: f64,
    pub trace: NoisyTrace,
}

pub fn run_noise(cfg: &ExperimentConfig, p: &Prepared, out: Option<&Path>) -> Result<Vec<NoiseRun>> {
    let spec = cfg.noise.clone().context("config has no noise section")?;
    let tc = train_config(cfg);
    let mut runs = Vec::new();
    let mut csv = String::from("p2,step,train_acc\n");
    for &p2 in &spec.rates {
        let mut model = NoiseModel::with_rates(p2, p2 * spec.p1_ratio)?;
        model.convention = spec.convention;
        let trace = noisy_train(&p.train, &p.encoder, &p.scheme, &tc, &model, spec.eval_every)?;
        for r in &trace.records {
            if let Some(a) = r.train_accuracy {
                csv.push_str(&format!("{p2},{},{}\n", r.step, fmt(a)));
            }
        }
        runs.push(NoiseRun { p2, trace });
    }
    let summary: Vec<_> = runs
        .iter()
        .map(|r| serde_json::json!({ "p2": r.p2, "final_train_accuracy": r.trace.final_accuracy, "acceptance_estimate": r.trace.acceptance_estimate }))
        .collect();
    write_outputs(
        out,
        cfg,
        vec![("noise.csv".into(), csv.into_bytes()), ("noise.json".into(), json_bytes(&summary)?)],
    )?;
    Ok(runs)
}

pub fn run_reuse(
    cfg: &ExperimentConfig,
    p: &Prepared,
    tau: Option<f64>,
    out: Option<&Path>,
) -> Result<(Vec<ReuseEvent>, ReuseSummary)> {
    let spec = cfg.reuse.clone().context("config has no reuse section")?;
    let tau = tau.unwrap_or(spec.tau);
    let mut tc = train_config(cfg);
    tc.steps = spec.max_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(train_seed(cfg));
    let init = PureState::haar_random(p.n_qubits(), &mut rng);
    let events = reusability_run(&p.train, &p.test, &p.encoder, &p.scheme, &tc, tau, spec.predictions, init, &mut rng)?;
    let summary = summarize_reuse(&events);
    let mut csv = String::from("event,step,sample,label,outcome,correct,loss_before,loss_after,recovery_steps\n");
    for (i, e) in events.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{}\n",
            e.step,
            e.sample,
            e.label,
            e.outcome,
            e.correct,
            fmt(e.loss_before),
            fmt(e.loss_after),
            e.recovery_steps.map_or(String::new(), |r| r.to_string())
        ));
    }
    write_outputs(
        out,
        cfg,
        vec![("reuse.csv".into(), csv.into_bytes()), ("reuse.json".into(), json_bytes(&summary)?)],
    )?;
    Ok((events, summary))
}

/// Output directory: the flag, else the config, else `runs/<recipe>`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("runs").join(&cfg.recipe).join(command))
}
