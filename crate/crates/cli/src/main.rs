use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use qal_cli::config::{ExperimentConfig, TradeoffSpec, RECIPES};
use qal_cli::experiments::{self, output_dir};
use qal_cli::{data_root, prepare};
use qal_core::verify::{run_suite, SUITES};

#[derive(Parser)]
#[command(name = "qal", version, about = "Quantum automated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config
    #[arg(long, conflicts_with = "recipe")]
    config: Option<PathBuf>,
    /// Named preset instead of a config file
    #[arg(long)]
    recipe: Option<String>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default runs/<recipe>/<command>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write an accuracy-vs-step curve
    Train(Common),
    /// Oracle sweep over beta: success probability, loss and test accuracy
    Tradeoff {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Spectrum of H_S over the training set
    Spectrum(Common),
    /// Density-matrix training under depolarizing noise
    Noise {
        #[command(flatten)]
        common: Common,
        /// Comma-separated two-qubit rates
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
    },
    /// Prediction with state reuse during training
    Reuse {
        #[command(flatten)]
        common: Common,
        /// Loss threshold that triggers a prediction
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Numerical checks of the lemmas and theorems
    Verify {
        /// Suite name or "all"
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the JSON config of a recipe
    Recipe { name: String },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn threads(n: Option<usize>) -> std::result::Result<(), Failure> {
    if let Some(n) = n {
        usage(rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Into::into))?;
    }
    Ok(())
}

fn load(common: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match (&common.config, &common.recipe) {
        (Some(path), _) => usage(ExperimentConfig::load(path))?,
        (None, Some(name)) => usage(ExperimentConfig::recipe(name))?,
        (None, None) => return Err(Failure::Usage(anyhow::anyhow!("pass --config <path> or --recipe <name>"))),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    threads(common.threads)?;
    Ok(cfg)
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let t0 = Instant::now();
    match cli.command {
        Command::Recipe { name } => {
            let cfg = usage(ExperimentConfig::recipe(&name))?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        }
        Command::Verify { suite, seed, threads: t } => {
            threads(t)?;
            if suite != "all" && !SUITES.contains(&suite.as_str()) {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "unknown suite '{suite}' (known: all, {})",
                    SUITES.join(", ")
                )));
            }
            let checks = runtime(run_suite(&suite, seed).map_err(Into::into))?;
            println!("{:<16} {:<52} {:>12} {:>12}  result", "suite", "check", "value", "threshold");
            for c in &checks {
                println!(
                    "{:<16} {:<52} {:>12.4e} {:>12.4e}  {}  {}",
                    c.suite,
                    c.name,
                    c.value,
                    c.threshold,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.detail
                );
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!("{failed} check(s) failed")));
            }
        }
        Command::Train(common) => {
            let cfg = load(&common)?;
            let out = output_dir(common.out, &cfg, "train");
            let p = runtime(prepare(&cfg, &data_root()))?;
            let o = runtime(experiments::run_train(&cfg, &p, Some(&out)))?;
            let r = &o.report;
            println!(
                "train loss {:.4}  train acc {:.4}  test acc {:.4}  gap {:.4}",
                r.train_loss, r.train_accuracy, r.test_accuracy, r.gap
            );
            for k in &r.k_accuracy {
                println!("K = {:<4} test accuracy {:.4}", k.k.to_string(), k.accuracy);
            }
            println!("acceptance estimate {:.4e}; outputs in {}", o.trace.acceptance_estimate, out.display());
        }
        Command::Tradeoff { common, beta_max, points } => {
            let mut cfg = load(&common)?;
            let mut spec = cfg.tradeoff.clone().unwrap_or(TradeoffSpec { beta_max: 60.0, points: 61 });
            spec.beta_max = beta_max.unwrap_or(spec.beta_max);
            spec.points = points.unwrap_or(spec.points);
            cfg.tradeoff = Some(spec);
            usage(cfg.validate())?;
            let out = output_dir(common.out, &cfg, "tradeoff");
            let p = runtime(prepare(&cfg, &data_root()))?;
            let rows = runtime(experiments::run_tradeoff(&cfg, &p, Some(&out)))?;
            for r in &rows {
                let accs: Vec<String> = r.test_accuracy.iter().map(|a| format!("{a:.4}")).collect();
                println!(
                    "beta {:>8.3}  success {:.4e}  loss {:.4}  acc {}",
                    r.beta,
                    r.success_prob,
                    r.conditional_loss,
                    accs.join(" ")
                );
            }
        }
        Command::Spectrum(common) => {
            let cfg = load(&common)?;
            let out = output_dir(common.out, &cfg, "spectrum");
            let p = runtime(prepare(&cfg, &data_root()))?;
            let r = runtime(experiments::run_spectrum(&cfg, &p, Some(&out)))?;
            println!("{}", serde_json::to_string_pretty(&r.summary_json()).expect("summary serializes"));
        }
        Command::Noise { common, rates } => {
            let mut cfg = load(&common)?;
            if let Some(rates) = rates {
                let mut spec = cfg.noise.clone().unwrap_or(qal_cli::config::NoiseSpec {
                    rates: vec![],
                    p1_ratio: 0.1,
                    convention: Default::default(),
                    eval_every: 10,
                });
                spec.rates = rates;
                cfg.noise = Some(spec);
            }
            usage(cfg.validate())?;
            let out = output_dir(common.out, &cfg, "noise");
            let p = runtime(prepare(&cfg, &data_root()))?;
            for r in runtime(experiments::run_noise(&cfg, &p, Some(&out)))? {
                println!("p2 {:<8} final train accuracy {:.4}", r.p2, r.trace.final_accuracy);
            }
        }
        Command::Reuse { common, tau } => {
            let cfg = load(&common)?;
            let out = output_dir(common.out, &cfg, "reuse");
            let p = runtime(prepare(&cfg, &data_root()))?;
            let (_, s) = runtime(experiments::run_reuse(&cfg, &p, tau, Some(&out)))?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }
    }
    eprintln!("done in {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            eprintln!("known recipes: {}", RECIPES.join(", "));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
