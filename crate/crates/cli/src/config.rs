//! Experiment configuration and the named recipes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qal_core::data::AngleScale;
use qal_core::eval::Votes;
use qal_core::noise::DepolarizingConvention;
use qal_core::trainer::{InitPolicy, TrainMode};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const RECIPES: &[&str] =
    &["fashion-mnist-10q", "mnist-10q", "aubry-andre-10q", "cluster-ising-10q", "fashion-mnist-5q-noise", "toy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub recipe: String,
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub train: TrainSpec,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<TradeoffSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse: Option<ReuseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// IDX image files under `<data root>/<name>/`.
    Idx {
        name: String,
        n_qubits: usize,
        classes: Vec<u8>,
        side: usize,
        #[serde(default)]
        scale: AngleScale,
        /// Qubits read out for the label (default: the first ones)
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_qubits: Option<Vec<usize>>,
        train_size: usize,
        test_size: usize,
    },
    AubryAndre {
        n_qubits: usize,
        time: f64,
        train_size: usize,
        test_size: usize,
    },
    ClusterIsing {
        data_qubits: usize,
        model_qubits: usize,
        terms: usize,
        locality: usize,
        time: f64,
        train_size: usize,
        test_size: usize,
    },
    /// Random angles, alternating labels.
    Toy {
        n_qubits: usize,
        train_size: usize,
        test_size: usize,
    },
}

impl DatasetSpec {
    pub fn sizes(&self) -> (usize, usize) {
        match *self {
            DatasetSpec::Idx { train_size, test_size, .. }
            | DatasetSpec::AubryAndre { train_size, test_size, .. }
            | DatasetSpec::ClusterIsing { train_size, test_size, .. }
            | DatasetSpec::Toy { train_size, test_size, .. } => (train_size, test_size),
        }
    }
}

fn default_max_attempts() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    pub eta: f64,
    pub steps: usize,
    #[serde(default = "default_init")]
    pub init: InitPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_threshold: Option<f64>,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_mode() -> TrainMode {
    TrainMode::Exact
}

fn default_init() -> InitPolicy {
    InitPolicy::HaarRandomPure
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub ks: Vec<Votes>,
    /// Evaluate every this many steps.
    pub every: usize,
    pub delta: f64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self { ks: vec![Votes::Finite(1), Votes::Finite(29), Votes::Infinite], every: 10, delta: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub rates: Vec<f64>,
    #[serde(default = "default_p1_ratio")]
    pub p1_ratio: f64,
    #[serde(default)]
    pub convention: DepolarizingConvention,
    #[serde(default = "default_noise_eval")]
    pub eval_every: usize,
}

fn default_p1_ratio() -> f64 {
    0.1
}

fn default_noise_eval() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSpec {
    pub beta_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReuseSpec {
    pub tau: f64,
    pub predictions: usize,
    pub max_steps: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        let (train, test) = self.dataset.sizes();
        if train == 0 || test == 0 {
            bail!("train_size and test_size must be positive");
        }
        if !(self.train.eta > 0.0 && self.train.eta <= 1.0) {
            bail!("eta {} outside (0, 1]", self.train.eta);
        }
        if !(self.eval.delta > 0.0 && self.eval.delta <= 1.0) {
            bail!("delta {} outside (0, 1]", self.eval.delta);
        }
        if let Some(n) = &self.noise {
            if n.rates.iter().any(|p| !(0.0..=1.0).contains(p)) || !(0.0..=1.0).contains(&n.p1_ratio) {
                bail!("noise rates must lie in [0, 1]");
            }
        }
        if let Some(t) = &self.tradeoff {
            if t.points < 2 || t.beta_max <= 0.0 {
                bail!("tradeoff needs at least two points and beta_max > 0");
            }
        }
        Ok(())
    }

    pub fn recipe(name: &str) -> Result<Self> {
        let idx = |name: &str, classes: Vec<u8>| DatasetSpec::Idx {
            name: name.into(),
            n_qubits: 10,
            classes,
            side: 10,
            scale: AngleScale::Factor(0.5),
            label_qubits: Some(vec![9]),
            train_size: 500,
            test_size: 500,
        };
        let base = |recipe: &str, dataset: DatasetSpec, steps: usize| ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            recipe: recipe.into(),
            seed: 20250101,
            dataset,
            train: TrainSpec {
                mode: TrainMode::Exact,
                eta: 0.1,
                steps,
                init: InitPolicy::HaarRandomPure,
                loss_threshold: None,
                max_attempts: 1000,
            },
            eval: EvalSpec::default(),
            noise: None,
            tradeoff: Some(TradeoffSpec { beta_max: 60.0, points: 61 }),
            reuse: None,
            output_dir: None,
        };
        let cfg = match name {
            // trouser vs ankle boot
            "fashion-mnist-10q" => {
                let mut c = base(name, idx("fashion-mnist", vec![1, 9]), 600);
                c.reuse = Some(ReuseSpec { tau: 0.15, predictions: 50, max_steps: 3000 });
                c
            }
            "mnist-10q" => base(name, idx("mnist", vec![1, 9]), 600),
            "aubry-andre-10q" => {
                let mut c = base(
                    name,
                    DatasetSpec::AubryAndre { n_qubits: 10, time: 2.0, train_size: 500, test_size: 500 },
                    400,
                );
                c.eval.every = 25;
                c
            }
            // evolution circuits are applied matrix-free, so the curve is evaluated sparsely
            "cluster-ising-10q" => {
                let mut c = base(
                    name,
                    DatasetSpec::ClusterIsing {
                        data_qubits: 10,
                        model_qubits: 8,
                        terms: 200,
                        locality: 4,
                        time: 1.0,
                        train_size: 300,
                        test_size: 500,
                    },
                    400,
                );
                c.eval.every = 50;
                c
            }
            "fashion-mnist-5q-noise" => {
                let mut c = base(
                    name,
                    DatasetSpec::Idx {
                        name: "fashion-mnist".into(),
                        n_qubits: 5,
                        classes: vec![1, 9],
                        side: 5,
                        scale: AngleScale::Unit,
                        label_qubits: Some(vec![4]),
                        train_size: 500,
                        test_size: 500,
                    },
                    300,
                );
                c.train.eta = 0.2;
                c.noise = Some(NoiseSpec {
                    rates: vec![0.0, 0.001, 0.005, 0.01, 0.02],
                    p1_ratio: 0.1,
                    convention: DepolarizingConvention::PauliMixing,
                    eval_every: 10,
                });
                c.reuse = Some(ReuseSpec { tau: 0.15, predictions: 50, max_steps: 3000 });
                c
            }
            "toy" => {
                let mut c = base(name, DatasetSpec::Toy { n_qubits: 2, train_size: 2, test_size: 2 }, 20);
                c.eval.every = 1;
                c.tradeoff = Some(TradeoffSpec { beta_max: 5.0, points: 11 });
                c.noise = Some(NoiseSpec {
                    rates: vec![0.0, 0.01],
                    p1_ratio: 0.1,
                    convention: DepolarizingConvention::PauliMixing,
                    eval_every: 5,
                });
                c.reuse = Some(ReuseSpec { tau: 0.5, predictions: 5, max_steps: 200 });
                c
            }
            other => bail!("unknown recipe '{other}' (known: {})", RECIPES.join(", ")),
        };
        Ok(cfg)
    }
}

/// Dataset root: `QAL_DATA_DIR`, else `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os("QAL_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_round_trip() {
        for r in RECIPES {
            let c = ExperimentConfig::recipe(r).unwrap();
            c.validate().unwrap();
            let text = serde_json::to_string_pretty(&c).unwrap();
            let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, c);
        }
        assert!(ExperimentConfig::recipe("nope").is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = serde_json::to_value(ExperimentConfig::recipe("toy").unwrap()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ExperimentConfig>(v.clone()).is_err());
        v.as_object_mut().unwrap().remove("extra");
        v["dataset"]["bogus"] = serde_json::json!(true);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let mut c = ExperimentConfig::recipe("toy").unwrap();
        c.schema_version = 2;
        assert!(c.validate().is_err());
    }
}
