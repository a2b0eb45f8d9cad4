//! Experiment configuration, `key=value` overrides and digests.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use hgoe_core::detector::{LossParams, TauStrategy};
use hgoe_core::embed::{EmbeddingConfig, KMeansConfig};
use hgoe_core::graphon::UsvtConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::benchmark::{self, SbmBenchmark};
use crate::error::{Error, Result};
use crate::io::FeaturePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    NoInternal,
    NoExternal,
    NoOe,
    TauMin,
    TauMean,
    TauMax,
    TauNone,
    GammaSweep,
    LambdaRangeSweep,
}

impl Ablation {
    pub fn is_sweep(self) -> bool {
        matches!(self, Ablation::GammaSweep | Ablation::LambdaRangeSweep)
    }
}

pub const GAMMA_GRID: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const LAMBDA_GRID: [[f64; 2]; 4] = [[0.01, 1.0], [0.1, 0.9], [0.3, 0.7], [0.4, 0.6]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphonSettings {
    /// Upper bound on the common graphon resolution.
    pub max_resolution: usize,
    pub usvt: UsvtConfig,
}

impl Default for GraphonSettings {
    fn default() -> Self {
        Self { max_resolution: 100, usvt: UsvtConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSettings {
    pub lambda_range: [f64; 2],
    /// External : internal.
    pub ext_int_ratio: [u32; 2],
    /// OE set size; `None` uses the number of ID training graphs.
    pub total_count: Option<usize>,
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self { lambda_range: [0.01, 1.0], ext_int_ratio: [1, 1], total_count: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self { hidden_dim: 32, epochs: 100, lr: 1e-2, batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id_dataset: String,
    pub ood_dataset: String,
    pub auxiliary_datasets: Vec<String>,
    /// Generated datasets; when set, the dataset names must be the benchmark's.
    pub benchmark: Option<SbmBenchmark>,
    pub feature_policy: FeaturePolicy,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub embedding: EmbeddingConfig,
    pub subgroups: KMeansConfig,
    pub graphon: GraphonSettings,
    pub synthesis: SynthesisSettings,
    pub loss: LossParams,
    pub training: TrainingSettings,
    pub ablation: Ablation,
    pub histogram_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id_dataset: String::new(),
            ood_dataset: String::new(),
            auxiliary_datasets: Vec::new(),
            benchmark: None,
            feature_policy: FeaturePolicy::Auto,
            seeds: vec![0],
            train_fraction: 0.9,
            embedding: EmbeddingConfig::default(),
            subgroups: KMeansConfig::default(),
            graphon: GraphonSettings::default(),
            synthesis: SynthesisSettings::default(),
            loss: LossParams::default(),
            training: TrainingSettings::default(),
            ablation: Ablation::Full,
            histogram_bins: 20,
        }
    }
}

impl ExperimentConfig {
    /// The bundled SBM benchmark with its dataset names filled in.
    pub fn sbm_benchmark() -> Self {
        let mut cfg = Self::default();
        cfg.use_benchmark(SbmBenchmark::default());
        cfg
    }

    pub fn use_benchmark(&mut self, bench: SbmBenchmark) {
        self.id_dataset = benchmark::ID_NAME.into();
        self.ood_dataset = benchmark::OOD_NAME.into();
        self.auxiliary_datasets = vec![benchmark::POOL_NAME.into()];
        self.benchmark = Some(bench);
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.id_dataset.is_empty() || self.ood_dataset.is_empty() {
            return Err(Error::Config("id_dataset and ood_dataset must be set".into()));
        }
        let mut names = BTreeSet::new();
        for name in [&self.id_dataset, &self.ood_dataset].into_iter().chain(&self.auxiliary_datasets) {
            if !names.insert(name) {
                return Err(Error::Config(format!("dataset '{name}' is referenced twice")));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} is outside (0, 1)", self.train_fraction)));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        self.loss.validate()?;
        Ok(())
    }

    /// Settings after applying a non-sweep ablation: the ratio, `β` and `τ`
    /// strategy it implies.
    pub fn effective(&self) -> Self {
        let mut cfg = self.clone();
        match self.ablation {
            Ablation::NoInternal => cfg.synthesis.ext_int_ratio = [1, 0],
            Ablation::NoExternal => cfg.synthesis.ext_int_ratio = [0, 1],
            Ablation::NoOe => cfg.loss.beta = 0.0,
            Ablation::TauMin => cfg.loss.tau_strategy = TauStrategy::Min,
            Ablation::TauMean => cfg.loss.tau_strategy = TauStrategy::Mean,
            Ablation::TauMax => cfg.loss.tau_strategy = TauStrategy::Max,
            Ablation::TauNone => cfg.loss.tau_strategy = TauStrategy::None,
            Ablation::Full | Ablation::GammaSweep | Ablation::LambdaRangeSweep => {}
        }
        cfg
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    /// Applies `key=value` overrides, where `key` is a dotted path into the
    /// JSON form and `value` is JSON (bare words are taken as strings).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut value = serde_json::to_value(self).expect("config serializes");
        if self.benchmark.is_none() && overrides.iter().any(|o| o.as_ref().trim_start().starts_with("benchmark.")) {
            value["benchmark"] = serde_json::to_value(SbmBenchmark::default()).expect("benchmark serializes");
        }
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{item}' is not KEY=VALUE")))?;
            set_path(&mut value, key.trim(), parse_value(raw.trim()))?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("after overrides: {e}")))
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, key: &str, new: Value) -> Result<()> {
    let unknown = || Error::Config(format!("unknown configuration key '{key}'"));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            Value::Object(map) => map.get_mut(*part).ok_or_else(unknown)?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
        if last {
            *node = new;
            return Ok(());
        }
    }
    Err(unknown())
}

/// Experiment settings plus where to read data and write artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub data_root: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

pub const DATA_ROOT_ENV: &str = "HGOE_DATA_ROOT";
