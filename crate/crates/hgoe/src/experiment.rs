//! Per-seed pipeline, multi-seed reports and ablation grids.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use hgoe_core::detector::{self, ScoreRecord, ScoringModel, TrainConfig, TrainState};
use hgoe_core::embed::{graph_summary_embedding, kmeans, GraphEmbedding, SubgroupAssignment};
use hgoe_core::graph::{assemble_test_set, split_in_distribution, Graph, GraphDataset, Label, SplitSpec};
use hgoe_core::graphon::{common_resolution, estimate_graphon_usvt, Graphon};
use hgoe_core::metrics::auc;
use hgoe_core::synth::{
    assemble_oe_set, build_external_pool, plan_mixups, synthesize_outlier, MixupSpec, OutlierPool, OutlierSet,
    SynthesisConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, ExperimentConfig, GAMMA_GRID, LAMBDA_GRID};
use crate::error::{Error, Result};
use crate::io::{load_json_dataset, load_tu_dataset};

/// The ID, test-OOD and auxiliary datasets an experiment refers to.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub id: GraphDataset,
    pub ood: GraphDataset,
    pub auxiliary: Vec<GraphDataset>,
}

/// Resolves `name` under `root` as `NAME.json`, `NAME/NAME_A.txt` or
/// `NAME_A.txt`, in that order.
pub fn load_named_dataset(root: &Path, name: &str, policy: crate::io::FeaturePolicy) -> Result<GraphDataset> {
    let json = root.join(format!("{name}.json"));
    let dataset = if json.is_file() {
        load_json_dataset(&json)?
    } else if root.join(name).join(format!("{name}_A.txt")).is_file() {
        load_tu_dataset(&root.join(name), name, policy)?
    } else if root.join(format!("{name}_A.txt")).is_file() {
        load_tu_dataset(root, name, policy)?
    } else {
        return Err(Error::Config(format!(
            "dataset '{name}' not found under {} (expected {name}.json or {name}/{name}_A.txt)",
            root.display()
        )));
    };
    if dataset.name() != name {
        return Err(Error::Config(format!("{} declares name '{}', expected '{name}'", json.display(), dataset.name())));
    }
    Ok(dataset)
}

impl Datasets {
    /// Generates the benchmark when configured, otherwise reads from `data_root`.
    pub fn load(cfg: &ExperimentConfig, data_root: Option<&Path>) -> Result<Self> {
        if let Some(bench) = &cfg.benchmark {
            let data = bench.generate()?;
            let all = [data.id, data.ood, data.pool];
            let find = |name: &str| {
                all.iter()
                    .find(|d| d.name() == name)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("the benchmark provides no dataset '{name}'")))
            };
            return Ok(Self {
                id: find(&cfg.id_dataset)?,
                ood: find(&cfg.ood_dataset)?,
                auxiliary: cfg.auxiliary_datasets.iter().map(|n| find(n)).collect::<Result<_>>()?,
            });
        }
        let root = data_root.ok_or_else(|| {
            Error::Config(format!("no data root: pass --data-root or set {}", crate::config::DATA_ROOT_ENV))
        })?;
        let load = |name: &str| load_named_dataset(root, name, cfg.feature_policy);
        Ok(Self {
            id: load(&cfg.id_dataset)?,
            ood: load(&cfg.ood_dataset)?,
            auxiliary: cfg.auxiliary_datasets.iter().map(|n| load(n)).collect::<Result<_>>()?,
        })
    }
}

pub fn embed_graphs(cfg: &ExperimentConfig, graphs: &[Graph]) -> Vec<GraphEmbedding> {
    graphs.par_iter().map(|g| graph_summary_embedding(g, &cfg.embedding)).collect()
}

pub struct SeedSplit {
    pub split: SplitSpec,
    pub train: Vec<Graph>,
    pub test_id: Vec<Graph>,
}

/// Subgroup graphons and the outliers drawn from them.
pub struct Synthesis {
    pub assignment: Option<SubgroupAssignment>,
    pub resolution: usize,
    pub graphons: Vec<Graphon>,
    pub mixups: Vec<MixupSpec>,
    pub outliers: OutlierSet,
}

pub struct Trained {
    pub model: ScoringModel,
    pub state: TrainState,
}

pub struct Evaluation {
    pub auc: f64,
    pub records: Vec<ScoreRecord>,
}

/// Pipeline stages for one configuration. The configuration's ablation is
/// applied on construction.
pub struct Pipeline<'a> {
    pub config: ExperimentConfig,
    pub data: &'a Datasets,
    digest: String,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &ExperimentConfig, data: &'a Datasets) -> Result<Self> {
        config.validate()?;
        if config.ablation.is_sweep() {
            return Err(Error::Config(format!(
                "ablation {:?} is a grid; expand it with grid_points first",
                config.ablation
            )));
        }
        if data.id.feature_dim() != data.ood.feature_dim() {
            return Err(hgoe_core::Error::Dimension { expected: data.id.feature_dim(), found: data.ood.feature_dim() }.into());
        }
        Ok(Self { config: config.effective(), data, digest: config.digest() })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn split(&self, seed: u64) -> Result<SeedSplit> {
        let split = split_in_distribution(self.data.id.len(), self.config.train_fraction, seed)?;
        let train = self.data.id.select(&split.train);
        let test_id = self.data.id.select(&split.test_id);
        Ok(SeedSplit { split, train, test_id })
    }

    pub fn subgroups(&self, seed: u64, train_embeddings: &[GraphEmbedding]) -> Result<SubgroupAssignment> {
        let points: Vec<&[f64]> = train_embeddings.iter().map(|e| e.as_slice()).collect();
        Ok(kmeans(&points, &self.config.subgroups, seed)?)
    }

    fn synthesis_config(&self, seed: u64, train_count: usize) -> SynthesisConfig {
        let s = &self.config.synthesis;
        SynthesisConfig {
            lambda_range: s.lambda_range,
            total_count: s.total_count.unwrap_or(train_count),
            ext_int_ratio: s.ext_int_ratio,
            seed,
        }
    }

    pub fn pool(&self) -> Result<OutlierPool> {
        let aux: Vec<&GraphDataset> = self.data.auxiliary.iter().collect();
        Ok(build_external_pool(
            &aux,
            self.data.id.name(),
            self.data.ood.name(),
            self.data.id.feature_dim(),
            self.config.embedding.diffusion_steps,
        )?)
    }

    /// Builds the OE set; empty under the `no_oe` ablation.
    pub fn synthesize(&self, seed: u64, train: &[Graph], train_embeddings: &[GraphEmbedding]) -> Result<Synthesis> {
        let mut out = Synthesis {
            assignment: None,
            resolution: 0,
            graphons: Vec::new(),
            mixups: Vec::new(),
            outliers: OutlierSet::empty(),
        };
        if self.config.ablation == Ablation::NoOe {
            return Ok(out);
        }
        let synth = self.synthesis_config(seed, train.len());
        synth.validate()?;
        let pool = self.pool()?;
        let (_, n_int) = synth.split_counts();
        let mut internal = Vec::new();
        if n_int > 0 {
            let assignment = self.subgroups(seed, train_embeddings)?;
            out.resolution =
                common_resolution(train.iter().map(Graph::node_count), self.config.graphon.max_resolution);
            out.graphons = (0..assignment.k)
                .into_par_iter()
                .map(|c| {
                    let members: Vec<&Graph> = assignment.members(c).into_iter().map(|i| &train[i]).collect();
                    estimate_graphon_usvt(&members, out.resolution, &self.config.graphon.usvt)
                })
                .collect::<hgoe_core::Result<_>>()?;
            out.mixups = plan_mixups(out.graphons.len(), n_int, &synth)?;
            internal = out
                .mixups
                .par_iter()
                .map(|spec| synthesize_outlier(&out.graphons, spec, &synth, &pool))
                .collect::<hgoe_core::Result<_>>()?;
            out.assignment = Some(assignment);
        }
        out.outliers = assemble_oe_set(&pool, &internal, &synth)?;
        Ok(out)
    }

    pub fn train(&self, seed: u64, train_embeddings: &[GraphEmbedding], oe_embeddings: &[GraphEmbedding]) -> Result<Trained> {
        let t = &self.config.training;
        let model = detector::init_model(
            self.config.embedding,
            self.data.id.feature_dim(),
            t.hidden_dim,
            seed,
            train_embeddings,
        )?;
        let train_cfg = TrainConfig { epochs: t.epochs, lr: t.lr, batch_size: t.batch_size, seed };
        let (model, state) = detector::train(model, train_embeddings, oe_embeddings, &self.config.loss, &train_cfg)?;
        Ok(Trained { model, state })
    }

    /// Scores `test_id` plus an equal number of sampled OOD graphs.
    pub fn evaluate(&self, seed: u64, model: &ScoringModel, test_id: &[Graph]) -> Result<Evaluation> {
        let test = assemble_test_set(test_id, &self.data.ood, seed)?;
        let mut records = detector::score_dataset(model, &test.graphs)?;
        for (r, &l) in records.iter_mut().zip(&test.labels) {
            r.label = Some(l);
        }
        let scores: Vec<f64> = records.iter().map(|r| r.raw).collect();
        let labels: Vec<Label> = test.labels.clone();
        Ok(Evaluation { auc: auc(&scores, &labels)?, records })
    }

    /// Every stage for one seed.
    pub fn run_seed(&self, seed: u64) -> Result<SeedOutcome> {
        let start = Instant::now();
        let split = self.split(seed)?;
        let train_embeddings = embed_graphs(&self.config, &split.train);
        let synthesis = self.synthesize(seed, &split.train, &train_embeddings)?;
        let oe_embeddings = embed_graphs(&self.config, &synthesis.outliers.graphs);
        let trained = self.train(seed, &train_embeddings, &oe_embeddings)?;
        let eval = self.evaluate(seed, &trained.model, &split.test_id)?;
        log::info!("seed {seed}: AUC {:.4} ({} OE graphs)", eval.auc, synthesis.outliers.len());
        Ok(SeedOutcome {
            seed,
            auc: eval.auc,
            records: eval.records,
            loss_history: trained.state.loss_history,
            runtime_s: start.elapsed().as_secs_f64(),
        })
    }
}

pub struct SeedOutcome {
    pub seed: u64,
    pub auc: f64,
    pub records: Vec<ScoreRecord>,
    pub loss_history: Vec<detector::EpochRecord>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAuc {
    pub seed: u64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Serialized summary; identical configurations give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_digest: String,
    pub label: String,
    pub per_seed: Vec<SeedAuc>,
    pub mean: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTiming {
    pub seed: u64,
    pub runtime_s: f64,
}

/// Wall-clock times, kept apart from the report so the report is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub config_digest: String,
    pub per_seed: Vec<SeedTiming>,
}

pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub timing: TimingReport,
    pub outcomes: Vec<SeedOutcome>,
}

/// Mean and population standard deviation; both exact when all values agree.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let first = values[0];
    let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
    // Σ_{i<j} (v_i − v_j)² / n² equals the population variance
    let mut pair_sum = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            pair_sum += (a - b) * (a - b);
        }
    }
    (mean, (pair_sum / (n * n)).sqrt())
}

/// Runs every seed in parallel and aggregates in seed order. Failed seeds are
/// listed in the report; at least one must succeed.
pub fn run_experiment(config: &ExperimentConfig, data: &Datasets, label: &str) -> Result<ExperimentRun> {
    let pipeline = Pipeline::new(config, data)?;
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let results: Vec<(u64, Result<SeedOutcome>)> = seeds.par_iter().map(|&s| (s, pipeline.run_seed(s))).collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    let mut last_error = None;
    for (seed, result) in results {
        match result {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                failures.push(SeedFailure { seed, error: e.to_string() });
                last_error = Some(e);
            }
        }
    }
    if outcomes.is_empty() {
        return Err(last_error.expect("at least one seed ran"));
    }
    let aucs: Vec<f64> = outcomes.iter().map(|o| o.auc).collect();
    let (mean, std) = mean_std(&aucs);
    let digest = pipeline.digest().to_string();
    Ok(ExperimentRun {
        report: ExperimentReport {
            config_digest: digest.clone(),
            label: label.to_string(),
            per_seed: outcomes.iter().map(|o| SeedAuc { seed: o.seed, auc: o.auc }).collect(),
            mean,
            std,
            failures,
        },
        timing: TimingReport {
            config_digest: digest,
            per_seed: outcomes.iter().map(|o| SeedTiming { seed: o.seed, runtime_s: o.runtime_s }).collect(),
        },
        outcomes,
    })
}

/// Named ablation grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// full, no_internal, no_external, no_oe
    Variants,
    Tau,
    Gamma,
    Lambda,
}

fn ablation_label(a: Ablation) -> String {
    serde_json::to_value(a).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// One configuration per grid point, labelled for file names.
pub fn grid_points(base: &ExperimentConfig, grid: Grid) -> Vec<(String, ExperimentConfig)> {
    let with = |ablation: Ablation| {
        let mut c = base.clone();
        c.ablation = ablation;
        (ablation_label(ablation), c)
    };
    match grid {
        Grid::Variants => {
            [Ablation::Full, Ablation::NoInternal, Ablation::NoExternal, Ablation::NoOe].map(with).to_vec()
        }
        Grid::Tau => [Ablation::TauMin, Ablation::TauMean, Ablation::TauMax, Ablation::TauNone].map(with).to_vec(),
        Grid::Gamma => GAMMA_GRID
            .iter()
            .map(|&g| {
                let mut c = base.clone();
                c.ablation = Ablation::Full;
                c.loss.gamma = g;
                (format!("gamma_{g:.1}"), c)
            })
            .collect(),
        Grid::Lambda => LAMBDA_GRID
            .iter()
            .map(|&r| {
                let mut c = base.clone();
                c.ablation = Ablation::Full;
                c.synthesis.lambda_range = r;
                (format!("lambda_{}_{}", r[0], r[1]), c)
            })
            .collect(),
    }
}

/// Grid implied by the configuration's own ablation setting.
pub fn expand(config: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    match config.ablation {
        Ablation::GammaSweep => grid_points(config, Grid::Gamma),
        Ablation::LambdaRangeSweep => grid_points(config, Grid::Lambda),
        a => vec![(ablation_label(a), config.clone())],
    }
}

/// Fixed-width summary table.
pub fn format_table(reports: &[ExperimentReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>8} {:>8} {:>6}", "run", "mean", "std", "seeds");
    for r in reports {
        let _ = writeln!(out, "{:<24} {:>8.4} {:>8.4} {:>6}", r.label, r.mean, r.std, r.per_seed.len());
    }
    out
}
