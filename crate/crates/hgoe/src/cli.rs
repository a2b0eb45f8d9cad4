//! Command-line entry point.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::benchmark::SbmBenchmark;
use crate::config::{ExperimentConfig, RunConfig, DATA_ROOT_ENV};
use crate::error::{Error, Result};
use crate::experiment::{embed_graphs, expand, format_table, grid_points, run_experiment, Datasets, Grid, Pipeline};
use crate::export::{
    export_embeddings, export_graphon_heatmap, export_loss_history, export_score_histogram, read_json, write_json,
    Checkpoint, GraphonMetadata,
};
use crate::io::{load_json_dataset, load_tu_dataset, write_json_dataset, write_outlier_set, FeaturePolicy};

#[derive(Debug, Parser)]
#[command(name = "hgoe", version, about = "Hybrid graph outlier exposure for graph-level OOD detection")]
struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchmarkKind {
    Sbm,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value by dotted key, e.g. `loss.gamma=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated seeds replacing the configured ones.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[arg(long, default_value = "hgoe-out")]
    output: PathBuf,
    /// Use generated datasets instead of files.
    #[arg(long, value_enum)]
    benchmark: Option<BenchmarkKind>,
    /// Directory holding datasets; falls back to $HGOE_DATA_ROOT.
    #[arg(long)]
    data_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    Tu,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridArg {
    Variants,
    Tau,
    Gamma,
    Lambda,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a TU directory or JSON file and write it as a JSON dataset.
    Ingest {
        /// TU directory or JSON file; omit with --benchmark.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dataset name (the TU file prefix).
        #[arg(long)]
        name: Option<String>,
        #[arg(long, value_enum)]
        format: Option<InputFormat>,
        #[arg(long, value_enum, default_value = "auto")]
        feature_policy: FeaturePolicy,
        #[command(flatten)]
        common: Common,
    },
    /// Embed and cluster the ID training graphs.
    Subgroups(Common),
    /// Build the outlier pool, estimate graphons and synthesize outliers.
    Synth(Common),
    /// Fit the scoring model.
    Train(Common),
    /// Score the test set of the checkpoint's seed.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline for every seed.
    Run(Common),
    /// Full pipeline for every point of an ablation grid.
    Ablate {
        #[arg(long, value_enum)]
        grid: GridArg,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let run = self.resolve_unchecked()?;
        run.experiment.validate()?;
        Ok(run)
    }

    fn resolve_unchecked(&self) -> Result<RunConfig> {
        let mut experiment = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.benchmark.is_some() {
            let bench = experiment.benchmark.clone().unwrap_or_default();
            experiment.use_benchmark(bench);
        }
        let mut experiment = experiment.with_overrides(&self.overrides)?;
        if let Some(seeds) = &self.seed_list {
            experiment.seeds = seeds.clone();
        }
        let data_root = self.data_root.clone().or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from));
        std::fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        Ok(RunConfig { experiment, data_root, output_dir: self.output.clone(), jobs: self.jobs })
    }
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
        None => f(),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, name, format, feature_policy, common } => {
            ingest(input, name, format, feature_policy, &common)
        }
        Command::Subgroups(c) => staged(&c, subgroups),
        Command::Synth(c) => staged(&c, synth),
        Command::Train(c) => staged(&c, train),
        Command::Eval { checkpoint, common } => {
            let run = common.resolve()?;
            with_jobs(run.jobs, || {
                let data = Datasets::load(&run.experiment, run.data_root.as_deref())?;
                let config = expand(&run.experiment).swap_remove(0).1;
                eval(&Pipeline::new(&config, &data)?, &run, &checkpoint)
            })
        }
        Command::Run(c) => {
            let run = c.resolve()?;
            with_jobs(run.jobs, || run_command(&run))
        }
        Command::Ablate { grid, common } => {
            let run = common.resolve()?;
            let grid = match grid {
                GridArg::Variants => Grid::Variants,
                GridArg::Tau => Grid::Tau,
                GridArg::Gamma => Grid::Gamma,
                GridArg::Lambda => Grid::Lambda,
            };
            with_jobs(run.jobs, || {
                let data = Datasets::load(&run.experiment, run.data_root.as_deref())?;
                run_points(&run, &data, grid_points(&run.experiment, grid))
            })
        }
    }
}

fn ingest(
    input: Option<PathBuf>,
    name: Option<String>,
    format: Option<InputFormat>,
    policy: FeaturePolicy,
    common: &Common,
) -> Result<()> {
    let run = common.resolve_unchecked()?;
    let digest = run.experiment.digest();
    let datasets = if common.benchmark.is_some() {
        let data = run.experiment.benchmark.clone().unwrap_or_else(SbmBenchmark::default).generate()?;
        vec![data.id, data.ood, data.pool]
    } else {
        let input = input.ok_or_else(|| Error::Config("ingest needs --input or --benchmark".into()))?;
        let format = format.unwrap_or(if input.is_dir() { InputFormat::Tu } else { InputFormat::Json });
        let dataset = match format {
            InputFormat::Json => load_json_dataset(&input)?,
            InputFormat::Tu => {
                let name = match name {
                    Some(n) => n,
                    None => input
                        .file_name()
                        .and_then(|n| n.to_str())
                        .ok_or_else(|| Error::Config("pass --name for this TU directory".into()))?
                        .to_string(),
                };
                load_tu_dataset(&input, &name, policy)?
            }
        };
        vec![dataset]
    };
    for d in &datasets {
        let path = run.output_dir.join(format!("{}.json", d.name()));
        write_json_dataset(&path, d, Some(&digest))?;
        println!("{}: {} graphs, feature_dim {}, mean nodes {:.2}", d.name(), d.len(), d.feature_dim(), d.mean_node_count());
    }
    Ok(())
}

/// Runs `stage` for every seed in parallel after loading the data.
fn staged(common: &Common, stage: impl Fn(&Pipeline, &RunConfig, u64) -> Result<()> + Sync) -> Result<()> {
    let run = common.resolve()?;
    with_jobs(run.jobs, || {
        let data = Datasets::load(&run.experiment, run.data_root.as_deref())?;
        let config = expand(&run.experiment).swap_remove(0).1;
        let pipeline = Pipeline::new(&config, &data)?;
        run.experiment.seeds.par_iter().try_for_each(|&seed| stage(&pipeline, &run, seed))
    })
}

#[derive(Serialize)]
struct SubgroupsArtifact<'a> {
    config_digest: &'a str,
    seed: u64,
    train_indices: &'a [usize],
    assignment: &'a hgoe_core::embed::SubgroupAssignment,
}

fn subgroups(p: &Pipeline, run: &RunConfig, seed: u64) -> Result<()> {
    let split = p.split(seed)?;
    let embeddings = embed_graphs(&p.config, &split.train);
    let assignment = p.subgroups(seed, &embeddings)?;
    let out = &run.output_dir;
    export_embeddings(&split.split.train, &embeddings, &out.join(format!("embeddings_seed{seed}.csv")), Some(p.digest()))?;
    write_json(
        &out.join(format!("subgroups_seed{seed}.json")),
        &SubgroupsArtifact { config_digest: p.digest(), seed, train_indices: &split.split.train, assignment: &assignment },
    )
}

fn synth(p: &Pipeline, run: &RunConfig, seed: u64) -> Result<()> {
    let split = p.split(seed)?;
    let embeddings = embed_graphs(&p.config, &split.train);
    let synthesis = p.synthesize(seed, &split.train, &embeddings)?;
    let out = &run.output_dir;
    let digest = Some(p.digest().to_string());
    write_outlier_set(
        &out.join(format!("outliers_seed{seed}.json")),
        &synthesis.outliers,
        p.data.id.feature_dim(),
        digest.as_deref(),
    )?;
    for (c, g) in synthesis.graphons.iter().enumerate() {
        let meta = GraphonMetadata { resolution: g.resolution(), subgroups: vec![c], lambda: None, config_digest: digest.clone() };
        export_graphon_heatmap(g, &out.join(format!("graphon_seed{seed}_subgroup{c}.csv")), &meta)?;
    }
    let pairs = synthesis.graphons.len() * synthesis.graphons.len().saturating_sub(1) / 2;
    for spec in synthesis.mixups.iter().take(pairs) {
        let (i, j) = spec.pair;
        let mixed = hgoe_core::graphon::mixup_graphons(&synthesis.graphons[i], &synthesis.graphons[j], spec.lambda)?;
        let meta = GraphonMetadata {
            resolution: mixed.resolution(),
            subgroups: vec![i, j],
            lambda: Some(spec.lambda),
            config_digest: digest.clone(),
        };
        export_graphon_heatmap(&mixed, &out.join(format!("graphon_seed{seed}_mix{i}_{j}.csv")), &meta)?;
    }
    log::info!(
        "seed {seed}: {} external + {} internal outliers",
        synthesis.outliers.n_ext,
        synthesis.outliers.n_int
    );
    Ok(())
}

fn train(p: &Pipeline, run: &RunConfig, seed: u64) -> Result<()> {
    let split = p.split(seed)?;
    let embeddings = embed_graphs(&p.config, &split.train);
    let synthesis = p.synthesize(seed, &split.train, &embeddings)?;
    let oe = embed_graphs(&p.config, &synthesis.outliers.graphs);
    let trained = p.train(seed, &embeddings, &oe)?;
    let out = &run.output_dir;
    export_loss_history(&trained.state.loss_history, &out.join(format!("loss_history_seed{seed}.csv")), Some(p.digest()))?;
    let checkpoint =
        Checkpoint { config_digest: p.digest().to_string(), seed, loss: p.config.loss, model: trained.model };
    write_json(&out.join(format!("checkpoint_seed{seed}.json")), &checkpoint)
}

#[derive(Serialize)]
struct EvalArtifact<'a> {
    config_digest: &'a str,
    checkpoint_digest: &'a str,
    seed: u64,
    auc: f64,
}

fn eval(p: &Pipeline, run: &RunConfig, checkpoint: &Path) -> Result<()> {
    let ckpt: Checkpoint = read_json(checkpoint)?;
    let seed = ckpt.seed;
    let split = p.split(seed)?;
    let eval = p.evaluate(seed, &ckpt.model, &split.test_id)?;
    let out = &run.output_dir;
    export_score_histogram(&eval.records, p.config.histogram_bins, &out.join(format!("histogram_seed{seed}.csv")), Some(p.digest()))?;
    write_json(
        &out.join(format!("eval_seed{seed}.json")),
        &EvalArtifact { config_digest: p.digest(), checkpoint_digest: &ckpt.config_digest, seed, auc: eval.auc },
    )?;
    println!("seed {seed}: AUC {:.4}", eval.auc);
    Ok(())
}

fn run_command(run: &RunConfig) -> Result<()> {
    let data = Datasets::load(&run.experiment, run.data_root.as_deref())?;
    if run.experiment.ablation.is_sweep() {
        return run_points(run, &data, expand(&run.experiment));
    }
    let result = run_experiment(&run.experiment, &data, "run")?;
    let out = &run.output_dir;
    for o in &result.outcomes {
        export_score_histogram(
            &o.records,
            run.experiment.histogram_bins,
            &out.join(format!("histogram_seed{}.csv", o.seed)),
            Some(&result.report.config_digest),
        )?;
    }
    write_json(&out.join("report.json"), &result.report)?;
    write_json(&out.join("timing.json"), &result.timing)?;
    let table = format_table(std::slice::from_ref(&result.report));
    std::fs::write(out.join("report.txt"), &table).map_err(|e| Error::io(out.join("report.txt"), e))?;
    print!("{table}");
    Ok(())
}

fn run_points(run: &RunConfig, data: &Datasets, points: Vec<(String, ExperimentConfig)>) -> Result<()> {
    let out = &run.output_dir;
    let mut reports = Vec::new();
    for (label, cfg) in points {
        let result = run_experiment(&cfg, data, &label)?;
        write_json(&out.join(format!("report_{label}.json")), &result.report)?;
        write_json(&out.join(format!("timing_{label}.json")), &result.timing)?;
        reports.push(result.report);
    }
    let table = format_table(&reports);
    std::fs::write(out.join("summary.txt"), &table).map_err(|e| Error::io(out.join("summary.txt"), e))?;
    print!("{table}");
    Ok(())
}
