//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{analyze_cube, cluster_snapshot, connectivity_snapshot, firing_frames};
use crate::config::{RunConfig, Seeds};
use crate::dataset::{generate_synthetic, load_samples, truncated_length, write_samples, SampleSet};
use crate::encoding::encode_set;
use crate::error::{Error, Result};
use crate::io::{csv_bytes, write_atomic, write_json};
use crate::mapping::mapping_csv;
use crate::optimizer::{ga_optimize, trace_csv, GaResult};
use crate::pipeline::{
    cross_validate, evaluate, evaluate_truncated, fit, map_variables, recall_set, score, MappingMode, ModelFile,
    TrainedModel,
};
use crate::reservoir::build_cube;
use crate::similarity::similarity_matrix;

#[derive(Debug, Parser)]
#[command(name = "neucube", version, about = "Spiking reservoir pipeline for multivariate temporal data")]
pub struct Cli {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set pipeline.lif.leak=0.2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed; every component seed is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic correlated-group dataset as CSV.
    Synth(SynthArgs),
    /// Encode a dataset into a spike raster CSV.
    Encode(EncodeArgs),
    /// Map variables onto the cube's input neurons.
    Map(MapArgs),
    /// Train the cube and readout; writes model, cube and metrics.
    Train(TrainArgs),
    /// Classify a dataset with a trained model.
    Predict(PredictArgs),
    /// Accuracy on truncated samples.
    EarlyPredict(EarlyArgs),
    /// Cluster analysis and visualization snapshots of a trained cube.
    Analyze(AnalyzeArgs),
    /// Genetic search over the tunable parameters.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
pub struct InputArg {
    /// Dataset CSV (`sample_id,tick,<vars>,label`).
    #[arg(short, long, value_name = "FILE")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub ticks: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub input: InputArg,
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReadoutFlags {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long = "mod")]
    pub modulation: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub input: InputArg,
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Use a seeded random permutation instead of graph matching.
    #[arg(long)]
    pub random: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArg,
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub readout: ReadoutFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub random_mapping: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArg,
    /// model.json written by `train`.
    #[arg(short, long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Override the model's neighbour count.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EarlyArgs {
    #[command(flatten)]
    pub input: InputArg,
    /// Evaluate this trained model instead of cross-validating.
    #[arg(short, long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.75,0.5")]
    pub fractions: Vec<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub random_mapping: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArg,
    #[arg(short, long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write one firing frame per tick for `--sample`.
    #[arg(long)]
    pub frames: bool,
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub input: InputArg,
    #[arg(short, long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Run the search with graph and with random mapping and compare.
    #[arg(long)]
    pub compare_mapping: bool,
    /// Re-score elites every generation instead of caching their error.
    #[arg(long)]
    pub reevaluate_elites: bool,
    #[arg(long)]
    pub random_mapping: bool,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg = cfg.with_overrides(&cli.set)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    Ok(cfg)
}

fn required(path: Option<&PathBuf>, what: &str, flag: &str) -> Result<PathBuf> {
    path.cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("no {what} given (use {flag} or the config's paths section)")))
}

fn load_input(cfg: &RunConfig) -> Result<SampleSet> {
    let path = required(cfg.paths.input.as_ref(), "input dataset", "--input")?;
    load_samples(&path, &cfg.data).map_err(|e| match e {
        Error::Io { .. } => e,
        other => Error::Data(format!("{}: {other}", path.display())),
    })
}

fn load_model(cfg: &RunConfig) -> Result<TrainedModel> {
    let path = required(cfg.paths.model.as_ref(), "model", "--model")?;
    let file: ModelFile = crate::io::read_json(&path)?;
    TrainedModel::from_file(file).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = required(cfg.paths.out.as_ref(), "output directory", "--out")?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

#[derive(Default)]
struct Timer {
    stages: BTreeMap<String, f64>,
}

impl Timer {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.stages.insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }

    /// Wall-clock times go to their own file so every other artifact stays
    /// byte-reproducible.
    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("timings.json"), &json!({ "seconds": self.stages }))
    }
}

#[derive(Serialize)]
struct EvaluationMetrics<'a> {
    command: &'a str,
    samples: usize,
    accuracy: f64,
    confusion: &'a [Vec<usize>],
    class_names: &'a [String],
    sparsity: f64,
    mapping_objective: f64,
    mapping_mode: MappingMode,
    seeds: Seeds,
}

fn predictions_csv(set: &SampleSet, predicted: &[usize], class_names: &[String]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["sample_id", "label", "predicted"])?;
        for (s, &p) in set.samples().iter().zip(predicted) {
            w.write_record([s.id.as_str(), &class_names[s.label], &class_names[p]])?;
        }
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Synth(a) => {
            if let Some(x) = a.samples_per_class {
                cfg.synthetic.samples_per_class = x;
            }
            if let Some(x) = a.ticks {
                cfg.synthetic.ticks = x;
            }
            if let Some(x) = a.noise {
                cfg.synthetic.noise_std = x;
            }
            let cfg = cfg.resolved()?;
            let out = a.out.or(cfg.paths.out.clone()).ok_or_else(|| {
                Error::InvalidArgument("no output file given (use --out)".into())
            })?;
            let set = generate_synthetic(&cfg.synthetic)?;
            write_samples(&set, &out)?;
            println!("wrote {} samples to {}", set.len(), out.display());
        }
        Command::Encode(a) => {
            set_input(&mut cfg, a.input);
            if let Some(x) = a.alpha {
                cfg.pipeline.encoding.alpha = x;
            }
            let cfg = cfg.resolved()?;
            let out = a
                .out
                .or(cfg.paths.out.clone())
                .ok_or_else(|| Error::InvalidArgument("no output file given (use --out)".into()))?;
            let set = load_input(&cfg)?;
            let raster = encode_set(&set, &cfg.pipeline.encoding)?;
            write_atomic(&out, &raster.to_csv(set.variable_names())?)?;
            println!("{} spikes", raster.total_spikes());
        }
        Command::Map(a) => {
            set_input(&mut cfg, a.input);
            set_out(&mut cfg, a.out);
            if a.random {
                cfg.pipeline.mapping_mode = MappingMode::Random;
            }
            let cfg = cfg.resolved()?;
            let set = load_input(&cfg)?;
            let dir = out_dir(&cfg)?;
            let p = &cfg.pipeline;
            let raster = encode_set(&set, &p.encoding)?;
            let cube = build_cube(&p.cube, &p.lif, set.variables())?;
            let sol = map_variables(&cube, &raster, p)?;
            let coords: Vec<[f64; 3]> =
                cube.input_neurons().iter().map(|&i| cube.position(i).map(|c| c as f64)).collect();
            write_atomic(
                &dir.join("mapping.csv"),
                &mapping_csv(&sol.mapping, set.variable_names(), cube.input_neurons(), &coords)?,
            )?;
            let sim = similarity_matrix(&raster, &p.similarity)?;
            write_atomic(&dir.join("similarity.csv"), &sim.to_csv(set.variable_names())?)?;
            write_json(
                &dir.join("mapping.json"),
                &json!({
                    "mapping_objective": sol.objective,
                    "mapping_mode": p.mapping_mode,
                    "permutation": sol.mapping.permutation(),
                    "seeds": cfg.seeds(),
                }),
            )?;
            println!("mapping objective {}", sol.objective);
        }
        Command::Train(a) => {
            set_input(&mut cfg, a.input);
            set_out(&mut cfg, a.out);
            apply_readout(&mut cfg, &a.readout);
            if let Some(e) = a.epochs {
                cfg.pipeline.epochs = e;
            }
            if a.random_mapping {
                cfg.pipeline.mapping_mode = MappingMode::Random;
            }
            let cfg = cfg.resolved()?;
            let mut timer = Timer::default();
            let set = timer.time("load", || load_input(&cfg))?;
            let dir = out_dir(&cfg)?;
            let model = timer.time("fit", || fit(&set, &cfg.pipeline))?;
            let predictions = timer.time("classify", || model.classifier.classify_all(&model.train_records))?;
            let eval = score(predictions, &set.labels(), set.class_count(), &model.train_records);
            write_json(&dir.join("model.json"), &model.to_file())?;
            write_json(&dir.join("cube.json"), &model.cube.snapshot())?;
            write_json(&dir.join("config.json"), &cfg)?;
            let coords: Vec<[f64; 3]> =
                model.cube.input_neurons().iter().map(|&i| model.cube.position(i).map(|c| c as f64)).collect();
            write_atomic(
                &dir.join("mapping.csv"),
                &mapping_csv(&model.mapping.mapping, set.variable_names(), model.cube.input_neurons(), &coords)?,
            )?;
            write_json(
                &dir.join("metrics.json"),
                &EvaluationMetrics {
                    command: "train",
                    samples: set.len(),
                    accuracy: eval.accuracy,
                    confusion: &eval.confusion,
                    class_names: set.class_names(),
                    sparsity: eval.sparsity,
                    mapping_objective: model.mapping.objective,
                    mapping_mode: cfg.pipeline.mapping_mode,
                    seeds: cfg.seeds(),
                },
            )?;
            timer.write(&dir)?;
            println!("training accuracy {} sparsity {}", eval.accuracy, eval.sparsity);
        }
        Command::Predict(a) => {
            set_input(&mut cfg, a.input);
            set_out(&mut cfg, a.out);
            if let Some(m) = a.model {
                cfg.paths.model = Some(m);
            }
            let cfg = cfg.resolved()?;
            let mut timer = Timer::default();
            let mut model = timer.time("load", || load_model(&cfg))?;
            if let Some(k) = a.k {
                model.classifier = model.classifier.with_k(k)?;
            }
            let set = load_input(&cfg)?;
            check_classes(&model, &set)?;
            let dir = out_dir(&cfg)?;
            let eval = timer.time("predict", || evaluate(&model, &set))?;
            let labels: Vec<usize> = eval.predictions.iter().map(|p| p.label).collect();
            write_atomic(&dir.join("predictions.csv"), &predictions_csv(&set, &labels, &model.class_names)?)?;
            write_json(
                &dir.join("metrics.json"),
                &EvaluationMetrics {
                    command: "predict",
                    samples: set.len(),
                    accuracy: eval.accuracy,
                    confusion: &eval.confusion,
                    class_names: &model.class_names,
                    sparsity: eval.sparsity,
                    mapping_objective: model.mapping.objective,
                    mapping_mode: model.params.mapping_mode,
                    seeds: model_seeds(&cfg, &model),
                },
            )?;
            timer.write(&dir)?;
            println!("accuracy {}", eval.accuracy);
        }
        Command::EarlyPredict(a) => {
            set_input(&mut cfg, a.input);
            set_out(&mut cfg, a.out);
            if let Some(m) = a.model {
                cfg.paths.model = Some(m);
            }
            if let Some(f) = a.folds {
                cfg.ga.folds = f;
            }
            if a.random_mapping {
                cfg.pipeline.mapping_mode = MappingMode::Random;
            }
            let cfg = cfg.resolved()?;
            if a.fractions.is_empty() {
                return Err(Error::InvalidArgument("no fractions given".into()));
            }
            let mut timer = Timer::default();
            let set = load_input(&cfg)?;
            let dir = out_dir(&cfg)?;
            let (accuracies, mode) = if cfg.paths.model.is_some() {
                let model = load_model(&cfg)?;
                check_classes(&model, &set)?;
                let acc = timer.time("evaluate", || {
                    a.fractions
                        .iter()
                        .map(|&f| evaluate_truncated(&model, &set, f).map(|e| e.accuracy))
                        .collect::<Result<Vec<_>>>()
                })?;
                (acc, "model")
            } else {
                let acc = timer.time("cross_validate", || {
                    cross_validate(&set, &cfg.pipeline, cfg.ga.folds, cfg.ga.seed, &a.fractions)
                })?;
                (acc, "cross_validation")
            };
            let rows: Vec<(f64, usize, f64)> = a
                .fractions
                .iter()
                .zip(&accuracies)
                .map(|(&f, &acc)| (f, truncated_length(set.ticks(), f), acc))
                .collect();
            write_atomic(
                &dir.join("early.csv"),
                &csv_bytes(|w| {
                    w.write_record(["fraction", "ticks", "accuracy"])?;
                    for (f, t, acc) in &rows {
                        w.write_record([f.to_string(), t.to_string(), acc.to_string()])?;
                    }
                    Ok(())
                })?,
            )?;
            write_json(
                &dir.join("metrics.json"),
                &json!({
                    "command": "early-predict",
                    "evaluation": mode,
                    "folds": if mode == "model" { None } else { Some(cfg.ga.folds) },
                    "fractions": a.fractions,
                    "accuracy": accuracies,
                    "mapping_mode": cfg.pipeline.mapping_mode,
                    "seeds": cfg.seeds(),
                }),
            )?;
            timer.write(&dir)?;
            for (f, t, acc) in rows {
                println!("fraction {f} ({t} ticks): accuracy {acc}");
            }
        }
        Command::Analyze(a) => {
            set_input(&mut cfg, a.input);
            set_out(&mut cfg, a.out);
            if let Some(m) = a.model {
                cfg.paths.model = Some(m);
            }
            if a.sigma.is_some() {
                cfg.propagation.sigma = a.sigma;
            }
            let cfg = cfg.resolved()?;
            let mut timer = Timer::default();
            let model = load_model(&cfg)?;
            let set = load_input(&cfg)?;
            let dir = out_dir(&cfg)?;
            let records = timer.time("recall", || recall_set(&model, &set))?;
            let report = timer.time("propagate", || analyze_cube(&model.cube, &records, &cfg.propagation))?;
            write_json(&dir.join("connectivity.json"), &connectivity_snapshot(&model.cube))?;
            write_json(
                &dir.join("clusters.json"),
                &cluster_snapshot(&model.cube, &report.influence, &report.clusters)?,
            )?;
            write_json(
                &dir.join("analysis.json"),
                &json!({
                    "variables": model.variable_names,
                    "histogram": report.clusters.histogram(),
                    "unassigned": report.clusters.unassigned(),
                    "iterations": report.influence.iterations,
                    "residual": report.influence.residual,
                    "spectral_radius": report.spectral_radius,
                    "sparsity": crate::pipeline::mean_sparsity(&records),
                    "seeds": model_seeds(&cfg, &model),
                }),
            )?;
            if a.frames {
                let record = records.get(a.sample).ok_or_else(|| {
                    Error::InvalidArgument(format!("--sample {} out of range ({} samples)", a.sample, records.len()))
                })?;
                let frames_dir = dir.join("frames");
                for frame in firing_frames(&model.cube, record)? {
                    let tick = match &frame {
                        crate::analysis::Snapshot::FiringFrame { tick, .. } => *tick,
                        _ => unreachable!("firing_frames yields firing frames"),
                    };
                    write_json(&frames_dir.join(format!("frame_{tick:04}.json")), &frame)?;
                }
            }
            timer.write(&dir)?;
            for (name, n) in model.variable_names.iter().zip(report.clusters.histogram()) {
                println!("{name}: {n} neurons");
            }
        }
        Command::Optimize(a) => {
            set_input(&mut cfg, a.input);
            set_out(&mut cfg, a.out);
            if let Some(x) = a.generations {
                cfg.ga.generations = x;
            }
            if let Some(x) = a.population {
                cfg.ga.population = x;
            }
            if let Some(x) = a.folds {
                cfg.ga.folds = x;
            }
            if a.reevaluate_elites {
                cfg.ga.reevaluate_elites = true;
            }
            if a.random_mapping {
                cfg.ga.mapping_mode = MappingMode::Random;
            }
            let cfg = cfg.resolved()?;
            let set = load_input(&cfg)?;
            let dir = out_dir(&cfg)?;
            let mut timer = Timer::default();
            let modes = if a.compare_mapping {
                vec![MappingMode::Graph, MappingMode::Random]
            } else {
                vec![cfg.ga.mapping_mode]
            };
            let mut summary = serde_json::Map::new();
            for mode in modes {
                let name = mode_name(mode);
                let mut ga = cfg.ga.clone();
                ga.mapping_mode = mode;
                let result = timer.time(&format!("optimize_{name}"), || {
                    ga_optimize(&set, &cfg.search_space, &cfg.pipeline, &ga)
                })?;
                let target = if a.compare_mapping { dir.join(name) } else { dir.clone() };
                write_ga(&target, &cfg, mode, &result)?;
                println!("{name} mapping: best error {}", result.best.error.unwrap_or(f64::NAN));
                summary.insert(name.to_string(), json!(result.best.error));
            }
            if a.compare_mapping {
                write_json(
                    &dir.join("comparison.json"),
                    &json!({ "best_error": summary, "seeds": cfg.seeds() }),
                )?;
            }
            timer.write(&dir)?;
        }
    }
    Ok(())
}

fn mode_name(mode: MappingMode) -> &'static str {
    match mode {
        MappingMode::Graph => "graph",
        MappingMode::Random => "random",
    }
}

fn write_ga(dir: &Path, cfg: &RunConfig, mode: MappingMode, result: &GaResult) -> Result<()> {
    write_atomic(&dir.join("trace.csv"), &trace_csv(&result.trace)?)?;
    let mut params = result.best_params(&cfg.search_space, &cfg.pipeline);
    params.mapping_mode = mode;
    let genes: serde_json::Map<String, serde_json::Value> = result
        .best
        .named(&cfg.search_space)
        .into_iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    write_json(
        &dir.join("best_params.json"),
        &json!({
            "error": result.best.error,
            "genes": genes,
            "pipeline": params,
            "mapping_mode": mode,
            "evaluations": result.evaluations,
            "ga": cfg.ga,
            "seeds": cfg.seeds(),
        }),
    )
}

fn set_input(cfg: &mut RunConfig, input: InputArg) {
    if let Some(p) = input.input {
        cfg.paths.input = Some(p);
    }
}

fn set_out(cfg: &mut RunConfig, out: Option<PathBuf>) {
    if let Some(p) = out {
        cfg.paths.out = Some(p);
    }
}

fn apply_readout(cfg: &mut RunConfig, f: &ReadoutFlags) {
    if let Some(k) = f.k {
        cfg.pipeline.desnn.k = k;
    }
    if let Some(d) = f.drift {
        cfg.pipeline.desnn.drift = d;
    }
    if let Some(m) = f.modulation {
        cfg.pipeline.desnn.modulation = m;
    }
}

fn check_classes(model: &TrainedModel, set: &SampleSet) -> Result<()> {
    if set.class_names() != model.class_names.as_slice() {
        return Err(Error::Data(format!(
            "dataset classes {:?} differ from the model's {:?}",
            set.class_names(),
            model.class_names
        )));
    }
    Ok(())
}

/// Seeds a loaded model was trained with.
fn model_seeds(cfg: &RunConfig, model: &TrainedModel) -> Seeds {
    Seeds {
        cube: model.params.cube.seed,
        mapping: model.params.mapping.seed,
        ..cfg.seeds()
    }
}
