//! Command-line front end: `gen-data`, `train`, `eval`, `viz`, `ablate`.
//!
//! Every flag has a config-file equivalent and overrides it. Training
//! configs are TOML files mirroring [`TrainConfig`]; any field can also be
//! set with `--set dotted.key=value`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowcore::{flow_to_color, read_flow_file, save_rgb_png, FlowField};
use crate::flownet::{predict, FlowNet};
use crate::synthdata::{make_domain_pairs, read_dataset, write_dataset, LabeledPair, SceneSpec};
use crate::trainer::{
    evaluate, evaluate_with, load_checkpoint, parse_rows, run_ablation, run_training, summary_table, AblationOptions,
    EvalMetrics, RunOptions, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "flowda", version, about = "Mean-teacher domain adaptation for optical flow")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate source, target-train and target-eval splits.
    GenData(GenDataArgs),
    /// Train a student/teacher pair.
    Train(TrainArgs),
    /// Score a checkpoint or a directory of predictions.
    Eval(EvalArgs),
    /// Render a flow field with the standard colour wheel.
    Viz(VizArgs),
    /// Run the component ablation sweep.
    Ablate(AblateArgs),
}

/// `gen-data` file format. Top-level fields are optional; a `[source]` or
/// `[target]` table replaces the whole default spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub n_pairs: usize,
    pub seed: u64,
    pub source: SceneSpec,
    pub target: SceneSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_pairs: 1000,
            seed: 0,
            source: SceneSpec::default_source(),
            target: SceneSpec::default_target(),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// TOML file with `n_pairs`, `seed`, `[source]` and `[target]`.
    #[arg(long)]
    pub spec_file: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Pairs per training split; the eval split gets a quarter.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML training config; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Config override, e.g. `--set optimizer.lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Continue from a checkpoint; its config is used unless `--config` is given.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many total steps.
    #[arg(long)]
    pub stop_at: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    Student,
    Teacher,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    Source,
    TargetEval,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of `<pair id>.flo` predictions.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_enum, default_value = "target-eval")]
    pub split: EvalSplit,
    #[arg(long, value_enum, default_value = "student")]
    pub weights: Weights,
    /// Also write the full metrics (per pair) as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    /// A `.flo` file to render.
    #[arg(long, required_unless_present = "checkpoint", conflicts_with = "checkpoint")]
    pub flow: Option<PathBuf>,
    /// Render the prediction of this checkpoint on `--pair`.
    #[arg(long, requires_all = ["data_dir", "pair"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Pair id from the target eval or source split.
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long, value_enum, default_value = "student")]
    pub weights: Weights,
    /// Saturation magnitude; the field maximum when omitted.
    #[arg(long)]
    pub max_magnitude: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Base (full method) config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// `all` or a comma-separated list such as `full,no_crop`.
    #[arg(long, default_value = "all")]
    pub rows: String,
    /// Rows trained in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Start every row from this checkpoint (e.g. source-pretrained).
    #[arg(long)]
    pub start: Option<PathBuf>,
}

fn load_train_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    for o in overrides {
        cfg.set(o)?;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut cfg = match &a.spec_file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<DataConfig>(&text)
                .map_err(|e| Error::invalid(p.display().to_string(), e.message().to_string()))?
        }
        None => DataConfig::default(),
    };
    cfg.n_pairs = a.n.unwrap_or(cfg.n_pairs);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    let pairs = make_domain_pairs(
        &cfg.source,
        &cfg.target,
        cfg.n_pairs,
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    )?;
    write_dataset(&a.out_dir, &pairs, &cfg.source, &cfg.target)?;
    println!(
        "wrote {} source, {} target-train, {} target-eval pairs to {}",
        pairs.source.len(),
        pairs.target_train.len(),
        pairs.target_eval.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let (mut cfg, resume) = match &a.resume {
        Some(p) => {
            let (state, saved) = load_checkpoint(p)?;
            let cfg = match &a.config {
                Some(c) => TrainConfig::load(c)?,
                None => saved,
            };
            (cfg, Some(state))
        }
        None => (load_train_config(a.config.as_deref(), &[])?, None),
    };
    for o in &a.overrides {
        cfg.set(o)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.total_steps = s;
    }
    cfg.validate()?;
    let (data, _, _) = read_dataset(&a.data_dir)?;
    let net = FlowNet::new(cfg.net.clone())?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    write_text(&a.out_dir.join("config.toml"), &cfg.to_toml_string())?;
    let out = run_training(
        &net,
        &cfg,
        &data,
        RunOptions {
            out_dir: Some(a.out_dir.clone()),
            stop_at: a.stop_at,
            resume,
        },
    )?;
    match (&out.student_eval, &out.teacher_eval) {
        (Some(s), Some(t)) => println!("step {}: {} (teacher {})", out.state.step, s.summary(), t.summary()),
        _ => println!("step {}: no target eval split", out.state.step),
    }
    Ok(())
}

fn predictions_from_dir(dir: &Path) -> impl FnMut(&LabeledPair) -> Result<FlowField> + '_ {
    move |p| read_flow_file(dir.join(format!("{}.flo", p.id)))
}

fn eval(a: &EvalArgs) -> Result<EvalMetrics> {
    let (data, _, _) = read_dataset(&a.data_dir)?;
    let pairs = match a.split {
        EvalSplit::Source => &data.source,
        EvalSplit::TargetEval => &data.target_eval,
    };
    let metrics = if let Some(dir) = &a.predictions {
        evaluate_with(pairs, predictions_from_dir(dir))?
    } else {
        let path = a.checkpoint.as_ref().expect("clap requires a source of predictions");
        let (state, cfg) = load_checkpoint(path)?;
        let net = FlowNet::new(cfg.net)?;
        let params = match a.weights {
            Weights::Student => &state.student,
            Weights::Teacher => &state.teacher.phi,
        };
        evaluate(&net, params, pairs)?
    };
    println!("{}", metrics.summary());
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
    }
    Ok(metrics)
}

fn viz(a: &VizArgs) -> Result<()> {
    let flow = if let Some(f) = &a.flow {
        read_flow_file(f)?
    } else {
        let (state, cfg) = load_checkpoint(a.checkpoint.as_ref().expect("clap enforces a flow source"))?;
        let (data, _, _) = read_dataset(a.data_dir.as_ref().expect("clap requires --data-dir"))?;
        let id = a.pair.as_deref().expect("clap requires --pair");
        let pair = data
            .target_eval
            .iter()
            .chain(&data.source)
            .find(|p| p.id == id)
            .ok_or_else(|| Error::invalid("pair", format!("no labelled pair '{id}'")))?;
        let params = match a.weights {
            Weights::Student => &state.student,
            Weights::Teacher => &state.teacher.phi,
        };
        predict(&FlowNet::new(cfg.net)?, params, &pair.i1, &pair.i2)?
    };
    save_rgb_png(&flow_to_color(&flow, a.max_magnitude), &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let base = load_train_config(a.config.as_deref(), &a.overrides)?;
    let rows = parse_rows(&a.rows)?;
    let (data, _, _) = read_dataset(&a.data_dir)?;
    let net = FlowNet::new(base.net.clone())?;
    let start = a.start.as_deref().map(load_checkpoint).transpose()?.map(|(s, _)| s);
    write_text(&a.out_dir.join("base_config.toml"), &base.to_toml_string())?;
    let summaries = run_ablation(
        &net,
        &base,
        &data,
        AblationOptions {
            rows,
            jobs: a.jobs,
            out_dir: Some(a.out_dir.clone()),
            start,
        },
    )?;
    print!("{}", summary_table(&summaries));
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a).map(|_| ()),
        Command::Viz(a) => viz(a),
        Command::Ablate(a) => ablate(a),
    }
}

/// Entry point of the `flowda` binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
