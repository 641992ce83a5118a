use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::config::TrainConfig;
use super::eval::{evaluate, EvalMetrics};
use super::optim::one_cycle_lr;
use super::step::{draw_batch, train_step, TrainState};
use crate::error::{Error, Result};
use crate::flownet::FlowModel;
use crate::losses::LossReport;
use crate::synthdata::DomainPairs;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Steps completed, counting this one.
    pub step: u64,
    pub lr: f64,
    #[serde(flatten)]
    pub report: LossReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub split: String,
    /// `student` or `teacher`.
    pub weights: String,
    pub epe: f64,
    pub fl_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepRecord),
    Eval(EvalRecord),
}

#[derive(Default)]
pub struct RunOptions {
    /// Where to write the metrics log and checkpoints; nothing is written
    /// without it.
    pub out_dir: Option<PathBuf>,
    /// Stop early after this many completed steps (the schedules still use
    /// `total_steps`).
    pub stop_at: Option<u64>,
    /// Continue from this state instead of a fresh initialisation.
    pub resume: Option<TrainState>,
}

pub struct RunOutcome {
    pub state: TrainState,
    pub log: Vec<LogRecord>,
    /// Target-eval metrics of the final student and teacher, if the split is
    /// non-empty.
    pub student_eval: Option<EvalMetrics>,
    pub teacher_eval: Option<EvalMetrics>,
}

impl RunOutcome {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.log.iter().filter_map(|r| match r {
            LogRecord::Step(s) => Some(s),
            _ => None,
        })
    }
}

fn check_data(cfg: &TrainConfig, data: &DomainPairs) -> Result<()> {
    if data.source.is_empty() {
        return Err(Error::invalid("dataset", "source split is empty"));
    }
    if cfg.pretrain_steps < cfg.total_steps && cfg.adapting(cfg.pretrain_steps) && data.target_train.is_empty() {
        return Err(Error::invalid(
            "dataset",
            "target_train split is empty but adaptation is enabled",
        ));
    }
    for p in &data.source {
        if p.gt_flow.size() != p.i1.size() || p.i2.size() != p.i1.size() || p.gt_valid.size() != p.i1.size() {
            return Err(Error::invalid(
                "dataset",
                format!("pair {} has inconsistent sizes", p.id),
            ));
        }
    }
    for p in &data.target_train {
        if p.i2.size() != p.i1.size() {
            return Err(Error::invalid(
                "dataset",
                format!("pair {} has inconsistent sizes", p.id),
            ));
        }
    }
    Ok(())
}

struct Logger {
    file: Option<BufWriter<File>>,
    path: PathBuf,
}

impl Logger {
    fn open(dir: Option<&Path>, append: bool) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(Logger {
                file: None,
                path: PathBuf::new(),
            });
        };
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Logger {
            file: Some(BufWriter::new(file)),
            path,
        })
    }

    fn write(&mut self, rec: &LogRecord) -> Result<()> {
        if let Some(f) = &mut self.file {
            let line = serde_json::to_string(rec).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(f) = &mut self.file {
            f.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

/// Lowest student EPE already in a log, so a resumed run keeps `best.ckpt`.
fn best_logged_epe(path: &Path) -> Result<f64> {
    if !path.exists() {
        return Ok(f64::INFINITY);
    }
    Ok(read_log(path)?
        .iter()
        .filter_map(|r| match r {
            LogRecord::Eval(e) if e.weights == "student" => Some(e.epe),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min))
}

/// Reads a metrics log back.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Codec(format!("{}: {e}", path.display()))))
        .collect()
}

/// Trains until `total_steps` (or `stop_at`), evaluating on the target eval
/// split every `eval_every` steps and at `total_steps`.
pub fn run_training(
    model: &dyn FlowModel,
    cfg: &TrainConfig,
    data: &DomainPairs,
    opts: RunOptions,
) -> Result<RunOutcome> {
    cfg.validate()?;
    check_data(cfg, data)?;
    let resumed = opts.resume.is_some();
    let mut state = opts.resume.unwrap_or_else(|| TrainState::new(model, cfg));
    let layout = model.init_params(&mut ChaCha8Rng::seed_from_u64(0));
    if !state.student.same_layout(&layout) || !state.teacher.phi.same_layout(&layout) {
        return Err(Error::Checkpoint("checkpoint does not match the network layout".into()));
    }
    let end = opts.stop_at.unwrap_or(cfg.total_steps).min(cfg.total_steps);
    let dir = opts.out_dir.as_deref();
    let mut logger = Logger::open(dir, resumed)?;
    let mut log = Vec::new();
    let mut best = match dir {
        Some(d) if resumed => best_logged_epe(&d.join(METRICS_FILE))?,
        _ => f64::INFINITY,
    };
    let (mut student_eval, mut teacher_eval) = (None, None);

    while state.step < end {
        let source_idx = draw_batch(&mut state.rng, data.source.len(), cfg.batch.source);
        let target_idx = if cfg.adapting(state.step) {
            draw_batch(&mut state.rng, data.target_train.len(), cfg.batch.target)
        } else {
            Vec::new()
        };
        let source: Vec<_> = source_idx.iter().map(|&i| &data.source[i]).collect();
        let target: Vec<_> = target_idx.iter().map(|&i| &data.target_train[i]).collect();
        let lr = one_cycle_lr(&cfg.optimizer, state.step, cfg.total_steps);
        let report = train_step(model, cfg, &mut state, &source, &target)?;
        let rec = LogRecord::Step(StepRecord {
            step: state.step,
            lr,
            report,
        });
        logger.write(&rec)?;
        log.push(rec);

        // Stopping early does not evaluate, so a resumed run logs exactly
        // what an uninterrupted one would.
        let last = state.step == cfg.total_steps;
        let due = cfg.eval_every > 0 && state.step.is_multiple_of(cfg.eval_every);
        if (due || last) && !data.target_eval.is_empty() {
            let s = evaluate(model, &state.student, &data.target_eval)?;
            let t = evaluate(model, &state.teacher.phi, &data.target_eval)?;
            for (name, m) in [("student", &s), ("teacher", &t)] {
                let rec = LogRecord::Eval(EvalRecord {
                    step: state.step,
                    split: "target_eval".into(),
                    weights: name.into(),
                    epe: m.epe,
                    fl_all: m.fl_all,
                });
                logger.write(&rec)?;
                log.push(rec);
            }
            log::info!("step {}: student {} | teacher {}", state.step, s.summary(), t.summary());
            if let Some(d) = dir {
                if s.epe < best {
                    best = s.epe;
                    save_checkpoint(&d.join(BEST_CHECKPOINT), &state, cfg)?;
                }
                logger.flush()?;
            }
            student_eval = Some(s);
            teacher_eval = Some(t);
        }
    }
    if let Some(d) = dir {
        logger.flush()?;
        save_checkpoint(&d.join(LAST_CHECKPOINT), &state, cfg)?;
    }
    Ok(RunOutcome {
        state,
        log,
        student_eval,
        teacher_eval,
    })
}
