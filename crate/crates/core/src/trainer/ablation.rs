//! Component ablation sweep: one training run per row, then a summary table
//! computed from the runs' metric logs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{read_log, run_training, LogRecord, RunOptions, METRICS_FILE};
use super::step::TrainState;
use crate::error::{Error, Result};
use crate::flownet::FlowModel;
use crate::synthdata::DomainPairs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationRow {
    Full,
    NoSourceSupervision,
    NoCrop,
    NoUnsupLoss,
    NoOccMask,
    NoAcw,
    NoEma,
    NoAll,
}

impl AblationRow {
    pub const ALL: [AblationRow; 8] = [
        AblationRow::Full,
        AblationRow::NoSourceSupervision,
        AblationRow::NoCrop,
        AblationRow::NoUnsupLoss,
        AblationRow::NoOccMask,
        AblationRow::NoAcw,
        AblationRow::NoEma,
        AblationRow::NoAll,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationRow::Full => "FlowDA",
            AblationRow::NoSourceSupervision => "w/o source domain supervision",
            AblationRow::NoCrop => "w/o crop",
            AblationRow::NoUnsupLoss => "w/o unsupervised loss",
            AblationRow::NoOccMask => "w/o occ mask",
            AblationRow::NoAcw => "w/o ACW",
            AblationRow::NoEma => "w/o EMA",
            AblationRow::NoAll => "w/o all",
        }
    }

    /// Directory-safe name.
    pub fn slug(self) -> &'static str {
        match self {
            AblationRow::Full => "full",
            AblationRow::NoSourceSupervision => "no_source_supervision",
            AblationRow::NoCrop => "no_crop",
            AblationRow::NoUnsupLoss => "no_unsup_loss",
            AblationRow::NoOccMask => "no_occ_mask",
            AblationRow::NoAcw => "no_acw",
            AblationRow::NoEma => "no_ema",
            AblationRow::NoAll => "no_all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|r| r.slug() == s || r.label().eq_ignore_ascii_case(s))
    }

    /// The row's configuration derived from `base` (the full method).
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let ab = &mut cfg.ablation;
        match self {
            AblationRow::Full => {}
            AblationRow::NoSourceSupervision => ab.source_supervision = false,
            AblationRow::NoCrop => ab.crop = false,
            AblationRow::NoUnsupLoss => ab.unsup_loss = false,
            AblationRow::NoOccMask => ab.occ_mask = false,
            AblationRow::NoAcw => {
                ab.acw = false;
                cfg.weights.eps1 = 1.0;
            }
            AblationRow::NoEma => ab.ema = false,
            AblationRow::NoAll => {
                ab.crop = false;
                ab.unsup_loss = false;
                ab.occ_mask = false;
                ab.acw = false;
                ab.ema = false;
                cfg.weights.beta = 0.0;
                cfg.weights.gamma = 0.0;
            }
        }
        cfg
    }
}

/// Parses `all` or a comma-separated list of slugs or labels.
pub fn parse_rows(spec: &str) -> Result<Vec<AblationRow>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(AblationRow::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| {
            AblationRow::parse(s).ok_or_else(|| Error::invalid("rows", format!("unknown ablation row '{}'", s.trim())))
        })
        .collect()
}

pub struct AblationOptions {
    pub rows: Vec<AblationRow>,
    /// Worker threads; rows are independent runs.
    pub jobs: usize,
    /// Each row logs to `<out_dir>/<slug>/`.
    pub out_dir: Option<PathBuf>,
    /// Shared starting state (e.g. a source-pretrained checkpoint); fresh
    /// initialisation otherwise.
    pub start: Option<TrainState>,
}

/// Per-row numbers read back from a metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub row: AblationRow,
    pub steps: u64,
    pub epe: f64,
    pub fl_all: f64,
    pub teacher_epe: f64,
    pub mean_l_s: f64,
    pub mean_l_a: f64,
    pub mean_l_u: f64,
}

/// Reduces one run's log to its row summary: final student and teacher eval,
/// mean losses over the adaptation steps (`from_step` onwards).
pub fn summarize_log(row: AblationRow, log: &[LogRecord], from_step: u64) -> Result<RowSummary> {
    let mut s = RowSummary {
        row,
        steps: 0,
        epe: f64::NAN,
        fl_all: f64::NAN,
        teacher_epe: f64::NAN,
        mean_l_s: 0.0,
        mean_l_a: 0.0,
        mean_l_u: 0.0,
    };
    let mut n = 0.0;
    for rec in log {
        match rec {
            LogRecord::Step(st) => {
                s.steps = s.steps.max(st.step);
                if st.step > from_step {
                    s.mean_l_s += st.report.l_s;
                    s.mean_l_a += st.report.l_a;
                    s.mean_l_u += st.report.l_u;
                    n += 1.0;
                }
            }
            LogRecord::Eval(ev) if ev.weights == "student" => {
                s.epe = ev.epe;
                s.fl_all = ev.fl_all;
            }
            LogRecord::Eval(ev) => s.teacher_epe = ev.epe,
        }
    }
    if s.steps == 0 {
        return Err(Error::invalid("log", format!("no steps recorded for {}", row.label())));
    }
    if n > 0.0 {
        s.mean_l_s /= n;
        s.mean_l_a /= n;
        s.mean_l_u /= n;
    }
    Ok(s)
}

/// Rebuilds the summaries from `<dir>/<slug>/metrics.jsonl`.
pub fn summarize_dir(dir: &Path, rows: &[AblationRow], from_step: u64) -> Result<Vec<RowSummary>> {
    rows.iter()
        .map(|&r| summarize_log(r, &read_log(&dir.join(r.slug()).join(METRICS_FILE))?, from_step))
        .collect()
}

pub fn summary_table(rows: &[RowSummary]) -> String {
    let width = rows.iter().map(|r| r.row.label().len()).max().unwrap_or(0).max(10);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>8}  {:>11}  {:>8}  {:>8}  {:>8}\n",
        "experiment", "EPE", "Fl-all", "teacher EPE", "L_S", "L_A", "L_U"
    );
    for r in rows {
        writeln!(
            out,
            "{:<width$}  {:>8.3}  {:>8.2}  {:>11.3}  {:>8.4}  {:>8.4}  {:>8.4}",
            r.row.label(),
            r.epe,
            r.fl_all,
            r.teacher_epe,
            r.mean_l_s,
            r.mean_l_a,
            r.mean_l_u
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(rows: &[RowSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "experiment",
        "steps",
        "epe",
        "fl_all",
        "teacher_epe",
        "mean_l_s",
        "mean_l_a",
        "mean_l_u",
    ])
    .expect("in-memory write");
    for r in rows {
        let nums = [r.epe, r.fl_all, r.teacher_epe, r.mean_l_s, r.mean_l_a, r.mean_l_u].map(|v| v.to_string());
        let mut rec = vec![r.row.label().to_string(), r.steps.to_string()];
        rec.extend(nums);
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Runs every requested row from `base` and returns the summaries in row
/// order. With an output directory the summaries are recomputed from the
/// written logs, and `summary.txt` and `summary.csv` are saved next to them.
pub fn run_ablation(
    model: &dyn FlowModel,
    base: &TrainConfig,
    data: &DomainPairs,
    opts: AblationOptions,
) -> Result<Vec<RowSummary>> {
    if opts.rows.is_empty() {
        return Err(Error::invalid("rows", "no ablation rows selected"));
    }
    let configs: Vec<TrainConfig> = opts.rows.iter().map(|r| r.apply(base)).collect();
    for c in &configs {
        c.validate()?;
    }
    let from_step = base.pretrain_steps;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RowSummary>>>> = Mutex::new((0..opts.rows.len()).map(|_| None).collect());
    let jobs = opts.jobs.clamp(1, opts.rows.len());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= opts.rows.len() {
                    break;
                }
                let row = opts.rows[i];
                log::info!("ablation row '{}' starting", row.label());
                let run = RunOptions {
                    out_dir: opts.out_dir.as_ref().map(|d| d.join(row.slug())),
                    stop_at: None,
                    resume: opts.start.clone(),
                };
                let res =
                    run_training(model, &configs[i], data, run).and_then(|o| summarize_log(row, &o.log, from_step));
                results.lock().unwrap()[i] = Some(res);
            });
        }
    });
    let summaries = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every row ran"))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &opts.out_dir {
        let summaries = summarize_dir(dir, &opts.rows, from_step)?;
        for (name, text) in [
            ("summary.txt", summary_table(&summaries)),
            ("summary.csv", summary_csv(&summaries)),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        return Ok(summaries);
    }
    Ok(summaries)
}
