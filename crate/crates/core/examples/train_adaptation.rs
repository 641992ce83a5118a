//! Source-only warm-up followed by mean-teacher adaptation on a small
//! synthetic dataset, with the metrics log and checkpoints on disk.
//!
//! `cargo run --release --example train_adaptation [out_dir] [steps] [pairs]`
//!
//! The defaults finish in a few minutes on one core; the numbers get
//! meaningful from about 2000 steps and 1000 pairs.

use std::path::PathBuf;

use flowda::flownet::FlowNet;
use flowda::synthdata::{make_domain_pairs, SceneSpec};
use flowda::trainer::{evaluate_with, read_log, run_training, LogRecord, RunOptions, TrainConfig, METRICS_FILE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/train".into()));
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300);
    let pairs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(128);

    let data = make_domain_pairs(
        &SceneSpec::default_source(),
        &SceneSpec::default_target(),
        pairs,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let zero = evaluate_with(&data.target_eval, |p| {
        Ok(flowda::flowcore::FlowField::zeros(p.i1.height(), p.i1.width()))
    })?;
    println!("zero-flow predictor on target: {}", zero.summary());

    let mut cfg = TrainConfig {
        total_steps: steps,
        pretrain_steps: steps / 2,
        eval_every: (steps / 6).max(1),
        ..TrainConfig::default()
    };
    cfg.optimizer.lr = 1e-3;
    cfg.acw.total_steps = steps - cfg.pretrain_steps;
    let net = FlowNet::new(cfg.net.clone())?;
    let run = run_training(
        &net,
        &cfg,
        &data,
        RunOptions {
            out_dir: Some(out.clone()),
            ..RunOptions::default()
        },
    )?;

    for rec in read_log(&out.join(METRICS_FILE))? {
        if let LogRecord::Eval(ev) = rec {
            println!(
                "step {:5} {:7}: EPE {:.3}, Fl-all {:.2}",
                ev.step, ev.weights, ev.epe, ev.fl_all
            );
        }
    }
    let last = run.steps().last().expect("at least one step");
    println!(
        "last step: L_S {:.4}, L_A {:.4}, L_U {:.4}, N {:.2}, occluded {:.1}%",
        last.report.l_s,
        last.report.l_a,
        last.report.l_u,
        last.report.n,
        100.0 * last.report.occluded_fraction
    );
    println!("log and checkpoints in {}", out.display());
    Ok(())
}
