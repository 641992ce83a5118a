//! Every component ablation row from one shared source-pretrained start,
//! summarized as a table and a CSV file.
//!
//! `cargo run --release --example ablation_sweep [out_dir] [adapt_steps] [jobs]`

use std::path::PathBuf;

use flowda::flownet::FlowNet;
use flowda::synthdata::{make_domain_pairs, SceneSpec};
use flowda::trainer::{
    run_ablation, run_training, summary_table, AblationOptions, AblationRow, RunOptions, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/example-out/ablation".into()));
    let adapt: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let jobs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);

    let data = make_domain_pairs(
        &SceneSpec::default_source(),
        &SceneSpec::default_target(),
        64,
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let mut cfg = TrainConfig {
        pretrain_steps: adapt,
        total_steps: 2 * adapt,
        eval_every: 0,
        ..TrainConfig::default()
    };
    cfg.acw.total_steps = adapt;
    let net = FlowNet::new(cfg.net.clone())?;

    // Shared warm start: the rows differ only in what happens after it.
    let warm = run_training(
        &net,
        &cfg,
        &data,
        RunOptions {
            stop_at: Some(adapt),
            ..RunOptions::default()
        },
    )?;
    let rows = run_ablation(
        &net,
        &cfg,
        &data,
        AblationOptions {
            rows: AblationRow::ALL.to_vec(),
            jobs,
            out_dir: Some(out.clone()),
            start: Some(warm.state),
        },
    )?;
    print!("{}", summary_table(&rows));
    println!("per-row logs, summary.txt and summary.csv in {}", out.display());
    Ok(())
}
