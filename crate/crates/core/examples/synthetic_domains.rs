//! Source and target domains side by side: a few rendered pairs with their
//! flow and visibility, plus a dataset written to disk and read back.
//!
//! `cargo run --release --example synthetic_domains [out_dir]`

use std::path::PathBuf;

use flowda::flowcore::{flow_to_color, save_rgb_png, Image};
use flowda::synthdata::{generate_seeded, make_domain_pairs, read_dataset, write_dataset, SceneSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "target/example-out/domains".into()),
    );
    std::fs::create_dir_all(&out)?;

    for (name, spec) in [
        ("source", SceneSpec::default_source()),
        ("target", SceneSpec::default_target()),
    ] {
        for seed in 0..3 {
            let p = generate_seeded(&spec, format!("{name}_{seed}"), seed)?;
            save_rgb_png(&p.i1, out.join(format!("{name}_{seed}_frame1.png")))?;
            save_rgb_png(&p.i2, out.join(format!("{name}_{seed}_frame2.png")))?;
            save_rgb_png(
                &flow_to_color(&p.gt_flow, None),
                out.join(format!("{name}_{seed}_flow.png")),
            )?;
            let vis = Image::new(3, p.i1.height(), p.i1.width(), {
                let m: Vec<f64> = p
                    .gt_occlusion
                    .data()
                    .iter()
                    .map(|&v| if v { 1.0 } else { 0.0 })
                    .collect();
                m.repeat(3)
            })?;
            save_rgb_png(&vis, out.join(format!("{name}_{seed}_visible.png")))?;
            println!(
                "{name} {seed}: mean |flow| {:.2} px, visible {:.1}%",
                p.gt_flow.mean_magnitude(),
                100.0 * p.gt_occlusion.fraction()
            );
        }
        println!("{name} spec hash {}", spec.hash());
    }

    let (source, target) = (SceneSpec::default_source(), SceneSpec::default_target());
    let data = make_domain_pairs(&source, &target, 8, &mut ChaCha8Rng::seed_from_u64(0))?;
    let dir = out.join("dataset");
    write_dataset(&dir, &data, &source, &target)?;
    let (back, _, _) = read_dataset(&dir)?;
    println!(
        "dataset: {} source, {} target train, {} target eval pairs written to {}",
        back.source.len(),
        back.target_train.len(),
        back.target_eval.len(),
        dir.display()
    );
    Ok(())
}
