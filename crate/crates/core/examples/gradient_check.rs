//! Finite-difference check of the network gradients through the full
//! supervised plus unsupervised objective.
//!
//! `cargo run --release --example gradient_check`

use flowda::flowcore::BinaryMask;
use flowda::flownet::{gradient_check, FlowModel, FlowNet, FlowNetConfig, GradCheckConfig};
use flowda::losses::{supervised_loss_var, unsupervised_loss_var, LossWeights};
use flowda::synthdata::{generate_seeded, SceneSpec};
use flowda::warploss::{PhotoLossConfig, SmoothLossConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowda::Result<()> {
    let spec = SceneSpec::default_source().resized(32, 32);
    let pair = generate_seeded(&spec, "check", 1)?;
    let net = FlowNet::new(FlowNetConfig::default())?;
    let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(0));
    println!("{} parameters", params.len());

    let (h, w) = pair.i1.size();
    let easy = BinaryMask::from_fn(h, w, |y, x| (x + y) % 3 != 0);
    let weights = LossWeights::default();
    let (photo, smooth) = (PhotoLossConfig::default(), SmoothLossConfig::default());
    let report = gradient_check(
        |tape, vars| {
            let flow = net.forward_var(tape, vars, &pair.i1, &pair.i2)?;
            let l_s = supervised_loss_var(flow, &pair.gt_flow, &easy, &pair.gt_valid, &weights)?;
            let l_u = unsupervised_loss_var(&pair.i1, &pair.i2, flow, &pair.gt_occlusion, &photo, &smooth)?;
            Ok(l_s.add(l_u))
        },
        &params,
        // Central differences at h = 1e-5 carry ~1e-10 of round-off on an
        // O(1) loss, so relative error is meaningless below ~1e-6.
        &GradCheckConfig {
            denominator_floor: 1e-6,
            ..GradCheckConfig::default()
        },
        &mut ChaCha8Rng::seed_from_u64(1),
    )?;
    println!(
        "checked {} coordinates, max relative error {:.2e}, passed {}",
        report.checked, report.max_rel_error, report.passed
    );
    for c in &report.worst {
        println!(
            "  {}[{}]: analytic {:+.6e}, numeric {:+.6e}",
            c.name, c.index, c.analytic, c.numeric
        );
    }
    Ok(())
}
