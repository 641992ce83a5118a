//! Backward warping and the unsupervised loss terms on a generated pair.
//!
//! `cargo run --release --example warp_and_photometric`

use flowda::flowcore::FlowField;
use flowda::synthdata::{generate_seeded, MotionRange, SceneSpec};
use flowda::warploss::{backward_warp, photometric_loss, smoothness_loss, PhotoLossConfig, SmoothLossConfig};

fn main() -> flowda::Result<()> {
    // Integer translations only, so the ground truth warp is exact.
    let spec = SceneSpec {
        background_motion: MotionRange::translation(4.0, true),
        foreground_motion: MotionRange::translation(8.0, true),
        ..SceneSpec::default_source()
    };
    let pair = generate_seeded(&spec, "demo", 7)?;
    let (warped, in_frame) = backward_warp(&pair.i2, &pair.gt_flow)?;

    let mut worst: f64 = 0.0;
    for y in 0..pair.i1.height() {
        for x in 0..pair.i1.width() {
            if pair.gt_occlusion.get(y, x) && in_frame.get(y, x) {
                for c in 0..3 {
                    worst = worst.max((warped.get(c, y, x) - pair.i1.get(c, y, x)).abs());
                }
            }
        }
    }
    println!("max |I1 - warp(I2, gt)| on visible pixels: {worst:.2e}");

    let photo = PhotoLossConfig::default();
    let smooth = SmoothLossConfig::default();
    let zero = FlowField::zeros(pair.i1.height(), pair.i1.width());
    for (name, flow) in [("ground truth", &pair.gt_flow), ("zero flow", &zero)] {
        println!(
            "{name:>12}: photometric {:.4}, smoothness {:.4}",
            photometric_loss(&pair.i1, &pair.i2, flow, &pair.gt_occlusion, &photo)?,
            smoothness_loss(flow, &pair.i1, &smooth)?
        );
    }
    Ok(())
}
