//! The adaptive curriculum mask on a synthetic error map as the factor `N`
//! ramps up over training.
//!
//! `cargo run --release --example curriculum_mask`

use flowda::acw::{acw_mask, current_n, masked_stats, AcwSchedule};
use flowda::flowcore::{BinaryMask, EpeMap};

fn main() -> flowda::Result<()> {
    // Mostly small errors with a hard region in one corner.
    let (h, w) = (32, 32);
    let data = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let base = 0.2 + 0.1 * ((x * 7 + y * 13) % 10) as f64 / 10.0;
            if x > 24 && y > 24 {
                base + 4.0 + (x + y - 50) as f64
            } else {
                base
            }
        })
        .collect();
    let epe = EpeMap::new(h, w, data)?;
    let valid = BinaryMask::ones(h, w);
    let (mean, std) = masked_stats(&epe, &valid)?;
    println!("error map: mean {mean:.3}, std {std:.3}");

    let sched = AcwSchedule {
        total_steps: 1000,
        ..AcwSchedule::default()
    };
    for step in [0, 250, 500, 750, 1000] {
        let n = current_n(step, &sched);
        let easy = acw_mask(&epe, n, &valid)?;
        println!(
            "step {step:4}: N = {n:.1}, threshold {:.3}, easy pixels {:5.1}%",
            mean + n * std,
            100.0 * easy.fraction()
        );
    }
    Ok(())
}
