//! End-point error, Fl-all, `.flo` round trip and colour-wheel rendering.
//!
//! `cargo run --release --example metrics_and_flo [out_dir]`

use std::path::PathBuf;

use flowda::flowcore::{epe_map, fl_all, flow_to_color, mean_epe, read_flow_file, save_rgb_png, write_flow_file};
use flowda::flowcore::{BinaryMask, FlowField};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/example-out".into()));
    std::fs::create_dir_all(&out)?;

    // A rotating field and a prediction that is off by a constant bias.
    let (h, w) = (48, 64);
    let gt = FlowField::from_fn(h, w, |x, y| {
        let (dx, dy) = (x as f64 - 32.0, y as f64 - 24.0);
        (-0.15 * dy, 0.15 * dx)
    });
    let pred = FlowField::from_fn(h, w, |x, y| {
        let (u, v) = gt.at(y, x);
        (u + 1.0, v - 0.5)
    });
    let valid = BinaryMask::ones(h, w);
    let epe = epe_map(&pred, &gt)?;
    println!("EPE at (0,0): {:.4}", epe.get(0, 0));
    println!(
        "mean EPE {:.4}, Fl-all {:.2}%",
        mean_epe(&pred, &gt, &valid)?,
        fl_all(&pred, &gt, &valid)?
    );

    let path = out.join("rotation.flo");
    write_flow_file(&path, &gt)?;
    let back = read_flow_file(&path)?;
    // .flo stores f32, so the round trip is exact only up to that rounding.
    let as_f32 = FlowField::from_fn(h, w, |x, y| {
        let (u, v) = gt.at(y, x);
        (u as f32 as f64, v as f32 as f64)
    });
    println!("flo round trip equals the f32-rounded field: {}", back == as_f32);

    save_rgb_png(&flow_to_color(&gt, None), out.join("rotation.png"))?;
    println!("wrote {}", out.join("rotation.png").display());
    Ok(())
}
