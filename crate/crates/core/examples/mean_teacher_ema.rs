//! Teacher weights tracking a moving student through the EMA update.
//!
//! `cargo run --release --example mean_teacher_ema`

use flowda::flownet::{FlowModel, FlowNet, FlowNetConfig};
use flowda::meanteacher::{ema_update, init_teacher, DEFAULT_EMA_DECAY};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowda::Result<()> {
    let net = FlowNet::new(FlowNetConfig::default())?;
    let mut student = net.init_params(&mut ChaCha8Rng::seed_from_u64(0));
    let start = student.values().to_vec();
    let mut teacher = init_teacher(&student);
    println!("{} parameters, decay {DEFAULT_EMA_DECAY}", student.len());

    // The student jumps by +1 on every weight once, then stays put; the
    // teacher closes the gap geometrically.
    student.values_mut().iter_mut().for_each(|v| *v += 1.0);
    for step in 1..=3000u64 {
        ema_update(&mut teacher, &student, DEFAULT_EMA_DECAY)?;
        if [1, 10, 100, 693, 1000, 3000].contains(&step) {
            let moved = teacher.phi.values()[0] - start[0];
            println!(
                "step {step:4}: teacher moved {moved:.4} of the gap (closed form {:.4})",
                1.0 - DEFAULT_EMA_DECAY.powi(step as i32)
            );
        }
    }
    Ok(())
}
