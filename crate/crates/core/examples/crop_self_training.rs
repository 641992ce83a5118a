//! One target-branch pseudo-label step by hand: the teacher sees full frames,
//! its flow is cropped to the student's window, the forward-backward check
//! and the curriculum mask gate the adaptation loss.
//!
//! `cargo run --release --example crop_self_training`

use flowda::acw::{acw_mask, current_n, AcwSchedule};
use flowda::flowcore::{epe_map, BinaryMask};
use flowda::flownet::{predict, FlowModel, FlowNet, FlowNetConfig};
use flowda::losses::{adaptation_loss, LossWeights};
use flowda::occlusion::{fb_occlusion, OcclusionConfig};
use flowda::pipeline::{crop_label, crop_size_for, photometric_augment, random_crop, AugmentConfig};
use flowda::synthdata::{generate_seeded, SceneSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowda::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pair = generate_seeded(&SceneSpec::default_target(), "target", 5)?;
    let net = FlowNet::new(FlowNetConfig::default())?;
    let teacher = net.init_params(&mut rng);
    let mut student = teacher.clone();
    student.values_mut().iter_mut().for_each(|v| *v *= 0.9);

    let fwd = predict(&net, &teacher, &pair.i1, &pair.i2)?;
    let bwd = predict(&net, &teacher, &pair.i2, &pair.i1)?;
    let visible = fb_occlusion(&fwd, &bwd, &OcclusionConfig::default())?;

    let size = crop_size_for(pair.i1.size(), 0.75);
    let (c1, c2, psi) = random_crop(&pair.i1, &pair.i2, size, &mut rng)?;
    let (s1, s2) = photometric_augment(&c1, &c2, &AugmentConfig::default(), &mut rng);
    let (pseudo, pseudo_visible) = crop_label(&fwd, &visible, &psi)?;
    println!(
        "crop window {psi:?}, {:.1}% of it visible",
        100.0 * pseudo_visible.fraction()
    );

    let pred = predict(&net, &student, &s1, &s2)?;
    let everywhere = BinaryMask::ones(pred.height(), pred.width());
    let n = current_n(500, &AcwSchedule::default());
    let easy = acw_mask(&epe_map(&pred, &pseudo)?, n, &pseudo_visible)?;
    let w = LossWeights::default();
    println!("N = {n:.1}, easy pixels {:.1}%", 100.0 * easy.fraction());
    println!(
        "adaptation loss {:.5}",
        adaptation_loss(&pred, &pseudo, &pseudo_visible, &easy, &w)?
    );
    println!(
        "without the visibility gate {:.5}",
        adaptation_loss(&pred, &pseudo, &everywhere, &easy, &w)?
    );
    Ok(())
}
