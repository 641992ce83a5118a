use autograd::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::{one_cycle_lr, AdamW};
use crate::acw::{acw_mask, current_n};
use crate::error::{Error, Result};
use crate::flowcore::{epe_map, BinaryMask, FlowField, Image};
use crate::flownet::{predict, FlowModel, ParamSet};
use crate::losses::{adaptation_loss_var, supervised_loss_var, total_loss, unsupervised_loss_var, LossReport};
use crate::meanteacher::{ema_update, init_teacher, TeacherState};
use crate::occlusion::fb_occlusion;
use crate::pipeline::{crop_label, crop_size_for, photometric_augment, random_crop};
use crate::synthdata::{LabeledPair, UnlabeledPair};

/// Everything needed to continue training bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Optimizer steps taken so far.
    pub step: u64,
    pub student: ParamSet,
    pub teacher: TeacherState,
    pub optimizer: AdamW,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(model: &dyn FlowModel, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let student = model.init_params(&mut rng);
        TrainState {
            step: 0,
            teacher: init_teacher(&student),
            optimizer: AdamW::new(student.len()),
            student,
            rng,
        }
    }
}

/// Indices of a batch drawn with replacement.
pub fn draw_batch<R: Rng + ?Sized>(rng: &mut R, len: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..len)).collect()
}

fn non_finite(step: u64, what: &str) -> Error {
    let err = Error::NonFiniteLoss {
        step,
        detail: what.to_string(),
    };
    log::error!("{err}");
    err
}

fn checked_flow(step: u64, var: &Var<'_>, what: &str) -> Result<FlowField> {
    let v = var.value();
    if !v.all_finite() {
        return Err(non_finite(step, what));
    }
    FlowField::from_tensor(&v)
}

fn accumulate(acc: &mut [f64], tape: &Tape, loss: Var<'_>, vars: &[Var<'_>], params: &ParamSet) {
    if !loss.requires_grad() {
        return;
    }
    let grads = tape.backward(loss);
    for (a, g) in acc.iter_mut().zip(params.flat_grad(&grads, vars)) {
        *a += g;
    }
}

fn jitter<R: Rng + ?Sized>(on: bool, i1: &Image, i2: &Image, cfg: &TrainConfig, rng: &mut R) -> (Image, Image) {
    if on {
        photometric_augment(i1, i2, &cfg.augment, rng)
    } else {
        (i1.clone(), i2.clone())
    }
}

/// One optimizer step on a source and a target batch.
///
/// Before `pretrain_steps` only the source branch runs and the teacher tracks
/// the student. Afterwards the teacher (unaugmented, full frames, both
/// directions) provides pseudo-labels and an occlusion mask; both are cropped
/// with the student's window; the student sees jittered crops. Gradients of
/// the per-sample losses are summed, AdamW updates the student, then the
/// teacher is updated.
pub fn train_step(
    model: &dyn FlowModel,
    cfg: &TrainConfig,
    state: &mut TrainState,
    source: &[&LabeledPair],
    target: &[&UnlabeledPair],
) -> Result<LossReport> {
    let step = state.step;
    let w = &cfg.weights;
    let ab = &cfg.ablation;
    let adapting = cfg.adapting(step);
    let n = if adapting {
        current_n(step - cfg.pretrain_steps, &cfg.acw)
    } else {
        cfg.acw.n_start
    };
    let use_acw = adapting && ab.acw;
    let mut grad = vec![0.0; state.student.len()];
    let mut report = LossReport {
        n,
        ..Default::default()
    };

    if (!adapting || ab.source_supervision) && w.alpha > 0.0 && !source.is_empty() {
        let (mut l_s, mut frac) = (0.0, 0.0);
        for pair in source {
            let (a1, a2) = jitter(cfg.augment_source, &pair.i1, &pair.i2, cfg, &mut state.rng);
            let tape = Tape::new();
            let vars = state.student.bind(&tape, true);
            let pred = model.forward_var(&tape, &vars, &a1, &a2)?;
            let pred_f = checked_flow(step, &pred, "source prediction")?;
            let easy = if use_acw {
                acw_mask(&epe_map(&pred_f, &pair.gt_flow)?, n, &pair.gt_valid)?
            } else {
                pair.gt_valid.clone()
            };
            let loss = supervised_loss_var(pred, &pair.gt_flow, &easy, &pair.gt_valid, w)?;
            l_s += loss.item();
            frac += easy.count() as f64 / pair.gt_valid.count() as f64;
            accumulate(
                &mut grad,
                &tape,
                loss.mul_scalar(w.alpha / source.len() as f64),
                &vars,
                &state.student,
            );
        }
        report.l_s = l_s / source.len() as f64;
        report.masked_fraction_source = frac / source.len() as f64;
    }

    if adapting && !target.is_empty() {
        let teacher = if ab.ema { &state.teacher.phi } else { &state.student };
        let (mut l_a, mut l_u, mut frac, mut occluded, mut area) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for pair in target {
            let y_t = predict(model, teacher, &pair.i1, &pair.i2)?;
            let o_t = if ab.occ_mask {
                let back = predict(model, teacher, &pair.i2, &pair.i1)?;
                fb_occlusion(&y_t, &back, &cfg.occlusion)?
            } else {
                BinaryMask::ones(y_t.height(), y_t.width())
            };
            let size = if ab.crop {
                crop_size_for(pair.i1.size(), cfg.crop_fraction)
            } else {
                pair.i1.size()
            };
            let (c1, c2, psi) = random_crop(&pair.i1, &pair.i2, size, &mut state.rng)?;
            let (y_tc, o_tc) = crop_label(&y_t, &o_t, &psi)?;
            let (s1, s2) = jitter(cfg.augment_target, &c1, &c2, cfg, &mut state.rng);

            let tape = Tape::new();
            let vars = state.student.bind(&tape, true);
            let pred = model.forward_var(&tape, &vars, &s1, &s2)?;
            let pred_f = checked_flow(step, &pred, "target prediction")?;
            let mut loss = tape.constant(Tensor::scalar(0.0));
            if cfg.pseudo_labels_active() {
                let easy = if use_acw && o_tc.count() > 0 {
                    acw_mask(&epe_map(&pred_f, &y_tc)?, n, &o_tc)?
                } else {
                    o_tc.clone()
                };
                let la = adaptation_loss_var(pred, tape.constant(y_tc.to_tensor()), &o_tc, &easy, w)?;
                l_a += la.item();
                frac += easy.count() as f64 / o_tc.count().max(1) as f64;
                loss = loss.add(la.mul_scalar(w.beta));
            }
            if cfg.unsup_active() {
                let occ = if !ab.occ_mask {
                    BinaryMask::ones(psi.height, psi.width)
                } else if ab.student_occlusion {
                    let back = predict(model, &state.student, &s2, &s1)?;
                    fb_occlusion(&pred_f, &back, &cfg.occlusion)?
                } else {
                    o_tc.clone()
                };
                let lu = unsupervised_loss_var(&c1, &c2, pred, &occ, &cfg.photo, &cfg.smooth)?;
                l_u += lu.item();
                loss = loss.add(lu.mul_scalar(w.gamma));
            }
            occluded += 1.0 - o_tc.fraction();
            area += (psi.height * psi.width) as f64 / (pair.i1.height() * pair.i1.width()) as f64;
            accumulate(
                &mut grad,
                &tape,
                loss.mul_scalar(1.0 / target.len() as f64),
                &vars,
                &state.student,
            );
        }
        let b = target.len() as f64;
        report.l_a = l_a / b;
        report.l_u = l_u / b;
        report.masked_fraction_target = frac / b;
        report.occluded_fraction = occluded / b;
        report.crop_area = area / b;
    }

    report.l_total = total_loss(report.l_s, report.l_a, report.l_u, w);
    if !report.l_total.is_finite() {
        return Err(non_finite(step, &format!("{report:?}")));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(non_finite(step, "gradient"));
    }

    let lr = one_cycle_lr(&cfg.optimizer, step, cfg.total_steps);
    state
        .optimizer
        .step(state.student.values_mut(), &grad, lr, &cfg.optimizer)?;
    if adapting && ab.ema {
        ema_update(&mut state.teacher, &state.student, cfg.ema_decay)?;
    } else {
        state.teacher.phi = state.student.clone();
    }
    state.step += 1;
    Ok(report)
}
