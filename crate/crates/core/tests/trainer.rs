use std::sync::Mutex;

use autograd::{Tape, Var};
use flowda::flowcore::{FlowField, Image};
use flowda::flownet::{FlowModel, FlowNet, FlowNetConfig, ParamSet};
use flowda::synthdata::{make_domain_pairs, DomainPairs, SceneSpec};
use flowda::trainer::{
    evaluate_with, frames_only, run_training, train_step, RunOptions, TrainConfig, TrainState, LAST_CHECKPOINT,
};
use flowda::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(n: usize, seed: u64) -> DomainPairs {
    let small = |s: SceneSpec| s.resized(24, 24);
    make_domain_pairs(
        &small(SceneSpec::default_source()),
        &small(SceneSpec::default_target()),
        n,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

fn net() -> FlowNet {
    FlowNet::new(FlowNetConfig::default()).unwrap()
}

/// Forwards to a real network and records every call's inputs together with
/// the first parameter values, which identify the weights in use.
struct Recording {
    inner: FlowNet,
    calls: Mutex<Vec<(Vec<f64>, Image, Image)>>,
}

impl FlowModel for Recording {
    fn init_params(&self, rng: &mut dyn rand::RngCore) -> ParamSet {
        self.inner.init_params(rng)
    }

    fn forward_var<'t>(&self, tape: &'t Tape, params: &[Var<'t>], i1: &Image, i2: &Image) -> flowda::Result<Var<'t>> {
        let head = params[0].value().data()[..8].to_vec();
        self.calls.lock().unwrap().push((head, i1.clone(), i2.clone()));
        self.inner.forward_var(tape, params, i1, i2)
    }
}

/// Returns NaN flow.
struct Broken(FlowNet);

impl FlowModel for Broken {
    fn init_params(&self, rng: &mut dyn rand::RngCore) -> ParamSet {
        self.0.init_params(rng)
    }

    fn forward_var<'t>(&self, tape: &'t Tape, params: &[Var<'t>], i1: &Image, i2: &Image) -> flowda::Result<Var<'t>> {
        Ok(self.0.forward_var(tape, params, i1, i2)?.mul_scalar(f64::NAN))
    }
}

#[test]
fn target_batch_cannot_move_the_student_without_target_losses() {
    let d = data(8, 1);
    let net = net();
    let mut cfg = TrainConfig::default();
    cfg.weights.beta = 0.0;
    cfg.weights.gamma = 0.0;
    let start = TrainState::new(&net, &cfg);
    let source = [&d.source[0], &d.source[1]];
    let mut a = start.clone();
    let mut b = start.clone();
    train_step(&net, &cfg, &mut a, &source, &[&d.target_train[0], &d.target_train[1]]).unwrap();
    train_step(&net, &cfg, &mut b, &source, &[&d.target_train[5], &d.target_train[6]]).unwrap();
    assert_eq!(a, b);
    let mut c = start;
    train_step(&net, &cfg, &mut c, &source, &[]).unwrap();
    assert_eq!(a, c);
}

#[test]
fn teacher_sees_only_unaugmented_full_frames() {
    let d = data(8, 2);
    let model = Recording {
        inner: net(),
        calls: Mutex::new(Vec::new()),
    };
    let cfg = TrainConfig::default();
    let mut state = TrainState::new(&model, &cfg);
    // Make the teacher distinguishable from the student.
    state.teacher.phi.values_mut().iter_mut().for_each(|v| *v *= 0.5);
    let teacher_head = state.teacher.phi.values()[..8].to_vec();
    let target = [&d.target_train[0], &d.target_train[3]];
    train_step(&model, &cfg, &mut state, &[&d.source[0]], &target).unwrap();

    let calls = model.calls.lock().unwrap();
    let teacher_calls: Vec<_> = calls.iter().filter(|c| c.0 == teacher_head).collect();
    assert_eq!(
        teacher_calls.len(),
        2 * target.len(),
        "forward and backward per target pair"
    );
    for (_, i1, i2) in teacher_calls {
        let untouched = target
            .iter()
            .any(|p| (i1 == &p.i1 && i2 == &p.i2) || (i1 == &p.i2 && i2 == &p.i1));
        assert!(untouched, "teacher input was cropped or augmented");
    }
    // The student did see crops.
    let full = d.target_train[0].i1.size();
    assert!(calls.iter().any(|c| c.0 != teacher_head && c.1.size() != full));
}

#[test]
fn without_ema_the_teacher_is_the_student() {
    let d = data(8, 3);
    let net = net();
    let mut cfg = TrainConfig {
        total_steps: 4,
        eval_every: 0,
        ..TrainConfig::default()
    };
    cfg.ablation.ema = false;
    let mut state = TrainState::new(&net, &cfg);
    for i in 0..4 {
        train_step(&net, &cfg, &mut state, &[&d.source[i]], &[&d.target_train[i]]).unwrap();
        assert_eq!(state.teacher.phi, state.student);
    }
}

#[test]
fn with_ema_the_teacher_lags_the_student() {
    let d = data(8, 3);
    let net = net();
    let cfg = TrainConfig::default();
    let mut state = TrainState::new(&net, &cfg);
    let before = state.teacher.phi.clone();
    train_step(&net, &cfg, &mut state, &[&d.source[0]], &[&d.target_train[0]]).unwrap();
    let lambda = cfg.ema_decay;
    for ((&t, &t0), &s) in state
        .teacher
        .phi
        .values()
        .iter()
        .zip(before.values())
        .zip(state.student.values())
    {
        assert_eq!(t, lambda * t0 + (1.0 - lambda) * s);
    }
    assert_eq!(state.teacher.step_count, 1);
}

#[test]
fn reported_total_is_the_weighted_sum() {
    let d = data(8, 4);
    let net = net();
    let mut cfg = TrainConfig::default();
    cfg.weights.alpha = 0.7;
    cfg.weights.beta = 1.3;
    cfg.weights.gamma = 0.4;
    let mut state = TrainState::new(&net, &cfg);
    for i in 0..3 {
        let r = train_step(&net, &cfg, &mut state, &[&d.source[i]], &[&d.target_train[i]]).unwrap();
        assert!(r.l_s > 0.0 && r.l_a > 0.0 && r.l_u > 0.0);
        assert_eq!(r.l_total, 0.7 * r.l_s + 1.3 * r.l_a + 0.4 * r.l_u);
    }
}

#[test]
fn pretraining_runs_the_source_branch_only() {
    let d = data(8, 5);
    let net = net();
    let cfg = TrainConfig {
        pretrain_steps: 2,
        total_steps: 4,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&net, &cfg);
    let target = [&d.target_train[0]];
    let r = train_step(&net, &cfg, &mut state, &[&d.source[0]], &target).unwrap();
    assert_eq!((r.l_a, r.l_u, r.crop_area), (0.0, 0.0, 0.0));
    assert_eq!(state.teacher.phi, state.student);
    train_step(&net, &cfg, &mut state, &[&d.source[1]], &target).unwrap();
    let r = train_step(&net, &cfg, &mut state, &[&d.source[2]], &target).unwrap();
    assert!(r.l_a > 0.0 && r.l_u > 0.0 && r.crop_area > 0.0);
}

#[test]
fn non_finite_loss_is_an_error() {
    let d = data(8, 6);
    let model = Broken(net());
    let cfg = TrainConfig::default();
    let mut state = TrainState::new(&model, &cfg);
    let before = state.clone();
    let err = train_step(&model, &cfg, &mut state, &[&d.source[0]], &[&d.target_train[0]]).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { step: 0, .. }), "{err}");
    assert_eq!(state.student, before.student);
}

#[test]
fn evaluation_oracles() {
    let d = data(8, 7);
    let perfect = evaluate_with(&d.target_eval, |p| Ok(p.gt_flow.clone())).unwrap();
    assert_eq!((perfect.epe, perfect.fl_all), (0.0, 0.0));
    let zero = evaluate_with(
        &d.target_eval,
        frames_only(|i1, _| Ok(FlowField::zeros(i1.height(), i1.width()))),
    )
    .unwrap();
    let mean_mag: f64 =
        d.target_eval.iter().map(|p| p.gt_flow.mean_magnitude()).sum::<f64>() / d.target_eval.len() as f64;
    assert!((zero.epe - mean_mag).abs() < 1e-12);
    assert!(evaluate_with(&[], |p| Ok(p.gt_flow.clone())).is_err());
}

#[test]
fn smoke_run_writes_log_and_checkpoints() {
    let d = data(8, 8);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        total_steps: 10,
        eval_every: 5,
        ..TrainConfig::default()
    };
    let out = run_training(
        &net(),
        &cfg,
        &d,
        RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(out.steps().count(), 10);
    assert!(out.student_eval.is_some() && out.teacher_eval.is_some());
    assert!(dir.path().join(LAST_CHECKPOINT).exists());
    assert!(dir.path().join("best.ckpt").exists());
}

#[test]
fn mismatched_inputs_are_rejected_at_startup() {
    let d = data(8, 9);
    let cfg = TrainConfig {
        total_steps: 2,
        ..TrainConfig::default()
    };
    let wide = FlowNet::new(FlowNetConfig {
        feature_channels: 16,
        ..FlowNetConfig::default()
    })
    .unwrap();
    let foreign = TrainState::new(&wide, &cfg);
    let resumed = RunOptions {
        resume: Some(foreign),
        ..RunOptions::default()
    };
    assert!(matches!(
        run_training(&net(), &cfg, &d, resumed),
        Err(Error::Checkpoint(_))
    ));

    let no_target = DomainPairs {
        target_train: Vec::new(),
        ..d.clone()
    };
    assert!(run_training(&net(), &cfg, &no_target, RunOptions::default()).is_err());
    let mut source_only = cfg.clone();
    source_only.weights.beta = 0.0;
    source_only.weights.gamma = 0.0;
    assert!(run_training(&net(), &source_only, &no_target, RunOptions::default()).is_ok());
}
