mod common;

use common::micro_stgcn;
use skelact_core::data::{synth_generate, SkeletonSequence, SynthSpec};
use skelact_core::models::{Model, ModelConfig};
use skelact_core::numerics::{Tape, Tensor};
use skelact_core::pipeline::{InputPipeline, InputVariant};
use skelact_core::training::{lr_at, train, Schedule, Sgd, TrainConfig};
use skelact_core::Error;

fn synthetic(frames: usize, per_class: usize) -> Vec<SkeletonSequence> {
    let ds = synth_generate(&SynthSpec {
        per_class,
        ..SynthSpec::default()
    })
    .unwrap();
    let mut pipe = InputPipeline::new(InputVariant::Original);
    pipe.preprocess.target_frames = frames;
    pipe.prepare_all(&ds.sequences).unwrap()
}

fn micro_model(classes: usize) -> Model {
    Model::build(&ModelConfig::Stgcn(micro_stgcn(classes)), 1).unwrap()
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        base_lr: 0.05,
        schedule: Schedule::Step { every: 4, factor: 0.5 },
        total_epochs: epochs,
        batch_size: 8,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn quadratic_converges_with_plain_sgd() {
    let mut p = vec![Tensor::scalar(0.0)];
    let mut sgd = Sgd::new(0.0, 0.0);
    let mut steps = 0;
    while (p[0].item().unwrap() - 3.0).abs() >= 1e-3 {
        let tape = Tape::new();
        let x = tape.leaf(p[0].clone());
        let d = tape.add(&x, &tape.constant(Tensor::scalar(-3.0))).unwrap();
        let loss = tape.sum(&tape.mul(&d, &d).unwrap());
        let g = tape.backward(&loss).unwrap().get_or_zeros(&x);
        sgd.step(&mut p, &[g], 0.1).unwrap();
        steps += 1;
        assert!(steps <= 100, "not converged after 100 steps");
    }
    // the iteration contracts by exactly 1 − 2·lr per step
    let expected = 3.0 * 0.8f64.powi(steps);
    assert!(((3.0 - p[0].item().unwrap()) - expected).abs() < 1e-12);
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let data = synthetic(16, 1);
    let mut model = micro_model(8);
    let before = model.params().clone();
    let history = train(&mut model, &data, &quick_config(0)).unwrap();
    assert!(history.epochs.is_empty());
    assert_eq!(model.params(), &before);
}

#[test]
fn same_seed_same_history() {
    let data = synthetic(16, 2);
    let run = || {
        let mut model = micro_model(8);
        let h = train(&mut model, &data, &quick_config(3)).unwrap();
        (h, model.params().clone())
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
}

#[test]
fn recorded_rates_follow_schedule() {
    let data = synthetic(16, 1);
    let cfg = quick_config(9);
    let mut model = micro_model(8);
    let h = train(&mut model, &data, &cfg).unwrap();
    for r in &h.epochs {
        assert_eq!(r.lr, lr_at(&cfg, r.epoch).unwrap());
    }
    assert_eq!(h.epochs[3].lr, 0.05);
    assert_eq!(h.epochs[4].lr, 0.025);
    assert_eq!(h.epochs[8].lr, 0.0125);
}

#[test]
fn smoothed_loss_is_non_increasing_on_synthetic_data() {
    let data = synthetic(16, 4);
    let mut model = micro_model(8);
    let h = train(&mut model, &data, &quick_config(16)).unwrap();
    let smooth = h.smoothed_loss(5);
    for w in smooth.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{smooth:?}");
    }
    assert!(h.final_record().unwrap().loss < h.epochs[0].loss);
}

#[test]
fn exploding_rate_reports_divergence() {
    let data = synthetic(16, 1);
    let mut model = micro_model(8);
    let cfg = TrainConfig {
        base_lr: f64::MAX,
        ..quick_config(3)
    };
    match train(&mut model, &data, &cfg) {
        Err(Error::Divergence { epoch, batch }) => assert!(epoch < 3 && batch < 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn oversized_batch_with_drop_last_is_rejected() {
    let data = synthetic(16, 1);
    let mut model = micro_model(8);
    let cfg = TrainConfig {
        drop_last: true,
        batch_size: 9,
        ..quick_config(1)
    };
    assert!(matches!(train(&mut model, &data, &cfg), Err(Error::Config(_))));
    let cfg = TrainConfig {
        drop_last: true,
        batch_size: 3,
        ..quick_config(1)
    };
    assert!(train(&mut model, &data, &cfg).is_ok());
}

#[test]
fn labels_beyond_model_classes_are_rejected() {
    let data = synthetic(16, 1);
    let mut model = micro_model(4);
    assert!(train(&mut model, &data, &quick_config(1)).is_err());
}

#[test]
fn early_stop_on_target_accuracy() {
    let data = synthetic(16, 1);
    let mut model = micro_model(8);
    let cfg = TrainConfig {
        target_accuracy: Some(0.0),
        ..quick_config(5)
    };
    let h = train(&mut model, &data, &cfg).unwrap();
    assert_eq!(h.epochs.len(), 1);
    assert!(h.stopped_early);
    assert!(h.epochs[0].eval_acc.is_some());
}

#[test]
fn history_csv_has_a_row_per_epoch() {
    let data = synthetic(16, 1);
    let mut model = micro_model(8);
    let h = train(&mut model, &data, &quick_config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    h.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 3);
}
