//! Training loop behaviour on small synthetic data.

use cnn_ids::metrics::{compute_metrics, confusion, predict};
use cnn_ids::synthetic::separable_dataset;
use cnn_ids::trainer::{
    evaluate_loss, load_checkpoint, save_checkpoint, train, zero_output_layer, TrainConfig,
};
use cnn_ids::{Error, FormatError};

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        learning_rate: 3e-3,
        dropout_rate: 0.2,
        conv_filters: vec![8, 8, 8],
        dense_units: 16,
        validation_fraction: 0.0,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn two_class_toy_is_learned_in_three_epochs() {
    let ds = separable_dataset(200, 22, 2, 1);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        conv_filters: vec![16, 16, 16],
        ..small_config()
    };
    let (params, report) = train(&ds, &cfg).unwrap();
    let pred = predict(&params, &ds.features).unwrap();
    let m = compute_metrics(&confusion(&ds.labels, &pred, 2).unwrap()).unwrap();
    assert_eq!(m.accuracy, 100.0, "{m}");
    assert_eq!(report.adam_steps, 3 * 200u64.div_ceil(16));
    assert_eq!(report.gradient_evaluations, 3 * 200);
}

#[test]
fn single_full_batch_epoch_is_one_step() {
    let ds = separable_dataset(40, 22, 2, 2);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 40,
        ..small_config()
    };
    let (_, report) = train(&ds, &cfg).unwrap();
    assert_eq!(report.adam_steps, 1);
}

#[test]
fn oversized_batch_is_clamped() {
    let ds = separable_dataset(30, 22, 3, 2);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 256,
        ..small_config()
    };
    let (_, report) = train(&ds, &cfg).unwrap();
    assert_eq!(report.batch_size, 30);
    assert_eq!(report.adam_steps, 2);
}

#[test]
fn same_seed_gives_identical_parameters_parallel_or_not() {
    let ds = separable_dataset(100, 24, 3, 3);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 40,
        validation_fraction: 0.1,
        ..small_config()
    };
    let (a, ra) = train(&ds, &cfg).unwrap();
    let (b, _) = train(&ds, &cfg).unwrap();
    let (c, rc) = train(
        &ds,
        &TrainConfig {
            parallel: false,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(a.tensors(), b.tensors());
    assert_eq!(a.tensors(), c.tensors());
    assert_eq!(ra.epochs[1].train_loss, rc.epochs[1].train_loss);
    let (d, _) = train(&ds, &TrainConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a.tensors(), d.tensors());
}

#[test]
fn loss_decreases_and_timings_add_up() {
    let ds = separable_dataset(300, 24, 4, 4);
    let cfg = TrainConfig {
        epochs: 4,
        dropout_rate: 0.0,
        validation_fraction: 0.2,
        ..small_config()
    };
    let (_, report) = train(&ds, &cfg).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(report.epochs.iter().all(|e| e.val_loss.is_some()));
    assert_eq!(report.train_rows + report.validation_rows, 300);
    // validation rows never reach the gradient path
    assert_eq!(report.validation_rows, 60);
    assert_eq!(report.gradient_evaluations, 4 * report.train_rows as u64);
    let sum: f64 = report.epochs.iter().map(|e| e.seconds).sum();
    assert!(sum <= report.total_seconds * 1.05);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,train_loss,val_loss,seconds\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn zeroed_output_layer_gives_log_k_loss() {
    let ds = separable_dataset(50, 22, 10, 5);
    let cfg = small_config();
    let (mut params, _) = train(&ds, &TrainConfig { epochs: 1, ..cfg }).unwrap();
    zero_output_layer(&mut params);
    let loss = evaluate_loss(&params, &ds).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-6, "{loss}");
}

#[test]
fn empty_dataset_is_rejected() {
    let ds = separable_dataset(10, 22, 2, 6).subset(&[]);
    assert!(matches!(train(&ds, &small_config()), Err(Error::Data(_))));
}

#[test]
fn too_few_features_for_the_stack_is_an_architecture_error() {
    let ds = separable_dataset(20, 12, 2, 6);
    let err = train(&ds, &small_config()).unwrap_err();
    assert!(matches!(err, Error::Architecture(_)), "{err}");
    assert!(err.to_string().contains("conv"), "{err}");
}

#[test]
fn huge_learning_rate_is_reported_as_divergence_or_survives() {
    let ds = separable_dataset(64, 22, 2, 9);
    let cfg = TrainConfig {
        learning_rate: 1e30,
        epochs: 3,
        ..small_config()
    };
    match train(&ds, &cfg) {
        Ok((p, _)) => assert!(p
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|v| v.is_finite()))),
        Err(e) => assert!(matches!(e, Error::Divergence { .. }), "{e}"),
    }
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let ds = separable_dataset(60, 22, 3, 10);
    let (params, report) = train(&ds, &small_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ids");
    save_checkpoint(&params, &report, &path).unwrap();
    let (back, meta) = load_checkpoint(&path).unwrap();
    assert_eq!(back.tensors(), params.tensors());
    assert_eq!(meta.loss_history.len(), 3);
    assert_eq!(meta.loss_history[2].train_loss, report.epochs[2].train_loss);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(
        load_checkpoint(&path),
        Err(Error::Format(FormatError::BadMagic))
    ));
}
