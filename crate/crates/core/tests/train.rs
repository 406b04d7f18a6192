use std::collections::BTreeMap;

use multiformer::data::{labeled_patch, stratified_split, synth_dataset, HsiCube, Sample, Split, SplitSpec};
use multiformer::model::{ModelConfig, MultiFormer};
use multiformer::train::{evaluate, train, TrainConfig};
use multiformer::Error;

fn dataset(size: usize, bands: usize, classes: usize, per_class: usize, seed: u64) -> (HsiCube, Split) {
    let (cube, labels) = synth_dataset(size, size, bands, classes, 0.05, seed).unwrap();
    let counts: BTreeMap<u16, usize> = (1..=classes as u16).map(|c| (c, per_class)).collect();
    let split = stratified_split(&labels, &SplitSpec { counts, seed }).unwrap();
    (cube.normalize(), split)
}

#[test]
fn zeroed_output_maps_give_uniform_first_loss() {
    let (cube, split) = dataset(32, 16, 4, 16, 0);
    let mut model = MultiFormer::<f32>::init(ModelConfig::desk(16, 4), 0).unwrap();
    let names: Vec<String> = model
        .specs()
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| n.ends_with("msa.wo") || n.contains("mlp.fc2") || n == "pos_embed")
        .collect();
    for n in names {
        model.param_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let batch = &split.train[..TrainConfig::default().batch_size];
    let mean: f64 = batch
        .iter()
        .map(|s| f64::from(model.loss_and_grads(&labeled_patch(&cube, s, 9).unwrap()).unwrap().loss))
        .sum::<f64>()
        / batch.len() as f64;
    assert!((mean - 4f64.ln()).abs() < 1e-3, "{mean}");
}

#[test]
fn early_loss_moving_average_does_not_increase() {
    let (cube, split) = dataset(64, 16, 4, 50, 1);
    let mut model = MultiFormer::<f32>::init(ModelConfig::desk(16, 4), 1).unwrap();
    let cfg = TrainConfig { epochs: 10, seed: 1, ..TrainConfig::default() };
    let hist = train(&mut model, &cube, &split.train, None, &cfg, |_, _| Ok(())).unwrap();
    let losses: Vec<f64> = hist.iter().map(|h| h.loss).collect();
    let avg: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    for w in avg.windows(2) {
        assert!(w[1] <= w[0], "{losses:?}");
    }
}

#[test]
fn overfit_model_has_diagonal_training_matrix() {
    let (cube, split) = dataset(24, 6, 3, 5, 2);
    let cfg = ModelConfig {
        spectral_neighbors: 3,
        dim_inner: 8,
        dim_spectral: 8,
        ..ModelConfig::desk(6, 3)
    };
    let mut model = MultiFormer::<f32>::init(cfg, 2).unwrap();
    let tc = TrainConfig { epochs: 100, batch_size: 5, learning_rate: 1e-3, seed: 2, ..TrainConfig::default() };
    train(&mut model, &cube, &split.train, None, &tc, |_, _| Ok(())).unwrap();
    let cm = evaluate(&model, &cube, &split.train).unwrap();
    assert_eq!(cm.total(), split.train.len() as u64);
    assert_eq!(cm.trace(), cm.total(), "{cm:?}");
}

#[test]
fn evaluation_is_pure_and_conserves_counts() {
    let (cube, split) = dataset(24, 6, 3, 5, 3);
    let model = MultiFormer::<f32>::init(ModelConfig { spectral_neighbors: 3, ..ModelConfig::desk(6, 3) }, 3).unwrap();
    let subset = &split.test[..40];
    let a = evaluate(&model, &cube, subset).unwrap();
    let b = evaluate(&model, &cube, subset).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total(), 40);
    let empty: [Sample; 0] = [];
    let z = evaluate(&model, &cube, &empty).unwrap();
    assert_eq!(z.total(), 0);
    assert_eq!(z.classes(), 3);
}

#[test]
fn non_finite_loss_aborts() {
    let (cube, split) = dataset(24, 6, 3, 5, 4);
    let mut model = MultiFormer::<f32>::init(ModelConfig { spectral_neighbors: 3, ..ModelConfig::desk(6, 3) }, 4).unwrap();
    model.param_mut("head.fc.bias").unwrap().data_mut()[0] = f32::INFINITY;
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let err = train(&mut model, &cube, &split.train, None, &cfg, |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 0, .. } | Error::NumericInput { .. }), "{err}");
}

#[test]
fn zero_epochs_leave_parameters_untouched() {
    let (cube, split) = dataset(24, 6, 3, 5, 5);
    let cfg = ModelConfig { spectral_neighbors: 3, ..ModelConfig::desk(6, 3) };
    let mut model = MultiFormer::<f32>::init(cfg.clone(), 5).unwrap();
    let hist = train(&mut model, &cube, &split.train, None, &TrainConfig { epochs: 0, ..TrainConfig::default() }, |_, _| Ok(())).unwrap();
    assert!(hist.is_empty());
    assert_eq!(model.params(), MultiFormer::<f32>::init(cfg, 5).unwrap().params());
}
