mod common;

use ase_fd::ase::{build_config, AseConfig, AseModel};
use ase_fd::classify::{FdModel, ClassifierKind, Classifier, KnnModel};
use ase_fd::cost::{count_flops, config_layers, count_mflops};
use ase_fd::features::frame_features;
use ase_fd::ingest::{synth_dataset, Axis, Label};
use ase_fd::preprocess::{decimate, denormalize, frame_pair, minmax_normalize, Frame, WindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn decimation_matches_enumeration_on_short_inputs() {
    for n in 1..200 {
        for alpha in 0..=7 {
            let idx: Vec<usize> = (0..n).collect();
            assert_eq!(decimate(&idx, alpha).unwrap(), kept_indices(n, alpha), "n={n} alpha={alpha}");
        }
    }
}

#[test]
fn features_of_pipeline_frames_match_naive_loops() {
    let m = synth_dataset(2, 8, 3, 238.0, 5.0).unwrap();
    let spec = WindowSpec::new(1.23, 2.0).unwrap();
    for t in &m.trials {
        let (_, hr) = frame_pair(t, &spec, 0).unwrap();
        let hr = denormalize(&hr).unwrap();
        let v = hr.values();
        let got = frame_features(&hr, Axis::Y).unwrap();
        let want = feature_oracle(&v[..256], &v[256..512], &v[512..], 1);
        for (k, (g, w)) in got.as_slice().iter().zip(&want).enumerate() {
            assert!(rel_err(*g, *w) <= 1e-9, "feature {k}: {g} vs {w}");
        }
    }
}

#[test]
fn knn_with_larger_k_matches_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let pts: Vec<Vec<f64>> = (0..60).map(|_| vec![f64::from(rng.random_range(0..4)), f64::from(rng.random_range(0..4))]).collect();
    let labels: Vec<Label> = (0..60).map(|i| if i % 3 == 0 { Label::Fall } else { Label::Adl }).collect();
    for k in [1, 5, 7] {
        let m = KnnModel::train(&pts, &labels, k).unwrap();
        for _ in 0..300 {
            let q = vec![rng.random_range(-0.5..4.5), f64::from(rng.random_range(0..4))];
            let (nn, label) = knn_oracle(&pts, &labels, k, &q);
            assert_eq!(m.neighbours(&q), nn);
            assert_eq!(m.predict(&q), label);
        }
    }
}

#[test]
fn standardized_svm_matches_kernel_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..50)
        .map(|i| {
            let c = if i % 2 == 0 { 10.0 } else { 7.0 };
            vec![c + rng.random_range(-2.0..2.0), 100.0 * rng.random_range(0.0..1.0)]
        })
        .collect();
    let y: Vec<Label> = (0..50).map(|i| if i % 2 == 0 { Label::Fall } else { Label::Adl }).collect();
    let model = FdModel::train(ClassifierKind::Svm, &x, &y).unwrap();
    let Classifier::Svm(svm) = &model.classifier else {
        panic!("expected an svm")
    };
    for row in &x {
        let z: Vec<f64> = row
            .iter()
            .zip(model.standardizer.mean.iter().zip(&model.standardizer.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let want = kernel_sum(&svm.support_vectors, &svm.dual_coef, svm.bias, 1.0, &z);
        let label = if want > 0.0 { Label::Fall } else { Label::Adl };
        assert_eq!(model.predict(row), label);
        assert!(rel_err(svm.decision_value(&z), want) <= 1e-9);
    }
}

fn random_normalized(len: usize, rng: &mut ChaCha8Rng) -> Frame {
    let vals = (0..3 * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    minmax_normalize(&Frame::new(len, vals, 10.0).unwrap()).unwrap()
}

#[test]
fn gradients_without_regularization_match_differences() {
    let config = AseConfig::custom(4, 3, vec![6, 12], 4, 0.0, 0.0).unwrap();
    for seed in 0..5 {
        let model = AseModel::new(config.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
        let (lr, hr) = (random_normalized(4, &mut rng), random_normalized(4, &mut rng));
        let (_, g) = model.gradients(&lr, &hr).unwrap();
        for (ti, (t, _)) in g.tensors().iter().enumerate() {
            for (k, &a) in t.iter().enumerate() {
                let mut p = model.clone();
                p.params_mut().tensors_mut()[ti].0[k] += 1e-5;
                let mut m = model.clone();
                m.params_mut().tensors_mut()[ti].0[k] -= 1e-5;
                let fd = (p.objective(&lr, &hr).unwrap() - m.objective(&lr, &hr).unwrap()) / 2e-5;
                assert!(rel_err(a, fd) <= 1e-4, "tensor {ti} entry {k}: {a} vs {fd}");
            }
        }
    }
}

/// FLOPs counted layer by layer straight from the configuration.
fn flops_by_hand(alpha: u32) -> u64 {
    let c = build_config(alpha, 0.0, 0.0).unwrap();
    let ch = c.conv_channels as u64;
    let grid = 3 * c.in_per_axis as u64;
    let mut total = ch * grid * (2 * 9 + 1) + ch * grid * (2 * 9 * ch + 1);
    let mut prev = ch * grid;
    for &w in &c.encoder_dense_widths {
        total += 2 * prev * w as u64 + 2 * w as u64;
        prev = w as u64;
    }
    total + 768 * 19 + 2 * 768 * 768 + 768
}

#[test]
fn flop_counts_match_hand_totals() {
    for alpha in 0..=7 {
        let c = build_config(alpha, 0.0, 0.0).unwrap();
        assert_eq!(count_flops(&config_layers(&c)), flops_by_hand(alpha), "alpha {alpha}");
        assert_eq!(count_mflops(&c), flops_by_hand(alpha) as f64 / 1e6);
    }
}
