mod common;

use common::*;
use multiformer::data::Patch;
use multiformer::model::layers;
use multiformer::model::params::{ConvFilter, Linear, MsaParams};
use multiformer::model::{gradient_suite, ModelConfig, MultiFormer};
use multiformer::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn attention_matches_straight_line_oracle() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, m, dk, dv) = (rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..6), rng.random_range(1..6));
        let (q, k, v) = (rand_mat(&mut rng, n, dk, 2.0), rand_mat(&mut rng, m, dk, 2.0), rand_mat(&mut rng, m, dv, 2.0));
        let mut g = Graph::new();
        let (qv, kv, vv) = (g.constant(to_tensor(&q)), g.constant(to_tensor(&k)), g.constant(to_tensor(&v)));
        let out = layers::attention(&mut g, qv, kv, vv).unwrap();
        assert!(max_diff(&to_mat(g.value(out)), &attention_ref(&q, &k, &v)) < 1e-12);
    }
}

#[test]
fn attention_rejects_mismatched_widths() {
    let mut g = Graph::<f64>::new();
    let q = g.constant(Tensor::zeros([2, 3]));
    let k = g.constant(Tensor::zeros([2, 4]));
    assert!(layers::attention(&mut g, q, k, k).is_err());
}

#[test]
fn multi_head_segmented_msa_matches_oracle() {
    for seed in 0..30 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let heads = [1, 2, 4][seed as usize % 3];
        let segments = 1 + seed as usize % 3;
        let d = heads * rng.random_range(1..4);
        let n = rng.random_range(1..5);
        let x = rand_mat(&mut rng, segments * n, d, 1.0);
        let block = BlockRef::random(&mut rng, d, 2 * d);
        let mut g = Graph::new();
        let p = block.bind(&mut g);
        let xv = g.constant(to_tensor(&x));
        let mut log = Vec::new();
        let out = layers::msa(&mut g, xv, p.msa, heads, segments, &mut log).unwrap();
        assert_eq!(log.len(), heads * segments);
        assert!(max_diff(&to_mat(g.value(out)), &block.msa(&x, heads, segments)) < 1e-12);
    }
}

#[test]
fn transformer_block_matches_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (heads, segments) = (1 + seed as usize % 2, 1 + seed as usize % 3);
        let d = 2 * heads;
        let x = rand_mat(&mut rng, segments * 3, d, 1.5);
        let block = BlockRef::random(&mut rng, d, 4 * d);
        let mut g = Graph::new();
        let p = block.bind(&mut g);
        let xv = g.constant(to_tensor(&x));
        let out = layers::transformer_block(&mut g, xv, &p, heads, segments, &mut Vec::new()).unwrap();
        let diff = max_diff(&to_mat(g.value(out)), &block.forward(&x, heads, segments));
        assert!(diff < 1e-10, "seed {seed}: {diff}");
    }
}

#[test]
fn msa_single_head_identity_projections_is_plain_attention() {
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (n, d) = (rng.random_range(1..8), rng.random_range(1..9));
        let x = rand_mat(&mut rng, n, d, 3.0);
        let eye: Mat = (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let mut g = Graph::new();
        let id = || to_tensor(&eye);
        let p = MsaParams { wq: g.constant(id()), wk: g.constant(id()), wv: g.constant(id()), wo: g.constant(id()) };
        let xv = g.constant(to_tensor(&x));
        let out = layers::msa(&mut g, xv, p, 1, 1, &mut Vec::new()).unwrap();
        let plain = layers::attention(&mut g, xv, xv, xv).unwrap();
        let diff = max_diff(&to_mat(g.value(out)), &to_mat(g.value(plain)));
        assert!(diff < 1e-6, "seed {seed}: {diff}");
    }
}

#[test]
fn multiscale_embedding_equals_crop_then_convolve() {
    let (s, n, d1) = (7, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let patch: Vec<f64> = (0..s * s * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let filters: Vec<(usize, Vec<f64>, Vec<f64>)> = [3, 5]
        .iter()
        .map(|&k| {
            let w = (0..k * k * n * d1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = (0..d1).map(|_| rng.random_range(-1.0..1.0)).collect();
            (k, w, b)
        })
        .collect();
    let pairs = [(3, 3), (5, 3), (5, 5), (7, 3), (7, 5)];

    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![s, s, n], patch.clone()).unwrap());
    let bank: Vec<ConvFilter<Var>> = filters
        .iter()
        .map(|(k, w, b)| ConvFilter {
            size: *k,
            weight: g.param(Tensor::new(vec![*k, *k, n, d1], w.clone()).unwrap()),
            bias: g.param(vec_tensor(b)),
        })
        .collect();
    let tokens = layers::multiscale_spatial_embed(&mut g, x, &bank, &pairs).unwrap();
    let got = to_mat(g.value(tokens));

    for (t, &(a, k)) in pairs.iter().enumerate() {
        let (_, w, b) = filters.iter().find(|f| f.0 == k).unwrap();
        let off = (s - a) / 2;
        let crop = |y: usize, x: usize, c: usize| patch[((off + y) * s + off + x) * n + c];
        let out = a - k + 1;
        for o in 0..d1 {
            let mut total = 0.0;
            for y in 0..out {
                for xx in 0..out {
                    for dy in 0..k {
                        for dx in 0..k {
                            for c in 0..n {
                                total += crop(y + dy, xx + dx, c) * w[((dy * k + dx) * n + c) * d1 + o];
                            }
                        }
                    }
                }
            }
            let want = total / (out * out) as f64 + b[o];
            assert!((got[t][o] - want).abs() < 1e-12, "token {t} channel {o}");
        }
    }
}

#[test]
fn fusion_selectors() {
    let mut g = Graph::<f64>::new();
    let older = g.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
    let current = g.constant(Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap());
    for (w, want) in [
        ([0.0, 1.0], [5.0, 6.0, 7.0, 8.0]),
        ([1.0, 0.0], [1.0, 2.0, 3.0, 4.0]),
        ([0.5, 0.5], [3.0, 4.0, 5.0, 6.0]),
    ] {
        let wv = g.constant(vec_tensor(&w));
        let out = layers::cross_layer_fusion(&mut g, older, current, wv).unwrap();
        assert_eq!(g.value(out).data(), want);
    }
    let wrong = g.constant(Tensor::zeros([1, 2]));
    let wv = g.constant(vec_tensor(&[0.0, 1.0]));
    assert!(layers::cross_layer_fusion(&mut g, older, wrong, wv).is_err());
}

#[test]
fn injection_touches_only_its_row() {
    let mut g = Graph::<f64>::new();
    let z = g.constant(Tensor::full([2, 2], 1.0));
    let p = g.constant(Tensor::zeros([3, 2]));
    let fc = Linear {
        weight: g.constant(Tensor::full([4, 2], 0.5)),
        bias: g.constant(vec_tensor(&[0.0, 1.0])),
    };
    let out = layers::project_and_inject(&mut g, z, p, 2, fc).unwrap();
    assert_eq!(g.value(out).data(), &[0.0, 0.0, 0.0, 0.0, 2.0, 3.0]);
    assert!(layers::project_and_inject(&mut g, z, p, 0, fc).is_err());
}

#[test]
fn residual_identity_with_zeroed_output_maps() {
    let cfg = ModelConfig { layers: 4, ..ModelConfig::tiny() };
    let mut model = MultiFormer::<f64>::init(cfg.clone(), 11).unwrap();
    zero(&mut model, &["msa.wo", "mlp.fc2.weight", "mlp.fc2.bias"]);
    let patch = random_patch(&cfg, 3);
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let out = model.forward(&mut g, &vars, &patch).unwrap();
    let t = &out.trace;
    assert_eq!(t.tokens.len(), cfg.layers + 1);
    for l in 1..=cfg.layers {
        assert_eq!(g.value(t.tokens[l]).data(), g.value(t.tokens[0]).data(), "z_{l}");
        assert_eq!(g.value(t.spectral[l]).data(), g.value(t.outer_inputs[l - 1]).data(), "outer block {l}");
    }

    zero(&mut model, &["inject.weight", "inject.bias"]);
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let out = model.forward(&mut g, &vars, &patch).unwrap();
    for l in 1..=cfg.layers {
        assert_eq!(g.value(out.trace.spectral[l]).data(), g.value(out.trace.spectral[0]).data(), "p_{l}");
    }
}

#[test]
fn fresh_fusion_is_neutral() {
    for layers in [3, 5] {
        let on = ModelConfig { layers, ..ModelConfig::tiny() };
        let off = ModelConfig { use_scaf: false, ..on.clone() };
        let a = MultiFormer::<f32>::init(on.clone(), 5).unwrap();
        let b = MultiFormer::<f32>::init(off, 5).unwrap();
        assert_eq!(a.specs().len(), b.specs().len() + 2 * (layers - 2));
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.data(), y.data());
        }
        for seed in 0..5 {
            let patch = random_patch(&on, seed);
            let la = a.logits(&patch).unwrap();
            let lb = b.logits(&patch).unwrap();
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&la), bits(&lb));
        }
    }
}

#[test]
fn band_group_permutation_is_equivariant() {
    let cfg = ModelConfig { bands: 9, layers: 3, ..ModelConfig::tiny() };
    let mut model = MultiFormer::<f64>::init(cfg.clone(), 21).unwrap();
    model.param_mut("pos_embed").unwrap().data_mut().fill(0.0);
    let patch = random_patch(&cfg, 8);
    let perm = [2, 0, 1];
    let mut permuted = patch.clone();
    for px in 0..cfg.patch_size * cfg.patch_size {
        for (i, &src) in perm.iter().enumerate() {
            for b in 0..3 {
                permuted.data[px * 9 + i * 3 + b] = patch.data[px * 9 + src * 3 + b];
            }
        }
    }
    let run = |p: &Patch| {
        let mut g = Graph::new();
        let vars = model.bind(&mut g, false);
        let out = model.forward(&mut g, &vars, p).unwrap();
        let mem = to_mat(g.value(*out.trace.spectral.last().unwrap()));
        (g.value(out.logits).data().to_vec(), mem)
    };
    let (l1, m1) = run(&patch);
    let (l2, m2) = run(&permuted);
    for (a, b) in l1.iter().zip(&l2) {
        assert!((a - b).abs() < 1e-12);
    }
    for (i, &src) in perm.iter().enumerate() {
        for (a, b) in m2[i + 1].iter().zip(&m1[src + 1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn last_group_is_zero_padded() {
    let short = ModelConfig { bands: 7, spectral_neighbors: 5, ..ModelConfig::tiny() };
    let long = ModelConfig { bands: 10, ..short.clone() };
    assert_eq!(short.groups(), 2);
    let a = MultiFormer::<f64>::init(short.clone(), 4).unwrap();
    let b = MultiFormer::<f64>::init(long.clone(), 4).unwrap();
    let p7 = random_patch(&short, 1);
    let mut p10 = random_patch(&long, 0);
    p10.data.fill(0.0);
    for px in 0..25 {
        p10.data[px * 10..px * 10 + 7].copy_from_slice(&p7.data[px * 7..px * 7 + 7]);
    }
    assert_eq!(a.logits(&p7).unwrap(), b.logits(&p10).unwrap());
}

#[test]
fn default_shape_law_and_stochastic_attention() {
    let cfg = ModelConfig::default();
    assert_eq!(cfg.tokens(), 9);
    let model = MultiFormer::<f32>::init(cfg.clone(), 0).unwrap();
    let patch = random_patch(&cfg, 0);
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let out = model.forward(&mut g, &vars, &patch).unwrap();
    assert_eq!(out.trace.spectral.len(), 6);
    for &p in &out.trace.spectral {
        assert_eq!(g.shape(p), &[41, 64]);
    }
    for &z in &out.trace.tokens {
        assert_eq!(g.shape(z), &[40 * 9, 64]);
    }
    assert_eq!(g.shape(out.logits), &[16]);
    assert_eq!(out.trace.attention.len(), 5 * (40 * 4 + 4));
    for &w in &out.trace.attention {
        let n = g.shape(w)[1];
        for row in g.value(w).data().chunks(n) {
            assert!((row.iter().map(|&x| f64::from(x)).sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn four_class_logits_are_finite() {
    let cfg = ModelConfig { classes: 4, ..ModelConfig::tiny() };
    let model = MultiFormer::<f32>::init(cfg.clone(), 9).unwrap();
    let logits = model.logits(&random_patch(&cfg, 2)).unwrap();
    assert_eq!(logits.len(), 4);
    assert!(logits.iter().all(|x| x.is_finite()));
    let m = logits.iter().cloned().fold(f32::MIN, f32::max);
    let total: f64 = logits.iter().map(|&x| f64::from(x - m).exp()).sum();
    let probs: f64 = logits.iter().map(|&x| f64::from(x - m).exp() / total).sum();
    assert!((probs - 1.0).abs() < 1e-9);
}

#[test]
fn mismatched_patch_is_rejected() {
    let cfg = ModelConfig::tiny();
    let model = MultiFormer::<f32>::init(cfg.clone(), 0).unwrap();
    let wrong = ModelConfig { bands: 5, ..cfg };
    assert!(model.logits(&random_patch(&wrong, 0)).is_err());
}

#[test]
fn default_parameter_count() {
    let cfg = ModelConfig::default();
    let model = MultiFormer::<f32>::init(cfg.clone(), 0).unwrap();
    assert_eq!(closed_form_count(&cfg), 712_476);
    assert_eq!(model.param_count(), 712_476);
    let tiny = MultiFormer::<f32>::init(ModelConfig::tiny(), 0).unwrap();
    assert_eq!(tiny.param_count(), closed_form_count(&ModelConfig::tiny()));
}

#[test]
fn init_is_deterministic_per_seed() {
    let a = MultiFormer::<f32>::init(ModelConfig::tiny(), 17).unwrap();
    let b = MultiFormer::<f32>::init(ModelConfig::tiny(), 17).unwrap();
    let c = MultiFormer::<f32>::init(ModelConfig::tiny(), 18).unwrap();
    let bits = |m: &MultiFormer<f32>| m.params().iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
    for (spec, t) in a.specs().iter().zip(a.params()) {
        if spec.decay {
            assert!(t.data().iter().all(|x| x.abs() <= 0.04 + 1e-7), "{}", spec.name);
        } else if spec.name.ends_with("bias") || spec.name.ends_with("beta") {
            assert!(t.data().iter().all(|&x| x == 0.0), "{}", spec.name);
        } else if spec.name.ends_with("gamma") {
            assert!(t.data().iter().all(|&x| x == 1.0), "{}", spec.name);
        }
    }
}

#[test]
fn checkpoint_names_round_trip_and_mismatch_is_named() {
    let cfg = ModelConfig::tiny();
    let model = MultiFormer::<f32>::init(cfg.clone(), 1).unwrap();
    let named = model.to_named();
    assert!(named.iter().any(|n| n.name == "layer.1.outer.msa.wq"));
    assert!(named.iter().any(|n| n.name == "head.fc.weight"));
    let back = MultiFormer::<f32>::from_named(cfg.clone(), &named).unwrap();
    assert_eq!(back.params(), model.params());
    let other = ModelConfig { dim_spectral: 16, ..cfg };
    let err = MultiFormer::<f32>::from_named(other, &named).unwrap_err().to_string();
    assert!(err.contains("pos_embed"), "{err}");
}

#[test]
fn tiny_gradients_match_finite_differences() {
    let (report, names) = gradient_suite(&ModelConfig::tiny(), 0).unwrap();
    assert_eq!(report.params.len(), names.len());
    for p in &report.params {
        assert!(p.rel_error < 1e-4, "{}: {}", names[p.index], p.rel_error);
        assert!(p.analytic_norm > 0.0, "{} has no gradient", names[p.index]);
    }
}

#[test]
fn fused_and_flat_gradients_match_finite_differences() {
    for cfg in [
        ModelConfig { layers: 3, ..ModelConfig::tiny() },
        ModelConfig { use_ms: false, ..ModelConfig::tiny() },
    ] {
        let (report, names) = gradient_suite(&cfg, 1).unwrap();
        for p in &report.params {
            assert!(p.rel_error < 1e-4, "{}: {}", names[p.index], p.rel_error);
        }
    }
}
