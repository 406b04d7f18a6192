//! Straight-line f64 references shared by the integration targets.
#![allow(dead_code)]

use multiformer::data::Patch;
use multiformer::model::params::{BlockParams, Linear, MsaParams, Norm};
use multiformer::model::{ModelConfig, MultiFormer};
use multiformer::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    (0..r)
        .map(|_| (0..c).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

pub fn to_tensor(m: &Mat) -> Tensor<f64> {
    let rows: Vec<&[f64]> = m.iter().map(Vec::as_slice).collect();
    Tensor::from_rows(&rows).unwrap()
}

pub fn vec_tensor(v: &[f64]) -> Tensor<f64> {
    Tensor::new(vec![v.len()], v.to_vec()).unwrap()
}

pub fn to_mat(t: &Tensor<f64>) -> Mat {
    let c = t.shape()[1];
    t.data().chunks(c).map(<[f64]>::to_vec).collect()
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn tr(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn softmax_rows(a: &Mat) -> Mat {
    a.iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = r.iter().map(|x| (x - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        })
        .collect()
}

pub fn ln_rows(a: &Mat, gamma: &[f64], beta: &[f64]) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(j, x)| (x - mu) / (var + 1e-6).sqrt() * gamma[j] + beta[j])
                .collect()
        })
        .collect()
}

/// erf by its Maclaurin series; accurate to ~1e-13 for |x| < 3.
pub fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..80 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

pub fn gelu_ref(x: f64) -> f64 {
    0.5 * x * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn add_row(a: &Mat, b: &[f64]) -> Mat {
    a.iter()
        .map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn attention_ref(q: &Mat, k: &Mat, v: &Mat) -> Mat {
    let scale = 1.0 / (q[0].len() as f64).sqrt();
    let s: Mat = mm(q, &tr(k))
        .into_iter()
        .map(|r| r.into_iter().map(|x| x * scale).collect())
        .collect();
    mm(&softmax_rows(&s), v)
}

pub fn cols(a: &Mat, start: usize, len: usize) -> Mat {
    a.iter().map(|r| r[start..start + len].to_vec()).collect()
}

pub struct BlockRef {
    pub ln1: (Vec<f64>, Vec<f64>),
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ln2: (Vec<f64>, Vec<f64>),
    pub fc1: (Mat, Vec<f64>),
    pub fc2: (Mat, Vec<f64>),
}

impl BlockRef {
    pub fn random(rng: &mut ChaCha8Rng, d: usize, hidden: usize) -> Self {
        let v = |rng: &mut ChaCha8Rng, n: usize, c: f64| rand_mat(rng, 1, n, 0.5).remove(0).into_iter().map(|x| x + c).collect::<Vec<_>>();
        BlockRef {
            ln1: (v(rng, d, 1.0), v(rng, d, 0.0)),
            wq: rand_mat(rng, d, d, 0.5),
            wk: rand_mat(rng, d, d, 0.5),
            wv: rand_mat(rng, d, d, 0.5),
            wo: rand_mat(rng, d, d, 0.5),
            ln2: (v(rng, d, 1.0), v(rng, d, 0.0)),
            fc1: (rand_mat(rng, d, hidden, 0.5), v(rng, hidden, 0.0)),
            fc2: (rand_mat(rng, hidden, d, 0.5), v(rng, d, 0.0)),
        }
    }

    pub fn bind(&self, g: &mut Graph<f64>) -> BlockParams<Var> {
        BlockParams {
            ln1: Norm { gamma: g.param(vec_tensor(&self.ln1.0)), beta: g.param(vec_tensor(&self.ln1.1)) },
            msa: MsaParams {
                wq: g.param(to_tensor(&self.wq)),
                wk: g.param(to_tensor(&self.wk)),
                wv: g.param(to_tensor(&self.wv)),
                wo: g.param(to_tensor(&self.wo)),
            },
            ln2: Norm { gamma: g.param(vec_tensor(&self.ln2.0)), beta: g.param(vec_tensor(&self.ln2.1)) },
            fc1: Linear { weight: g.param(to_tensor(&self.fc1.0)), bias: g.param(vec_tensor(&self.fc1.1)) },
            fc2: Linear { weight: g.param(to_tensor(&self.fc2.0)), bias: g.param(vec_tensor(&self.fc2.1)) },
        }
    }

    pub fn msa(&self, x: &Mat, heads: usize, segments: usize) -> Mat {
        let d = x[0].len();
        let (dk, n) = (d / heads, x.len() / segments);
        let (q, k, v) = (mm(x, &self.wq), mm(x, &self.wk), mm(x, &self.wv));
        let mut joined = Vec::new();
        for s in 0..segments {
            let rows = |m: &Mat| m[s * n..(s + 1) * n].to_vec();
            let (qs, ks, vs) = (rows(&q), rows(&k), rows(&v));
            let mut seg = vec![Vec::new(); n];
            for h in 0..heads {
                let out = attention_ref(&cols(&qs, h * dk, dk), &cols(&ks, h * dk, dk), &cols(&vs, h * dk, dk));
                for (r, o) in seg.iter_mut().zip(out) {
                    r.extend(o);
                }
            }
            joined.extend(seg);
        }
        mm(&joined, &self.wo)
    }

    pub fn forward(&self, x: &Mat, heads: usize, segments: usize) -> Mat {
        let h = ln_rows(x, &self.ln1.0, &self.ln1.1);
        let x_hat = add(x, &self.msa(&h, heads, segments));
        let h2 = ln_rows(&x_hat, &self.ln2.0, &self.ln2.1);
        let a: Mat = add_row(&mm(&h2, &self.fc1.0), &self.fc1.1)
            .into_iter()
            .map(|r| r.into_iter().map(gelu_ref).collect())
            .collect();
        add(&x_hat, &add_row(&mm(&a, &self.fc2.0), &self.fc2.1))
    }
}

pub fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn random_patch(cfg: &ModelConfig, seed: u64) -> Patch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.patch_size;
    Patch {
        size: s,
        bands: cfg.bands,
        data: (0..s * s * cfg.bands).map(|_| rng.random::<f32>()).collect(),
        label: 1,
    }
}

pub fn zero(model: &mut MultiFormer<f64>, suffixes: &[&str]) {
    let names: Vec<String> = model
        .specs()
        .iter()
        .map(|s| s.name.clone())
        .filter(|n| suffixes.iter().any(|s| n.ends_with(s)))
        .collect();
    assert!(!names.is_empty());
    for n in names {
        model.param_mut(&n).unwrap().data_mut().fill(0.0);
    }
}

/// Closed-form parameter count of a configuration.
pub fn closed_form_count(c: &ModelConfig) -> usize {
    let block = |d: usize| 4 * d + 4 * d * d + (d * c.mlp_ratio * d + d * c.mlp_ratio) + (d * c.mlp_ratio * d + d);
    let conv: usize = c.filters.iter().map(|k| k * k * c.spectral_neighbors * c.dim_inner + c.dim_inner).sum();
    let inject = c.tokens() * c.dim_inner * c.dim_spectral + c.dim_spectral;
    let pos = (c.groups() + 1) * c.dim_spectral;
    let head = 2 * c.dim_spectral + c.dim_spectral * c.classes + c.classes;
    let scaf = 4 * c.layers.saturating_sub(2);
    conv + pos + c.layers * (block(c.dim_inner) + inject + block(c.dim_spectral)) + head + scaf
}

/// Overall accuracy, average accuracy and kappa recomputed from the
/// expanded list of (truth, prediction) pairs.
pub fn metrics_by_pairs(rows: &[Vec<u64>]) -> (f64, f64, f64) {
    let k = rows.len();
    let mut pairs = Vec::new();
    for (t, row) in rows.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            pairs.extend(std::iter::repeat_n((t, p), n as usize));
        }
    }
    let total = pairs.len() as f64;
    let hits = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let oa = hits / total;
    let mut per_class = Vec::new();
    let mut pe = 0.0;
    for c in 0..k {
        let truth = pairs.iter().filter(|(t, _)| *t == c).count() as f64;
        let pred = pairs.iter().filter(|(_, p)| *p == c).count() as f64;
        if truth > 0.0 {
            per_class.push(pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64 / truth);
        }
        pe += (truth / total) * (pred / total);
    }
    let aa = per_class.iter().sum::<f64>() / per_class.len() as f64;
    (oa, aa, (oa - pe) / (1.0 - pe))
}

/// Random K×K count matrix with at least one off-diagonal entry, so kappa is
/// defined whenever two classes are present.
pub fn random_confusion(rng: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let k = rng.random_range(2..9);
    let mut rows: Vec<Vec<u64>> = (0..k)
        .map(|_| (0..k).map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(0..40) }).collect())
        .collect();
    rows[0][1] += 1;
    rows[1][1] += 1;
    rows
}
