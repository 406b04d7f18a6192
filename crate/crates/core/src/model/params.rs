//! Parameter layout and initialization.
//!
//! Every trainable tensor has a canonical dotted name used in checkpoints:
//!
//! | name                              | shape                    |
//! |-----------------------------------|--------------------------|
//! | `embed.conv{k}.weight` / `.bias`  | `k×k×n×d1` / `d1`        |
//! | `embed.fc.weight` / `.bias`       | `s·s·n × d2` / `d2` (no multiscale arm) |
//! | `pos_embed`                       | `(c'+1) × d2`            |
//! | `layer.{l}.inner.ln1.gamma` ...   | inner block at width `d1`|
//! | `layer.{l}.inject.weight` / `.bias` | `m1·d1 × d2` / `d2`    |
//! | `layer.{l}.outer.msa.wq` ...      | outer block at width `d2`|
//! | `head.ln.gamma` / `.beta`         | `d2`                     |
//! | `head.fc.weight` / `.bias`        | `d2 × K` / `K`           |
//! | `scaf.{l}.w` / `scaf.{l}.v`       | `2` (layers `l >= 3`)    |
//!
//! Blocks expand to `ln1.{gamma,beta}`, `msa.{wq,wk,wv,wo}`,
//! `ln2.{gamma,beta}`, `mlp.fc1.{weight,bias}`, `mlp.fc2.{weight,bias}`.
//! Layers are numbered from 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::tensor::{Real, Tensor};

/// Standard deviation of weight initialization; samples beyond two of them
/// are redrawn.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    TruncNormal,
    Normal,
    Zeros,
    Ones,
    /// `(0, 1)`: all weight on the current layer.
    Fusion,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// Subject to decoupled weight decay.
    pub decay: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct Linear<I> {
    pub weight: I,
    pub bias: I,
}

#[derive(Clone, Copy, Debug)]
pub struct Norm<I> {
    pub gamma: I,
    pub beta: I,
}

#[derive(Clone, Copy, Debug)]
pub struct MsaParams<I> {
    pub wq: I,
    pub wk: I,
    pub wv: I,
    pub wo: I,
}

/// Pre-norm transformer block.
#[derive(Clone, Copy, Debug)]
pub struct BlockParams<I> {
    pub ln1: Norm<I>,
    pub msa: MsaParams<I>,
    pub ln2: Norm<I>,
    pub fc1: Linear<I>,
    pub fc2: Linear<I>,
}

/// One filter size of the shared convolutional bank.
#[derive(Clone, Copy, Debug)]
pub struct ConvFilter<I> {
    pub size: usize,
    pub weight: I,
    pub bias: I,
}

#[derive(Clone, Debug)]
pub enum Embedding<I> {
    Multiscale(Vec<ConvFilter<I>>),
    /// Flattened band group projected straight to a spectral token.
    Flat(Linear<I>),
}

#[derive(Clone, Copy, Debug)]
pub struct LayerParams<I> {
    pub inner: Option<BlockParams<I>>,
    pub inject: Option<Linear<I>>,
    pub outer: BlockParams<I>,
    /// `(ŵ, v̂)`, present from layer 3 on when fusion is enabled.
    pub fusion: Option<(I, I)>,
}

#[derive(Clone, Debug)]
pub struct Layout<I> {
    pub embed: Embedding<I>,
    pub pos: I,
    pub layers: Vec<LayerParams<I>>,
    pub head_ln: Norm<I>,
    pub head_fc: Linear<I>,
}

impl<I: Copy> Linear<I> {
    pub fn map<J>(&self, f: impl Fn(I) -> J) -> Linear<J> {
        Linear { weight: f(self.weight), bias: f(self.bias) }
    }
}

impl<I: Copy> Norm<I> {
    pub fn map<J>(&self, f: impl Fn(I) -> J) -> Norm<J> {
        Norm { gamma: f(self.gamma), beta: f(self.beta) }
    }
}

impl<I: Copy> MsaParams<I> {
    pub fn map<J>(&self, f: impl Fn(I) -> J) -> MsaParams<J> {
        MsaParams { wq: f(self.wq), wk: f(self.wk), wv: f(self.wv), wo: f(self.wo) }
    }
}

impl<I: Copy> BlockParams<I> {
    pub fn map<J>(&self, f: impl Fn(I) -> J + Copy) -> BlockParams<J> {
        BlockParams {
            ln1: self.ln1.map(f),
            msa: self.msa.map(f),
            ln2: self.ln2.map(f),
            fc1: self.fc1.map(f),
            fc2: self.fc2.map(f),
        }
    }
}

impl<I: Copy> Layout<I> {
    pub fn map<J>(&self, f: impl Fn(I) -> J + Copy) -> Layout<J> {
        Layout {
            embed: match &self.embed {
                Embedding::Multiscale(bank) => Embedding::Multiscale(
                    bank.iter()
                        .map(|c| ConvFilter { size: c.size, weight: f(c.weight), bias: f(c.bias) })
                        .collect(),
                ),
                Embedding::Flat(lin) => Embedding::Flat(lin.map(f)),
            },
            pos: f(self.pos),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    inner: l.inner.map(|b| b.map(f)),
                    inject: l.inject.map(|x| x.map(f)),
                    outer: l.outer.map(f),
                    fusion: l.fusion.map(|(w, v)| (f(w), f(v))),
                })
                .collect(),
            head_ln: self.head_ln.map(f),
            head_fc: self.head_fc.map(f),
        }
    }
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init, decay: bool) -> ParamId {
        self.specs.push(ParamSpec { name, shape, init, decay });
        ParamId(self.specs.len() - 1)
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Linear<ParamId> {
        Linear {
            weight: self.add(format!("{prefix}.weight"), vec![fan_in, fan_out], Init::TruncNormal, true),
            bias: self.add(format!("{prefix}.bias"), vec![fan_out], Init::Zeros, false),
        }
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm<ParamId> {
        Norm {
            gamma: self.add(format!("{prefix}.gamma"), vec![d], Init::Ones, false),
            beta: self.add(format!("{prefix}.beta"), vec![d], Init::Zeros, false),
        }
    }

    fn block(&mut self, prefix: &str, d: usize, mlp_ratio: usize) -> BlockParams<ParamId> {
        let ln1 = self.norm(&format!("{prefix}.ln1"), d);
        let mut proj = |n: &str| self.add(format!("{prefix}.msa.{n}"), vec![d, d], Init::TruncNormal, true);
        let msa = MsaParams { wq: proj("wq"), wk: proj("wk"), wv: proj("wv"), wo: proj("wo") };
        let ln2 = self.norm(&format!("{prefix}.ln2"), d);
        let fc1 = self.linear(&format!("{prefix}.mlp.fc1"), d, d * mlp_ratio);
        let fc2 = self.linear(&format!("{prefix}.mlp.fc2"), d * mlp_ratio, d);
        BlockParams { ln1, msa, ln2, fc1, fc2 }
    }
}

/// Parameter specs and typed layout for a (validated) configuration.
pub fn build_layout(cfg: &ModelConfig) -> (Vec<ParamSpec>, Layout<ParamId>) {
    let mut b = Builder { specs: Vec::new() };
    let (n, d1, d2) = (cfg.spectral_neighbors, cfg.dim_inner, cfg.dim_spectral);
    let embed = if cfg.use_ms {
        Embedding::Multiscale(
            cfg.filter_sizes()
                .into_iter()
                .map(|k| ConvFilter {
                    size: k,
                    weight: b.add(format!("embed.conv{k}.weight"), vec![k, k, n, d1], Init::TruncNormal, true),
                    bias: b.add(format!("embed.conv{k}.bias"), vec![d1], Init::Zeros, false),
                })
                .collect(),
        )
    } else {
        Embedding::Flat(b.linear("embed.fc", cfg.patch_size * cfg.patch_size * n, d2))
    };
    let pos = b.add("pos_embed".into(), vec![cfg.groups() + 1, d2], Init::Normal, false);
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 1..=cfg.layers {
        let (inner, inject) = if cfg.use_ms {
            (
                Some(b.block(&format!("layer.{l}.inner"), d1, cfg.mlp_ratio)),
                Some(b.linear(&format!("layer.{l}.inject"), cfg.tokens() * d1, d2)),
            )
        } else {
            (None, None)
        };
        let outer = b.block(&format!("layer.{l}.outer"), d2, cfg.mlp_ratio);
        layers.push(LayerParams { inner, inject, outer, fusion: None });
    }
    let head_ln = b.norm("head.ln", d2);
    let head_fc = b.linear("head.fc", d2, cfg.classes);
    if cfg.use_scaf {
        for (i, layer) in layers.iter_mut().enumerate().skip(2) {
            let l = i + 1;
            let w = b.add(format!("scaf.{l}.w"), vec![2], Init::Fusion, false);
            let v = b.add(format!("scaf.{l}.v"), vec![2], Init::Fusion, false);
            layer.fusion = Some((w, v));
        }
    }
    let layout = Layout { embed, pos, layers, head_ln, head_fc };
    (b.specs, layout)
}

/// Draws initial values in layout order from ChaCha8 seeded with `seed`.
pub fn init_values<T: Real>(specs: &[ParamSpec], seed: u64) -> Vec<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    specs
        .iter()
        .map(|spec| {
            let numel: usize = spec.shape.iter().product();
            let data: Vec<T> = match spec.init {
                Init::Zeros => vec![T::zero(); numel],
                Init::Ones => vec![T::one(); numel],
                Init::Fusion => vec![T::zero(), T::one()],
                Init::Normal => (0..numel).map(|_| T::from_f64(normal.sample(&mut rng))).collect(),
                Init::TruncNormal => (0..numel)
                    .map(|_| loop {
                        let v: f64 = normal.sample(&mut rng);
                        if v.abs() <= 2.0 * INIT_STD {
                            break T::from_f64(v);
                        }
                    })
                    .collect(),
            };
            Tensor::new(spec.shape.clone(), data).expect("spec shapes are positive")
        })
        .collect()
}
