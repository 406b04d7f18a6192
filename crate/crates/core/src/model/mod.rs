//! The multiscale spectral-spatial transformer.
//!
//! A patch of `s×s×c` is split into `c' = ceil(c/n)` groups of `n`
//! adjacent bands (the last zero-padded). Each group becomes `m1`
//! multiscale spatial tokens through a shared convolutional filter bank.
//! Per layer, an inner transformer mixes every group's tokens, the result is
//! flattened and injected into that group's spectral token, and an outer
//! transformer mixes the `c'+1` spectral tokens (row 0 is the class token).
//! From layer 3 on, both streams can be fused with their state two layers
//! earlier. The class token feeds `FC(LN(·))`.

mod config;
pub mod layers;
pub mod params;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Patch;
use crate::error::{Error, Result};
use crate::tensor::{grad_check, GradCheckReport, Graph, NamedTensor, Real, Tensor, Var};

pub use config::ModelConfig;
pub use params::{Embedding, Layout, ParamId, ParamSpec};

/// Graph handles of intermediate states, for inspection and tests.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// Stacked inner tokens `(c'·m1) × d1`, index 0 is the tokenizer output.
    pub tokens: Vec<Var>,
    /// Spectral memory `(c'+1) × d2`, index 0 is the initial memory.
    pub spectral: Vec<Var>,
    /// Spectral memory after injection, as fed to each outer block.
    pub outer_inputs: Vec<Var>,
    /// Every attention weight matrix computed.
    pub attention: Vec<Var>,
}

pub struct Forward {
    pub logits: Var,
    pub trace: Trace,
}

/// Loss, logits and per-parameter gradients of one labeled patch.
#[derive(Clone, Debug)]
pub struct SampleGrad<T> {
    pub loss: T,
    pub logits: Vec<T>,
    pub grads: Vec<Vec<T>>,
}

#[derive(Clone, Debug)]
pub struct MultiFormer<T: Real> {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    layout: Layout<ParamId>,
    params: Vec<Tensor<T>>,
}

impl<T: Real> MultiFormer<T> {
    /// Fresh parameters drawn deterministically from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = params::build_layout(&config);
        let params = params::init_values(&specs, seed);
        Ok(MultiFormer {
            config,
            specs,
            layout,
            params,
        })
    }

    /// Wraps existing parameter values; names and shapes must match the
    /// configuration's layout in order.
    pub fn from_named(config: ModelConfig, named: &[NamedTensor]) -> Result<Self> {
        config.validate()?;
        let (specs, layout) = params::build_layout(&config);
        for (i, spec) in specs.iter().enumerate() {
            let Some(nt) = named.get(i) else {
                return Err(Error::config(format!(
                    "checkpoint ends before parameter {} (shape {:?})",
                    spec.name, spec.shape
                )));
            };
            if nt.name != spec.name || nt.tensor.shape() != spec.shape {
                return Err(Error::config(format!(
                    "parameter mismatch at {}: checkpoint has {} {:?}, config expects {} {:?}",
                    i, nt.name, nt.tensor.shape(), spec.name, spec.shape
                )));
            }
        }
        if let Some(extra) = named.get(specs.len()) {
            return Err(Error::config(format!(
                "checkpoint has unexpected parameter {} {:?}",
                extra.name,
                extra.tensor.shape()
            )));
        }
        let params = named.iter().map(|nt| nt.tensor.cast()).collect();
        Ok(MultiFormer {
            config,
            specs,
            layout,
            params,
        })
    }

    pub fn to_named(&self) -> Vec<NamedTensor> {
        self.specs
            .iter()
            .zip(&self.params)
            .map(|(s, t)| NamedTensor {
                name: s.name.clone(),
                tensor: t.cast(),
            })
            .collect()
    }

    pub fn cast<U: Real>(&self) -> MultiFormer<U> {
        MultiFormer {
            config: self.config.clone(),
            specs: self.specs.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn layout(&self) -> &Layout<ParamId> {
        &self.layout
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Total scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.param_index(name)?;
        Some(&mut self.params[i])
    }

    /// Puts every parameter on `g` as a leaf, in layout order.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.clone(), trainable)).collect()
    }

    fn group_tensor(&self, patch: &Patch, j: usize) -> Tensor<T> {
        let (s, c, n) = (self.config.patch_size, self.config.bands, self.config.spectral_neighbors);
        let mut data = vec![T::zero(); s * s * n];
        for px in 0..s * s {
            for i in 0..n {
                let band = j * n + i;
                if band < c {
                    data[px * n + i] = T::from_f64(patch.data[px * c + band] as f64);
                }
            }
        }
        Tensor::new(vec![s, s, n], data).expect("group extents are positive")
    }

    /// Builds the forward pass on `g` using parameter leaves `vars` from
    /// [`MultiFormer::bind`] (or any leaves with the same shapes).
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], patch: &Patch) -> Result<Forward> {
        let cfg = &self.config;
        if patch.size != cfg.patch_size || patch.bands != cfg.bands {
            return Err(Error::config(format!(
                "patch {}x{}x{} does not match model input {}x{}x{}",
                patch.size, patch.size, patch.bands, cfg.patch_size, cfg.patch_size, cfg.bands
            )));
        }
        if vars.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "{} parameter leaves for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let lay = self.layout.map(|id: ParamId| vars[id.0]);
        let groups = cfg.groups();
        let (m1, d1, d2) = (cfg.tokens(), cfg.dim_inner, cfg.dim_spectral);
        let group_vars: Vec<Var> = (0..groups)
            .map(|j| g.constant(self.group_tensor(patch, j)))
            .collect();
        let zero_row = g.constant(Tensor::zeros([1, d2]));
        let mut trace = Trace::default();

        let mut z = None;
        let mut p = lay.pos;
        match &lay.embed {
            Embedding::Multiscale(bank) => {
                let pairs = cfg.token_pairs();
                let per_group = group_vars
                    .iter()
                    .map(|&x| layers::multiscale_spatial_embed(g, x, bank, &pairs))
                    .collect::<Result<Vec<_>>>()?;
                let stacked = if groups == 1 { per_group[0] } else { g.concat(&per_group, 0)? };
                z = Some(stacked);
                trace.tokens.push(stacked);
            }
            Embedding::Flat(fc) => {
                let flat = group_vars
                    .iter()
                    .map(|&x| g.reshape(x, &[1, cfg.patch_size * cfg.patch_size * cfg.spectral_neighbors]))
                    .collect::<Result<Vec<_>>>()?;
                let rows = if groups == 1 { flat[0] } else { g.concat(&flat, 0)? };
                let inj = layers::linear(g, rows, *fc)?;
                let padded = g.concat(&[zero_row, inj], 0)?;
                p = g.add(p, padded)?;
            }
        }
        trace.spectral.push(p);

        let mut z_hist = vec![z];
        let mut p_hist = vec![p];
        for (i, layer) in lay.layers.iter().enumerate() {
            let l = i + 1;
            let fusion = layer.fusion.filter(|_| cfg.use_scaf && l >= 3);
            if let (Some(zc), Some(inner), Some(inject)) = (z, &layer.inner, layer.inject) {
                let mut zn = layers::transformer_block(g, zc, inner, cfg.heads_inner, groups, &mut trace.attention)?;
                if let Some((w, _)) = fusion {
                    let older = z_hist[l - 2].expect("inner stream exists at every layer");
                    zn = layers::scaf_spatial(g, older, zn, w)?;
                }
                expect_shape(g, zn, &[groups * m1, d1], "inner tokens", l)?;
                let flat = g.reshape(zn, &[groups, m1 * d1])?;
                let inj = layers::linear(g, flat, inject)?;
                let padded = g.concat(&[zero_row, inj], 0)?;
                p = g.add(p, padded)?;
                z = Some(zn);
                trace.tokens.push(zn);
            }
            z_hist.push(z);
            trace.outer_inputs.push(p);
            let mut pn = layers::transformer_block(g, p, &layer.outer, cfg.heads_outer, 1, &mut trace.attention)?;
            if let Some((_, v)) = fusion {
                pn = layers::scaf_spectral(g, p_hist[l - 2], pn, v)?;
            }
            expect_shape(g, pn, &[groups + 1, d2], "spectral memory", l)?;
            p = pn;
            p_hist.push(p);
            trace.spectral.push(p);
        }

        let class_token = g.narrow(p, 0, 0, 1)?;
        let normed = layers::layer_norm(g, class_token, lay.head_ln)?;
        let logits = layers::linear(g, normed, lay.head_fc)?;
        let logits = g.reshape(logits, &[cfg.classes])?;
        Ok(Forward { logits, trace })
    }

    /// Logits of one patch without gradient bookkeeping.
    pub fn logits(&self, patch: &Patch) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let out = self.forward(&mut g, &vars, patch)?;
        Ok(g.value(out.logits).data().to_vec())
    }

    /// Cross-entropy of the patch's label and its gradient for every parameter.
    pub fn loss_and_grads(&self, patch: &Patch) -> Result<SampleGrad<T>> {
        let label = patch.label as usize;
        if label == 0 || label > self.config.classes {
            return Err(Error::Contract(format!(
                "label {label} outside 1..={}",
                self.config.classes
            )));
        }
        let mut g = Graph::new();
        let vars = self.bind(&mut g, true);
        let out = self.forward(&mut g, &vars, patch)?;
        let loss = g.cross_entropy(out.logits, label - 1)?;
        g.backward(loss)?;
        let grads = vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| g.grad(v).map_or_else(|| vec![T::zero(); p.numel()], <[T]>::to_vec))
            .collect();
        Ok(SampleGrad {
            loss: g.value(loss).data()[0],
            logits: g.value(out.logits).data().to_vec(),
            grads,
        })
    }
}

/// Finite-difference step of the gradient suite.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Checks cross-entropy gradients of every parameter tensor of `config`
/// against 64-bit central differences.
///
/// Parameters are the seeded initialization plus `N(0, 0.3²)` noise so that
/// no tensor sits at a degenerate point (zero biases, unit LN gains,
/// one-hot fusion weights); the patch and label are drawn from the same seed.
pub fn gradient_suite(config: &ModelConfig, seed: u64) -> Result<(GradCheckReport, Vec<String>)> {
    let model = MultiFormer::<f64>::init(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6164);
    let noise = Normal::new(0.0, 0.3).expect("valid normal");
    let params: Vec<Tensor<f64>> = model
        .params()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.data_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            t
        })
        .collect();
    let s = config.patch_size;
    let patch = Patch {
        size: s,
        bands: config.bands,
        data: (0..s * s * config.bands).map(|_| rng.random::<f32>()).collect(),
        label: rng.random_range(1..=config.classes as u16),
    };
    let target = patch.label as usize - 1;
    let report = grad_check(&params, GRAD_CHECK_STEP, |g, vars| {
        let out = model.forward(g, vars, &patch)?;
        g.cross_entropy(out.logits, target)
    })?;
    let names = model.specs().iter().map(|s| s.name.clone()).collect();
    Ok((report, names))
}

fn expect_shape<T: Real>(g: &Graph<T>, v: Var, want: &[usize], what: &str, layer: usize) -> Result<()> {
    if g.shape(v) != want {
        return Err(Error::dim(format!(
            "{what} at layer {layer} has shape {:?}, expected {want:?}",
            g.shape(v)
        )));
    }
    Ok(())
}
