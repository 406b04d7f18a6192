//! Graph builders for the transformer pieces. All functions take parameter
//! handles already bound on the graph (`Var`s).

use super::params::{BlockParams, ConvFilter, Linear, MsaParams, Norm};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Var};

/// LN eps, applied inside the square root.
pub const LN_EPS: f64 = 1e-6;

pub fn linear<T: Real>(g: &mut Graph<T>, x: Var, p: Linear<Var>) -> Result<Var> {
    let y = g.matmul(x, p.weight)?;
    g.add_bias(y, p.bias)
}

pub fn layer_norm<T: Real>(g: &mut Graph<T>, x: Var, p: Norm<Var>) -> Result<Var> {
    g.layer_norm(x, p.gamma, p.beta, T::from_f64(LN_EPS))
}

/// Scaled dot-product attention `softmax(QKᵀ/√d_k)V`, also returning the
/// attention weights.
pub fn attention_weights<T: Real>(g: &mut Graph<T>, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let (sq, sk, sv) = (g.shape(q).to_vec(), g.shape(k).to_vec(), g.shape(v).to_vec());
    if sq.len() != 2 || sk.len() != 2 || sv.len() != 2 || sq[1] != sk[1] || sk[0] != sv[0] {
        return Err(Error::dim(format!(
            "attention with Q {sq:?}, K {sk:?}, V {sv:?}"
        )));
    }
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, T::one() / T::from_f64(sq[1] as f64).sqrt());
    let weights = g.softmax(scaled, 1)?;
    Ok((g.matmul(weights, v)?, weights))
}

pub fn attention<T: Real>(g: &mut Graph<T>, q: Var, k: Var, v: Var) -> Result<Var> {
    attention_weights(g, q, k, v).map(|(out, _)| out)
}

/// Multi-head self-attention over `segments` independent sequences stacked
/// along the rows of `x` (`segments · n × d`). Heads use column slices of
/// the projections, `d_k = d_v = d / heads`. Attention weight matrices are
/// appended to `weights_log`.
pub fn msa<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: MsaParams<Var>,
    heads: usize,
    segments: usize,
    weights_log: &mut Vec<Var>,
) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(Error::dim(format!("msa input {shape:?}")));
    }
    let (rows, d) = (shape[0], shape[1]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!("width {d} is not divisible into {heads} heads")));
    }
    if segments == 0 || rows % segments != 0 {
        return Err(Error::dim(format!("{rows} rows cannot form {segments} equal sequences")));
    }
    let (dk, n) = (d / heads, rows / segments);
    let q = g.matmul(x, p.wq)?;
    let k = g.matmul(x, p.wk)?;
    let v = g.matmul(x, p.wv)?;
    let mut seg_out = Vec::with_capacity(segments);
    for s in 0..segments {
        let (qs, ks, vs) = if segments == 1 {
            (q, k, v)
        } else {
            (g.narrow(q, 0, s * n, n)?, g.narrow(k, 0, s * n, n)?, g.narrow(v, 0, s * n, n)?)
        };
        let mut head_out = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (qs, ks, vs)
            } else {
                (g.narrow(qs, 1, h * dk, dk)?, g.narrow(ks, 1, h * dk, dk)?, g.narrow(vs, 1, h * dk, dk)?)
            };
            let (out, w) = attention_weights(g, qh, kh, vh)?;
            weights_log.push(w);
            head_out.push(out);
        }
        seg_out.push(if heads == 1 { head_out[0] } else { g.concat(&head_out, 1)? });
    }
    let joined = if segments == 1 { seg_out[0] } else { g.concat(&seg_out, 0)? };
    g.matmul(joined, p.wo)
}

/// `FC(GELU(FC(x)))`
pub fn mlp<T: Real>(g: &mut Graph<T>, x: Var, fc1: Linear<Var>, fc2: Linear<Var>) -> Result<Var> {
    let h = linear(g, x, fc1)?;
    let a = g.gelu(h);
    linear(g, a, fc2)
}

/// Pre-norm residual block:
/// `x̂ = x + MSA(LN(x))`, `y = x̂ + MLP(LN(x̂))`.
pub fn transformer_block<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: &BlockParams<Var>,
    heads: usize,
    segments: usize,
    weights_log: &mut Vec<Var>,
) -> Result<Var> {
    let before = g.shape(x).to_vec();
    let h = layer_norm(g, x, p.ln1)?;
    let a = msa(g, h, p.msa, heads, segments, weights_log)?;
    let x_hat = g.add(x, a)?;
    let h2 = layer_norm(g, x_hat, p.ln2)?;
    let m = mlp(g, h2, p.fc1, p.fc2)?;
    let y = g.add(x_hat, m)?;
    if g.shape(y) != before {
        return Err(Error::dim(format!("block changed shape {before:?} to {:?}", g.shape(y))));
    }
    Ok(y)
}

/// Inner (multiscale spatial) block over one band group's `m1 × d1` tokens.
pub fn inner_block<T: Real>(g: &mut Graph<T>, z: Var, p: &BlockParams<Var>, heads: usize) -> Result<Var> {
    transformer_block(g, z, p, heads, 1, &mut Vec::new())
}

/// Outer (spectral) block over the `(c'+1) × d2` spectral tokens.
pub fn outer_block<T: Real>(g: &mut Graph<T>, p_tokens: Var, p: &BlockParams<Var>, heads: usize) -> Result<Var> {
    transformer_block(g, p_tokens, p, heads, 1, &mut Vec::new())
}

/// Multiscale spatial tokens of one `s×s×n` band group.
///
/// Token `(a, k)` is the mean over the valid `k×k` convolution of the
/// center-cropped `a×a` neighborhood, plus the filter's bias. Cropping then
/// convolving equals taking the centered `(a-k+1)²` window of the full-patch
/// convolution, so each filter size is convolved once.
pub fn multiscale_spatial_embed<T: Real>(
    g: &mut Graph<T>,
    group: Var,
    bank: &[ConvFilter<Var>],
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let shape = g.shape(group).to_vec();
    if shape.len() != 3 || shape[0] != shape[1] {
        return Err(Error::dim(format!("band group must be s×s×n, got {shape:?}")));
    }
    if pairs.is_empty() {
        return Err(Error::config("no (scale, filter) pair with filter <= scale"));
    }
    let s = shape[0];
    let mut convs: Vec<(usize, Var)> = Vec::with_capacity(bank.len());
    let mut tokens = Vec::with_capacity(pairs.len());
    for &(a, k) in pairs {
        if a > s || a % 2 == 0 || k > a {
            return Err(Error::config(format!("invalid (scale {a}, filter {k}) for patch {s}")));
        }
        let filter = bank
            .iter()
            .find(|f| f.size == k)
            .ok_or_else(|| Error::config(format!("no {k}x{k} filter in the bank")))?;
        let full = match convs.iter().find(|(size, _)| *size == k) {
            Some(&(_, v)) => v,
            None => {
                let v = g.conv2d(group, filter.weight, 1)?;
                convs.push((k, v));
                v
            }
        };
        let window = if a == s {
            full
        } else {
            let off = (s - a) / 2;
            let len = a - k + 1;
            let rows = g.narrow(full, 0, off, len)?;
            g.narrow(rows, 1, off, len)?
        };
        let pooled = g.mean_pool_spatial(window)?;
        let biased = g.add_bias(pooled, filter.bias)?;
        let d1 = g.shape(biased)[0];
        tokens.push(g.reshape(biased, &[1, d1])?);
    }
    if tokens.len() == 1 {
        Ok(tokens[0])
    } else {
        g.concat(&tokens, 0)
    }
}

/// `p[j] += FC(vec(z))` for one spectral token row `j` (`j >= 1`; row 0 is
/// the class token and is never injected).
pub fn project_and_inject<T: Real>(g: &mut Graph<T>, z: Var, p: Var, j: usize, fc: Linear<Var>) -> Result<Var> {
    let (zs, ps) = (g.shape(z).to_vec(), g.shape(p).to_vec());
    let fan_in: usize = zs.iter().product();
    let (wi, wo) = (g.shape(fc.weight)[0], g.shape(fc.weight)[1]);
    if ps.len() != 2 || wi != fan_in || wo != ps[1] {
        return Err(Error::config(format!(
            "injection map {wi}x{wo} cannot take tokens {zs:?} into spectral memory {ps:?}"
        )));
    }
    if j == 0 || j >= ps[0] {
        return Err(Error::Contract(format!("injection row {j} outside 1..{}", ps[0])));
    }
    let flat = g.reshape(z, &[1, fan_in])?;
    let inj = linear(g, flat, fc)?;
    let mut rows = vec![g.narrow(p, 0, 0, j)?];
    let row = g.narrow(p, 0, j, 1)?;
    rows.push(g.add(row, inj)?);
    if j + 1 < ps[0] {
        rows.push(g.narrow(p, 0, j + 1, ps[0] - j - 1)?);
    }
    g.concat(&rows, 0)
}

/// Two-weight cross-layer fusion `w[0]·older + w[1]·current`, where `older`
/// is the stream two layers back.
pub fn cross_layer_fusion<T: Real>(g: &mut Graph<T>, older: Var, current: Var, weights: Var) -> Result<Var> {
    if g.shape(older) != g.shape(current) {
        return Err(Error::dim(format!(
            "fusion of {:?} with {:?}",
            g.shape(older),
            g.shape(current)
        )));
    }
    if g.value(weights).numel() != 2 {
        return Err(Error::dim(format!("fusion weights must have 2 entries, got {:?}", g.shape(weights))));
    }
    let a = g.scale_by(older, weights, 0)?;
    let b = g.scale_by(current, weights, 1)?;
    g.add(a, b)
}

/// Spatial fusion `ŵ₁·z_{l−2} + ŵ₂·z_l`.
pub fn scaf_spatial<T: Real>(g: &mut Graph<T>, z_older: Var, z_current: Var, w: Var) -> Result<Var> {
    cross_layer_fusion(g, z_older, z_current, w)
}

/// Spectral fusion `v̂₁·p_{l−2} + v̂₂·p_l`.
pub fn scaf_spectral<T: Real>(g: &mut Graph<T>, p_older: Var, p_current: Var, v: Var) -> Result<Var> {
    cross_layer_fusion(g, p_older, p_current, v)
}
