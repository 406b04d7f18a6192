// Slice-level kernels shared by the forward and backward passes. Every
// reduction runs in a fixed index order so results do not depend on how
// callers schedule work.

use super::Real;

/// `c[n×m] = a[n×k] · b[k×m]`
pub fn matmul<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut c = vec![T::zero(); n * m];
    for i in 0..n {
        let row = &mut c[i * m..(i + 1) * m];
        for t in 0..k {
            let av = a[i * k + t];
            let brow = &b[t * m..(t + 1) * m];
            for (cv, &bv) in row.iter_mut().zip(brow) {
                *cv = *cv + av * bv;
            }
        }
    }
    c
}

/// `out[k×m] += a[n×k]ᵀ · g[n×m]`
pub fn matmul_tn_acc<T: Real>(a: &[T], g: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for t in 0..k {
            let av = a[i * k + t];
            let orow = &mut out[t * m..(t + 1) * m];
            for (ov, &gv) in orow.iter_mut().zip(grow) {
                *ov = *ov + av * gv;
            }
        }
    }
}

/// `out[n×k] += g[n×m] · b[k×m]ᵀ`
pub fn matmul_nt_acc<T: Real>(g: &[T], b: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for t in 0..k {
            let brow = &b[t * m..(t + 1) * m];
            let mut s = T::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                s = s + gv * bv;
            }
            out[i * k + t] = out[i * k + t] + s;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h - self.k) / self.stride + 1
    }
    pub fn out_w(&self) -> usize {
        (self.w - self.k) / self.stride + 1
    }
    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.cin
    }
}

/// Unfolds an `h×w×cin` image into rows of `k·k·cin` receptive-field values,
/// one row per output position.
pub fn im2col<T: Real>(input: &[T], g: ConvGeom) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let span = g.k * g.cin;
    let mut cols = Vec::with_capacity(oh * ow * g.patch_len());
    for oy in 0..oh {
        for ox in 0..ow {
            for ky in 0..g.k {
                let start = ((oy * g.stride + ky) * g.w + ox * g.stride) * g.cin;
                cols.extend_from_slice(&input[start..start + span]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub fn col2im_acc<T: Real>(cols: &[T], g: ConvGeom, out: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let span = g.k * g.cin;
    let mut src = cols.chunks_exact(span);
    for oy in 0..oh {
        for ox in 0..ow {
            for ky in 0..g.k {
                let start = ((oy * g.stride + ky) * g.w + ox * g.stride) * g.cin;
                let chunk = src.next().expect("column buffer sized by geometry");
                for (o, &c) in out[start..start + span].iter_mut().zip(chunk) {
                    *o = *o + c;
                }
            }
        }
    }
}

/// Splits a shape around `axis` into (outer, extent, inner) strides.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax<T: Real>(x: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut y = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |a: usize| (o * n + a) * inner + i;
            let mut max = T::neg_infinity();
            for a in 0..n {
                max = max.max(x[idx(a)]);
            }
            let mut sum = T::zero();
            for a in 0..n {
                let e = (x[idx(a)] - max).exp();
                y[idx(a)] = e;
                sum = sum + e;
            }
            for a in 0..n {
                y[idx(a)] = y[idx(a)] / sum;
            }
        }
    }
    y
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * (T::one() + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Standard normal density.
#[inline]
pub fn normal_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::from_f64(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(x * x) * T::from_f64(0.5)).exp()
}
