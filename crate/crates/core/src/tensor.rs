//! Ring feature maps, weights and convolutions.
//!
//! Layouts are row-major: features `[p][q][c][i]`, weights
//! `[s][t][c_in][c_out][i]`, with `i` the tuple component. Convolutions use
//! "same" zero padding and a centered kernel:
//!
//! ```text
//! z[p,q,co] = Σ_{s,t,ci} g[s,t,ci,co] · x[p−s+r, q−t+r, ci] + b[co],   r = K/2
//! ```
//!
//! Every output element is accumulated over `(s, t, ci)` in row-major order,
//! padded taps included (as zero tuples), so results do not depend on how
//! output elements are scheduled.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::catalog::hadamard;
use crate::error::{Result, RingError};
use crate::fast::FastAlgorithm;
use crate::ring::{IndexingTensor, RingSpec};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(height: usize, width: usize, channels: usize, n: usize) -> Self {
        Self { height, width, channels, n, data: vec![0.0; height * width * channels * n] }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        let want = height * width * channels * n;
        if data.len() != want {
            return Err(RingError::DimensionMismatch { expected: want, got: data.len() });
        }
        Ok(Self { height, width, channels, n, data })
    }

    pub fn random(height: usize, width: usize, channels: usize, n: usize, rng: &mut rng::SeededRng) -> Self {
        let data = (0..height * width * channels * n).map(|_| rng::uniform(rng, -1.0, 1.0)).collect();
        Self { height, width, channels, n, data }
    }

    pub fn real_channels(&self) -> usize {
        self.channels * self.n
    }

    pub fn element(&self, p: usize, q: usize, c: usize) -> &[f64] {
        let o = self.offset(p, q, c);
        &self.data[o..o + self.n]
    }

    pub fn element_mut(&mut self, p: usize, q: usize, c: usize) -> &mut [f64] {
        let o = self.offset(p, q, c);
        &mut self.data[o..o + self.n]
    }

    fn offset(&self, p: usize, q: usize, c: usize) -> usize {
        ((p * self.width + q) * self.channels + c) * self.n
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.height, self.width, self.channels, self.n) == (other.height, other.width, other.channels, other.n)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(RingError::ShapeMismatch(format!(
                "{}x{}x{}x{} + {}x{}x{}x{}",
                self.height, self.width, self.channels, self.n, other.height, other.width, other.channels, other.n
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { height: self.height, width: self.width, channels: self.channels, n: self.n, data })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max(libm::fabs(a - b)))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    data: Vec<f64>,
    /// `T_g` applied to every element, `[s][t][ci][co][r]`.
    transformed: Option<Vec<f64>>,
}

impl WeightTensor {
    pub fn zeros(k: usize, c_in: usize, c_out: usize, n: usize) -> Self {
        Self { k, c_in, c_out, n, data: vec![0.0; k * k * c_in * c_out * n], transformed: None }
    }

    pub fn from_data(k: usize, c_in: usize, c_out: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        let want = k * k * c_in * c_out * n;
        if data.len() != want {
            return Err(RingError::DimensionMismatch { expected: want, got: data.len() });
        }
        Ok(Self { k, c_in, c_out, n, data, transformed: None })
    }

    /// Uniform in `±1/sqrt(K² c_in n)`.
    pub fn random(k: usize, c_in: usize, c_out: usize, n: usize, rng: &mut rng::SeededRng) -> Self {
        let bound = 1.0 / libm::sqrt((k * k * c_in * n) as f64);
        let data = (0..k * k * c_in * c_out * n).map(|_| rng::uniform(rng, -bound, bound)).collect();
        Self { k, c_in, c_out, n, data, transformed: None }
    }

    /// Unity of `spec` at the kernel center on the channel diagonal.
    pub fn identity(k: usize, channels: usize, spec: &RingSpec) -> Self {
        let n = spec.n();
        let unity = unity_of(spec);
        let mut w = Self::zeros(k, channels, channels, n);
        let r = k / 2;
        for c in 0..channels {
            w.element_mut(r, r, c, c).copy_from_slice(&unity);
        }
        w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access; drops the cached transform.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.transformed = None;
        &mut self.data
    }

    pub fn element(&self, s: usize, t: usize, ci: usize, co: usize) -> &[f64] {
        let o = self.offset(s, t, ci, co);
        &self.data[o..o + self.n]
    }

    pub fn element_mut(&mut self, s: usize, t: usize, ci: usize, co: usize) -> &mut [f64] {
        self.transformed = None;
        let o = self.offset(s, t, ci, co);
        &mut self.data[o..o + self.n]
    }

    fn offset(&self, s: usize, t: usize, ci: usize, co: usize) -> usize {
        (((s * self.k + t) * self.c_in + ci) * self.c_out + co) * self.n
    }

    /// Real weights stored: `K² c_in c_out n`.
    pub fn dof(&self) -> usize {
        self.data.len()
    }

    /// Compute and keep `g̃ = T_g g` for every element.
    pub fn cache_transform(&mut self, alg: &FastAlgorithm) {
        self.transformed = Some(self.transform_all(alg));
    }

    pub fn cached_transform(&self) -> Option<&[f64]> {
        self.transformed.as_deref()
    }

    fn transform_all(&self, alg: &FastAlgorithm) -> Vec<f64> {
        self.data.chunks(self.n).flat_map(|g| alg.transform_weight(g)).collect()
    }
}

/// Multiplicative unity: `e_0`, or all-ones when `e_0` is not a unity
/// (component-wise rings).
pub fn unity_of(spec: &RingSpec) -> Vec<f64> {
    let n = spec.n();
    let m = spec.m_tensor();
    let e0_is_unity = (0..n).all(|i| (0..n).all(|j| m.get(i, 0, j) == i8::from(i == j)));
    if e0_is_unity {
        let mut u = vec![0.0; n];
        u[0] = 1.0;
        u
    } else {
        vec![1.0; n]
    }
}

/// Direct product terms of one output component, in the order used by
/// [`crate::ring::ring_multiply`]: `j` outer, `k` inner.
pub(crate) fn product_terms(m: &IndexingTensor) -> Vec<Vec<(usize, usize, f64)>> {
    let n = m.n();
    (0..n)
        .map(|i| {
            let mut terms = Vec::new();
            for j in 0..n {
                for k in 0..n {
                    let s = m.get(i, k, j);
                    if s != 0 {
                        terms.push((k, j, f64::from(s)));
                    }
                }
            }
            terms
        })
        .collect()
}

fn check_conv(x: &FeatureTensor, g: &WeightTensor, bias: &[f64], n: usize) -> Result<()> {
    if x.n != n || g.n != n {
        return Err(RingError::ShapeMismatch(format!("ring n={n}, features n={}, weights n={}", x.n, g.n)));
    }
    if g.c_in != x.channels {
        return Err(RingError::ShapeMismatch(format!("weights expect {} input channels, got {}", g.c_in, x.channels)));
    }
    if g.k % 2 == 0 {
        return Err(RingError::ShapeMismatch(format!("kernel size {} is not odd", g.k)));
    }
    if bias.len() != g.c_out * n {
        return Err(RingError::DimensionMismatch { expected: g.c_out * n, got: bias.len() });
    }
    Ok(())
}

/// Input position feeding output `p` through kernel tap `s`, if inside.
#[inline]
fn tap(p: usize, s: usize, r: usize, len: usize) -> Option<usize> {
    let v = (p + r).checked_sub(s)?;
    (v < len).then_some(v)
}

/// Fill every output pixel; rows run in parallel under `std`. Each pixel is
/// computed by the same sequential code, so results are schedule-independent.
fn for_each_pixel(out: &mut [f64], width: usize, pixel_len: usize, f: impl Fn(usize, usize, &mut [f64]) + Sync + Send) {
    let row_len = width * pixel_len;
    if row_len == 0 {
        return;
    }
    let run_row = |(p, row): (usize, &mut [f64])| {
        for (q, px) in row.chunks_mut(pixel_len).enumerate() {
            f(p, q, px);
        }
    };
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(row_len).enumerate().for_each(run_row);
    }
    #[cfg(not(feature = "std"))]
    out.chunks_mut(row_len).enumerate().for_each(run_row);
}

/// Direct ring convolution: one ring multiplication per tap.
pub fn rconv(x: &FeatureTensor, g: &WeightTensor, bias: &[f64], spec: &RingSpec) -> Result<FeatureTensor> {
    let n = spec.n();
    check_conv(x, g, bias, n)?;
    let terms = product_terms(spec.m_tensor());
    let zero = vec![0.0; n];
    let (k, r) = (g.k, g.k / 2);
    let mut out = FeatureTensor::zeros(x.height, x.width, g.c_out, n);
    for_each_pixel(&mut out.data, x.width, g.c_out * n, |p, q, px| {
        let mut prod = vec![0.0; n];
        for co in 0..g.c_out {
            let acc = &mut px[co * n..(co + 1) * n];
            for s in 0..k {
                for t in 0..k {
                    for ci in 0..g.c_in {
                        let xe = match (tap(p, s, r, x.height), tap(q, t, r, x.width)) {
                            (Some(a), Some(b)) => x.element(a, b, ci),
                            _ => &zero,
                        };
                        let ge = g.element(s, t, ci, co);
                        for (i, ti) in terms.iter().enumerate() {
                            let mut v = 0.0;
                            for &(kk, j, sign) in ti {
                                v += sign * ge[kk] * xe[j];
                            }
                            prod[i] = v;
                        }
                        for i in 0..n {
                            acc[i] += prod[i];
                        }
                    }
                }
            }
            for i in 0..n {
                acc[i] += bias[co * n + i];
            }
        }
    });
    Ok(out)
}

/// Fast ring convolution: `x̃` computed once per input element, cached or
/// freshly transformed `g̃`, `m` products per tap, `T_z` once per output.
pub fn frconv(x: &FeatureTensor, g: &WeightTensor, bias: &[f64], spec: &RingSpec) -> Result<FeatureTensor> {
    frconv_counted(x, g, bias, spec).map(|(out, _)| out)
}

/// [`frconv`] plus the number of real multiplications in the product stage.
pub fn frconv_counted(x: &FeatureTensor, g: &WeightTensor, bias: &[f64], spec: &RingSpec) -> Result<(FeatureTensor, u64)> {
    let alg = spec.require_fast()?;
    let n = spec.n();
    check_conv(x, g, bias, n)?;
    let m = alg.m();
    let fresh;
    let gt: &[f64] = match g.cached_transform() {
        Some(c) if c.len() == g.k * g.k * g.c_in * g.c_out * m => c,
        _ => {
            fresh = g.transform_all(alg);
            &fresh
        }
    };
    let xt: Vec<f64> = x.data.chunks(n).flat_map(|e| alg.transform_data(e)).collect();
    let zero = vec![0.0; m];
    let (k, r) = (g.k, g.k / 2);
    let (c_in, c_out, width) = (g.c_in, g.c_out, x.width);
    let mut out = FeatureTensor::zeros(x.height, x.width, c_out, n);
    for_each_pixel(&mut out.data, x.width, c_out * n, |p, q, px| {
        let mut acc = vec![0.0; m];
        for co in 0..c_out {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for s in 0..k {
                for t in 0..k {
                    let pos = match (tap(p, s, r, x.height), tap(q, t, r, width)) {
                        (Some(a), Some(b)) => Some(a * width + b),
                        _ => None,
                    };
                    for ci in 0..c_in {
                        let xe = match pos {
                            Some(o) => &xt[(o * c_in + ci) * m..(o * c_in + ci + 1) * m],
                            None => &zero[..],
                        };
                        let go = (((s * k + t) * c_in + ci) * c_out + co) * m;
                        let ge = &gt[go..go + m];
                        for rr in 0..m {
                            acc[rr] += ge[rr] * xe[rr];
                        }
                    }
                }
            }
            let z = alg.reconstruct(&acc);
            for i in 0..n {
                px[co * n + i] = z[i] + bias[co * n + i];
            }
        }
    });
    let mults = (x.height * x.width * k * k * c_in * c_out * m) as u64;
    Ok((out, mults))
}

/// Real-valued feature map `[p][q][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// Real convolution weights `[s][t][c_in][c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealWeights {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub data: Vec<f64>,
}

impl RealWeights {
    fn at(&self, s: usize, t: usize, ci: usize, co: usize) -> usize {
        ((s * self.k + t) * self.c_in + ci) * self.c_out + co
    }
}

/// Flatten n-tuples into `n` real channels (`c·n + i`). The memory layout is
/// unchanged.
pub fn expand_features(x: &FeatureTensor) -> RealTensor {
    RealTensor { height: x.height, width: x.width, channels: x.channels * x.n, data: x.data.clone() }
}

pub fn collapse_features(x: &RealTensor, n: usize) -> Result<FeatureTensor> {
    if x.channels % n != 0 {
        return Err(RingError::NonDivisibleChannels { channels: x.channels, n });
    }
    FeatureTensor::from_data(x.height, x.width, x.channels / n, n, x.data.clone())
}

/// Replace every weight element by its isomorphic block:
/// `W[s][t][ci·n + j][co·n + i] = G(g[s,t,ci,co])_ij`.
pub fn expand_weights(g: &WeightTensor, spec: &RingSpec) -> RealWeights {
    let n = spec.n();
    let m = spec.m_tensor();
    let mut w = RealWeights { k: g.k, c_in: g.c_in * n, c_out: g.c_out * n, data: vec![0.0; g.k * g.k * g.c_in * g.c_out * n * n] };
    for s in 0..g.k {
        for t in 0..g.k {
            for ci in 0..g.c_in {
                for co in 0..g.c_out {
                    let ge = g.element(s, t, ci, co);
                    for i in 0..n {
                        for j in 0..n {
                            let v: f64 = (0..n).map(|k| f64::from(m.get(i, k, j)) * ge[k]).sum();
                            let o = w.at(s, t, ci * n + j, co * n + i);
                            w.data[o] = v;
                        }
                    }
                }
            }
        }
    }
    w
}

/// Reference real convolution with the same padding and tap convention.
pub fn real_conv2d(x: &RealTensor, w: &RealWeights, bias: &[f64]) -> Result<RealTensor> {
    if w.c_in != x.channels || bias.len() != w.c_out || w.k % 2 == 0 {
        return Err(RingError::ShapeMismatch(format!(
            "real conv: {} input channels vs weights {}x{}, bias {}",
            x.channels, w.c_in, w.c_out, bias.len()
        )));
    }
    let (k, r) = (w.k, w.k / 2);
    let mut out = RealTensor { height: x.height, width: x.width, channels: w.c_out, data: vec![0.0; x.height * x.width * w.c_out] };
    for p in 0..x.height {
        for q in 0..x.width {
            for co in 0..w.c_out {
                let mut acc = 0.0;
                for s in 0..k {
                    for t in 0..k {
                        if let (Some(a), Some(b)) = (tap(p, s, r, x.height), tap(q, t, r, x.width)) {
                            for ci in 0..w.c_in {
                                acc += w.data[w.at(s, t, ci, co)] * x.data[(a * x.width + b) * x.channels + ci];
                            }
                        }
                    }
                }
                out.data[(p * x.width + q) * w.c_out + co] = acc + bias[co];
            }
        }
    }
    Ok(out)
}

/// Gradients of [`real_conv2d`] w.r.t. input, weights and bias.
pub fn real_conv2d_backward(x: &RealTensor, w: &RealWeights, dy: &RealTensor) -> (RealTensor, RealWeights, Vec<f64>) {
    let (k, r) = (w.k, w.k / 2);
    let mut dx = RealTensor { data: vec![0.0; x.data.len()], ..x.clone() };
    let mut dw = RealWeights { data: vec![0.0; w.data.len()], ..w.clone() };
    let mut db = vec![0.0; w.c_out];
    for p in 0..x.height {
        for q in 0..x.width {
            for co in 0..w.c_out {
                let d = dy.data[(p * x.width + q) * w.c_out + co];
                db[co] += d;
                for s in 0..k {
                    for t in 0..k {
                        if let (Some(a), Some(b)) = (tap(p, s, r, x.height), tap(q, t, r, x.width)) {
                            for ci in 0..w.c_in {
                                let xo = (a * x.width + b) * x.channels + ci;
                                let wo = w.at(s, t, ci, co);
                                dx.data[xo] += w.data[wo] * d;
                                dw.data[wo] += x.data[xo] * d;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

pub fn relu_cw(x: &FeatureTensor) -> FeatureTensor {
    FeatureTensor { data: x.data.iter().map(|v| v.max(0.0)).collect(), ..x.clone() }
}

/// `f(y) = U f_cw(V y)` applied to every n-tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalRelu {
    n: usize,
    /// row-major `n×n`
    u: Vec<f64>,
    v: Vec<f64>,
}

impl DirectionalRelu {
    pub fn new(n: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        for m in [&u, &v] {
            if m.len() != n * n {
                return Err(RingError::DimensionMismatch { expected: n * n, got: m.len() });
            }
        }
        Ok(Self { n, u, v })
    }

    /// `f_H` with the unnormalized ±1 Hadamard matrix (`n` a power of two).
    pub fn hadamard(n: usize) -> Self {
        let h = hadamard(n);
        let flat: Vec<f64> = (0..n * n).map(|e| h[(e / n, e % n)]).collect();
        Self { n, u: flat.clone(), v: flat }
    }

    pub fn identity(n: usize) -> Self {
        let flat: Vec<f64> = (0..n * n).map(|e| if e / n == e % n { 1.0 } else { 0.0 }).collect();
        Self { n, u: flat.clone(), v: flat }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// `V y` for one tuple.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        matvec(&self.v, y)
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self.project(y).into_iter().map(|v| v.max(0.0)).collect();
        matvec(&self.u, &h)
    }
}

fn matvec(m: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n).map(|i| (0..n).map(|j| m[i * n + j] * y[j]).sum()).collect()
}

pub fn relu_dir(x: &FeatureTensor, f: &DirectionalRelu) -> Result<FeatureTensor> {
    if f.n != x.n {
        return Err(RingError::DimensionMismatch { expected: x.n, got: f.n });
    }
    let data = x.data.chunks(x.n).flat_map(|y| f.apply(y)).collect();
    Ok(FeatureTensor { data, ..x.clone() })
}
