//! 8-bit fixed-point inference with per-component feature formats.
//!
//! Features and weights are 8-bit codes; the fast algorithm runs on integer
//! transforms and accumulates in `i64` storage checked against the `i32`
//! range. Directional ReLUs consume the wide accumulators directly
//! ("on the fly"): align, butterfly, ReLU, butterfly, one rounding shift.
//!
//! Rounding is half away from zero everywhere.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Result, RingError};
use crate::fast::IntegerTransforms;
use crate::model::{forward, Mode, ModelGraph, Nonlinearity};
use crate::ring::RingSpec;
use crate::tensor::{DirectionalRelu, FeatureTensor, WeightTensor};

/// Signed fixed-point format: `value = code · 2^(−frac_bits)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QFormat {
    pub total_bits: u32,
    pub frac_bits: i32,
}

impl QFormat {
    pub const fn new(total_bits: u32, frac_bits: i32) -> Self {
        Self { total_bits, frac_bits }
    }

    pub const fn q8(frac_bits: i32) -> Self {
        Self::new(8, frac_bits)
    }

    pub fn max_code(&self) -> i64 {
        (1i64 << (self.total_bits - 1)) - 1
    }

    pub fn min_code(&self) -> i64 {
        -(1i64 << (self.total_bits - 1))
    }

    /// Largest `frac_bits` for which `max_abs` rounds to a representable code.
    /// A zero range gets `total_bits − 1`.
    pub fn calibrate(max_abs: f64, total_bits: u32) -> Self {
        let top = ((1u64 << (total_bits - 1)) - 1) as f64;
        if !(max_abs > 0.0) || !max_abs.is_finite() {
            return Self::new(total_bits, total_bits as i32 - 1);
        }
        let fits = |f: i32| libm::round(max_abs * libm::exp2(f64::from(f))) <= top;
        let mut f = libm::floor(libm::log2(top / max_abs)) as i32;
        while !fits(f) {
            f -= 1;
        }
        while fits(f + 1) {
            f += 1;
        }
        Self::new(total_bits, f)
    }

    /// `(code, saturated)`
    pub fn quantize(&self, v: f64) -> (i32, bool) {
        let c = libm::round(v * libm::exp2(f64::from(self.frac_bits)));
        let (lo, hi) = (self.min_code() as f64, self.max_code() as f64);
        if c > hi {
            (hi as i32, true)
        } else if c < lo {
            (lo as i32, true)
        } else {
            (c as i32, false)
        }
    }

    pub fn dequantize(&self, code: i64) -> f64 {
        code as f64 * libm::exp2(f64::from(-self.frac_bits))
    }

    pub fn clamp(&self, v: i64) -> (i32, bool) {
        if v > self.max_code() {
            (self.max_code() as i32, true)
        } else if v < self.min_code() {
            (self.min_code() as i32, true)
        } else {
            (v as i32, false)
        }
    }
}

/// `round(v / 2^t)`, ties away from zero; `t ≤ 0` shifts left (unchecked).
pub fn shr_round(v: i64, t: i32) -> i64 {
    if t <= 0 {
        return v << (-t);
    }
    let half = 1i64 << (t - 1);
    if v >= 0 {
        (v + half) >> t
    } else {
        -((-v + half) >> t)
    }
}

/// Two's-complement width needed for `v`.
pub fn signed_bits(v: i64) -> u32 {
    64 - (v ^ (v >> 63)).leading_zeros() + 1
}

/// Feature map of integer codes, one format per tuple component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedFeatureTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n: usize,
    pub codes: Vec<i32>,
    pub formats: Vec<QFormat>,
    /// Values clipped while producing this tensor.
    pub saturations: u64,
}

impl FixedFeatureTensor {
    pub fn quantize(x: &FeatureTensor, formats: &[QFormat]) -> Result<Self> {
        if formats.len() != x.n {
            return Err(RingError::DimensionMismatch { expected: x.n, got: formats.len() });
        }
        let mut saturations = 0;
        let codes = x
            .data
            .iter()
            .enumerate()
            .map(|(e, v)| {
                let (c, sat) = formats[e % x.n].quantize(*v);
                saturations += u64::from(sat);
                c
            })
            .collect();
        Ok(Self { height: x.height, width: x.width, channels: x.channels, n: x.n, codes, formats: formats.to_vec(), saturations })
    }

    pub fn dequantize(&self) -> FeatureTensor {
        let data = self.codes.iter().enumerate().map(|(e, c)| self.formats[e % self.n].dequantize(i64::from(*c))).collect();
        FeatureTensor { height: self.height, width: self.width, channels: self.channels, n: self.n, data }
    }

    pub fn element(&self, p: usize, q: usize, c: usize) -> &[i32] {
        let o = ((p * self.width + q) * self.channels + c) * self.n;
        &self.codes[o..o + self.n]
    }
}

/// 8-bit weight codes with one format for the whole layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedWeights {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub n: usize,
    pub codes: Vec<i32>,
    pub format: QFormat,
    pub saturations: u64,
}

impl QuantizedWeights {
    pub fn quantize(w: &WeightTensor, format: QFormat) -> Self {
        let mut saturations = 0;
        let codes = w
            .data()
            .iter()
            .map(|v| {
                let (c, s) = format.quantize(*v);
                saturations += u64::from(s);
                c
            })
            .collect();
        Self { k: w.k, c_in: w.c_in, c_out: w.c_out, n: w.n, codes, format, saturations }
    }

    pub fn dequantize(&self) -> WeightTensor {
        let data = self.codes.iter().map(|c| self.format.dequantize(i64::from(*c))).collect();
        WeightTensor::from_data(self.k, self.c_in, self.c_out, self.n, data).expect("shape preserved")
    }
}

/// Un-requantized convolution outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accumulators {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n: usize,
    pub values: Vec<i64>,
    /// Implied fraction bits per component.
    pub frac: Vec<i32>,
    /// Widest accumulator value seen, in bits.
    pub max_bits: u32,
}

impl Accumulators {
    pub fn dequantize(&self) -> FeatureTensor {
        let data = self.values.iter().enumerate().map(|(e, v)| *v as f64 * libm::exp2(f64::from(-self.frac[e % self.n]))).collect();
        FeatureTensor { height: self.height, width: self.width, channels: self.channels, n: self.n, data }
    }

    fn refresh_bits(&mut self) {
        self.max_bits = self.values.iter().map(|v| signed_bits(*v)).max().unwrap_or(1);
    }
}

fn check_i32(v: i64, layer: usize) -> Result<i64> {
    if v > i64::from(i32::MAX) || v < i64::from(i32::MIN) {
        Err(RingError::AccumulatorOverflow { layer })
    } else {
        Ok(v)
    }
}

fn checked_shl(v: i64, s: i32, layer: usize) -> Result<i64> {
    debug_assert!(s >= 0);
    if s > 31 {
        return if v == 0 { Ok(0) } else { Err(RingError::AccumulatorOverflow { layer }) };
    }
    check_i32(v << s, layer)
}

fn integer_transforms(spec: &RingSpec) -> Result<IntegerTransforms> {
    spec.require_fast()?
        .integer_form()
        .ok_or_else(|| RingError::Unsupported(format!("{}: fast algorithm has no integer form", spec.name)))
}

/// Integer fast ring convolution. `x̃` rows align the components they mix to
/// the finest of their fractions; `T_z` aligns products per output
/// component. The implied fraction of output `i` is
/// `max F_r + f_g + t_z_shift` over the products `r` it uses. Bias is added
/// exactly at that fraction. Every intermediate must fit `i32`.
pub fn frconv_fixed(
    x: &FixedFeatureTensor,
    w: &QuantizedWeights,
    bias: &[f64],
    spec: &RingSpec,
    layer: usize,
) -> Result<Accumulators> {
    let n = spec.n();
    if x.n != n || w.n != n || w.c_in != x.channels || bias.len() != w.c_out * n || w.k % 2 == 0 {
        return Err(RingError::ShapeMismatch(format!("layer {layer}: fixed convolution operands disagree")));
    }
    let it = integer_transforms(spec)?;
    let m = it.m;
    let fx: Vec<i32> = x.formats.iter().map(|f| f.frac_bits).collect();
    let f_g = w.format.frac_bits;

    let row_frac: Vec<i32> = (0..m)
        .map(|r| (0..n).filter(|&j| it.t_x[r * n + j] != 0).map(|j| fx[j]).max().unwrap_or(0))
        .collect();
    let out_frac: Vec<i32> = (0..n)
        .map(|i| (0..m).filter(|&r| it.t_z[i * m + r] != 0).map(|r| row_frac[r]).max().unwrap_or(0))
        .collect();
    let implied: Vec<i32> = out_frac.iter().map(|a| a + f_g + it.t_z_shift as i32).collect();

    let mut xt = vec![0i64; x.codes.len() / n * m];
    for (e, xe) in x.codes.chunks(n).enumerate() {
        for r in 0..m {
            let mut acc = 0i64;
            for j in 0..n {
                let c = it.t_x[r * n + j];
                if c != 0 {
                    acc += c * checked_shl(i64::from(xe[j]), row_frac[r] - fx[j], layer)?;
                }
            }
            xt[e * m + r] = check_i32(acc, layer)?;
        }
    }
    let mut gt = vec![0i64; w.codes.len() / n * m];
    for (e, ge) in w.codes.chunks(n).enumerate() {
        for r in 0..m {
            let acc: i64 = (0..n).map(|k| it.t_g[r * n + k] * i64::from(ge[k])).sum();
            gt[e * m + r] = check_i32(acc, layer)?;
        }
    }
    let bias_codes: Vec<i64> = bias
        .iter()
        .enumerate()
        .map(|(e, b)| libm::round(b * libm::exp2(f64::from(implied[e % n]))) as i64)
        .collect();

    let (k, rad) = (w.k, w.k / 2);
    let (h, wd, c_in, c_out) = (x.height, x.width, w.c_in, w.c_out);
    let pixel = |p: usize, q: usize, out: &mut [i64]| -> Result<()> {
        let mut acc = vec![0i64; m];
        for co in 0..c_out {
            acc.iter_mut().for_each(|v| *v = 0);
            for s in 0..k {
                for t in 0..k {
                    let (Some(a), Some(b)) = ((p + rad).checked_sub(s), (q + rad).checked_sub(t)) else { continue };
                    if a >= h || b >= wd {
                        continue;
                    }
                    for ci in 0..c_in {
                        let xo = ((a * wd + b) * c_in + ci) * m;
                        let go = (((s * k + t) * c_in + ci) * c_out + co) * m;
                        for r in 0..m {
                            acc[r] += gt[go + r] * xt[xo + r];
                        }
                    }
                }
            }
            for v in &acc {
                check_i32(*v, layer)?;
            }
            for i in 0..n {
                let mut y = 0i64;
                for r in 0..m {
                    let z = it.t_z[i * m + r];
                    if z != 0 {
                        y += z * checked_shl(acc[r], out_frac[i] - row_frac[r], layer)?;
                    }
                }
                out[co * n + i] = check_i32(y + bias_codes[co * n + i], layer)?;
            }
        }
        Ok(())
    };

    let mut values = vec![0i64; h * wd * c_out * n];
    let row_len = wd * c_out * n;
    if row_len > 0 {
        let run_row = |(p, row): (usize, &mut [i64])| -> Result<()> {
            for (q, px) in row.chunks_mut(c_out * n).enumerate() {
                pixel(p, q, px)?;
            }
            Ok(())
        };
        #[cfg(feature = "std")]
        {
            use rayon::prelude::*;
            values.par_chunks_mut(row_len).enumerate().map(run_row).collect::<Result<Vec<()>>>()?;
        }
        #[cfg(not(feature = "std"))]
        values.chunks_mut(row_len).enumerate().map(run_row).collect::<Result<Vec<()>>>()?;
    }
    let mut out = Accumulators { height: h, width: wd, channels: c_out, n, values, frac: implied, max_bits: 0 };
    out.refresh_bits();
    Ok(out)
}

/// Width limits for the directional-ReLU datapath.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub input_bits: u32,
    pub align_bits: u32,
    pub internal_bits: u32,
}

impl Envelope {
    /// Hardware envelope: 24-bit accumulators, ≤ 5 alignment bits and one
    /// growth bit per butterfly stage (33 bits for `n = 4`).
    pub fn declared(n: usize) -> Self {
        let stages = n.trailing_zeros();
        Self { input_bits: 24, align_bits: 5, internal_bits: 24 + 5 + 2 * stages }
    }

    /// Limits of the software datapath (`i64` intermediates).
    pub fn software() -> Self {
        Self { input_bits: 32, align_bits: 24, internal_bits: 62 }
    }
}

/// Widths observed in one directional-ReLU invocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DirectionalStats {
    pub input_bits: u32,
    pub align_bits: u32,
    pub internal_bits: u32,
    pub saturations: u64,
}

impl DirectionalStats {
    pub fn merge(&mut self, o: &Self) {
        self.input_bits = self.input_bits.max(o.input_bits);
        self.align_bits = self.align_bits.max(o.align_bits);
        self.internal_bits = self.internal_bits.max(o.internal_bits);
        self.saturations += o.saturations;
    }
}

/// Integer form of a directional ReLU whose `U`, `V` are integral.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerDirectional {
    pub n: usize,
    pub u: Vec<i64>,
    pub v: Vec<i64>,
}

impl IntegerDirectional {
    pub fn new(f: &DirectionalRelu) -> Result<Self> {
        let int = |m: &[f64]| -> Result<Vec<i64>> {
            m.iter()
                .map(|c| {
                    let r = libm::round(*c);
                    if r == *c && libm::fabs(r) < 1e6 {
                        Ok(r as i64)
                    } else {
                        Err(RingError::Unsupported("fixed-point directional ReLU needs integer U and V".into()))
                    }
                })
                .collect()
        };
        Ok(Self { n: f.n(), u: int(f.u())?, v: int(f.v())? })
    }

    pub fn hadamard(n: usize) -> Self {
        Self::new(&DirectionalRelu::hadamard(n)).expect("±1 entries")
    }
}

/// Shift amounts `(s, t)`: `s_i = max n_y − n_{y,i}`, `t_i = max n_y − n_{x,i}`.
pub fn alignment_shifts(n_y: &[i32], n_x: &[i32]) -> (Vec<i32>, Vec<i32>) {
    let top = n_y.iter().copied().max().unwrap_or(0);
    (n_y.iter().map(|f| top - f).collect(), n_x.iter().map(|f| top - f).collect())
}

/// On-the-fly directional ReLU on one tuple of accumulators with fractions
/// `n_y`, producing 8-bit codes at fractions `n_x`. Exact up to the final
/// rounding shift.
pub fn directional_relu_fixed(
    y: &[i64],
    n_y: &[i32],
    n_x: &[i32],
    f: &IntegerDirectional,
    envelope: &Envelope,
) -> Result<(Vec<i32>, DirectionalStats)> {
    let n = f.n;
    if y.len() != n || n_y.len() != n || n_x.len() != n {
        return Err(RingError::DimensionMismatch { expected: n, got: y.len().min(n_y.len()).min(n_x.len()) });
    }
    let (s, t) = alignment_shifts(n_y, n_x);
    let mut st = DirectionalStats {
        input_bits: y.iter().map(|v| signed_bits(*v)).max().unwrap_or(1),
        align_bits: s.iter().copied().max().unwrap_or(0) as u32,
        ..Default::default()
    };
    if st.input_bits > envelope.input_bits {
        return Err(RingError::WidthViolation { what: "directional ReLU input", bits: st.input_bits, limit: envelope.input_bits });
    }
    if st.align_bits > envelope.align_bits {
        return Err(RingError::WidthViolation { what: "alignment shift", bits: st.align_bits, limit: envelope.align_bits });
    }
    let aligned: Vec<i64> = y.iter().zip(&s).map(|(v, si)| v << si).collect();
    let mut widest = aligned.iter().map(|v| signed_bits(*v)).max().unwrap_or(1);
    let h: Vec<i64> = (0..n).map(|r| (0..n).map(|j| f.v[r * n + j] * aligned[j]).sum::<i64>().max(0)).collect();
    widest = widest.max(h.iter().map(|v| signed_bits(*v)).max().unwrap_or(1));
    let o: Vec<i64> = (0..n).map(|i| (0..n).map(|r| f.u[i * n + r] * h[r]).sum()).collect();
    widest = widest.max(o.iter().map(|v| signed_bits(*v)).max().unwrap_or(1));
    st.internal_bits = widest;
    if widest > envelope.internal_bits {
        return Err(RingError::WidthViolation { what: "directional ReLU internal", bits: widest, limit: envelope.internal_bits });
    }
    let q8 = QFormat::q8(0);
    let codes = o
        .iter()
        .zip(&t)
        .map(|(v, ti)| {
            let (c, sat) = q8.clamp(shr_round(*v, *ti));
            st.saturations += u64::from(sat);
            c
        })
        .collect();
    Ok((codes, st))
}

/// Formats of one layer. Every vector has one entry per tuple component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerPlan {
    pub weight: QFormat,
    pub input: Vec<QFormat>,
    /// 8-bit format of the pre-activation (used by the pre-quantized baseline).
    pub pre_activation: Vec<QFormat>,
    /// 8-bit format of `V y` (pre-quantized baseline, directional layers).
    pub hidden: Vec<QFormat>,
    /// Equals the next layer's `input`.
    pub output: Vec<QFormat>,
    /// Widest accumulator seen on the calibration set.
    pub acc_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QFormatPlan {
    pub layers: Vec<LayerPlan>,
}

impl QFormatPlan {
    /// Accumulator fractions implied for each layer, given its plan.
    pub fn bias_frac(&self, spec: &RingSpec, layer: usize) -> Result<Vec<i32>> {
        let it = integer_transforms(spec)?;
        let lp = &self.layers[layer];
        let (n, m) = (it.n, it.m);
        let row: Vec<i32> = (0..m)
            .map(|r| (0..n).filter(|&j| it.t_x[r * n + j] != 0).map(|j| lp.input[j].frac_bits).max().unwrap_or(0))
            .collect();
        Ok((0..n)
            .map(|i| {
                (0..m).filter(|&r| it.t_z[i * m + r] != 0).map(|r| row[r]).max().unwrap_or(0)
                    + lp.weight.frac_bits
                    + it.t_z_shift as i32
            })
            .collect())
    }
}

fn uses_directional(model: &ModelGraph) -> bool {
    model.layers.iter().any(|l| matches!(l.nonlinearity, Nonlinearity::DirectionalRelu(_)))
}

/// Per-component maxima of `|x|`.
fn component_max(x: &FeatureTensor, into: &mut [f64]) {
    for (e, v) in x.data.iter().enumerate() {
        let slot = &mut into[e % x.n];
        *slot = slot.max(libm::fabs(*v));
    }
}

/// Choose every format from float inference on `images`. Feature formats
/// are per component when the model has a directional ReLU and shared
/// otherwise.
pub fn calibrate(model: &ModelGraph, images: &[FeatureTensor]) -> Result<QFormatPlan> {
    if images.is_empty() {
        return Err(RingError::EmptyCalibration);
    }
    let n = model.n();
    let layers = model.layers.len();
    let mut act = vec![vec![0.0; n]; layers + 1];
    let mut pre = vec![vec![0.0; n]; layers];
    let mut hidden = vec![vec![0.0; n]; layers];
    for x in images {
        let fwd = forward(model, x, Mode::FloatDirect)?;
        for (a, slot) in fwd.activations.iter().zip(act.iter_mut()) {
            component_max(a, slot);
        }
        for (l, y) in fwd.pre.iter().enumerate() {
            component_max(y, &mut pre[l]);
            if let Nonlinearity::DirectionalRelu(f) = &model.layers[l].nonlinearity {
                for e in y.data.chunks(n) {
                    for (slot, v) in hidden[l].iter_mut().zip(f.project(e)) {
                        *slot = f64::max(*slot, libm::fabs(v));
                    }
                }
            } else {
                component_max(y, &mut hidden[l]);
            }
        }
    }
    let shared = !uses_directional(model);
    let formats = |maxima: &[f64]| -> Vec<QFormat> {
        if shared {
            let top = maxima.iter().copied().fold(0.0, f64::max);
            vec![QFormat::calibrate(top, 8); n]
        } else {
            maxima.iter().map(|m| QFormat::calibrate(*m, 8)).collect()
        }
    };
    let mut plan = QFormatPlan {
        layers: (0..layers)
            .map(|l| LayerPlan {
                weight: QFormat::calibrate(model.layers[l].weights.data().iter().fold(0.0, |a, v| a.max(libm::fabs(*v))), 8),
                input: formats(&act[l]),
                pre_activation: formats(&pre[l]),
                hidden: formats(&hidden[l]),
                output: formats(&act[l + 1]),
                acc_bits: 0,
            })
            .collect(),
    };
    let mut bits = vec![0u32; layers];
    for x in images {
        let run = forward_fixed(model, &plan, x)?;
        for (b, s) in bits.iter_mut().zip(&run.layers) {
            *b = (*b).max(s.acc_bits);
        }
    }
    for (lp, b) in plan.layers.iter_mut().zip(bits) {
        lp.acc_bits = b;
    }
    Ok(plan)
}

/// How a layer leaves the accumulator domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    /// The non-linearity consumes the wide accumulators directly.
    OnTheFly,
    /// Conventional baseline: requantize to 8 bits before each transform of
    /// the non-linearity.
    PreQuantized,
}

/// Per-layer statistics of a fixed-point run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerStats {
    /// Widest accumulator after skip additions, in bits.
    pub acc_bits: u32,
    pub directional: Option<DirectionalStats>,
    pub saturations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedRun {
    /// Dequantized taps: activations are the 8-bit codes, `pre` the
    /// accumulators after skips.
    pub forward: crate::model::Forward,
    pub codes: Vec<FixedFeatureTensor>,
    pub accumulators: Vec<Accumulators>,
    pub layers: Vec<LayerStats>,
    pub input_saturations: u64,
}

fn check_plan(model: &ModelGraph, plan: &QFormatPlan) -> Result<()> {
    let n = model.n();
    if plan.layers.len() != model.layers.len() {
        return Err(RingError::ShapeMismatch(format!("plan has {} layers, model {}", plan.layers.len(), model.layers.len())));
    }
    for (l, lp) in plan.layers.iter().enumerate() {
        for v in [&lp.input, &lp.pre_activation, &lp.hidden, &lp.output] {
            if v.len() != n {
                return Err(RingError::ShapeMismatch(format!("layer {l} plan has {} component formats", v.len())));
            }
        }
        if l + 1 < plan.layers.len() && lp.output != plan.layers[l + 1].input {
            return Err(RingError::ShapeMismatch(format!("layer {l} output formats differ from layer {} input", l + 1)));
        }
    }
    Ok(())
}

/// Requantize one value from fraction `from` to an 8-bit code at `to`.
fn requantize(v: i64, from: i32, to: QFormat, layer: usize) -> Result<(i32, bool)> {
    let shifted = if from >= to.frac_bits { shr_round(v, from - to.frac_bits) } else { checked_shl(v, to.frac_bits - from, layer)? };
    Ok(to.clamp(shifted))
}

/// One layer in the integer domain: convolution, skip additions aligned by
/// left shifts, then the non-linearity under `pipeline`.
pub fn run_layer_fixed(
    model: &ModelGraph,
    plan: &QFormatPlan,
    layer: usize,
    input: &FixedFeatureTensor,
    skips: &[&FixedFeatureTensor],
    pipeline: Pipeline,
) -> Result<(FixedFeatureTensor, Accumulators, LayerStats)> {
    let n = model.n();
    let lp = &plan.layers[layer];
    let ly = &model.layers[layer];
    let w = QuantizedWeights::quantize(&ly.weights, lp.weight);
    let mut acc = frconv_fixed(input, &w, &ly.bias, &model.ring, layer)?;
    for a in skips {
        if a.channels != acc.channels || a.height != acc.height || a.width != acc.width {
            return Err(RingError::ShapeMismatch(format!("skip into layer {layer} has a different shape")));
        }
        for i in 0..n {
            let to = acc.frac[i].max(a.formats[i].frac_bits);
            let (sa, sb) = (to - acc.frac[i], to - a.formats[i].frac_bits);
            for (e, v) in acc.values.iter_mut().enumerate().skip(i).step_by(n) {
                *v = check_i32(checked_shl(*v, sa, layer)? + checked_shl(i64::from(a.codes[e]), sb, layer)?, layer)?;
            }
            acc.frac[i] = to;
        }
    }
    acc.refresh_bits();
    let mut stats = LayerStats { acc_bits: acc.max_bits, directional: None, saturations: w.saturations };
    let mut codes = vec![0i32; acc.values.len()];
    let relu = |v: i64| if matches!(ly.nonlinearity, Nonlinearity::ComponentRelu) { v.max(0) } else { v };
    match (&ly.nonlinearity, pipeline) {
        (Nonlinearity::DirectionalRelu(f), _) => {
            let f = IntegerDirectional::new(f)?;
            let n_x: Vec<i32> = lp.output.iter().map(|q| q.frac_bits).collect();
            let mut ds = DirectionalStats::default();
            for (e, y) in acc.values.chunks(n).enumerate() {
                let (c, st) = match pipeline {
                    Pipeline::OnTheFly => directional_relu_fixed(y, &acc.frac, &n_x, &f, &Envelope::software())?,
                    Pipeline::PreQuantized => prequantized_directional(y, &acc.frac, lp, &f, layer)?,
                };
                ds.merge(&st);
                codes[e * n..(e + 1) * n].copy_from_slice(&c);
            }
            stats.saturations += ds.saturations;
            stats.directional = Some(ds);
        }
        (_, Pipeline::OnTheFly) => {
            for (e, v) in acc.values.iter().enumerate() {
                let (c, s) = requantize(relu(*v), acc.frac[e % n], lp.output[e % n], layer)?;
                stats.saturations += u64::from(s);
                codes[e] = c;
            }
        }
        (_, Pipeline::PreQuantized) => {
            for (e, v) in acc.values.iter().enumerate() {
                let pf = lp.pre_activation[e % n];
                let (q, s1) = requantize(*v, acc.frac[e % n], pf, layer)?;
                let (c, s2) = requantize(relu(i64::from(q)), pf.frac_bits, lp.output[e % n], layer)?;
                stats.saturations += u64::from(s1) + u64::from(s2);
                codes[e] = c;
            }
        }
    }
    let out = FixedFeatureTensor {
        height: acc.height,
        width: acc.width,
        channels: acc.channels,
        n,
        codes,
        formats: lp.output.clone(),
        saturations: stats.saturations,
    };
    Ok((out, acc, stats))
}

/// Baseline directional ReLU: 8-bit `y`, 8-bit `relu(V y)`, then `U`.
fn prequantized_directional(
    y: &[i64],
    n_y: &[i32],
    lp: &LayerPlan,
    f: &IntegerDirectional,
    layer: usize,
) -> Result<(Vec<i32>, DirectionalStats)> {
    let n = f.n;
    let mut st = DirectionalStats::default();
    let mut q = vec![0i64; n];
    for j in 0..n {
        let (c, s) = requantize(y[j], n_y[j], lp.pre_activation[j], layer)?;
        st.saturations += u64::from(s);
        q[j] = i64::from(c);
    }
    let pre: Vec<i32> = lp.pre_activation.iter().map(|f| f.frac_bits).collect();
    let top = pre.iter().copied().max().unwrap_or(0);
    let mut h = vec![0i64; n];
    for r in 0..n {
        let v: i64 = (0..n).map(|j| f.v[r * n + j] * (q[j] << (top - pre[j]))).sum::<i64>().max(0);
        let (c, s) = requantize(v, top, lp.hidden[r], layer)?;
        st.saturations += u64::from(s);
        h[r] = i64::from(c);
    }
    let hid: Vec<i32> = lp.hidden.iter().map(|f| f.frac_bits).collect();
    let top_h = hid.iter().copied().max().unwrap_or(0);
    let mut codes = vec![0i32; n];
    for i in 0..n {
        let v: i64 = (0..n).map(|r| f.u[i * n + r] * (h[r] << (top_h - hid[r]))).sum();
        let (c, s) = requantize(v, top_h, lp.output[i], layer)?;
        st.saturations += u64::from(s);
        codes[i] = c;
    }
    Ok((codes, st))
}

/// Fixed-point inference: quantize the input, then every layer in integers.
pub fn forward_fixed(model: &ModelGraph, plan: &QFormatPlan, x: &FeatureTensor) -> Result<FixedRun> {
    forward_fixed_with(model, plan, x, Pipeline::OnTheFly)
}

pub fn forward_fixed_with(model: &ModelGraph, plan: &QFormatPlan, x: &FeatureTensor, pipeline: Pipeline) -> Result<FixedRun> {
    check_plan(model, plan)?;
    let x0 = FixedFeatureTensor::quantize(x, &plan.layers[0].input)?;
    let input_saturations = x0.saturations;
    let mut codes = vec![x0];
    let mut accumulators = Vec::new();
    let mut layers = Vec::new();
    for l in 0..model.layers.len() {
        let skips: Vec<&FixedFeatureTensor> = model.skips.iter().filter(|s| s.to == l).map(|s| &codes[s.from]).collect();
        let (out, acc, st) = run_layer_fixed(model, plan, l, &codes[l], &skips, pipeline)?;
        codes.push(out);
        accumulators.push(acc);
        layers.push(st);
    }
    let forward = crate::model::Forward {
        activations: codes.iter().map(FixedFeatureTensor::dequantize).collect(),
        pre: accumulators.iter().map(Accumulators::dequantize).collect(),
    };
    Ok(FixedRun { forward, codes, accumulators, layers, input_saturations })
}

/// Check a run against the declared hardware envelope.
pub fn check_envelope(run: &FixedRun, n: usize) -> Result<()> {
    let env = Envelope::declared(n);
    for st in &run.layers {
        if st.acc_bits > env.input_bits {
            return Err(RingError::WidthViolation { what: "accumulator", bits: st.acc_bits, limit: env.input_bits });
        }
        if let Some(d) = st.directional {
            if d.align_bits > env.align_bits {
                return Err(RingError::WidthViolation { what: "alignment shift", bits: d.align_bits, limit: env.align_bits });
            }
            if d.internal_bits > env.internal_bits {
                return Err(RingError::WidthViolation { what: "directional ReLU internal", bits: d.internal_bits, limit: env.internal_bits });
            }
        }
    }
    Ok(())
}

/// Error statistics of one layer, run in isolation from quantized float
/// inputs so errors do not compound.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerError {
    pub layer: usize,
    pub max_abs: f64,
    pub mean_abs: f64,
    /// `‖fixed − float‖₂` of the on-the-fly pipeline.
    pub l2_on_the_fly: f64,
    /// Same for the pre-quantized baseline.
    pub l2_prequantized: f64,
    pub saturations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantReport {
    pub layers: Vec<LayerError>,
    /// End-to-end PSNR (peak 1) of the fixed output against float.
    pub psnr: f64,
    pub psnr_prequantized: f64,
}

impl QuantReport {
    /// PSNR lost by quantizing before the transforms.
    pub fn psnr_delta(&self) -> f64 {
        self.psnr - self.psnr_prequantized
    }
}

/// `10·log10(peak² / MSE)`; infinite for identical inputs.
pub fn psnr(a: &FeatureTensor, b: &FeatureTensor, peak: f64) -> f64 {
    let mse = crate::model::mse(a, b);
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(peak * peak / mse)
    }
}

fn l2(a: &FeatureTensor, b: &FeatureTensor) -> f64 {
    libm::sqrt(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Compare fixed-point inference under `plan` with float inference.
pub fn quantization_error_report(model: &ModelGraph, plan: &QFormatPlan, images: &[FeatureTensor]) -> Result<QuantReport> {
    if images.is_empty() {
        return Err(RingError::EmptyCalibration);
    }
    let nl = model.layers.len();
    let mut layers: Vec<LayerError> = (0..nl)
        .map(|layer| LayerError { layer, max_abs: 0.0, mean_abs: 0.0, l2_on_the_fly: 0.0, l2_prequantized: 0.0, saturations: 0 })
        .collect();
    let mut counts = vec![0usize; nl];
    let (mut se, mut se_pre, mut total) = (0.0, 0.0, 0usize);
    let mut sq = vec![(0.0, 0.0); nl];
    for x in images {
        let fwd = forward(model, x, Mode::FloatDirect)?;
        for l in 0..nl {
            let input = FixedFeatureTensor::quantize(&fwd.activations[l], &plan.layers[l].input)?;
            let skip_q: Vec<FixedFeatureTensor> = model
                .skips
                .iter()
                .filter(|s| s.to == l)
                .map(|s| {
                    let fmt = if s.from == 0 { &plan.layers[0].input } else { &plan.layers[s.from - 1].output };
                    FixedFeatureTensor::quantize(&fwd.activations[s.from], fmt)
                })
                .collect::<Result<_>>()?;
            let skips: Vec<&FixedFeatureTensor> = skip_q.iter().collect();
            let reference = &fwd.activations[l + 1];
            let (a, _, st) = run_layer_fixed(model, plan, l, &input, &skips, Pipeline::OnTheFly)?;
            let (b, _, _) = run_layer_fixed(model, plan, l, &input, &skips, Pipeline::PreQuantized)?;
            let (a, b) = (a.dequantize(), b.dequantize());
            let e = &mut layers[l];
            for (u, v) in a.data.iter().zip(&reference.data) {
                let d = libm::fabs(u - v);
                e.max_abs = e.max_abs.max(d);
                e.mean_abs += d;
            }
            counts[l] += a.data.len();
            e.saturations += st.saturations + input.saturations;
            let (p, q) = (l2(&a, reference), l2(&b, reference));
            sq[l].0 += p * p;
            sq[l].1 += q * q;
        }
        let fixed = forward_fixed_with(model, plan, x, Pipeline::OnTheFly)?;
        let pre = forward_fixed_with(model, plan, x, Pipeline::PreQuantized)?;
        let out = fwd.output();
        se += crate::model::mse(fixed.forward.output(), out) * out.data.len() as f64;
        se_pre += crate::model::mse(pre.forward.output(), out) * out.data.len() as f64;
        total += out.data.len();
    }
    for (l, e) in layers.iter_mut().enumerate() {
        e.mean_abs /= counts[l].max(1) as f64;
        e.l2_on_the_fly = libm::sqrt(sq[l].0);
        e.l2_prequantized = libm::sqrt(sq[l].1);
    }
    let to_psnr = |s: f64| if s == 0.0 { f64::INFINITY } else { 10.0 * libm::log10(total as f64 / s) };
    Ok(QuantReport { layers, psnr: to_psnr(se), psnr_prequantized: to_psnr(se_pre) })
}
