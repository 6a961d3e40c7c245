//! Layer graphs of ring convolutions: construction, forward passes, gradients
//! and a small SGD trainer.
//!
//! Activation `0` is the model input and activation `l + 1` the output of
//! layer `l`. A skip `{from: a, to: l}` adds activation `a` to the
//! pre-activation of layer `l`, before its non-linearity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Result, RingError};
use crate::fixed::{self, QFormatPlan};
use crate::ring::{basis_matrices, transpose_element, RingSpec};
use crate::rng;
use crate::tensor::{
    collapse_features, expand_features, expand_weights, frconv, product_terms, rconv, real_conv2d_backward, relu_cw,
    relu_dir, DirectionalRelu, FeatureTensor, RealTensor, WeightTensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
}

impl LayerKind {
    pub fn kernel(self) -> usize {
        match self {
            Self::Conv3x3 => 3,
            Self::Conv1x1 => 1,
        }
    }

    pub fn from_kernel(k: usize) -> Result<Self> {
        match k {
            3 => Ok(Self::Conv3x3),
            1 => Ok(Self::Conv1x1),
            _ => Err(RingError::Unsupported(format!("{k}x{k} convolution"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    None,
    ComponentRelu,
    DirectionalRelu(DirectionalRelu),
}

impl Nonlinearity {
    pub fn apply(&self, x: &FeatureTensor) -> Result<FeatureTensor> {
        match self {
            Self::None => Ok(x.clone()),
            Self::ComponentRelu => Ok(relu_cw(x)),
            Self::DirectionalRelu(f) => relu_dir(x, f),
        }
    }

    /// Gradient w.r.t. the pre-activation `y` given the upstream gradient.
    fn backward(&self, y: &FeatureTensor, upstream: &FeatureTensor) -> FeatureTensor {
        match self {
            Self::None => upstream.clone(),
            Self::ComponentRelu => {
                let data = y.data.iter().zip(&upstream.data).map(|(v, d)| if *v > 0.0 { *d } else { 0.0 }).collect();
                FeatureTensor { data, ..upstream.clone() }
            }
            Self::DirectionalRelu(f) => {
                // f(y) = U relu(V y)  ⇒  dy = Vᵀ diag(V y > 0) Uᵀ d
                let n = y.n;
                let (u, v) = (f.u(), f.v());
                let mut data = vec![0.0; y.data.len()];
                for (e, (ye, de)) in y.data.chunks(n).zip(upstream.data.chunks(n)).enumerate() {
                    let h = f.project(ye);
                    let ut: Vec<f64> = (0..n).map(|r| if h[r] > 0.0 { (0..n).map(|i| u[i * n + r] * de[i]).sum() } else { 0.0 }).collect();
                    for j in 0..n {
                        data[e * n + j] = (0..n).map(|r| v[r * n + j] * ut[r]).sum();
                    }
                }
                FeatureTensor { data, ..upstream.clone() }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub weights: WeightTensor,
    /// `c_out · n` values.
    pub bias: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl Layer {
    pub fn c_in(&self) -> usize {
        self.weights.c_in
    }

    pub fn c_out(&self) -> usize {
        self.weights.c_out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Skip {
    /// Activation index (0 = model input).
    pub from: usize,
    /// Layer whose pre-activation receives the addition.
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    pub ring: RingSpec,
    pub layers: Vec<Layer>,
    pub skips: Vec<Skip>,
    pub plan: Option<QFormatPlan>,
}

impl ModelGraph {
    pub fn new(ring: RingSpec, layers: Vec<Layer>, skips: Vec<Skip>) -> Result<Self> {
        let model = Self { ring, layers, skips, plan: None };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ring.n();
        if self.layers.is_empty() {
            return Err(RingError::InvalidArgument("model has no layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &layer.weights;
            if w.n != n || w.k != layer.kind.kernel() || layer.bias.len() != w.c_out * n {
                return Err(RingError::ShapeMismatch(format!("layer {l} parameters do not match its kind and ring")));
            }
            if l > 0 && self.layers[l - 1].c_out() != w.c_in {
                return Err(RingError::ShapeMismatch(format!(
                    "layer {l} expects {} channels, layer {} produces {}",
                    w.c_in,
                    l - 1,
                    self.layers[l - 1].c_out()
                )));
            }
            if let Nonlinearity::DirectionalRelu(f) = &layer.nonlinearity {
                if f.n() != n {
                    return Err(RingError::DimensionMismatch { expected: n, got: f.n() });
                }
            }
        }
        for s in &self.skips {
            if s.to >= self.layers.len() || s.from > s.to {
                return Err(RingError::InvalidArgument(format!("skip {} -> {} is not a forward edge", s.from, s.to)));
            }
            if self.activation_channels(s.from) != self.layers[s.to].c_out() {
                return Err(RingError::ShapeMismatch(format!(
                    "skip {} -> {}: {} channels added to {}",
                    s.from,
                    s.to,
                    self.activation_channels(s.from),
                    self.layers[s.to].c_out()
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.ring.n()
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].c_in()
    }

    pub fn output_channels(&self) -> usize {
        self.layers[self.layers.len() - 1].c_out()
    }

    pub fn activation_channels(&self, a: usize) -> usize {
        if a == 0 {
            self.input_channels()
        } else {
            self.layers[a - 1].c_out()
        }
    }

    /// Real weights stored by the ring model.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.dof()).sum()
    }

    /// Convolution weights of the real-expanded model.
    pub fn real_weight_count(&self) -> usize {
        self.weight_count() * self.n()
    }

    /// Model with every weight replaced by its isomorphic block, over the
    /// one-dimensional real ring.
    pub fn real_expanded(&self) -> Result<Self> {
        let n = self.n();
        let real = crate::catalog::r_i(1);
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = expand_weights(&l.weights, &self.ring);
                Ok(Layer {
                    kind: l.kind,
                    weights: WeightTensor::from_data(w.k, w.c_in, w.c_out, 1, w.data)?,
                    bias: l.bias.clone(),
                    nonlinearity: match &l.nonlinearity {
                        Nonlinearity::DirectionalRelu(_) => {
                            return Err(RingError::Unsupported(format!(
                                "directional ReLU over {n}-tuples has no channel-wise real counterpart"
                            )))
                        }
                        other => other.clone(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(real, layers, self.skips.clone())
    }
}

/// Which arithmetic a forward pass uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    FloatDirect,
    FloatFast,
    Fixed,
}

/// Forward result with every intermediate.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    /// `L + 1` activations, input first.
    pub activations: Vec<FeatureTensor>,
    /// Per layer: convolution output plus skips, before the non-linearity.
    pub pre: Vec<FeatureTensor>,
}

impl Forward {
    pub fn output(&self) -> &FeatureTensor {
        self.activations.last().expect("non-empty")
    }
}

fn check_input(model: &ModelGraph, x: &FeatureTensor) -> Result<()> {
    if x.n != model.n() || x.channels != model.input_channels() {
        return Err(RingError::ShapeMismatch(format!(
            "input has {} channels of {}-tuples, model expects {} of {}-tuples",
            x.channels,
            x.n,
            model.input_channels(),
            model.n()
        )));
    }
    Ok(())
}

pub fn forward(model: &ModelGraph, x: &FeatureTensor, mode: Mode) -> Result<Forward> {
    check_input(model, x)?;
    if mode == Mode::Fixed {
        let plan = model.plan.as_ref().ok_or(RingError::MissingPlan)?;
        return fixed::forward_fixed(model, plan, x).map(|r| r.forward);
    }
    let mut activations = vec![x.clone()];
    let mut pre = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let a = &activations[l];
        let mut y = match mode {
            Mode::FloatDirect => rconv(a, &layer.weights, &layer.bias, &model.ring)?,
            _ => frconv(a, &layer.weights, &layer.bias, &model.ring)?,
        };
        for s in model.skips.iter().filter(|s| s.to == l) {
            y = y.add(&activations[s.from])?;
        }
        activations.push(layer.nonlinearity.apply(&y)?);
        pre.push(y);
    }
    Ok(Forward { activations, pre })
}

/// Gradients of a scalar loss w.r.t. parameters and input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    /// Same layout as each layer's weight data.
    pub d_weights: Vec<Vec<f64>>,
    pub d_bias: Vec<Vec<f64>>,
    pub d_input: FeatureTensor,
}

/// Tolerance between the matrix-form and ring-form gradients, relative to
/// the gradient magnitude (absolute below 1).
pub const GRADIENT_TOL: f64 = 1e-8;

/// Backpropagate `upstream = ∂L/∂output` through the model.
///
/// Each convolution is differentiated twice: through the real-expanded
/// convolution (weight gradient projected back through `M`) and in ring form
/// (`∂L/∂x = gᵀ · ∂L/∂z`, `∂L/∂g_k = Σ M[i][k][j] ∂L/∂z_i x_j`). The two must
/// agree; the matrix form is returned.
pub fn backward(model: &ModelGraph, x: &FeatureTensor, upstream: &FeatureTensor) -> Result<GradientSet> {
    let fwd = forward(model, x, Mode::FloatDirect)?;
    backward_from(model, &fwd, upstream)
}

fn backward_from(model: &ModelGraph, fwd: &Forward, upstream: &FeatureTensor) -> Result<GradientSet> {
    if !upstream.same_shape(fwd.output()) {
        return Err(RingError::ShapeMismatch("upstream gradient does not match the model output".into()));
    }
    let n = model.n();
    let layers = &model.layers;
    let mut d_act: Vec<FeatureTensor> =
        fwd.activations.iter().map(|a| FeatureTensor::zeros(a.height, a.width, a.channels, a.n)).collect();
    d_act[layers.len()] = upstream.clone();
    let mut d_weights = vec![Vec::new(); layers.len()];
    let mut d_bias = vec![Vec::new(); layers.len()];
    let basis = basis_matrices(&model.ring);
    let terms = product_terms(model.ring.m_tensor());

    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let d_pre = layer.nonlinearity.backward(&fwd.pre[l], &d_act[l + 1]);
        for s in model.skips.iter().filter(|s| s.to == l) {
            d_act[s.from] = d_act[s.from].add(&d_pre)?;
        }
        let x = &fwd.activations[l];

        // (a) matrix form
        let w_real = expand_weights(&layer.weights, &model.ring);
        let dy_real = expand_features(&d_pre);
        let (dx_real, dw_real, db) = real_conv2d_backward(&expand_features(x), &w_real, &dy_real);
        let dx_a = collapse_features(&dx_real, n)?;
        let m = model.ring.m_tensor();
        let w = &layer.weights;
        let mut dg_a = vec![0.0; w.dof()];
        for s in 0..w.k {
            for t in 0..w.k {
                for ci in 0..w.c_in {
                    for co in 0..w.c_out {
                        let base = (((s * w.k + t) * w.c_in + ci) * w.c_out + co) * n;
                        for (i, k, j, v) in m.nonzeros() {
                            let wo = ((s * w.k + t) * w_real.c_in + ci * n + j) * w_real.c_out + co * n + i;
                            dg_a[base + k] += v * dw_real.data[wo];
                        }
                    }
                }
            }
        }

        // (b) ring form
        let (dx_b, dg_b) = ring_conv_backward(x, w, &d_pre, &basis, &terms, m.nonzeros().as_slice())?;
        let scale = |v: &[f64]| v.iter().fold(1.0f64, |a, b| a.max(libm::fabs(*b)));
        let dev_x = dx_a.max_abs_diff(&dx_b) / scale(&dx_a.data);
        let dev_g = dg_a.iter().zip(&dg_b).fold(0.0f64, |a, (p, q)| a.max(libm::fabs(p - q))) / scale(&dg_a);
        let deviation = dev_x.max(dev_g);
        if !(deviation <= GRADIENT_TOL) {
            return Err(RingError::GradientMismatch { deviation });
        }

        d_act[l] = d_act[l].add(&dx_a)?;
        d_weights[l] = dg_a;
        d_bias[l] = db;
    }
    Ok(GradientSet { d_weights, d_bias, d_input: d_act.swap_remove(0) })
}

/// Ring-form convolution backward.
fn ring_conv_backward(
    x: &FeatureTensor,
    w: &WeightTensor,
    dz: &FeatureTensor,
    basis: &crate::ring::SignedPermutationBasis,
    terms: &[Vec<(usize, usize, f64)>],
    nonzeros: &[(usize, usize, usize, f64)],
) -> Result<(FeatureTensor, Vec<f64>)> {
    let n = x.n;
    let (k, r) = (w.k, w.k / 2);
    // gᵀ per weight element; falls back to explicit Gᵀ when the basis is not
    // closed under transposition.
    let transposed: Option<Vec<Vec<f64>>> = w.data().chunks(n).map(|g| transpose_element(basis, g)).collect();
    let mut dx = FeatureTensor::zeros(x.height, x.width, x.channels, n);
    let mut dg = vec![0.0; w.dof()];
    let mut prod = vec![0.0; n];
    for p in 0..x.height {
        for q in 0..x.width {
            for s in 0..k {
                for t in 0..k {
                    let (Some(a), Some(b)) = ((p + r).checked_sub(s), (q + r).checked_sub(t)) else { continue };
                    if a >= x.height || b >= x.width {
                        continue;
                    }
                    for ci in 0..w.c_in {
                        for co in 0..w.c_out {
                            let e = ((s * k + t) * w.c_in + ci) * w.c_out + co;
                            let d = dz.element(p, q, co);
                            match &transposed {
                                Some(gt) => {
                                    let g = &gt[e];
                                    for (i, ti) in terms.iter().enumerate() {
                                        prod[i] = ti.iter().map(|&(kk, j, sg)| sg * g[kk] * d[j]).sum();
                                    }
                                }
                                None => {
                                    let g = w.element(s, t, ci, co);
                                    prod.iter_mut().for_each(|v| *v = 0.0);
                                    for &(i, kk, j, sg) in nonzeros {
                                        prod[j] += sg * g[kk] * d[i];
                                    }
                                }
                            }
                            let xe = x.element(a, b, ci);
                            let dxe = dx.element_mut(a, b, ci);
                            for j in 0..n {
                                dxe[j] += prod[j];
                            }
                            for &(i, kk, j, sg) in nonzeros {
                                dg[e * n + kk] += sg * d[i] * xe[j];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((dx, dg))
}

/// Hidden-layer non-linearity chosen by [`convert_real_config`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HiddenActivation {
    None,
    ComponentRelu,
    /// `f_H` with the order-`n` Hadamard matrix.
    Hadamard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conversion {
    pub model: ModelGraph,
    pub ring_weights: usize,
    pub real_weights: usize,
}

impl Conversion {
    /// Real-model weights per ring-model weight (`n`).
    pub fn ratio(&self) -> f64 {
        self.real_weights as f64 / self.ring_weights as f64
    }
}

/// Turn a real CNN description (`L + 1` channel counts, `L` kernel sizes)
/// into a ring model with `C / n` tuple channels per layer. Hidden layers use
/// `activation`; the last layer is linear. Weights are random, seeded.
pub fn convert_real_config(
    real_channels: &[usize],
    kernels: &[usize],
    ring: &RingSpec,
    activation: HiddenActivation,
    seed: u64,
) -> Result<Conversion> {
    let n = ring.n();
    if real_channels.len() != kernels.len() + 1 || kernels.is_empty() {
        return Err(RingError::InvalidArgument(format!(
            "{} channel counts for {} layers",
            real_channels.len(),
            kernels.len()
        )));
    }
    if let Some(&c) = real_channels.iter().find(|&&c| c % n != 0 || c == 0) {
        return Err(RingError::NonDivisibleChannels { channels: c, n });
    }
    let mut g = rng::seeded(seed);
    let mut layers = Vec::with_capacity(kernels.len());
    let mut real_weights = 0;
    for (l, &k) in kernels.iter().enumerate() {
        let kind = LayerKind::from_kernel(k)?;
        let (ci, co) = (real_channels[l] / n, real_channels[l + 1] / n);
        real_weights += k * k * real_channels[l] * real_channels[l + 1];
        let nonlinearity = if l + 1 == kernels.len() {
            Nonlinearity::None
        } else {
            match activation {
                HiddenActivation::None => Nonlinearity::None,
                HiddenActivation::ComponentRelu => Nonlinearity::ComponentRelu,
                HiddenActivation::Hadamard => {
                    if !n.is_power_of_two() {
                        return Err(RingError::Unsupported(format!("Hadamard ReLU for n = {n}")));
                    }
                    Nonlinearity::DirectionalRelu(DirectionalRelu::hadamard(n))
                }
            }
        };
        layers.push(Layer { kind, weights: WeightTensor::random(k, ci, co, n, &mut g), bias: vec![0.0; co * n], nonlinearity });
    }
    let model = ModelGraph::new(ring.clone(), layers, Vec::new())?;
    let ring_weights = model.weight_count();
    Ok(Conversion { model, ring_weights, real_weights })
}

/// Mean squared error over all real values.
pub fn mse(a: &FeatureTensor, b: &FeatureTensor) -> f64 {
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    s / a.data.len().max(1) as f64
}

/// Mean of [`mse`] over a dataset of `(input, target)` pairs.
pub fn dataset_loss(model: &ModelGraph, data: &[(FeatureTensor, FeatureTensor)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in data {
        let y = forward(model, x, Mode::FloatDirect)?;
        total += mse(y.output(), t);
    }
    Ok(total / data.len().max(1) as f64)
}

/// Plain SGD on the mean squared error: each step draws one pair (seeded) and
/// updates every parameter. Returns the dataset loss before each step and after
/// the last one (`steps + 1` values).
pub fn train_toy(
    model: &mut ModelGraph,
    data: &[(FeatureTensor, FeatureTensor)],
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(RingError::InvalidArgument("empty training set".into()));
    }
    let mut g = rng::seeded(seed);
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let loss = dataset_loss(model, data)?;
        if !loss.is_finite() {
            return Err(RingError::Divergence { step });
        }
        trace.push(loss);
        if step == steps {
            break;
        }
        let pick = if data.len() == 1 { 0 } else { (rng::uniform(&mut g, 0.0, 1.0) * data.len() as f64) as usize };
        let (x, t) = &data[pick.min(data.len() - 1)];
        let fwd = forward(model, x, Mode::FloatDirect)?;
        let y = fwd.output();
        let scale = 2.0 / y.data.len() as f64;
        let up = FeatureTensor { data: y.data.iter().zip(&t.data).map(|(a, b)| scale * (a - b)).collect(), ..y.clone() };
        let grads = backward_from(model, &fwd, &up)?;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            for (w, d) in layer.weights.data_mut().iter_mut().zip(&grads.d_weights[l]) {
                *w -= learning_rate * d;
            }
            for (b, d) in layer.bias.iter_mut().zip(&grads.d_bias[l]) {
                *b -= learning_rate * d;
            }
        }
    }
    Ok(trace)
}

/// Analytic gradients against central finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    /// Largest `|fd − analytic| / max(|fd|, |analytic|, FD_FLOOR)`.
    pub max_relative_error: f64,
    pub samples: usize,
}

/// Denominator floor of the relative error; keeps exact zeros (dead ReLUs)
/// from amplifying `O(h²)` noise.
pub const FD_FLOOR: f64 = 1e-6;

/// Compare [`backward`] with central differences (step `h`) of the scalar
/// loss `⟨upstream, forward(x)⟩` on `samples` randomly chosen weights, plus
/// the same number of bias and input entries.
pub fn finite_difference_check(model: &ModelGraph, x: &FeatureTensor, samples: usize, h: f64, seed: u64) -> Result<GradientCheck> {
    let mut g = rng::seeded(seed);
    let out = forward(model, x, Mode::FloatDirect)?;
    let up = FeatureTensor::random(out.output().height, out.output().width, out.output().channels, model.n(), &mut g);
    let grads = backward(model, x, &up)?;
    let loss = |m: &ModelGraph, x: &FeatureTensor| -> Result<f64> {
        let y = forward(m, x, Mode::FloatDirect)?;
        Ok(y.output().data.iter().zip(&up.data).map(|(a, b)| a * b).sum())
    };
    let pick = |g: &mut rng::SeededRng, len: usize| ((rng::uniform(g, 0.0, 1.0) * len as f64) as usize).min(len - 1);
    let mut worst = 0.0f64;
    let mut record = |fd: f64, an: f64| {
        let rel = libm::fabs(fd - an) / libm::fabs(fd).max(libm::fabs(an)).max(FD_FLOOR);
        worst = worst.max(rel);
    };
    for _ in 0..samples {
        let l = pick(&mut g, model.layers.len());
        let e = pick(&mut g, model.layers[l].weights.dof());
        let mut m = model.clone();
        m.layers[l].weights.data_mut()[e] += h;
        let plus = loss(&m, x)?;
        m.layers[l].weights.data_mut()[e] -= 2.0 * h;
        let minus = loss(&m, x)?;
        record((plus - minus) / (2.0 * h), grads.d_weights[l][e]);

        let e = pick(&mut g, model.layers[l].bias.len());
        let mut m = model.clone();
        m.layers[l].bias[e] += h;
        let plus = loss(&m, x)?;
        m.layers[l].bias[e] -= 2.0 * h;
        let minus = loss(&m, x)?;
        record((plus - minus) / (2.0 * h), grads.d_bias[l][e]);

        let e = pick(&mut g, x.data.len());
        let mut xp = x.clone();
        xp.data[e] += h;
        let plus = loss(model, &xp)?;
        xp.data[e] -= 2.0 * h;
        let minus = loss(model, &xp)?;
        record((plus - minus) / (2.0 * h), grads.d_input.data[e]);
    }
    Ok(GradientCheck { max_relative_error: worst, samples: 3 * samples })
}

/// Three-layer model with mixed kernels, a directional ReLU after a residual
/// add and a component-wise ReLU; used by the gradient checks.
pub fn gradient_test_model(ring: &RingSpec, seed: u64) -> Result<ModelGraph> {
    let n = ring.n();
    let mut g = rng::seeded(seed);
    let mut mk = |k: usize, ci: usize, co: usize, nl: Nonlinearity| -> Result<Layer> {
        Ok(Layer {
            kind: LayerKind::from_kernel(k)?,
            weights: WeightTensor::random(k, ci, co, n, &mut g),
            bias: rng::normal_vec(&mut g, co * n).into_iter().map(|v| 0.1 * v).collect(),
            nonlinearity: nl,
        })
    };
    let fdir = if n.is_power_of_two() { Nonlinearity::DirectionalRelu(DirectionalRelu::hadamard(n)) } else { Nonlinearity::ComponentRelu };
    let layers = vec![mk(3, 1, 2, fdir.clone())?, mk(1, 2, 2, fdir)?, mk(3, 2, 1, Nonlinearity::ComponentRelu)?];
    ModelGraph::new(ring.clone(), layers, vec![Skip { from: 1, to: 1 }])
}

/// Seeded identity-regression task on a three-layer `R_I4` model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyTask {
    pub size: usize,
    pub images: usize,
    /// Tuple channels of the two hidden layers.
    pub hidden: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ToyTask {
    fn default() -> Self {
        Self { size: 6, images: 1, hidden: 2, steps: 2000, learning_rate: 0.1, seed: 7 }
    }
}

impl ToyTask {
    /// Random `size×size` single-channel 4-tuple images, each its own target.
    pub fn dataset(&self) -> Vec<(FeatureTensor, FeatureTensor)> {
        self.dataset_for(4)
    }

    pub fn dataset_for(&self, n: usize) -> Vec<(FeatureTensor, FeatureTensor)> {
        let mut g = rng::seeded(self.seed);
        (0..self.images)
            .map(|_| {
                let x = FeatureTensor::random(self.size, self.size, 1, n, &mut g);
                (x.clone(), x)
            })
            .collect()
    }

    pub fn model(&self, activation: HiddenActivation) -> Result<ModelGraph> {
        self.model_on(&crate::catalog::r_i(4), activation)
    }

    pub fn model_on(&self, ring: &RingSpec, activation: HiddenActivation) -> Result<ModelGraph> {
        let n = ring.n();
        let h = n * self.hidden;
        let seed = rng::derive(self.seed, 1, 0, 0);
        convert_real_config(&[n, h, h, n], &[3, 3, 3], ring, activation, seed).map(|c| c.model)
    }

    /// Train from the seeded initialization and return the loss trace.
    pub fn run(&self, activation: HiddenActivation) -> Result<Vec<f64>> {
        self.run_on(&crate::catalog::r_i(4), activation).map(|(_, t)| t)
    }

    /// Like [`ToyTask::run`] on any ring; also returns the trained model.
    pub fn run_on(&self, ring: &RingSpec, activation: HiddenActivation) -> Result<(ModelGraph, Vec<f64>)> {
        let mut model = self.model_on(ring, activation)?;
        let trace = train_toy(&mut model, &self.dataset_for(ring.n()), self.steps, self.learning_rate, rng::derive(self.seed, 2, 0, 0))?;
        Ok((model, trace))
    }
}

/// Real-expanded forward of a ring model whose non-linearities act
/// channel-wise; used as an oracle for graphs with skips.
pub fn forward_real_expanded(model: &ModelGraph, x: &FeatureTensor) -> Result<FeatureTensor> {
    let real = model.real_expanded()?;
    let xr = expand_features(x);
    let x1 = FeatureTensor::from_data(xr.height, xr.width, xr.channels, 1, xr.data)?;
    let y = forward(&real, &x1, Mode::FloatDirect)?;
    let out = y.output();
    collapse_features(&RealTensor { height: out.height, width: out.width, channels: out.channels, data: out.data.clone() }, model.n())
}
