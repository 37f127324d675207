//! Fully connected pixel regressor with a depth head and a log-scale head.
//!
//! Input is the three slice intensities scaled by 1/1023. The network output
//! `(o₀, o₁)` maps to depth `r̂ = near + (far − near)·sigmoid(o₀)` and to the
//! Laplacian log-scale `s = o₁`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::sensor::MAX_COUNT;

pub const INPUT_WIDTH: usize = 3;
pub const OUTPUT_WIDTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `ln(1 + eˣ)`.
    Softplus,
    Tanh,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Self::Softplus => 0,
            Self::Tanh => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::Softplus),
            1 => Some(Self::Tanh),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Softplus => math::softplus(x),
            Self::Tanh => libm::tanh(x),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Softplus => math::sigmoid(x),
            Self::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
        }
    }
}

/// Bounds of the depth head, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthRange {
    pub near: f64,
    pub far: f64,
}

impl DepthRange {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(near.is_finite() && far.is_finite() && far > near) {
            return Err(Error::invalid("depth range needs near < far"));
        }
        Ok(Self { near, far })
    }

    fn span(&self) -> f64 {
        self.far - self.near
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelRegressor {
    widths: Vec<usize>,
    activation: Activation,
    depth_range: DepthRange,
    input_scale: f64,
    /// Per layer: weights (out × in, row-major) then biases.
    params: Vec<f64>,
}

/// One training pixel: normalized intensities and true range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSample {
    pub z: [f64; INPUT_WIDTH],
    pub r: f64,
}

impl PixelSample {
    pub fn from_counts(z: [u16; INPUT_WIDTH], r: f64) -> Self {
        Self { z: normalize_counts(z), r }
    }
}

pub fn normalize_counts(z: [u16; INPUT_WIDTH]) -> [f64; INPUT_WIDTH] {
    let k = 1.0 / f64::from(MAX_COUNT);
    [f64::from(z[0]) * k, f64::from(z[1]) * k, f64::from(z[2]) * k]
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 3 {
        return Err(Error::invalid("regressor needs at least one hidden layer"));
    }
    if widths.contains(&0) {
        return Err(Error::invalid("layer widths must be positive"));
    }
    if widths[0] != INPUT_WIDTH {
        return Err(Error::invalid("input layer width must be 3"));
    }
    if *widths.last().expect("non-empty") != OUTPUT_WIDTH {
        return Err(Error::invalid("output layer width must be 2"));
    }
    if checked_param_count(widths).is_none() {
        return Err(Error::invalid("layer widths overflow the parameter count"));
    }
    Ok(())
}

fn checked_param_count(widths: &[usize]) -> Option<usize> {
    widths.windows(2).try_fold(0usize, |acc, w| w[0].checked_mul(w[1])?.checked_add(w[1])?.checked_add(acc))
}

/// Callers must have passed `validate_widths`.
fn param_count(widths: &[usize]) -> usize {
    checked_param_count(widths).expect("validated widths")
}

/// He-style initialization: weights ~ N(0, 1/fan_in), zero biases.
pub fn init_regressor(widths: &[usize], depth_range: DepthRange, seed: u64) -> Result<PixelRegressor> {
    validate_widths(widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(param_count(widths));
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let normal = Normal::new(0.0, 1.0 / math::sqrt(fan_in as f64)).expect("positive std-dev");
        params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
        params.extend(core::iter::repeat_n(0.0, fan_out));
    }
    Ok(PixelRegressor {
        widths: widths.to_vec(),
        activation: Activation::Softplus,
        depth_range,
        input_scale: 1.0 / f64::from(MAX_COUNT),
        params,
    })
}

/// Gradients of the loss w.r.t. the two heads for one sample.
#[derive(Clone, Copy, Debug)]
struct HeadGradient {
    depth: f64,
    log_scale: f64,
}

/// Per-layer cache of one forward pass.
struct Trace {
    /// Activations, `acts[0]` is the input.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every non-input layer.
    pres: Vec<Vec<f64>>,
}

impl PixelRegressor {
    /// Rebuilds a model from its parts, e.g. when loading a checkpoint.
    pub fn from_parts(
        widths: Vec<usize>,
        activation: Activation,
        depth_range: DepthRange,
        input_scale: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        validate_widths(&widths)?;
        if params.len() != param_count(&widths) {
            return Err(Error::invalid("parameter count does not match layer widths"));
        }
        if params.iter().any(|p| !p.is_finite()) || !(input_scale > 0.0) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self { widths, activation, depth_range, input_scale, params })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn depth_range(&self) -> DepthRange {
        self.depth_range
    }

    pub fn input_scale(&self) -> f64 {
        self.input_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Depth (m) and log-scale for a normalized input.
    pub fn forward(&self, z: [f64; INPUT_WIDTH]) -> Result<(f64, f64)> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("regressor input must be finite"));
        }
        let trace = self.trace(&z);
        let out = trace.acts.last().expect("output layer");
        Ok(self.heads(out[0], out[1]))
    }

    /// Same as [`forward`](Self::forward) for raw 10-bit counts.
    pub fn forward_counts(&self, z: [u16; INPUT_WIDTH]) -> (f64, f64) {
        let x = [
            f64::from(z[0]) * self.input_scale,
            f64::from(z[1]) * self.input_scale,
            f64::from(z[2]) * self.input_scale,
        ];
        let trace = self.trace(&x);
        let out = trace.acts.last().expect("output layer");
        self.heads(out[0], out[1])
    }

    fn heads(&self, o_depth: f64, o_scale: f64) -> (f64, f64) {
        let r = self.depth_range.near + self.depth_range.span() * math::sigmoid(o_depth);
        (r, o_scale)
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let layers = self.widths.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pres = Vec::with_capacity(layers);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let prev = acts.last().expect("previous layer");
            let pre: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    row.iter().zip(prev).fold(b[o], |acc, (wi, xi)| acc + wi * xi)
                })
                .collect();
            let act = if l + 1 == layers {
                pre.clone()
            } else {
                pre.iter().map(|x| self.activation.apply(*x)).collect()
            };
            pres.push(pre);
            acts.push(act);
        }
        Trace { acts, pres }
    }

    /// Accumulates `scale · ∂loss/∂θ` of one sample into `grad`.
    fn backward(&self, trace: &Trace, head: HeadGradient, scale: f64, grad: &mut [f64]) {
        let layers = self.widths.len() - 1;
        let out_pre = &trace.pres[layers - 1];
        let sig = math::sigmoid(out_pre[0]);
        let mut delta =
            vec![head.depth * self.depth_range.span() * sig * (1.0 - sig) * scale, head.log_scale * scale];
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let base = offsets[l];
            let input = &trace.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                let row = &mut grad[base + o * n_in..base + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[base + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[base..base + n_in * n_out];
            let pre_in = &trace.pres[l - 1];
            delta = (0..n_in)
                .map(|i| {
                    let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                    back * self.activation.derivative(pre_in[i])
                })
                .collect();
        }
    }
}

/// How the log-scale head enters the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UncertaintyHead {
    /// Laplacian NLL `|r − r̂|·e^{−s} + s` (log 2 dropped).
    Aleatoric,
    /// `s` held at 0: plain L1, log-scale head receives no gradient.
    Frozen,
}

fn sample_loss(r: f64, r_hat: f64, s: f64, head: UncertaintyHead) -> (f64, HeadGradient) {
    let residual = r - r_hat;
    let abs = math::abs(residual);
    // Subgradient 0 at the kink.
    let sign = if residual > 0.0 {
        1.0
    } else if residual < 0.0 {
        -1.0
    } else {
        0.0
    };
    match head {
        UncertaintyHead::Aleatoric => {
            let inv = math::exp(-s);
            (abs * inv + s, HeadGradient { depth: -sign * inv, log_scale: 1.0 - abs * inv })
        }
        UncertaintyHead::Frozen => (abs, HeadGradient { depth: -sign, log_scale: 0.0 }),
    }
}

/// Mean per-sample loss of a batch.
pub fn batch_loss(model: &PixelRegressor, batch: &[PixelSample], head: UncertaintyHead) -> f64 {
    let losses: Vec<f64> = batch
        .iter()
        .map(|p| {
            let trace = model.trace(&p.z);
            let out = trace.acts.last().expect("output");
            let (r_hat, s) = model.heads(out[0], out[1]);
            sample_loss(p.r, r_hat, s, head).0
        })
        .collect();
    math::pairwise_sum(&losses) / batch.len() as f64
}

/// Mean batch loss and its exact gradient w.r.t. every parameter.
pub fn loss_and_gradient(
    model: &PixelRegressor,
    batch: &[PixelSample],
    head: UncertaintyHead,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.params.len()];
    let mut losses = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len() as f64;
    for p in batch {
        let trace = model.trace(&p.z);
        let out = trace.acts.last().expect("output");
        let (r_hat, s) = model.heads(out[0], out[1]);
        let (loss, head_grad) = sample_loss(p.r, r_hat, s, head);
        losses.push(loss);
        model.backward(&trace, head_grad, scale, &mut grad);
    }
    (math::pairwise_sum(&losses) * scale, grad)
}
