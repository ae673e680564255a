//! Feed-forward autoencoder with a fixed-topology reverse pass.
//!
//! The encoder is a stack of hidden layers (dense, or strided convolutions
//! followed by dense layers) ending in a dense latent layer. The decoder
//! mirrors it: a dense layer back to the last hidden shape, then the mirror
//! of each hidden layer in reverse, the last one producing the input shape
//! through a sigmoid so outputs cover the `[0, 1]` data range.

mod adam;
mod conv;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use adam::{AdamState, Moments, EPSILON as ADAM_EPSILON};
pub use conv::ConvGeom;

use crate::data::ImageShape;
use crate::matrix::{gemm_into, Matrix, Op, View};
use crate::rng::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        width: usize,
    },
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Required when `encoder_layers` contains convolutions.
    pub image_shape: Option<ImageShape>,
    pub encoder_layers: Vec<LayerSpec>,
    pub latent_dim: usize,
    pub leaky_slope: f64,
    pub latent_tanh: bool,
    pub dropout_rate: f64,
}

impl NetworkSpec {
    /// Dense `input -> 500 -> 128 -> 32` autoencoder.
    pub fn mlp(input_dim: usize) -> Self {
        NetworkSpec::dense(input_dim, &[500, 128], 32)
    }

    pub fn dense(input_dim: usize, hidden: &[usize], latent_dim: usize) -> Self {
        NetworkSpec {
            input_dim,
            image_shape: None,
            encoder_layers: hidden.iter().map(|&width| LayerSpec::Dense { width }).collect(),
            latent_dim,
            leaky_slope: 0.01,
            latent_tanh: true,
            dropout_rate: 0.10,
        }
    }

    /// Three stride-2 convolutions (32, 64, 128 filters, kernel 3, pad 1)
    /// ahead of a 32-wide latent layer.
    pub fn conv(image_shape: ImageShape) -> Self {
        let conv = |filters| LayerSpec::Conv {
            filters,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        NetworkSpec {
            input_dim: image_shape.len(),
            image_shape: Some(image_shape),
            encoder_layers: vec![conv(32), conv(64), conv(128)],
            latent_dim: 32,
            leaky_slope: 0.01,
            latent_tanh: true,
            dropout_rate: 0.10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.build_layers().map(|_| ())
    }

    fn build_layers(&self) -> Result<(Vec<LayerShape>, Vec<LayerShape>)> {
        if self.latent_dim == 0 || self.input_dim == 0 {
            return Err(Error::Config("input and latent dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if let Some(s) = self.image_shape {
            if s.len() != self.input_dim {
                return Err(Error::dim("image shape", self.input_dim, s.len()));
            }
        }
        let hidden = Activation::LeakyRelu(self.leaky_slope);
        let mut encoder = Vec::new();
        // Current feature shape: flat width, or CHW while still convolutional.
        let mut width = self.input_dim;
        let mut chw = self
            .image_shape
            .map(|s| (s.channels, s.height, s.width));
        let mut seen_dense = false;
        for (i, layer) in self.encoder_layers.iter().enumerate() {
            let kind = match *layer {
                LayerSpec::Dense { width: out } => {
                    if out == 0 {
                        return Err(Error::Config(format!("layer {i} has zero width")));
                    }
                    seen_dense = true;
                    chw = None;
                    LayerKind::Dense { inputs: width, outputs: out }
                }
                LayerSpec::Conv { filters, kernel, stride, padding } => {
                    let shape = chw.filter(|_| !seen_dense).ok_or_else(|| {
                        Error::Config(format!(
                            "conv layer {i} needs image-shaped input (image_shape set, no dense layer before it)"
                        ))
                    })?;
                    let geom = ConvGeom::new(shape, filters, kernel, stride, padding)
                        .filter(|_| filters > 0)
                        .ok_or_else(|| Error::Config(format!("conv layer {i} has invalid geometry")))?;
                    chw = Some((geom.out_c, geom.out_h, geom.out_w));
                    LayerKind::Conv(geom)
                }
            };
            width = kind.outputs();
            encoder.push(LayerShape { kind, activation: hidden, dropout: true });
        }
        let latent_act = if self.latent_tanh { Activation::Tanh } else { Activation::Identity };
        encoder.push(LayerShape {
            kind: LayerKind::Dense { inputs: width, outputs: self.latent_dim },
            activation: latent_act,
            dropout: false,
        });

        let mut decoder = vec![LayerShape {
            kind: LayerKind::Dense { inputs: self.latent_dim, outputs: width },
            activation: hidden,
            dropout: true,
        }];
        for shape in encoder[..encoder.len() - 1].iter().rev() {
            let kind = match shape.kind {
                LayerKind::Dense { inputs, outputs } => LayerKind::Dense { inputs: outputs, outputs: inputs },
                LayerKind::Conv(g) => LayerKind::ConvTranspose(g),
                LayerKind::ConvTranspose(_) => unreachable!("encoder has no transposed convs"),
            };
            decoder.push(LayerShape { kind, activation: hidden, dropout: true });
        }
        let last = decoder.last_mut().expect("decoder is never empty");
        last.activation = Activation::Sigmoid;
        last.dropout = false;
        Ok((encoder, decoder))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Tanh => libm::tanh(x),
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
            Activation::Identity => x,
        }
    }

    /// Derivative in terms of the pre-activation.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + libm::exp(-x));
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    /// Weight is `outputs x inputs`.
    Dense { inputs: usize, outputs: usize },
    /// Weight is `out_c x (in_c * k * k)`, bias per output channel.
    Conv(ConvGeom),
    /// Runs the mirrored convolution backwards: maps its output shape to its
    /// input shape. Weight is `out_c x (in_c * k * k)`, bias per `in_c`.
    ConvTranspose(ConvGeom),
}

impl LayerKind {
    pub fn inputs(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv(g) => g.in_len(),
            LayerKind::ConvTranspose(g) => g.out_len(),
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Conv(g) => g.out_len(),
            LayerKind::ConvTranspose(g) => g.in_len(),
        }
    }

    fn weight_shape(&self) -> (usize, usize) {
        match self {
            LayerKind::Dense { inputs, outputs } => (*outputs, *inputs),
            LayerKind::Conv(g) | LayerKind::ConvTranspose(g) => (g.out_c, g.patch_len()),
        }
    }

    fn bias_len(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Conv(g) => g.out_c,
            LayerKind::ConvTranspose(g) => g.in_c,
        }
    }

    fn fan_in(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv(g) => g.patch_len(),
            LayerKind::ConvTranspose(g) => g.out_c * g.kernel * g.kernel,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    kind: LayerKind,
    activation: Activation,
    dropout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub activation: Activation,
    pub dropout: bool,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Cached values of one layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Matrix,
    pub pre_activation: Matrix,
    /// Inverted-dropout multipliers (0 or `1 / (1 - rate)`), if dropout ran.
    pub mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradients {
    pub encoder: Vec<LayerGradient>,
    pub decoder: Vec<LayerGradient>,
}

impl ParameterGradients {
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|&v| v == 0.0))
    }
}

/// Encoder and decoder weights plus the optimizer state that travels with them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    spec: NetworkSpec,
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    pub adam: AdamState,
}

impl NetworkParameters {
    /// Fan-in scaled uniform weights (He bound for leaky layers, LeCun bound
    /// otherwise) and zero biases, drawn from the `Init` stream of `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let (enc, dec) = spec.build_layers()?;
        let mut rng = rng::stream(seed, Stream::Init);
        let mut make = |shape: &LayerShape| {
            let (rows, cols) = shape.kind.weight_shape();
            let gain = match shape.activation {
                Activation::LeakyRelu(_) => 6.0,
                _ => 3.0,
            };
            let bound = libm::sqrt(gain / shape.kind.fan_in() as f64);
            let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
            Layer {
                kind: shape.kind,
                activation: shape.activation,
                dropout: shape.dropout,
                weight: Matrix::from_vec(rows, cols, data).expect("shape matches"),
                bias: vec![0.0; shape.kind.bias_len()],
            }
        };
        let encoder: Vec<Layer> = enc.iter().map(&mut make).collect();
        let decoder: Vec<Layer> = dec.iter().map(&mut make).collect();
        let adam = AdamState::new(
            encoder
                .iter()
                .chain(&decoder)
                .flat_map(|l| [l.weight.as_slice().len(), l.bias.len()]),
        );
        Ok(NetworkParameters { spec: spec.clone(), encoder, decoder, adam })
    }

    /// Reassembles parameters from flat tensors in [`tensors`](Self::tensors) order.
    pub fn from_tensors(spec: &NetworkSpec, tensors: Vec<Vec<f64>>, adam: AdamState) -> Result<Self> {
        let mut params = NetworkParameters::init(spec, 0)?;
        let expected = params.tensor_count();
        if tensors.len() != expected {
            return Err(Error::dim("parameter tensors", expected, tensors.len()));
        }
        if adam.moments.len() != expected {
            return Err(Error::dim("adam moments", expected, adam.moments.len()));
        }
        for ((dst, src), mo) in params.tensors_mut().zip(&tensors).zip(&adam.moments) {
            if dst.len() != src.len() || mo.m.len() != src.len() || mo.v.len() != src.len() {
                return Err(Error::dim("parameter tensor", dst.len(), src.len()));
            }
            dst.copy_from_slice(src);
        }
        params.adam = adam;
        Ok(params)
    }

    /// Fresh optimizer state: zero moments, step 0.
    pub fn reset_optimizer(&mut self) {
        let lens: Vec<usize> = self.tensors().map(<[f64]>::len).collect();
        self.adam = AdamState::new(lens.into_iter());
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn tensor_count(&self) -> usize {
        2 * (self.encoder.len() + self.decoder.len())
    }

    /// Weight then bias of each layer, encoder first.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| {
                let Layer { weight, bias, .. } = l;
                [weight.as_mut_slice(), bias.as_mut_slice()]
            })
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().map(<[f64]>::len).sum()
    }

    /// Latent codes for `batch`. Passing a generator switches on dropout.
    pub fn encode(&self, batch: &Matrix, rng: Option<&mut dyn RngCore>) -> Result<(Matrix, ForwardTrace)> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::dim("encoder input", self.spec.input_dim, batch.cols()));
        }
        forward(&self.encoder, batch, self.spec.dropout_rate, rng)
    }

    pub fn decode(&self, latents: &Matrix, rng: Option<&mut dyn RngCore>) -> Result<(Matrix, ForwardTrace)> {
        if latents.cols() != self.spec.latent_dim {
            return Err(Error::dim("decoder input", self.spec.latent_dim, latents.cols()));
        }
        forward(&self.decoder, latents, self.spec.dropout_rate, rng)
    }

    /// Inference-mode latent codes.
    pub fn embed(&self, batch: &Matrix) -> Result<Matrix> {
        self.encode(batch, None).map(|(z, _)| z)
    }

    /// Gradients of a loss with `output_grads = dL/d(reconstruction)` and,
    /// optionally, extra `latent_grads = dL/dz` injected at the encoder
    /// output. Both paths are summed before entering the encoder.
    pub fn backward(
        &self,
        encoder_trace: &ForwardTrace,
        decoder_trace: &ForwardTrace,
        output_grads: &Matrix,
        latent_grads: Option<&Matrix>,
    ) -> Result<ParameterGradients> {
        check_trace(&self.decoder, decoder_trace)?;
        check_trace(&self.encoder, encoder_trace)?;
        let out_dim = self.spec.input_dim;
        let rows = decoder_trace.layers[0].input.rows();
        if output_grads.cols() != out_dim || output_grads.rows() != rows {
            return Err(Error::dim("output gradient", rows * out_dim, output_grads.rows() * output_grads.cols()));
        }
        let (decoder, mut d_latent) = backward_stack(&self.decoder, decoder_trace, output_grads.clone(), true);
        let d_latent = d_latent.take().expect("input gradient requested");
        let d_latent = match latent_grads {
            Some(extra) => {
                if extra.rows() != d_latent.rows() || extra.cols() != d_latent.cols() {
                    return Err(Error::dim("latent gradient", d_latent.rows() * d_latent.cols(), extra.rows() * extra.cols()));
                }
                let mut sum = d_latent;
                sum.add_scaled(1.0, extra);
                sum
            }
            None => d_latent,
        };
        let (encoder, _) = backward_stack(&self.encoder, encoder_trace, d_latent, false);
        Ok(ParameterGradients { encoder, decoder })
    }

    /// One Adam step. Gradients are checked for finiteness before any
    /// parameter moves; the error carries the offending layer index
    /// (encoder layers first, then decoder layers).
    pub fn adam_step(&mut self, grads: &ParameterGradients, lr: f64, betas: (f64, f64)) -> Result<()> {
        if grads.encoder.len() != self.encoder.len() || grads.decoder.len() != self.decoder.len() {
            return Err(Error::dim("gradient layers", self.encoder.len() + self.decoder.len(), grads.encoder.len() + grads.decoder.len()));
        }
        for (i, g) in grads.encoder.iter().chain(&grads.decoder).enumerate() {
            if !g.weight.is_finite() || g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "gradient", index: i });
            }
        }
        self.adam.step += 1;
        let step = self.adam.step;
        let mut moments = core::mem::take(&mut self.adam.moments);
        for ((param, grad), mo) in self.tensors_mut().zip(grads.tensors()).zip(moments.iter_mut()) {
            mo.apply(param, grad, lr, betas, step);
        }
        self.adam.moments = moments;
        Ok(())
    }
}

fn check_trace(layers: &[Layer], trace: &ForwardTrace) -> Result<()> {
    if trace.layers.len() != layers.len() {
        return Err(Error::dim("trace layers", layers.len(), trace.layers.len()));
    }
    Ok(())
}

fn forward(
    layers: &[Layer],
    batch: &Matrix,
    dropout_rate: f64,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(Matrix, ForwardTrace)> {
    let mut trace = Vec::with_capacity(layers.len());
    let mut x = batch.clone();
    for layer in layers {
        let pre = layer_forward(layer, &x);
        let mut out = pre.clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v = layer.activation.apply(*v));
        let mask = match rng.as_deref_mut() {
            Some(r) if layer.dropout && dropout_rate > 0.0 => {
                let keep = 1.0 / (1.0 - dropout_rate);
                let mask: Vec<f64> = (0..out.as_slice().len())
                    .map(|_| if r.random::<f64>() < dropout_rate { 0.0 } else { keep })
                    .collect();
                out.as_mut_slice().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                Some(mask)
            }
            _ => None,
        };
        trace.push(LayerTrace { input: core::mem::replace(&mut x, out), pre_activation: pre, mask });
    }
    Ok((x, ForwardTrace { layers: trace }))
}

fn layer_forward(layer: &Layer, x: &Matrix) -> Matrix {
    let n = x.rows();
    match layer.kind {
        LayerKind::Dense { outputs, .. } => {
            let mut out = Matrix::zeros(n, outputs);
            for i in 0..n {
                out.row_mut(i).copy_from_slice(&layer.bias);
            }
            gemm_into(1.0, View::of(x), Op::N, View::of(&layer.weight), Op::T, 1.0, out.as_mut_slice(), outputs);
            out
        }
        LayerKind::Conv(g) => {
            let px = g.out_pixels();
            let mut cols = vec![0.0; g.patch_len() * px];
            let mut out = Matrix::zeros(n, g.out_len());
            for i in 0..n {
                g.im2col(x.row(i), &mut cols);
                let dst = out.row_mut(i);
                for (c, chunk) in dst.chunks_exact_mut(px).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = layer.bias[c]);
                }
                let cols_view = View { data: &cols, rows: g.patch_len(), cols: px };
                gemm_into(1.0, View::of(&layer.weight), Op::N, cols_view, Op::N, 1.0, dst, px);
            }
            out
        }
        LayerKind::ConvTranspose(g) => {
            let px = g.out_pixels();
            let mut cols = vec![0.0; g.patch_len() * px];
            let mut out = Matrix::zeros(n, g.in_len());
            let plane = g.in_h * g.in_w;
            for i in 0..n {
                let src = View { data: x.row(i), rows: g.out_c, cols: px };
                gemm_into(1.0, View::of(&layer.weight), Op::T, src, Op::N, 0.0, &mut cols, px);
                let dst = out.row_mut(i);
                g.col2im(&cols, dst);
                for (c, chunk) in dst.chunks_exact_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += layer.bias[c]);
                }
            }
            out
        }
    }
}

/// Walks `layers` backwards from `d_out` (gradient w.r.t. the stack output).
/// Returns per-layer gradients in forward order and, if requested, the
/// gradient w.r.t. the stack input.
fn backward_stack(
    layers: &[Layer],
    trace: &ForwardTrace,
    mut d_out: Matrix,
    want_input_grad: bool,
) -> (Vec<LayerGradient>, Option<Matrix>) {
    let mut grads = Vec::with_capacity(layers.len());
    for (idx, (layer, t)) in layers.iter().zip(&trace.layers).enumerate().rev() {
        // d_out becomes d_pre in place.
        let d = d_out.as_mut_slice();
        if let Some(mask) = &t.mask {
            d.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        d.iter_mut()
            .zip(t.pre_activation.as_slice())
            .for_each(|(g, &p)| *g *= layer.activation.derivative(p));
        let need_input = idx > 0 || want_input_grad;
        let (grad, d_in) = layer_backward(layer, &t.input, &d_out, need_input);
        grads.push(grad);
        if let Some(d_in) = d_in {
            d_out = d_in;
        }
    }
    grads.reverse();
    let input_grad = want_input_grad.then_some(d_out);
    (grads, input_grad)
}

fn layer_backward(layer: &Layer, x: &Matrix, d_pre: &Matrix, need_input: bool) -> (LayerGradient, Option<Matrix>) {
    let n = x.rows();
    let (wr, wc) = (layer.weight.rows(), layer.weight.cols());
    let mut d_weight = Matrix::zeros(wr, wc);
    let mut d_bias = vec![0.0; layer.bias.len()];
    let d_input = match layer.kind {
        LayerKind::Dense { inputs, .. } => {
            gemm_into(1.0, View::of(d_pre), Op::T, View::of(x), Op::N, 0.0, d_weight.as_mut_slice(), wc);
            d_bias = d_pre.column_sums();
            need_input.then(|| {
                let mut d_in = Matrix::zeros(n, inputs);
                gemm_into(1.0, View::of(d_pre), Op::N, View::of(&layer.weight), Op::N, 0.0, d_in.as_mut_slice(), inputs);
                d_in
            })
        }
        LayerKind::Conv(g) => {
            let px = g.out_pixels();
            let mut cols = vec![0.0; g.patch_len() * px];
            let mut d_cols = vec![0.0; g.patch_len() * px];
            let mut d_in = need_input.then(|| Matrix::zeros(n, g.in_len()));
            for i in 0..n {
                let dy = View { data: d_pre.row(i), rows: g.out_c, cols: px };
                for (c, chunk) in d_pre.row(i).chunks_exact(px).enumerate() {
                    d_bias[c] += chunk.iter().sum::<f64>();
                }
                g.im2col(x.row(i), &mut cols);
                let cols_view = View { data: &cols, rows: g.patch_len(), cols: px };
                gemm_into(1.0, dy, Op::N, cols_view, Op::T, 1.0, d_weight.as_mut_slice(), wc);
                if let Some(d_in) = d_in.as_mut() {
                    gemm_into(1.0, View::of(&layer.weight), Op::T, dy, Op::N, 0.0, &mut d_cols, px);
                    g.col2im(&d_cols, d_in.row_mut(i));
                }
            }
            d_in
        }
        LayerKind::ConvTranspose(g) => {
            let px = g.out_pixels();
            let plane = g.in_h * g.in_w;
            let mut d_cols = vec![0.0; g.patch_len() * px];
            let mut d_in = need_input.then(|| Matrix::zeros(n, g.out_len()));
            for i in 0..n {
                for (c, chunk) in d_pre.row(i).chunks_exact(plane).enumerate() {
                    d_bias[c] += chunk.iter().sum::<f64>();
                }
                g.im2col(d_pre.row(i), &mut d_cols);
                let dc = View { data: &d_cols, rows: g.patch_len(), cols: px };
                let xi = View { data: x.row(i), rows: g.out_c, cols: px };
                gemm_into(1.0, xi, Op::N, dc, Op::T, 1.0, d_weight.as_mut_slice(), wc);
                if let Some(d_in) = d_in.as_mut() {
                    gemm_into(1.0, View::of(&layer.weight), Op::N, dc, Op::N, 0.0, d_in.row_mut(i), px);
                }
            }
            d_in
        }
    };
    (LayerGradient { weight: d_weight, bias: d_bias }, d_input)
}
