//! Fully connected autoencoder with hand-written forward and backward passes.
//!
//! Every hidden layer, the bottleneck included, uses LeakyReLU. The last
//! decoder layer is affine so outputs keep the range of the inputs. The
//! network is generic over the scalar so training can run in `f32` while
//! gradient checks run the same code in `f64`.

mod adam;
mod gradcheck;
mod io;

use std::fmt::{Debug, Display};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_traits::{Float, FromPrimitive, NumAssign, NumCast};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};

pub use adam::AdamState;
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use io::{decode_model, encode_model, load_model, save_model, LMAE_MAGIC, LMAE_VERSION};

/// Scalar types the network can run in.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("finite cast")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("finite cast")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`, zero biases.
    HeUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Widths from the input down to the bottleneck, e.g. `[8192, 4096, 2048, 1024, 512]`.
    pub encoder_dims: Vec<usize>,
    /// Widths from the bottleneck back to the input.
    pub decoder_dims: Vec<usize>,
    pub leaky_slope: f64,
    pub init: InitScheme,
    pub init_seed: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            encoder_dims: vec![8192, 4096, 2048, 1024, 512],
            decoder_dims: vec![512, 1024, 2048, 4096, 8192],
            leaky_slope: 0.01,
            init: InitScheme::HeUniform,
            init_seed: 0,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl AutoencoderConfig {
    /// Encoder `dims` with the mirrored decoder.
    pub fn symmetric(dims: &[usize]) -> Self {
        let mut decoder = dims.to_vec();
        decoder.reverse();
        Self {
            encoder_dims: dims.to_vec(),
            decoder_dims: decoder,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.encoder_dims.len() < 2 || self.decoder_dims.len() < 2 {
            return bad("encoder and decoder need at least two widths each".into());
        }
        if self.encoder_dims.iter().chain(&self.decoder_dims).any(|&w| w == 0) {
            return bad("layer widths must be >= 1".into());
        }
        if self.encoder_dims.last() != self.decoder_dims.first() {
            return bad(format!(
                "bottleneck mismatch: encoder ends at {}, decoder starts at {}",
                self.encoder_dims.last().unwrap(),
                self.decoder_dims[0]
            ));
        }
        if self.encoder_dims[0] != *self.decoder_dims.last().unwrap() {
            return bad(format!(
                "encoder input {} differs from decoder output {}",
                self.encoder_dims[0],
                self.decoder_dims.last().unwrap()
            ));
        }
        if !(self.leaky_slope.is_finite() && self.learning_rate > 0.0 && self.adam_eps > 0.0) {
            return bad("slope, learning rate and eps must be finite and positive".into());
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_dims[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        *self.encoder_dims.last().unwrap()
    }

    pub fn n_encoder_layers(&self) -> usize {
        self.encoder_dims.len() - 1
    }

    /// `(fan_in, fan_out)` of every layer, encoder first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.encoder_dims
            .windows(2)
            .chain(self.decoder_dims.windows(2))
            .map(|w| (w[0], w[1]))
            .collect()
    }
}

/// Affine layer `y = x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn cast<U: Real>(&self) -> Layer<U> {
        Layer {
            weight: self.weight.mapv(|x| U::of(x.as_f64())),
            bias: self.bias.mapv(|x| U::of(x.as_f64())),
        }
    }

    /// Flat parameter access: weights row-major, then biases.
    fn param(&self, i: usize) -> T {
        let nw = self.weight.len();
        if i < nw {
            self.weight.as_slice().expect("standard layout")[i]
        } else {
            self.bias[i - nw]
        }
    }

    fn param_mut(&mut self, i: usize) -> &mut T {
        let nw = self.weight.len();
        if i < nw {
            &mut self.weight.as_slice_mut().expect("standard layout")[i]
        } else {
            &mut self.bias[i - nw]
        }
    }
}

/// Gradients with the same layout as the model's layers.
pub type Gradients<T> = Vec<Layer<T>>;

pub fn zero_gradients<T: Real>(cfg: &AutoencoderConfig) -> Gradients<T> {
    cfg.layer_shapes().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect()
}

/// Per-layer intermediates of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub input: Array2<T>,
    pub pre: Vec<Array2<T>>,
    pub act: Vec<Array2<T>>,
    n_encoder: usize,
}

impl<T: Real> ForwardTrace<T> {
    pub fn bottleneck(&self) -> &Array2<T> {
        &self.act[self.n_encoder - 1]
    }

    pub fn reconstruction(&self) -> &Array2<T> {
        self.act.last().expect("at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T> {
    pub config: AutoencoderConfig,
    pub layers: Vec<Layer<T>>,
    /// Input normalization fit on the training split, if any.
    pub standardizer: Option<Standardizer>,
}

impl<T: Real> Autoencoder<T> {
    /// He-uniform weights and zero biases, deterministic in `config.init_seed`.
    pub fn new(config: AutoencoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = (6.0 / fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| T::of(rng.random_range(-bound..bound)));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            standardizer: None,
        })
    }

    /// Builds a model from explicit layers, checking shapes against the config.
    pub fn from_layers(config: AutoencoderConfig, layers: Vec<Layer<T>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::shape(format!("config has {} layers, got {}", shapes.len(), layers.len())));
        }
        for (l, ((i, o), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.weight.dim() != (*i, *o) || layer.bias.len() != *o {
                return Err(Error::shape(format!("layer {l} does not match {i}x{o}")));
            }
        }
        Ok(Self {
            config,
            layers,
            standardizer: None,
        })
    }

    pub fn with_standardizer(mut self, st: Standardizer) -> Result<Self> {
        if st.dim() != self.config.input_dim() {
            return Err(Error::shape(format!(
                "standardizer dim {} differs from model input {}",
                st.dim(),
                self.config.input_dim()
            )));
        }
        self.standardizer = Some(st);
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Autoencoder<U> {
        Autoencoder {
            config: self.config.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.config.bottleneck_dim()
    }

    /// Flat parameter index -> (layer, offset within layer).
    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (l, layer) in self.layers.iter().enumerate() {
            if i < layer.n_params() {
                return (l, i);
            }
            i -= layer.n_params();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, i: usize) -> T {
        let (l, j) = self.locate(i);
        self.layers[l].param(j)
    }

    pub fn param_mut(&mut self, i: usize) -> &mut T {
        let (l, j) = self.locate(i);
        self.layers[l].param_mut(j)
    }

    fn is_linear(&self, layer: usize) -> bool {
        layer + 1 == self.layers.len()
    }

    fn slope(&self) -> T {
        T::of(self.config.leaky_slope)
    }

    fn apply_layer(&self, l: usize, x: &Array2<T>) -> Result<(Array2<T>, Array2<T>)> {
        let layer = &self.layers[l];
        let z = x.dot(&layer.weight) + &layer.bias;
        let a = if self.is_linear(l) {
            z.clone()
        } else {
            let slope = self.slope();
            z.mapv(|v| if v >= T::zero() { v } else { slope * v })
        };
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite activation in layer {l}")));
        }
        Ok((z, a))
    }

    fn check_width(&self, x: &ArrayView2<T>, expected: usize, what: &str) -> Result<()> {
        if x.ncols() != expected {
            return Err(Error::shape(format!("{what} has width {}, expected {expected}", x.ncols())));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<T>, layers: std::ops::Range<usize>) -> Result<Array2<T>> {
        let mut h = x.to_owned();
        for l in layers {
            h = self.apply_layer(l, &h)?.1;
        }
        Ok(h)
    }

    /// Bottleneck codes `b = E(w)` for a batch of (standardized) inputs.
    pub fn encode(&self, w: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_width(&w, self.input_dim(), "encoder input")?;
        self.run(w, 0..self.config.n_encoder_layers())
    }

    /// Reconstructions `w* = D(b)`.
    pub fn decode(&self, b: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_width(&b, self.bottleneck_dim(), "decoder input")?;
        self.run(b, self.config.n_encoder_layers()..self.n_layers())
    }

    pub fn forward(&self, w: ArrayView2<T>) -> Result<ForwardTrace<T>> {
        self.check_width(&w, self.input_dim(), "encoder input")?;
        let input = w.to_owned();
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut act: Vec<Array2<T>> = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let (z, a) = self.apply_layer(l, act.last().unwrap_or(&input))?;
            pre.push(z);
            act.push(a);
        }
        Ok(ForwardTrace {
            input,
            pre,
            act,
            n_encoder: self.config.n_encoder_layers(),
        })
    }

    /// Reverse-mode gradients of a scalar loss whose partials with respect to
    /// the bottleneck and the reconstruction are `d_bottleneck` and `d_recon`.
    pub fn backward(&self, trace: &ForwardTrace<T>, d_bottleneck: ArrayView2<T>, d_recon: ArrayView2<T>) -> Result<Gradients<T>> {
        let batch = trace.input.nrows();
        if d_bottleneck.dim() != (batch, self.bottleneck_dim()) || d_recon.dim() != (batch, self.input_dim()) {
            return Err(Error::shape(format!(
                "upstream gradients {:?}/{:?} do not match batch {batch} with widths {}/{}",
                d_bottleneck.dim(),
                d_recon.dim(),
                self.bottleneck_dim(),
                self.input_dim()
            )));
        }
        if trace.pre.len() != self.n_layers() {
            return Err(Error::shape("trace was produced by a different model"));
        }
        let slope = self.slope();
        let bottleneck_layer = self.config.n_encoder_layers() - 1;
        let mut grads = Vec::with_capacity(self.n_layers());
        let mut d_act = d_recon.to_owned();
        for l in (0..self.n_layers()).rev() {
            if l == bottleneck_layer {
                d_act += &d_bottleneck;
            }
            let d_pre = if self.is_linear(l) {
                d_act
            } else {
                let mut d = d_act;
                d.zip_mut_with(&trace.pre[l], |g, &z| {
                    if z < T::zero() {
                        *g *= slope;
                    }
                });
                d
            };
            let a_prev = if l == 0 { &trace.input } else { &trace.act[l - 1] };
            let weight = a_prev.t().dot(&d_pre);
            let bias = d_pre.sum_axis(Axis(0));
            d_act = if l > 0 {
                d_pre.dot(&self.layers[l].weight.t())
            } else {
                Array2::zeros((0, 0))
            };
            grads.push(Layer { weight, bias });
        }
        grads.reverse();
        Ok(grads)
    }
}

impl Autoencoder<f32> {
    fn standardize(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.standardizer {
            Some(st) => st.forward(raw),
            None => Ok(raw.to_owned()),
        }
    }

    /// Encodes raw-space latents, applying the stored standardizer first.
    pub fn encode_raw(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.standardize(raw)?.mapv(|v| v as f32);
        Ok(self.encode(x.view())?.mapv(|v| v as f64))
    }

    /// Decodes bottleneck codes and maps the result back to raw space.
    pub fn decode_raw(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let b = b.mapv(|v| v as f32);
        let w = self.decode(b.view())?.mapv(|v| v as f64);
        match &self.standardizer {
            Some(st) => st.inverse(w.view()),
            None => Ok(w),
        }
    }
}

/// Adds `scale * src` into `dst` layer by layer.
pub fn accumulate<T: Real>(dst: &mut Gradients<T>, src: &Gradients<T>, scale: T) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.weight.scaled_add(scale, &s.weight);
        d.bias.scaled_add(scale, &s.bias);
    }
}
