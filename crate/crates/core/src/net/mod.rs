//! Siamese convolutional network scoring per-pixel matching confidence.
//!
//! Four 3x3 convolution layers (no padding, ReLU after each) turn a 9x9
//! grayscale patch into a 64-vector; the confidence of a patch pair is the
//! inner product of the two feature vectors. Both branches share one
//! [`NetworkParams`] value, so the weights cannot diverge by construction.

mod inference;
mod model_io;
mod sampling;
mod tensor;
mod training;

pub use inference::{confidence_volume, feature_maps, FeatureMap};
pub use model_io::{load_model, save_model, write_training_log};
pub use sampling::sample_examples;
pub use training::{
    loss_and_gradients, mean_loss, train, train_pairs, EpochStats, Gradients, TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use tensor::Tensor3;

/// Side length of network input patches.
pub const PATCH_SIDE: usize = 9;
/// Half window of a network patch.
pub const PATCH_RADIUS: usize = 4;
/// Convolution kernel side length.
pub const KERNEL_SIZE: usize = 3;
/// Number of convolution layers.
pub const NUM_LAYERS: usize = 4;
/// Feature maps per layer and length of the output descriptor.
pub const FEATURE_MAPS: usize = 64;

/// One convolution layer: kernel tensor plus per-output-map bias.
///
/// Weights are stored row-major as `[ky][kx][in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_maps: usize,
    out_maps: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(in_maps: usize, out_maps: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let expected = KERNEL_SIZE * KERNEL_SIZE * in_maps * out_maps;
        if weights.len() != expected || bias.len() != out_maps {
            return Err(Error::InvalidConfig(format!(
                "layer {in_maps}->{out_maps} expects {expected} weights and {out_maps} biases, \
                 got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(bias.iter()).all(|w| w.is_finite()) {
            return Err(Error::DegenerateInput("non-finite weight".into()));
        }
        Ok(ConvLayer {
            in_maps,
            out_maps,
            weights,
            bias,
        })
    }

    pub fn in_maps(&self) -> usize {
        self.in_maps
    }

    pub fn out_maps(&self) -> usize {
        self.out_maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Flat index of weight `[ky][kx][i][o]`.
    #[inline]
    pub fn weight_index(&self, ky: usize, kx: usize, i: usize, o: usize) -> usize {
        ((ky * KERNEL_SIZE + kx) * self.in_maps + i) * self.out_maps + o
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }
}

/// Weights and biases of the 4-layer feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<ConvLayer>,
}

impl NetworkParams {
    /// Validates the fixed architecture: four 3x3 layers, 1 input map,
    /// 64 maps everywhere else, so a 9x9 patch reduces to 1x1x64.
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.len() != NUM_LAYERS {
            return Err(Error::InvalidConfig(format!(
                "expected {NUM_LAYERS} layers, got {}",
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let want_in = if l == 0 { 1 } else { FEATURE_MAPS };
            if layer.in_maps != want_in || layer.out_maps != FEATURE_MAPS {
                return Err(Error::InvalidConfig(format!(
                    "layer {l} has {}->{} maps, expected {want_in}->{FEATURE_MAPS}",
                    layer.in_maps, layer.out_maps
                )));
            }
        }
        Ok(NetworkParams { layers })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// Deterministic seeded initialization: weights uniform in
/// `[-sqrt(1/fan_in), sqrt(1/fan_in))`, biases zero.
pub fn init_params(seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(NUM_LAYERS);
    for l in 0..NUM_LAYERS {
        let in_maps = if l == 0 { 1 } else { FEATURE_MAPS };
        let fan_in = (KERNEL_SIZE * KERNEL_SIZE * in_maps) as f64;
        let bound = (1.0 / fan_in).sqrt();
        let weights = (0..KERNEL_SIZE * KERNEL_SIZE * in_maps * FEATURE_MAPS)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = vec![0.0; FEATURE_MAPS];
        layers.push(ConvLayer::new(in_maps, FEATURE_MAPS, weights, bias).expect("valid shapes"));
    }
    NetworkParams::new(layers).expect("valid architecture")
}

/// A 9x9 network input patch, row-major `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    data: Vec<f64>,
}

impl Patch {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.len() != PATCH_SIDE * PATCH_SIDE {
            return Err(Error::DimensionMismatch(format!(
                "patch needs {} samples, got {}",
                PATCH_SIDE * PATCH_SIDE,
                data.len()
            )));
        }
        Ok(Patch { data })
    }

    /// Extracts the patch centered at `(cx, cy)`; the window must lie
    /// fully inside the image.
    pub fn from_image(img: &GrayImage, cx: usize, cy: usize) -> Result<Self> {
        let r = PATCH_RADIUS;
        if cx < r || cy < r || cx + r >= img.width() || cy + r >= img.height() {
            return Err(Error::DimensionMismatch(format!(
                "patch at ({cx}, {cy}) leaves the {}x{} image",
                img.width(),
                img.height()
            )));
        }
        let mut data = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE);
        for dy in 0..PATCH_SIDE {
            for dx in 0..PATCH_SIDE {
                data.push(img.get(cx - r + dx, cy - r + dy) as f64);
            }
        }
        Ok(Patch { data })
    }

    /// Extracts the patch centered at `(cx, cy)` with clamp-to-edge reads,
    /// matching the border policy of dense inference.
    pub fn from_image_clamped(img: &GrayImage, cx: isize, cy: isize) -> Self {
        let r = PATCH_RADIUS as isize;
        let mut data = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE);
        for dy in -r..=r {
            for dx in -r..=r {
                data.push(img.get_clamped(cx + dx, cy + dy) as f64);
            }
        }
        Patch { data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn to_tensor(&self) -> Tensor3 {
        Tensor3 {
            h: PATCH_SIDE,
            w: PATCH_SIDE,
            c: 1,
            data: self.data.clone(),
        }
    }
}

/// Positive examples pair a left patch with its true match; negative
/// examples pair it with a deliberately offset non-match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// One training input: a left/right patch pair with its label.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub left_patch: Patch,
    pub right_patch: Patch,
    pub polarity: Polarity,
}

/// Training hyperparameters and sampling offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Hinge-loss margin.
    pub epsilon: f64,
    /// SGD learning rate.
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negative offsets draw from `[-n_high, -n_low] u [n_low, n_high]`.
    pub n_low: u32,
    pub n_high: u32,
    /// Positive offsets draw from `[-p_high, p_high]`.
    pub p_high: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epsilon: 0.2,
            lr: 0.003,
            epochs: 12,
            batch_size: 32,
            n_low: 4,
            n_high: 8,
            p_high: 1,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_low == 0 || self.n_low > self.n_high {
            return Err(Error::InvalidConfig(format!(
                "offsets need 0 < n_low <= n_high, got n_low = {}, n_high = {}",
                self.n_low, self.n_high
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// CNN matching confidences per pixel and disparity, min-max normalized
/// into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ConfidenceVolume {
    width: usize,
    height: usize,
    d_max: usize,
    data: Vec<f32>,
}

impl ConfidenceVolume {
    pub fn new(width: usize, height: usize, d_max: usize, data: Vec<f32>) -> Result<Self> {
        let expected = width * height * (d_max + 1);
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "confidence volume needs {expected} entries, got {}",
                data.len()
            )));
        }
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::DegenerateInput(
                "confidence values must lie in [0, 1]".into(),
            ));
        }
        Ok(ConfidenceVolume {
            width,
            height,
            d_max,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, d: usize) -> f32 {
        self.data[(y * self.width + x) * (self.d_max + 1) + d]
    }
}

/// Feature descriptor of one patch: four valid convolutions with ReLU.
pub fn forward_patch(params: &NetworkParams, patch: &Patch) -> Vec<f64> {
    let mut t = patch.to_tensor();
    for layer in &params.layers {
        t = tensor::conv_valid(&t, layer);
        tensor::relu_inplace(&mut t);
    }
    debug_assert_eq!((t.h, t.w, t.c), (1, 1, FEATURE_MAPS));
    t.data
}

/// Matching confidence of a patch pair: the inner product of the two
/// feature descriptors. Symmetric in its arguments.
pub fn confidence(params: &NetworkParams, left: &Patch, right: &Patch) -> f64 {
    let fl = forward_patch(params, left);
    let fr = forward_patch(params, right);
    dot(&fl, &fr)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Margin loss `max(0, epsilon + s_neg - s_pos)`.
pub fn hinge_loss(s_pos: f64, s_neg: f64, epsilon: f64) -> f64 {
    (epsilon + s_neg - s_pos).max(0.0)
}
