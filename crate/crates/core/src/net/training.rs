//! Hinge-loss minibatch SGD over positive/negative patch pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{conv_valid, relu_inplace, Tensor3};
use super::{
    dot, hinge_loss, init_params, sample_examples, NetworkParams, Patch, TrainConfig,
    TrainingExample, KERNEL_SIZE, NUM_LAYERS,
};
use crate::error::{Error, Result};
use crate::imageio::{GrayImage, GroundTruth};

/// Parameter gradients, mirroring the layer layout of [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    weights: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            weights: params
                .layers()
                .iter()
                .map(|l| vec![0.0; l.weights().len()])
                .collect(),
            bias: params
                .layers()
                .iter()
                .map(|l| vec![0.0; l.bias().len()])
                .collect(),
        }
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.bias[layer]
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.iter().all(|g| g.is_finite()))
    }
}

/// Cached activations of one patch: input, pre-activations and
/// rectified outputs per layer.
struct PatchTrace {
    inputs: Vec<Tensor3>,
    pres: Vec<Tensor3>,
}

fn forward_trace(params: &NetworkParams, patch: &Patch) -> PatchTrace {
    let mut inputs = Vec::with_capacity(NUM_LAYERS + 1);
    let mut pres = Vec::with_capacity(NUM_LAYERS);
    inputs.push(Tensor3 {
        h: super::PATCH_SIDE,
        w: super::PATCH_SIDE,
        c: 1,
        data: patch.data().to_vec(),
    });
    for layer in params.layers() {
        let pre = conv_valid(inputs.last().unwrap(), layer);
        let mut act = pre.clone();
        relu_inplace(&mut act);
        pres.push(pre);
        inputs.push(act);
    }
    PatchTrace { inputs, pres }
}

fn features(trace: &PatchTrace) -> &[f64] {
    &trace.inputs.last().unwrap().data
}

/// Backpropagates `d_feature` (gradient at the 64-vector output) through
/// one patch, accumulating parameter gradients.
fn backward_trace(
    params: &NetworkParams,
    trace: &PatchTrace,
    d_feature: &[f64],
    grads: &mut Gradients,
) {
    let mut d_act = d_feature.to_vec();
    for l in (0..NUM_LAYERS).rev() {
        let layer = &params.layers()[l];
        let pre = &trace.pres[l];
        let input = &trace.inputs[l];
        let (ic, oc) = (layer.in_maps(), layer.out_maps());
        let (oh, ow) = (pre.h, pre.w);

        // d(pre) = d(act) masked by ReLU
        let mut d_pre = d_act;
        for (g, &p) in d_pre.iter_mut().zip(pre.data.iter()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }

        let gw = &mut grads.weights[l];
        let gb = &mut grads.bias[l];
        let mut d_input = vec![0.0f64; input.data.len()];
        let weights = layer.weights();

        for y in 0..oh {
            for x in 0..ow {
                let d_px = &d_pre[(y * ow + x) * oc..(y * ow + x + 1) * oc];
                for (o, g) in d_px.iter().enumerate() {
                    gb[o] += *g;
                }
                for ky in 0..KERNEL_SIZE {
                    for kx in 0..KERNEL_SIZE {
                        let in_base = ((y + ky) * input.w + (x + kx)) * ic;
                        let w_base = (ky * KERNEL_SIZE + kx) * ic * oc;
                        for i in 0..ic {
                            let v = input.data[in_base + i];
                            let gw_row = &mut gw[w_base + i * oc..w_base + (i + 1) * oc];
                            let w_row = &weights[w_base + i * oc..w_base + (i + 1) * oc];
                            let mut di = 0.0;
                            for (o, g) in d_px.iter().enumerate() {
                                gw_row[o] += v * g;
                                di += w_row[o] * g;
                            }
                            d_input[in_base + i] += di;
                        }
                    }
                }
            }
        }
        d_act = d_input;
    }
}

/// Summed hinge loss of a batch of positive/negative pairs and its
/// gradient with respect to every parameter.
///
/// Each pair shares one left patch; the loss couples the three feature
/// vectors through the two inner products.
pub fn loss_and_gradients(
    params: &NetworkParams,
    pairs: &[(TrainingExample, TrainingExample)],
    epsilon: f64,
) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(params);
    let mut total = 0.0;
    for (pos, neg) in pairs {
        debug_assert_eq!(pos.left_patch, neg.left_patch);
        let left = forward_trace(params, &pos.left_patch);
        let right_pos = forward_trace(params, &pos.right_patch);
        let right_neg = forward_trace(params, &neg.right_patch);

        let fl = features(&left);
        let fp = features(&right_pos);
        let fn_ = features(&right_neg);
        let s_pos = dot(fl, fp);
        let s_neg = dot(fl, fn_);
        let loss = hinge_loss(s_pos, s_neg, epsilon);
        total += loss;
        if loss <= 0.0 {
            continue;
        }
        // d(loss)/ds_pos = -1, d(loss)/ds_neg = +1 on the active branch
        let d_left: Vec<f64> = fn_.iter().zip(fp).map(|(n, p)| n - p).collect();
        let d_pos: Vec<f64> = fl.iter().map(|v| -v).collect();
        let d_neg: Vec<f64> = fl.to_vec();
        backward_trace(params, &left, &d_left, &mut grads);
        backward_trace(params, &right_pos, &d_pos, &mut grads);
        backward_trace(params, &right_neg, &d_neg, &mut grads);
    }
    (total, grads)
}

/// Mean hinge loss of a pair set under fixed parameters.
pub fn mean_loss(
    params: &NetworkParams,
    pairs: &[(TrainingExample, TrainingExample)],
    epsilon: f64,
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = pairs
        .iter()
        .map(|(pos, neg)| {
            let fl = super::forward_patch(params, &pos.left_patch);
            let fp = super::forward_patch(params, &pos.right_patch);
            let fn_ = super::forward_patch(params, &neg.right_patch);
            hinge_loss(dot(&fl, &fp), dot(&fl, &fn_), epsilon)
        })
        .sum();
    total / pairs.len() as f64
}

/// Mean training loss observed during one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Final parameters plus the per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub trace: Vec<EpochStats>,
}

fn apply_step(params: &mut NetworkParams, grads: &Gradients, lr: f64) {
    for (l, layer) in params.layers_mut().iter_mut().enumerate() {
        for (w, g) in layer.weights_mut().iter_mut().zip(&grads.weights[l]) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias_mut().iter_mut().zip(&grads.bias[l]) {
            *b -= lr * g;
        }
    }
}

/// Minibatch SGD on summed hinge losses over a fixed set of example pairs.
///
/// The per-epoch loss trace records the mean loss as seen during the epoch
/// (each batch evaluated before its update). Aborts with a diagnostic if
/// the loss turns non-finite.
pub fn train_pairs(
    pairs: &[(TrainingExample, TrainingExample)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::DegenerateInput("no training pairs".into()));
    }
    let mut params = init_params(cfg.seed);
    let mut trace = Vec::with_capacity(cfg.epochs);
    // distinct stream from init_params so reordering epochs cannot alias
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let batch_pairs: Vec<(TrainingExample, TrainingExample)> =
                batch.iter().map(|&i| pairs[i].clone()).collect();
            let (loss, grads) = loss_and_gradients(&params, &batch_pairs, cfg.epsilon);
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss;
            apply_step(&mut params, &grads, cfg.lr);
        }
        trace.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / pairs.len() as f64,
        });
    }
    Ok(TrainOutcome { params, trace })
}

/// Samples example pairs from every frame of the dataset, then runs
/// [`train_pairs`].
pub fn train(
    dataset: &[(GrayImage, GrayImage, GroundTruth)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::DegenerateInput("empty training dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5851f42d4c957f2d));
    let mut pairs = Vec::new();
    for (left, right, gt) in dataset {
        pairs.extend(sample_examples(left, right, gt, cfg, &mut rng)?);
    }
    if pairs.is_empty() {
        return Err(Error::DegenerateInput(
            "no usable ground-truth pixels in dataset".into(),
        ));
    }
    train_pairs(&pairs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_patch(rng: &mut ChaCha8Rng) -> Patch {
        Patch::new((0..81).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_pairs(
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(TrainingExample, TrainingExample)> {
        (0..n)
            .map(|_| {
                let left = random_patch(rng);
                (
                    TrainingExample {
                        left_patch: left.clone(),
                        right_patch: random_patch(rng),
                        polarity: super::super::Polarity::Positive,
                    },
                    TrainingExample {
                        left_patch: left,
                        right_patch: random_patch(rng),
                        polarity: super::super::Polarity::Negative,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let pairs = random_pairs(6, &mut rng);
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 2,
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train_pairs(&pairs, &cfg).unwrap();
        assert_eq!(out.params, init_params(11));
        assert_eq!(out.trace.len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pairs = random_pairs(8, &mut rng);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train_pairs(&pairs, &cfg).unwrap();
        let b = train_pairs(&pairs, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn empty_pairs_is_error() {
        assert!(train_pairs(&[], &TrainConfig::default()).is_err());
    }

    /// Central finite differences on a handful of randomly chosen
    /// parameters; the full-coverage check lives in the acceptance suite.
    ///
    /// The loss is piecewise quadratic in any single weight, so central
    /// differences are exact away from ReLU/hinge kinks. A mismatch at
    /// the first step size that disappears at a smaller one is a kink
    /// inside the sampling window, not a gradient bug.
    #[test]
    fn analytic_gradient_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pairs = random_pairs(2, &mut rng);
        let params = init_params(9);
        let eps = 0.2;
        let (_, grads) = loss_and_gradients(&params, &pairs, eps);

        for _ in 0..12 {
            let l = rng.random_range(0..NUM_LAYERS);
            let k = rng.random_range(0..params.layers()[l].weights().len());
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.layers_mut()[l].weights_mut()[k] += delta;
                pairs
                    .iter()
                    .map(|(pos, neg)| {
                        let fl = super::super::forward_patch(&p, &pos.left_patch);
                        let fp = super::super::forward_patch(&p, &pos.right_patch);
                        let fn_ = super::super::forward_patch(&p, &neg.right_patch);
                        hinge_loss(dot(&fl, &fp), dot(&fl, &fn_), eps)
                    })
                    .sum::<f64>()
            };
            let got = grads.weights(l)[k];
            let rel_err = |h: f64| {
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                (got - fd).abs() / got.abs().max(fd.abs()).max(1e-8)
            };
            let err = rel_err(1e-4).min(rel_err(1e-6));
            assert!(err < 1e-3, "layer {l} weight {k}: rel err {err}");
        }
    }
}
