//! Training-example sampling around known ground-truth disparities.

use rand::Rng;

use super::{Patch, Polarity, TrainConfig, TrainingExample, PATCH_RADIUS};
use crate::error::{Error, Result};
use crate::imageio::{GrayImage, GroundTruth};

/// True when every offset in `[-bound, bound]` keeps the right patch
/// inside the image. Keeping the rule offset-independent makes the usable
/// pixel set (and so the example count) deterministic.
fn usable(x: usize, y: usize, d: i64, width: usize, height: usize, bound: i64) -> bool {
    let r = PATCH_RADIUS as i64;
    let (x, y) = (x as i64, y as i64);
    let base = x - d;
    x >= r
        && x + r < width as i64
        && y >= r
        && y + r < height as i64
        && base - bound >= r
        && base + bound + r < width as i64
}

/// Draws one positive and one negative example per usable ground-truth
/// pixel. Both share the left patch; the right patch centers at
/// `x - d_t + o` with `o_pos` uniform in `[-p_high, p_high]` and `o_neg`
/// uniform over `[-n_high, -n_low] u [n_low, n_high]`.
pub fn sample_examples(
    left: &GrayImage,
    right: &GrayImage,
    gt: &GroundTruth,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<(TrainingExample, TrainingExample)>> {
    cfg.validate()?;
    if left.width() != right.width()
        || left.height() != right.height()
        || left.width() != gt.width()
        || left.height() != gt.height()
    {
        return Err(Error::DimensionMismatch(
            "stereo pair and ground truth must share dimensions".into(),
        ));
    }
    if gt.known_count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }

    let bound = cfg.n_high.max(cfg.p_high) as i64;
    let (width, height) = (left.width(), left.height());
    let mut pairs = Vec::new();

    for y in 0..height {
        for x in 0..width {
            let Some(d_t) = gt.get(x, y) else {
                continue;
            };
            let d = d_t.round() as i64;
            if !usable(x, y, d, width, height, bound) {
                continue;
            }
            let base = x as i64 - d;

            let o_pos = rng.random_range(-(cfg.p_high as i64)..=cfg.p_high as i64);
            let mag = rng.random_range(cfg.n_low..=cfg.n_high) as i64;
            let o_neg = if rng.random_bool(0.5) { mag } else { -mag };

            let left_patch = Patch::from_image(left, x, y)?;
            let pos_patch = Patch::from_image(right, (base + o_pos) as usize, y)?;
            let neg_patch = Patch::from_image(right, (base + o_neg) as usize, y)?;
            pairs.push((
                TrainingExample {
                    left_patch: left_patch.clone(),
                    right_patch: pos_patch,
                    polarity: Polarity::Positive,
                },
                TrainingExample {
                    left_patch,
                    right_patch: neg_patch,
                    polarity: Polarity::Negative,
                },
            ));
        }
    }
    Ok(pairs)
}

/// Number of pixels [`sample_examples`] will draw from, computed without
/// consuming randomness.
#[cfg(test)]
pub(crate) fn usable_pixel_count(gt: &GroundTruth, cfg: &TrainConfig) -> usize {
    let bound = cfg.n_high.max(cfg.p_high) as i64;
    let mut count = 0;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if let Some(d_t) = gt.get(x, y) {
                if usable(x, y, d_t.round() as i64, gt.width(), gt.height(), bound) {
                    count += 1;
                }
            }
        }
    }
    count
}
