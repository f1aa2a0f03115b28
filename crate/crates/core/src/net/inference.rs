//! Dense confidence inference: per-image feature maps computed once by
//! whole-image convolution, then inner products per pixel and disparity.

use rayon::prelude::*;

use super::tensor::{conv_valid_par, relu_inplace, Tensor3};
use super::{ConfidenceVolume, NetworkParams, FEATURE_MAPS, PATCH_RADIUS};
use crate::error::{Error, Result};
use crate::imageio::GrayImage;

/// Per-pixel feature descriptors of a whole image.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// The 64-element descriptor of pixel `(x, y)`.
    #[inline]
    pub fn descriptor(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * FEATURE_MAPS;
        &self.data[base..base + FEATURE_MAPS]
    }
}

/// Runs the feature extractor over a whole image with clamp-to-edge
/// padding, yielding one descriptor per pixel. Equivalent to forwarding
/// the 9x9 patch centered at each pixel.
pub fn feature_maps(params: &NetworkParams, img: &GrayImage) -> FeatureMap {
    let (w, h) = (img.width(), img.height());
    let r = PATCH_RADIUS as isize;

    let mut padded = Tensor3::zeros(h + 2 * PATCH_RADIUS, w + 2 * PATCH_RADIUS, 1);
    for y in 0..padded.h {
        for x in 0..padded.w {
            padded.data[y * padded.w + x] =
                img.get_clamped(x as isize - r, y as isize - r) as f64;
        }
    }

    let mut t = padded;
    for layer in params.layers() {
        t = conv_valid_par(&t, layer);
        relu_inplace(&mut t);
    }
    debug_assert_eq!((t.h, t.w, t.c), (h, w, FEATURE_MAPS));
    FeatureMap {
        width: w,
        height: h,
        data: t.data.iter().map(|&v| v as f32).collect(),
    }
}

/// Dense matching-confidence volume, min-max normalized into `[0, 1]`.
///
/// Raw confidences are inner products of the left descriptor at `p` and
/// the right descriptor at `p - d`; candidates off the right raster get a
/// raw confidence of 0. A constant raw volume normalizes to all zeros, so
/// no pixel can become a GCP.
pub fn confidence_volume(
    params: &NetworkParams,
    left: &GrayImage,
    right: &GrayImage,
    d_max: usize,
) -> Result<ConfidenceVolume> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::DimensionMismatch(format!(
            "stereo pair {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    let (w, h) = (left.width(), left.height());
    let planes = d_max + 1;
    let feat_l = feature_maps(params, left);
    let feat_r = feature_maps(params, right);

    let mut raw = vec![0.0f32; w * h * planes];
    raw.par_chunks_mut(w * planes)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let fl = feat_l.descriptor(x, y);
                let out = &mut row[x * planes..(x + 1) * planes];
                for (d, slot) in out.iter_mut().enumerate() {
                    if d > x {
                        *slot = 0.0;
                    } else {
                        let fr = feat_r.descriptor(x - d, y);
                        let mut s = 0.0f64;
                        for (a, b) in fl.iter().zip(fr) {
                            s += *a as f64 * *b as f64;
                        }
                        *slot = s as f32;
                    }
                }
            }
        });

    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in &raw {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo >= hi {
        raw.fill(0.0);
    } else {
        let range = (hi - lo) as f64;
        for v in raw.iter_mut() {
            *v = (((*v - lo) as f64) / range) as f32;
        }
    }
    ConfidenceVolume::new(w, h, d_max, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{confidence, init_params, Patch};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn feature_maps_match_per_patch_forward() {
        let params = init_params(50);
        let img = noise(10, 8, 51);
        let fm = feature_maps(&params, &img);
        for y in 0..8 {
            for x in 0..10 {
                let patch = Patch::from_image_clamped(&img, x as isize, y as isize);
                let want = crate::net::forward_patch(&params, &patch);
                let got = fm.descriptor(x, y);
                for (g, w) in got.iter().zip(&want) {
                    assert!((*g as f64 - w).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn volume_matches_per_patch_confidence() {
        let params = init_params(52);
        let left = noise(12, 10, 53);
        let right = noise(12, 10, 54);
        let d_max = 3;
        let vol = confidence_volume(&params, &left, &right, d_max).unwrap();

        // rebuild raw values through the patch-level path, then normalize
        let mut raw = vec![0.0f64; 12 * 10 * 4];
        for y in 0..10 {
            for x in 0..12 {
                let pl = Patch::from_image_clamped(&left, x as isize, y as isize);
                for d in 0..=d_max {
                    let idx = (y * 12 + x) * 4 + d;
                    raw[idx] = if d > x {
                        0.0
                    } else {
                        let pr =
                            Patch::from_image_clamped(&right, x as isize - d as isize, y as isize);
                        confidence(&params, &pl, &pr)
                    };
                }
            }
        }
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi > lo);
        let mut max_diff = 0.0f64;
        for (i, r) in raw.iter().enumerate() {
            let want = (r - lo) / (hi - lo);
            let (x, y, d) = (i / 4 % 12, i / 4 / 12, i % 4);
            max_diff = max_diff.max((vol.at(x, y, d) as f64 - want).abs());
        }
        assert!(max_diff < 1e-4, "max abs diff {max_diff}");
    }

    #[test]
    fn volume_attains_bounds() {
        let params = init_params(55);
        let left = noise(9, 7, 56);
        let right = noise(9, 7, 57);
        let vol = confidence_volume(&params, &left, &right, 2).unwrap();
        let lo = vol.data().iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = vol.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn constant_raw_volume_normalizes_to_zero() {
        // zero weights make every raw confidence 0
        let mut params = init_params(58);
        for l in 0..4 {
            params.layers_mut()[l].weights_mut().fill(0.0);
            params.layers_mut()[l].bias_mut().fill(0.0);
        }
        let left = noise(8, 6, 59);
        let right = noise(8, 6, 60);
        let vol = confidence_volume(&params, &left, &right, 2).unwrap();
        assert!(vol.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let params = init_params(61);
        let a = noise(8, 6, 62);
        let b = noise(7, 6, 63);
        assert!(confidence_volume(&params, &a, &b, 2).is_err());
    }
}
