//! Random-dot stereogram generation with exact integer ground truth,
//! used for desk-scale experiments and tests.
//!
//! The right image is i.i.d. noise; the left image copies
//! `right[x - d(x, y)]` wherever that column exists, so every such pixel
//! has an exact match at its true disparity. Pixels whose match would
//! leave the raster get fresh noise and unknown ground truth.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::imageio::{self, GrayImage, GroundTruth};

/// Integer disparity per pixel that drives stereogram construction.
#[derive(Debug, Clone)]
pub struct DisparityField {
    width: usize,
    height: usize,
    disp: Vec<u16>,
}

impl DisparityField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.disp[y * self.width + x]
    }

    /// Same disparity everywhere.
    pub fn constant(width: usize, height: usize, d: u16) -> Self {
        DisparityField {
            width,
            height,
            disp: vec![d; width * height],
        }
    }

    /// Background disparity with a foreground rectangle at a nearer depth,
    /// mimicking a depth discontinuity.
    pub fn with_square(
        width: usize,
        height: usize,
        d_background: u16,
        d_foreground: u16,
        rect: (usize, usize, usize, usize),
    ) -> Self {
        let (rx, ry, rw, rh) = rect;
        let mut disp = vec![d_background; width * height];
        for y in ry..(ry + rh).min(height) {
            for x in rx..(rx + rw).min(width) {
                disp[y * width + x] = d_foreground;
            }
        }
        DisparityField {
            width,
            height,
            disp,
        }
    }

    pub fn max_disparity(&self) -> u16 {
        self.disp.iter().copied().max().unwrap_or(0)
    }
}

/// One generated stereo pair with its exact ground truth.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub left: GrayImage,
    pub right: GrayImage,
    pub gt: GroundTruth,
}

/// Builds a random-dot stereo pair realizing the given disparity field.
pub fn random_dot_pair(field: &DisparityField, rng: &mut impl Rng) -> SynthFrame {
    let (w, h) = (field.width, field.height);
    let right_data: Vec<f32> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    let right = GrayImage::new(w, h, right_data).expect("noise raster is valid");

    let mut left_data = vec![0.0f32; w * h];
    let mut gt = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = field.get(x, y) as usize;
            left_data[y * w + x] = if x >= d {
                gt[y * w + x] = Some(d as f32);
                right.get(x - d, y)
            } else {
                rng.random_range(0.0..1.0)
            };
        }
    }
    let left = GrayImage::new(w, h, left_data).expect("noise raster is valid");
    let gt = GroundTruth::new(w, h, gt).expect("disparities satisfy d <= x");
    SynthFrame { left, right, gt }
}

/// Adds independent Gaussian intensity noise, as if each camera had its
/// own sensor noise. Matching stays anchored to the true disparity but is
/// no longer exact, so the baseline matcher makes real errors.
pub fn add_intensity_noise(img: &GrayImage, sigma: f32, rng: &mut impl Rng) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0f32, sigma).expect("sigma is positive and finite");
    let data = img.data().iter().map(|&v| v + normal.sample(rng)).collect();
    GrayImage::new(img.width(), img.height(), data).expect("noise keeps samples finite")
}

/// Keeps every `stride`-th known ground-truth pixel and drops the rest;
/// handy for capping the number of training examples.
pub fn thin_ground_truth(gt: &GroundTruth, stride: usize) -> GroundTruth {
    assert!(stride > 0);
    let mut kept = 0usize;
    let disp: Vec<Option<f32>> = gt
        .disp()
        .iter()
        .map(|d| {
            d.and_then(|v| {
                kept += 1;
                if (kept - 1) % stride == 0 {
                    Some(v)
                } else {
                    None
                }
            })
        })
        .collect();
    GroundTruth::new(gt.width(), gt.height(), disp).expect("thinning preserves validity")
}

/// Writes `count` frames into `dir` using the dataset naming convention
/// (`NNNNNN_left.png`, `NNNNNN_right.png`, `NNNNNN_gt.png`).
///
/// Even-numbered frames carry a foreground square; ground truth can be
/// thinned with `gt_stride` > 1 and per-camera noise added with
/// `noise_sigma` > 0. Clean images quantize to 8-bit PNG with exact
/// matches preserved since both sides quantize identically.
pub fn write_synthetic_dataset(
    dir: &Path,
    count: usize,
    width: usize,
    height: usize,
    d_max: u16,
    gt_stride: usize,
    noise_sigma: f32,
    rng: &mut impl Rng,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    for i in 0..count {
        let field = synthetic_field(i, width, height, d_max, rng);
        let frame = random_dot_pair(&field, rng);
        let left = add_intensity_noise(&frame.left, noise_sigma, rng);
        let right = add_intensity_noise(&frame.right, noise_sigma, rng);
        let gt = if gt_stride > 1 {
            thin_ground_truth(&frame.gt, gt_stride)
        } else {
            frame.gt
        };
        imageio::save_gray_u8(&left, &dir.join(format!("{i:06}_left.png")))?;
        imageio::save_gray_u8(&right, &dir.join(format!("{i:06}_right.png")))?;
        imageio::save_kitti_gt(&gt, &dir.join(format!("{i:06}_gt.png")))?;
    }
    Ok(())
}

/// Disparity field used by generated datasets: alternating constant and
/// square-on-background layouts with varying levels.
pub fn synthetic_field(
    index: usize,
    width: usize,
    height: usize,
    d_max: u16,
    rng: &mut impl Rng,
) -> DisparityField {
    let hi = d_max.max(1);
    let d_bg = (index as u16) % (hi / 2 + 1);
    if index % 2 == 0 {
        let d_fg = (d_bg + 1 + (index as u16 / 2) % (hi - d_bg).max(1)).min(hi);
        let rw = (width / 3).max(1);
        let rh = (height / 3).max(1);
        let rx = rng.random_range(0..width.saturating_sub(rw).max(1));
        let ry = rng.random_range(0..height.saturating_sub(rh).max(1));
        DisparityField::with_square(width, height, d_bg, d_fg, (rx, ry, rw, rh))
    } else {
        DisparityField::constant(width, height, d_bg.max(1).min(hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_are_exact_at_true_disparity() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let field = DisparityField::with_square(24, 16, 2, 5, (8, 4, 8, 6));
        let frame = random_dot_pair(&field, &mut rng);
        for y in 0..16 {
            for x in 0..24 {
                match frame.gt.get(x, y) {
                    Some(d) => {
                        let d = d as usize;
                        assert_eq!(frame.left.get(x, y), frame.right.get(x - d, y));
                    }
                    None => assert!(x < field.get(x, y) as usize),
                }
            }
        }
    }

    #[test]
    fn thinning_keeps_every_kth() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let field = DisparityField::constant(20, 10, 3);
        let frame = random_dot_pair(&field, &mut rng);
        let full = frame.gt.known_count();
        let thin = thin_ground_truth(&frame.gt, 4);
        assert_eq!(thin.known_count(), full.div_ceil(4));
    }

    #[test]
    fn noise_perturbs_but_preserves_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let field = DisparityField::constant(16, 12, 2);
        let frame = random_dot_pair(&field, &mut rng);
        let noisy = add_intensity_noise(&frame.left, 0.1, &mut rng);
        assert_eq!(noisy.width(), 16);
        assert_eq!(noisy.height(), 12);
        assert_ne!(noisy.data(), frame.left.data());
        let clean = add_intensity_noise(&frame.left, 0.0, &mut rng);
        assert_eq!(clean.data(), frame.left.data());
    }

    #[test]
    fn dataset_files_follow_convention() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        write_synthetic_dataset(dir.path(), 3, 20, 12, 4, 1, 0.0, &mut rng).unwrap();
        for i in 0..3 {
            for suffix in ["left", "right", "gt"] {
                assert!(dir.path().join(format!("{i:06}_{suffix}.png")).exists());
            }
        }
        // quantized pair still matches exactly at the true disparity
        let left = imageio::load_gray(&dir.path().join("000001_left.png")).unwrap();
        let right = imageio::load_gray(&dir.path().join("000001_right.png")).unwrap();
        let gt = imageio::load_kitti_gt(&dir.path().join("000001_gt.png")).unwrap();
        let mut checked = 0;
        for y in 0..12 {
            for x in 0..20 {
                if let Some(d) = gt.get(x, y) {
                    let d = d as usize;
                    assert_eq!(left.get(x, y), right.get(x - d, y));
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }
}
