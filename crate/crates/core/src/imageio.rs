//! Raster containers and file I/O: grayscale stereo inputs, ground-truth
//! disparities, and disparity map output.
//!
//! Disparity PNGs follow the 16-bit convention `stored = round(disp * 256)`
//! with 0 reserved for pixels without a valid disparity.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};

use crate::error::{Error, Result};

/// Single-channel raster with `f32` intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    /// Builds an image from row-major data. Rejects empty dimensions,
    /// length mismatches and non-finite samples.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "zero-dimension image ({width}x{height})"
            )));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateInput("non-finite intensity".into()));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    /// Clamp-to-edge read; accepts coordinates outside the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// Per-pixel ground-truth disparity; `None` marks unknown pixels.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    width: usize,
    height: usize,
    disp: Vec<Option<f32>>,
}

impl GroundTruth {
    pub fn new(width: usize, height: usize, disp: Vec<Option<f32>>) -> Result<Self> {
        if disp.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} ground-truth entries for {width}x{height}, got {}",
                width * height,
                disp.len()
            )));
        }
        for (i, d) in disp.iter().enumerate() {
            if let Some(d) = d {
                let x = i % width;
                if !d.is_finite() || *d < 0.0 || *d > x as f32 {
                    return Err(Error::DegenerateInput(format!(
                        "ground-truth disparity {d} at column {x} is out of range"
                    )));
                }
            }
        }
        Ok(GroundTruth {
            width,
            height,
            disp,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        self.disp[y * self.width + x]
    }

    pub fn disp(&self) -> &[Option<f32>] {
        &self.disp
    }

    pub fn known_count(&self) -> usize {
        self.disp.iter().filter(|d| d.is_some()).count()
    }
}

/// Integer disparity per pixel, the output of winner-takes-all extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    disp: Vec<u16>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, disp: Vec<u16>, d_max: usize) -> Result<Self> {
        if disp.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} disparities for {width}x{height}, got {}",
                width * height,
                disp.len()
            )));
        }
        if disp.iter().any(|&d| d as usize > d_max) {
            return Err(Error::DegenerateInput(format!(
                "disparity exceeds d_max = {d_max}"
            )));
        }
        Ok(DisparityMap {
            width,
            height,
            disp,
        })
    }

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

    pub fn disp(&self) -> &[u16] {
        &self.disp
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, e))
}

/// BT.601 luma from linear-scaled channels.
fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Loads an 8/16-bit grayscale (or RGB, converted by luma) PNG or PGM and
/// scales intensities to `[0, 1]`.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Format(format!(
            "zero-dimension image {}",
            path.display()
        )));
    }
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| {
                luma(
                    p.0[0] as f32 / 255.0,
                    p.0[1] as f32 / 255.0,
                    p.0[2] as f32 / 255.0,
                )
            })
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| {
                luma(
                    p.0[0] as f32 / 255.0,
                    p.0[1] as f32 / 255.0,
                    p.0[2] as f32 / 255.0,
                )
            })
            .collect(),
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| {
                luma(
                    p.0[0] as f32 / 65535.0,
                    p.0[1] as f32 / 65535.0,
                    p.0[2] as f32 / 65535.0,
                )
            })
            .collect(),
        other => {
            return Err(Error::Format(format!(
                "unsupported pixel format {:?} in {}",
                other.color(),
                path.display()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// Zero-mean, unit-variance rescale (population standard deviation).
pub fn normalize(img: &GrayImage) -> Result<GrayImage> {
    let n = img.data.len();
    if n < 2 {
        return Err(Error::DegenerateInput(
            "normalize needs at least two pixels".into(),
        ));
    }
    let mean = img.data.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let var = img
        .data
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    if var <= 0.0 {
        return Err(Error::DegenerateInput(
            "normalize called on a constant image".into(),
        ));
    }
    let std = var.sqrt();
    let data = img
        .data
        .iter()
        .map(|&v| ((v as f64 - mean) / std) as f32)
        .collect();
    GrayImage::new(img.width, img.height, data)
}

/// Reads a KITTI-style disparity PNG: 16-bit single channel, value/256,
/// 0 marks unknown pixels.
///
/// Pixels whose disparity would place the match left of the raster
/// (`d > x`, possible in LIDAR-projected ground truth near the left
/// border) are treated as unknown so the in-memory invariant holds.
pub fn load_kitti_gt(path: &Path) -> Result<GroundTruth> {
    let img = decode(path)?;
    let buf = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "ground truth {} must be 16-bit single-channel, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let disp = buf
        .enumerate_pixels()
        .map(|(x, _, p)| {
            let v = p.0[0];
            if v == 0 || v as f32 / 256.0 > x as f32 {
                None
            } else {
                Some(v as f32 / 256.0)
            }
        })
        .collect();
    GroundTruth::new(w, h, disp)
}

/// As [`load_kitti_gt`], additionally rejecting rasters whose size differs
/// from `expect` (width, height).
pub fn load_kitti_gt_with_size(path: &Path, expect: (usize, usize)) -> Result<GroundTruth> {
    let gt = load_kitti_gt(path)?;
    if (gt.width, gt.height) != expect {
        return Err(Error::DimensionMismatch(format!(
            "ground truth {} is {}x{}, expected {}x{}",
            path.display(),
            gt.width,
            gt.height,
            expect.0,
            expect.1
        )));
    }
    Ok(gt)
}

/// Writes a disparity map as 16-bit PNG, `stored = disp * 256`.
///
/// Disparity 0 stores as 0 and is indistinguishable from "unknown" on
/// re-read; 0 is reserved as invalid by convention.
pub fn save_disparity_png(d: &DisparityMap, path: &Path) -> Result<()> {
    let mut buf = ImageBuffer::<Luma<u16>, Vec<u16>>::new(d.width as u32, d.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let v = d.get(x as usize, y as usize) as u32 * 256;
        if v > u16::MAX as u32 {
            return Err(Error::Format(format!(
                "disparity {} does not fit the 16-bit encoding",
                d.get(x as usize, y as usize)
            )));
        }
        *px = Luma([v as u16]);
    }
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// 8-bit color preview of a disparity map (blue = near 0, red = d_max).
pub fn save_disparity_preview(d: &DisparityMap, d_max: usize, path: &Path) -> Result<()> {
    let mut buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::new(d.width as u32, d.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let t = if d_max == 0 {
            0.0
        } else {
            d.get(x as usize, y as usize) as f32 / d_max as f32
        };
        *px = Rgb(jet(t));
    }
    buf.save(path).map_err(|e| Error::image(path, e))
}

fn jet(t: f32) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * t - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * t - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * t - 1.0).abs()).clamp(0.0, 1.0);
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Writes intensities in `[0, 1]` as an 8-bit grayscale PNG or PGM
/// (chosen by extension). Values outside `[0, 1]` are clamped.
pub fn save_gray_u8(img: &GrayImage, path: &Path) -> Result<()> {
    let mut buf = ImageBuffer::<Luma<u8>, Vec<u8>>::new(img.width as u32, img.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let v = (img.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        *px = Luma([v]);
    }
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// Writes a ground-truth raster in the 16-bit value/256 PNG encoding.
pub fn save_kitti_gt(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut buf = ImageBuffer::<Luma<u16>, Vec<u16>>::new(gt.width as u32, gt.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let v = match gt.get(x as usize, y as usize) {
            Some(d) => {
                let stored = (d * 256.0).round();
                if stored > u16::MAX as f32 {
                    return Err(Error::Format(format!(
                        "ground-truth disparity {d} does not fit the 16-bit encoding"
                    )));
                }
                stored as u16
            }
            None => 0,
        };
        *px = Luma([v]);
    }
    buf.save(path).map_err(|e| Error::image(path, e))
}
