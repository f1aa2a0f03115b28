//! Initial matching-cost volumes: SAD and Census over fixed support windows.
//!
//! Costs live in `[0, 3.2]` for SAD and `[0, (2r+1)^2 - 1]` for Census
//! (80 with the default 9x9 window). Window reads replicate the image
//! border; a candidate whose right-image center falls off the raster gets
//! the kind's maximum cost.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

/// Upper bound of the SAD cost range.
pub const SAD_MAX_COST: f32 = 3.2;

/// Which matching-cost function produced a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Sad,
    Census,
    Refined,
}

impl CostKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostKind::Sad => "sad",
            CostKind::Census => "census",
            CostKind::Refined => "refined",
        }
    }
}

/// Square support window given by its radius; the default 4 yields 9x9.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub radius: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { radius: 4 }
    }
}

impl WindowSpec {
    pub fn new(radius: usize) -> Self {
        WindowSpec { radius }
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn pixel_count(&self) -> usize {
        self.side() * self.side()
    }

    /// Descriptor length: window pixels minus the center.
    pub fn census_bits(&self) -> usize {
        self.pixel_count() - 1
    }
}

/// W x H x (d_max + 1) matching costs, row-major by pixel then disparity.
#[derive(Debug, Clone)]
pub struct CostVolume {
    width: usize,
    height: usize,
    d_max: usize,
    kind: CostKind,
    data: Vec<f32>,
}

impl CostVolume {
    pub fn new(
        width: usize,
        height: usize,
        d_max: usize,
        kind: CostKind,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expected = width * height * (d_max + 1);
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "cost volume needs {expected} entries, got {}",
                data.len()
            )));
        }
        if !data.iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(Error::DegenerateInput(
                "cost volume entries must be finite and non-negative".into(),
            ));
        }
        Ok(CostVolume {
            width,
            height,
            d_max,
            kind,
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

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, d: usize) -> usize {
        (y * self.width + x) * (self.d_max + 1) + d
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, d: usize) -> f32 {
        self.data[self.index(x, y, d)]
    }

    /// All costs for one pixel, indexed by disparity.
    #[inline]
    pub fn pixel_costs(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * (self.d_max + 1);
        &self.data[base..base + self.d_max + 1]
    }

}

fn check_pair(left: &GrayImage, right: &GrayImage) -> Result<()> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::DimensionMismatch(format!(
            "stereo pair {}x{} vs {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    Ok(())
}

/// Sum of absolute differences over the support window, scaled to `[0, 3.2]`.
///
/// Per-pixel absolute differences are clamped at 1 and the window sum is
/// multiplied by `3.2 / window_pixels`, so the volume occupies the full
/// declared range. Candidates with the window center off the right raster
/// cost the maximum 3.2.
pub fn sad_cost(
    left: &GrayImage,
    right: &GrayImage,
    d_max: usize,
    w: WindowSpec,
) -> Result<CostVolume> {
    check_pair(left, right)?;
    let (width, height) = (left.width(), left.height());
    let r = w.radius as isize;
    let scale = SAD_MAX_COST as f64 / w.pixel_count() as f64;
    let planes = d_max + 1;

    let mut data = vec![0.0f32; width * height * planes];
    data.par_chunks_mut(width * planes)
        .enumerate()
        .for_each(|(y, row)| {
            let y = y as isize;
            for x in 0..width {
                let costs = &mut row[x * planes..(x + 1) * planes];
                for (d, cost) in costs.iter_mut().enumerate() {
                    if d > x {
                        *cost = SAD_MAX_COST;
                        continue;
                    }
                    let mut sum = 0.0f64;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let l = left.get_clamped(x as isize + dx, y + dy);
                            let rv = right.get_clamped(x as isize + dx - d as isize, y + dy);
                            sum += f64::from((l - rv).abs()).min(1.0);
                        }
                    }
                    *cost = (sum * scale) as f32;
                }
            }
        });
    CostVolume::new(width, height, d_max, CostKind::Sad, data)
}

/// Census bit descriptors for every pixel of an image.
///
/// Bit k is 1 iff the center intensity is strictly larger than the k-th
/// window neighbor (row-major order, center skipped). Neighbor reads
/// replicate the border.
#[derive(Debug, Clone)]
pub struct CensusDescriptors {
    width: usize,
    height: usize,
    bits: usize,
    words_per_pixel: usize,
    data: Vec<u64>,
}

impl CensusDescriptors {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Descriptor length in bits.
    pub fn bits(&self) -> usize {
        self.bits
    }

    #[inline]
    pub fn descriptor(&self, x: usize, y: usize) -> &[u64] {
        let base = (y * self.width + x) * self.words_per_pixel;
        &self.data[base..base + self.words_per_pixel]
    }

    /// Reads one bit of a descriptor (for tests and inspection).
    pub fn bit(&self, x: usize, y: usize, k: usize) -> bool {
        debug_assert!(k < self.bits);
        let desc = self.descriptor(x, y);
        desc[k / 64] >> (k % 64) & 1 == 1
    }

    /// Hamming distance between the descriptor at `(x, y)` here and the
    /// descriptor at `(ox, oy)` in `other`.
    #[inline]
    pub fn hamming(&self, x: usize, y: usize, other: &CensusDescriptors, ox: usize, oy: usize) -> u32 {
        self.descriptor(x, y)
            .iter()
            .zip(other.descriptor(ox, oy))
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Census transform of an image under the given window.
pub fn census_transform(img: &GrayImage, w: WindowSpec) -> CensusDescriptors {
    let (width, height) = (img.width(), img.height());
    let bits = w.census_bits();
    let words_per_pixel = bits.div_ceil(64).max(1);
    let r = w.radius as isize;

    let mut data = vec![0u64; width * height * words_per_pixel];
    data.par_chunks_mut(width * words_per_pixel)
        .enumerate()
        .for_each(|(y, row)| {
            let y = y as isize;
            for x in 0..width {
                let center = img.get(x, y as usize);
                let words = &mut row[x * words_per_pixel..(x + 1) * words_per_pixel];
                let mut k = 0usize;
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        if center > img.get_clamped(x as isize + dx, y + dy) {
                            words[k / 64] |= 1u64 << (k % 64);
                        }
                        k += 1;
                    }
                }
            }
        });
    CensusDescriptors {
        width,
        height,
        bits,
        words_per_pixel,
        data,
    }
}

/// Hamming distance between census descriptors of the left pixel and the
/// disparity-shifted right pixel. Off-raster candidates cost the maximum
/// (descriptor length).
pub fn census_cost(
    left: &GrayImage,
    right: &GrayImage,
    d_max: usize,
    w: WindowSpec,
) -> Result<CostVolume> {
    check_pair(left, right)?;
    let (width, height) = (left.width(), left.height());
    let desc_l = census_transform(left, w);
    let desc_r = census_transform(right, w);
    let max_cost = w.census_bits() as f32;
    let planes = d_max + 1;

    let mut data = vec![0.0f32; width * height * planes];
    data.par_chunks_mut(width * planes)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let costs = &mut row[x * planes..(x + 1) * planes];
                for (d, cost) in costs.iter_mut().enumerate() {
                    *cost = if d > x {
                        max_cost
                    } else {
                        desc_l.hamming(x, y, &desc_r, x - d, y) as f32
                    };
                }
            }
        });
    CostVolume::new(width, height, d_max, CostKind::Census, data)
}

const VOLUME_MAGIC: &[u8; 8] = b"GCPVOL01";

/// Writes a volume as little-endian binary: magic, width/height/d_max as
/// u32, then f32 costs pixel-major then disparity.
pub fn dump_volume(v: &CostVolume, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
    write(VOLUME_MAGIC)?;
    write(&(v.width as u32).to_le_bytes())?;
    write(&(v.height as u32).to_le_bytes())?;
    write(&(v.d_max as u32).to_le_bytes())?;
    for c in &v.data {
        write(&c.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a volume written by [`dump_volume`]. The cost kind is not part of
/// the format and must be supplied by the caller.
pub fn load_volume(path: &Path, kind: CostKind) -> Result<CostVolume> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);

    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != VOLUME_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a cost-volume dump",
            path.display()
        )));
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |input: &mut BufReader<std::fs::File>| -> Result<u32> {
        input
            .read_exact(&mut u32_buf)
            .map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let width = read_u32(&mut input)? as usize;
    let height = read_u32(&mut input)? as usize;
    let d_max = read_u32(&mut input)? as usize;

    let count = width * height * (d_max + 1);
    let mut data = Vec::with_capacity(count);
    let mut f32_buf = [0u8; 4];
    for _ in 0..count {
        input
            .read_exact(&mut f32_buf)
            .map_err(|e| Error::io(path, e))?;
        data.push(f32::from_le_bytes(f32_buf));
    }
    CostVolume::new(width, height, d_max, kind, data)
}
