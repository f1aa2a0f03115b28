//! Semi-global aggregation: per-direction path costs, multi-direction
//! averaging, winner-takes-all extraction, and an explicit energy
//! evaluator used as a test oracle.

use rayon::prelude::*;

use crate::cost::CostVolume;
use crate::error::{Error, Result};
use crate::imageio::DisparityMap;

/// The standard 16-path direction set: 8 unit vectors plus 8 knight moves.
pub fn default_directions() -> Vec<(i32, i32)> {
    vec![
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
        (2, 1),
        (2, -1),
        (-2, 1),
        (-2, -1),
        (1, 2),
        (1, -2),
        (-1, 2),
        (-1, -2),
    ]
}

/// Penalties and scan directions for semi-global aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SgmConfig {
    pub p1: f64,
    pub p2: f64,
    pub directions: Vec<(i32, i32)>,
}

impl SgmConfig {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        let cfg = SgmConfig {
            p1,
            p2,
            directions: default_directions(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_directions(mut self, directions: Vec<(i32, i32)>) -> Result<Self> {
        self.directions = directions;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p1.is_finite() && self.p2.is_finite()) || self.p1 < 0.0 || self.p1 > self.p2 {
            return Err(Error::InvalidConfig(format!(
                "penalties must satisfy 0 <= p1 <= p2, got p1 = {}, p2 = {}",
                self.p1, self.p2
            )));
        }
        if self.directions.is_empty() {
            return Err(Error::InvalidConfig("empty direction list".into()));
        }
        for (i, &d) in self.directions.iter().enumerate() {
            if d == (0, 0) {
                return Err(Error::InvalidConfig("zero direction vector".into()));
            }
            if self.directions[..i].contains(&d) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate direction {d:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Path costs averaged over directions; same shape as the cost volume.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedVolume {
    width: usize,
    height: usize,
    d_max: usize,
    data: Vec<f64>,
}

impl AggregatedVolume {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, d: usize) -> f64 {
        self.data[(y * self.width + x) * (self.d_max + 1) + d]
    }
}

/// Path cost `L_r` along one direction, evaluated in scan order.
///
/// Pixels whose predecessor `p - r` falls off the raster start fresh with
/// the raw cost. Values equal the literal recursion; no running minimum is
/// subtracted.
pub fn path_cost(c: &CostVolume, r: (i32, i32), cfg: &SgmConfig) -> Result<AggregatedVolume> {
    if r == (0, 0) {
        return Err(Error::InvalidConfig("zero direction vector".into()));
    }
    cfg.validate()?;
    let (w, h, planes) = (c.width(), c.height(), c.d_max() + 1);
    let (dx, dy) = r;
    let mut out = vec![0.0f64; w * h * planes];

    let ys: Vec<usize> = if dy >= 0 {
        (0..h).collect()
    } else {
        (0..h).rev().collect()
    };
    let xs: Vec<usize> = if dx >= 0 {
        (0..w).collect()
    } else {
        (0..w).rev().collect()
    };

    for &y in &ys {
        for &x in &xs {
            let base = (y * w + x) * planes;
            let px = x as i64 - dx as i64;
            let py = y as i64 - dy as i64;
            let raw = c.pixel_costs(x, y);
            if px < 0 || px >= w as i64 || py < 0 || py >= h as i64 {
                for d in 0..planes {
                    out[base + d] = raw[d] as f64;
                }
                continue;
            }
            let prev_base = (py as usize * w + px as usize) * planes;
            let mut prev_min = f64::INFINITY;
            for d in 0..planes {
                prev_min = prev_min.min(out[prev_base + d]);
            }
            for d in 0..planes {
                let mut best = out[prev_base + d];
                if d > 0 {
                    best = best.min(out[prev_base + d - 1] + cfg.p1);
                }
                if d + 1 < planes {
                    best = best.min(out[prev_base + d + 1] + cfg.p1);
                }
                best = best.min(prev_min + cfg.p2);
                out[base + d] = raw[d] as f64 + best;
            }
        }
    }

    Ok(AggregatedVolume {
        width: w,
        height: h,
        d_max: c.d_max(),
        data: out,
    })
}

/// Average of the path costs over all configured directions.
///
/// Directions are processed in chunks computed in parallel and summed in
/// declaration order, so the result is bit-stable across runs.
pub fn aggregate(c: &CostVolume, cfg: &SgmConfig) -> Result<AggregatedVolume> {
    cfg.validate()?;
    let n = cfg.directions.len() as f64;
    let mut acc = vec![0.0f64; c.width() * c.height() * (c.d_max() + 1)];

    for chunk in cfg.directions.chunks(4) {
        let volumes: Vec<Result<AggregatedVolume>> =
            chunk.par_iter().map(|&r| path_cost(c, r, cfg)).collect();
        for vol in volumes {
            let vol = vol?;
            for (a, v) in acc.iter_mut().zip(vol.data.iter()) {
                *a += v;
            }
        }
    }
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(AggregatedVolume {
        width: c.width(),
        height: c.height(),
        d_max: c.d_max(),
        data: acc,
    })
}

/// Winner-takes-all disparity extraction; ties break to the smallest d.
pub fn wta(a: &AggregatedVolume) -> DisparityMap {
    let planes = a.d_max + 1;
    let disp: Vec<u16> = a
        .data
        .chunks_exact(planes)
        .map(|costs| {
            let mut best = 0usize;
            for (d, &v) in costs.iter().enumerate() {
                if v < costs[best] {
                    best = d;
                }
            }
            best as u16
        })
        .collect();
    DisparityMap::new(a.width, a.height, disp, a.d_max).expect("argmin stays within d_max")
}

/// Neighborhood used by the smoothness terms of the energy evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    Four,
    Eight,
}

impl Neighborhood {
    fn offsets(&self) -> &'static [(i32, i32)] {
        match self {
            Neighborhood::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Neighborhood::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Literal smoothness-regularized energy of a disparity map.
///
/// Smoothness terms run over ordered pixel pairs, so each undirected
/// neighbor pair contributes twice. Used as a test oracle, not in the
/// pipeline.
pub fn energy(
    d: &DisparityMap,
    c: &CostVolume,
    cfg: &SgmConfig,
    neighborhood: Neighborhood,
) -> Result<f64> {
    if d.width() != c.width() || d.height() != c.height() {
        return Err(Error::DimensionMismatch(format!(
            "disparity map {}x{} vs cost volume {}x{}",
            d.width(),
            d.height(),
            c.width(),
            c.height()
        )));
    }
    let (w, h) = (d.width(), d.height());
    let mut total = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let dp = d.get(x, y);
            total += c.at(x, y, dp as usize) as f64;
            for &(ox, oy) in neighborhood.offsets() {
                let qx = x as i32 + ox;
                let qy = y as i32 + oy;
                if qx < 0 || qx >= w as i32 || qy < 0 || qy >= h as i32 {
                    continue;
                }
                let dq = d.get(qx as usize, qy as usize);
                let diff = (dp as i32 - dq as i32).unsigned_abs();
                if diff == 1 {
                    total += cfg.p1;
                } else if diff > 1 {
                    total += cfg.p2;
                }
            }
        }
    }
    Ok(total)
}
