//! Ground control point selection from a confidence volume and the
//! two-step matching-cost refinement built on it.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::cost::{CostKind, CostVolume};
use crate::error::{Error, Result};
use crate::net::ConfidenceVolume;

/// Per-pixel maximum confidence and its argmax disparity.
#[derive(Debug, Clone)]
pub struct ConfidenceMaps {
    width: usize,
    height: usize,
    cof_c: Vec<f32>,
    cof_d: Vec<u16>,
}

impl ConfidenceMaps {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cof_c(&self) -> &[f32] {
        &self.cof_c
    }

    pub fn cof_d(&self) -> &[u16] {
        &self.cof_d
    }
}

/// GCP labels with the confidence maps they were derived from.
#[derive(Debug, Clone)]
pub struct GcpMask {
    width: usize,
    height: usize,
    theta: f32,
    cof_c: Vec<f32>,
    cof_d: Vec<u16>,
    is_gcp: Vec<bool>,
}

impl GcpMask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Threshold used at construction.
    pub fn theta(&self) -> f32 {
        self.theta
    }

    pub fn cof_c(&self) -> &[f32] {
        &self.cof_c
    }

    pub fn cof_d(&self) -> &[u16] {
        &self.cof_d
    }

    pub fn is_gcp(&self) -> &[bool] {
        &self.is_gcp
    }

    #[inline]
    pub fn gcp_at(&self, x: usize, y: usize) -> bool {
        self.is_gcp[y * self.width + x]
    }

    pub fn gcp_count(&self) -> usize {
        self.is_gcp.iter().filter(|g| **g).count()
    }
}

/// Reduces a confidence volume to its per-pixel maximum and argmax
/// disparity. Ties break to the smallest disparity.
pub fn max_confidence(vol: &ConfidenceVolume) -> ConfidenceMaps {
    let planes = vol.d_max() + 1;
    let mut cof_c = Vec::with_capacity(vol.width() * vol.height());
    let mut cof_d = Vec::with_capacity(vol.width() * vol.height());
    for confs in vol.data().chunks_exact(planes) {
        let mut best = 0usize;
        for (d, &v) in confs.iter().enumerate() {
            if v > confs[best] {
                best = d;
            }
        }
        cof_c.push(confs[best]);
        cof_d.push(best as u16);
    }
    ConfidenceMaps {
        width: vol.width(),
        height: vol.height(),
        cof_c,
        cof_d,
    }
}

/// Marks every pixel whose maximum confidence strictly exceeds `theta`.
pub fn select_gcps(maps: &ConfidenceMaps, theta: f32) -> Result<GcpMask> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let is_gcp = maps.cof_c.iter().map(|&c| c > theta).collect();
    Ok(GcpMask {
        width: maps.width,
        height: maps.height,
        theta,
        cof_c: maps.cof_c.clone(),
        cof_d: maps.cof_d.clone(),
        is_gcp,
    })
}

/// Constant-cost overrides applied during refinement, plus the threshold
/// used for GCP selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub theta: f32,
    pub c_hi: f32,
    pub c_low: f32,
}

impl RefineConfig {
    pub fn new(theta: f32, c_hi: f32, c_low: f32) -> Result<Self> {
        let cfg = RefineConfig { theta, c_hi, c_low };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidConfig(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if !(self.c_low.is_finite() && self.c_hi.is_finite()) || self.c_low >= self.c_hi {
            return Err(Error::InvalidConfig(format!(
                "refinement needs c_low < c_hi, got c_low = {}, c_hi = {}",
                self.c_low, self.c_hi
            )));
        }
        Ok(())
    }

    /// SAD defaults: theta 0.55, c_hi 5, c_low 0.001.
    pub fn sad() -> Self {
        RefineConfig {
            theta: 0.55,
            c_hi: 5.0,
            c_low: 0.001,
        }
    }

    /// Census defaults: theta 0.60, c_hi 200, c_low 1.3.
    pub fn census() -> Self {
        RefineConfig {
            theta: 0.60,
            c_hi: 200.0,
            c_low: 1.3,
        }
    }

    pub fn for_kind(kind: CostKind) -> Self {
        match kind {
            CostKind::Census => RefineConfig::census(),
            _ => RefineConfig::sad(),
        }
    }
}

/// Rewrites a matching-cost volume using GCP labels: non-GCP pixels get
/// `c_hi` at every disparity; GCP pixels keep their costs except at the
/// most confident disparity, which drops to `c_low`.
pub fn refine_costs(c: &CostVolume, mask: &GcpMask, cfg: &RefineConfig) -> Result<CostVolume> {
    cfg.validate()?;
    if mask.width != c.width() || mask.height != c.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs cost volume {}x{}",
            mask.width,
            mask.height,
            c.width(),
            c.height()
        )));
    }
    let planes = c.d_max() + 1;
    let mut data = c.data().to_vec();
    for (p, chunk) in data.chunks_exact_mut(planes).enumerate() {
        if mask.is_gcp[p] {
            let d = mask.cof_d[p] as usize;
            if d >= planes {
                return Err(Error::DimensionMismatch(format!(
                    "confident disparity {d} exceeds volume d_max {}",
                    c.d_max()
                )));
            }
            chunk[d] = cfg.c_low;
        } else {
            chunk.fill(cfg.c_hi);
        }
    }
    CostVolume::new(c.width(), c.height(), c.d_max(), CostKind::Refined, data)
}

/// Writes the GCP mask as an 8-bit PNG, 255 for GCPs and 0 otherwise.
pub fn save_gcp_mask_png(mask: &GcpMask, path: &Path) -> Result<()> {
    let mut buf = ImageBuffer::<Luma<u8>, Vec<u8>>::new(mask.width as u32, mask.height as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        *px = Luma([if mask.gcp_at(x as usize, y as usize) {
            255
        } else {
            0
        }]);
    }
    buf.save(path).map_err(|e| Error::image(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ConfidenceVolume;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vol(w: usize, h: usize, d_max: usize, data: Vec<f32>) -> ConfidenceVolume {
        ConfidenceVolume::new(w, h, d_max, data).unwrap()
    }

    fn random_conf(w: usize, h: usize, d_max: usize, rng: &mut ChaCha8Rng) -> ConfidenceVolume {
        let data = (0..w * h * (d_max + 1))
            .map(|_| rng.random_range(0.0..=1.0))
            .collect();
        vol(w, h, d_max, data)
    }

    #[test]
    fn constant_volume_ties_break_to_zero() {
        let v = vol(3, 2, 2, vec![0.7; 18]);
        let maps = max_confidence(&v);
        assert!(maps.cof_c().iter().all(|&c| c == 0.7));
        assert!(maps.cof_d().iter().all(|&d| d == 0));
    }

    #[test]
    fn single_pixel_max() {
        let v = vol(1, 1, 2, vec![0.1, 0.9, 0.4]);
        let maps = max_confidence(&v);
        assert_eq!(maps.cof_c(), &[0.9]);
        assert_eq!(maps.cof_d(), &[1]);
    }

    #[test]
    fn max_confidence_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let v = random_conf(8, 6, 4, &mut rng);
        let maps = max_confidence(&v);
        for y in 0..6 {
            for x in 0..8 {
                let mut best = 0usize;
                for d in 0..=4 {
                    if v.at(x, y, d) > v.at(x, y, best) {
                        best = d;
                    }
                }
                assert_eq!(maps.cof_c()[y * 8 + x], v.at(x, y, best));
                assert_eq!(maps.cof_d()[y * 8 + x] as usize, best);
            }
        }
    }

    #[test]
    fn theta_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = random_conf(5, 5, 3, &mut rng);
        let maps = max_confidence(&v);
        let none = select_gcps(&maps, 1.0).unwrap();
        assert_eq!(none.gcp_count(), 0);
        let all = select_gcps(&maps, 0.0).unwrap();
        let expected = maps.cof_c().iter().filter(|&&c| c > 0.0).count();
        assert_eq!(all.gcp_count(), expected);
        assert!(select_gcps(&maps, 1.5).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let v = vol(1, 1, 1, vec![0.55, 0.2]);
        let maps = max_confidence(&v);
        let mask = select_gcps(&maps, 0.55).unwrap();
        assert!(!mask.gcp_at(0, 0));
    }

    #[test]
    fn monotone_theta_shrinks_gcps() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let v = random_conf(9, 7, 3, &mut rng);
        let maps = max_confidence(&v);
        let loose = select_gcps(&maps, 0.3).unwrap();
        let tight = select_gcps(&maps, 0.6).unwrap();
        for (t, l) in tight.is_gcp().iter().zip(loose.is_gcp()) {
            assert!(!*t || *l);
        }
    }

    #[test]
    fn refine_all_non_gcp_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = crate::cost::CostVolume::new(
            4,
            3,
            2,
            CostKind::Census,
            (0..36).map(|_| rng.random_range(0.0..80.0)).collect(),
        )
        .unwrap();
        let v = vol(4, 3, 2, vec![0.0; 36]);
        let mask = select_gcps(&max_confidence(&v), 0.5).unwrap();
        let refined = refine_costs(&c, &mask, &RefineConfig::census()).unwrap();
        assert!(refined.data().iter().all(|&x| x == 200.0));
        assert_eq!(refined.kind(), CostKind::Refined);
    }

    #[test]
    fn refine_all_gcp_changes_one_entry_per_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let c = crate::cost::CostVolume::new(
            4,
            3,
            2,
            CostKind::Census,
            (0..36).map(|_| rng.random_range(1.5..80.0)).collect(),
        )
        .unwrap();
        let v = random_conf(4, 3, 2, &mut rng);
        // force everything above threshold
        let data: Vec<f32> = v.data().iter().map(|c| 0.5 + c / 2.0).collect();
        let v = vol(4, 3, 2, data);
        let maps = max_confidence(&v);
        let mask = select_gcps(&maps, 0.1).unwrap();
        assert_eq!(mask.gcp_count(), 12);
        let refined = refine_costs(&c, &mask, &RefineConfig::census()).unwrap();
        let mut changed = 0;
        for (i, (a, b)) in c.data().iter().zip(refined.data()).enumerate() {
            if a != b {
                changed += 1;
                assert_eq!(*b, 1.3);
                let p = i / 3;
                assert_eq!(i % 3, mask.cof_d()[p] as usize);
            }
        }
        assert_eq!(changed, 12);
    }

    #[test]
    fn refine_matches_per_pixel_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let c = crate::cost::CostVolume::new(
            6,
            4,
            3,
            CostKind::Census,
            (0..96).map(|_| rng.random_range(0.0..80.0)).collect(),
        )
        .unwrap();
        let v = random_conf(6, 4, 3, &mut rng);
        let maps = max_confidence(&v);
        let cfg = RefineConfig::census();
        let mask = select_gcps(&maps, cfg.theta).unwrap();
        let refined = refine_costs(&c, &mask, &cfg).unwrap();
        for p in 0..24 {
            let (x, y) = (p % 6, p / 6);
            for d in 0..=3 {
                let want = if mask.is_gcp()[p] {
                    if d == mask.cof_d()[p] as usize {
                        cfg.c_low
                    } else {
                        c.at(x, y, d)
                    }
                } else {
                    cfg.c_hi
                };
                assert_eq!(refined.at(x, y, d), want);
            }
        }
    }

    #[test]
    fn gcp_argmin_is_confident_disparity_when_cheaper() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let c = crate::cost::CostVolume::new(
            5,
            5,
            3,
            CostKind::Sad,
            (0..100).map(|_| rng.random_range(0.5..3.2)).collect(),
        )
        .unwrap();
        let v = random_conf(5, 5, 3, &mut rng);
        let maps = max_confidence(&v);
        let cfg = RefineConfig::sad();
        let mask = select_gcps(&maps, 0.2).unwrap();
        let refined = refine_costs(&c, &mask, &cfg).unwrap();
        for p in 0..25 {
            if !mask.is_gcp()[p] {
                continue;
            }
            let (x, y) = (p % 5, p / 5);
            // c_low = 0.001 sits below the raw minimum 0.5 here
            let argmin = (0..=3)
                .min_by(|&a, &b| refined.at(x, y, a).partial_cmp(&refined.at(x, y, b)).unwrap())
                .unwrap();
            assert_eq!(argmin, mask.cof_d()[p] as usize);
        }
    }

    #[test]
    fn rejects_bad_configs_and_dims() {
        assert!(RefineConfig::new(0.5, 1.0, 2.0).is_err());
        assert!(RefineConfig::new(1.5, 2.0, 1.0).is_err());
        let c =
            crate::cost::CostVolume::new(2, 2, 1, CostKind::Sad, vec![0.0; 8]).unwrap();
        let v = vol(3, 2, 1, vec![0.0; 12]);
        let mask = select_gcps(&max_confidence(&v), 0.5).unwrap();
        assert!(refine_costs(&c, &mask, &RefineConfig::sad()).is_err());
    }
}
