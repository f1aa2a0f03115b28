//! End-to-end wiring: pipeline configuration, the flat key-value config
//! file, dataset directory scanning, and the match/train entry points the
//! CLI builds on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cost::{self, CostKind, CostVolume, WindowSpec};
use crate::error::{Error, Result};
use crate::eval::Frame;
use crate::gcp::{self, GcpMask, RefineConfig};
use crate::imageio::{self, DisparityMap, GrayImage};
use crate::net::{self, NetworkParams, TrainConfig, TrainOutcome};
use crate::sgm::{self, SgmConfig};

/// Everything a pipeline run needs. Kind-specific defaults:
///
/// | kind   | P1 | P2  | theta | c_hi | c_low |
/// |--------|----|-----|-------|------|-------|
/// | sad    | 1  | 14  | 0.55  | 5    | 0.001 |
/// | census | 4  | 128 | 0.60  | 200  | 1.3   |
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cost_kind: CostKind,
    pub window: WindowSpec,
    pub d_max: usize,
    pub sgm: SgmConfig,
    pub refine: RefineConfig,
    pub train: TrainConfig,
    pub model_path: Option<PathBuf>,
}

/// Default disparity search bound (KITTI 2012 scale).
pub const DEFAULT_D_MAX: usize = 228;

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::sad()
    }
}

impl PipelineConfig {
    pub fn sad() -> Self {
        PipelineConfig {
            cost_kind: CostKind::Sad,
            window: WindowSpec::default(),
            d_max: DEFAULT_D_MAX,
            sgm: SgmConfig::new(1.0, 14.0).expect("valid defaults"),
            refine: RefineConfig::sad(),
            train: TrainConfig::default(),
            model_path: None,
        }
    }

    pub fn census() -> Self {
        PipelineConfig {
            cost_kind: CostKind::Census,
            window: WindowSpec::default(),
            d_max: DEFAULT_D_MAX,
            sgm: SgmConfig::new(4.0, 128.0).expect("valid defaults"),
            refine: RefineConfig::census(),
            train: TrainConfig::default(),
            model_path: None,
        }
    }

    pub fn for_kind(kind: CostKind) -> Result<Self> {
        match kind {
            CostKind::Sad => Ok(PipelineConfig::sad()),
            CostKind::Census => Ok(PipelineConfig::census()),
            CostKind::Refined => Err(Error::InvalidConfig(
                "pipeline cost kind must be sad or census".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cost_kind == CostKind::Refined {
            return Err(Error::InvalidConfig(
                "pipeline cost kind must be sad or census".into(),
            ));
        }
        if self.d_max > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "d_max {} exceeds the disparity encoding",
                self.d_max
            )));
        }
        self.sgm.validate()?;
        self.refine.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

fn parse_cost_kind(v: &str) -> Result<CostKind> {
    match v {
        "sad" => Ok(CostKind::Sad),
        "census" => Ok(CostKind::Census),
        other => Err(Error::InvalidConfig(format!(
            "cost_kind must be sad or census, got {other:?}"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {v:?} for {key}")))
}

/// Splits the flat `key = value` config format into entries. Lines
/// starting with `#` and blank lines are ignored.
pub fn parse_config_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        entries.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(entries)
}

/// The `cost_kind` named by a config, if any.
pub fn entries_cost_kind(entries: &BTreeMap<String, String>) -> Result<Option<CostKind>> {
    entries
        .get("cost_kind")
        .map(|v| parse_cost_kind(v))
        .transpose()
}

/// Overrides `cfg` fields from parsed entries. `cost_kind` is handled by
/// the caller (it selects the default block) and is skipped here.
pub fn apply_config_entries(
    cfg: &mut PipelineConfig,
    entries: &BTreeMap<String, String>,
) -> Result<()> {
    for (key, value) in entries {
        match key.as_str() {
            "cost_kind" => {}
            "radius" => cfg.window = WindowSpec::new(parse_num(key, value)?),
            "d_max" => cfg.d_max = parse_num(key, value)?,
            "p1" => cfg.sgm.p1 = parse_num(key, value)?,
            "p2" => cfg.sgm.p2 = parse_num(key, value)?,
            "theta" => cfg.refine.theta = parse_num(key, value)?,
            "c_hi" => cfg.refine.c_hi = parse_num(key, value)?,
            "c_low" => cfg.refine.c_low = parse_num(key, value)?,
            "epsilon" => cfg.train.epsilon = parse_num(key, value)?,
            "lr" => cfg.train.lr = parse_num(key, value)?,
            "epochs" => cfg.train.epochs = parse_num(key, value)?,
            "batch_size" => cfg.train.batch_size = parse_num(key, value)?,
            "n_low" => cfg.train.n_low = parse_num(key, value)?,
            "n_high" => cfg.train.n_high = parse_num(key, value)?,
            "p_high" => cfg.train.p_high = parse_num(key, value)?,
            "seed" => cfg.train.seed = parse_num(key, value)?,
            "model_path" => cfg.model_path = Some(PathBuf::from(value)),
            other => {
                return Err(Error::InvalidConfig(format!("unknown config key {other:?}")));
            }
        }
    }
    Ok(())
}

/// Parses the flat config format. `cost_kind` picks the default block;
/// every other key overrides one field.
pub fn parse_config_str(text: &str) -> Result<PipelineConfig> {
    let entries = parse_config_entries(text)?;
    let kind = entries_cost_kind(&entries)?.unwrap_or(CostKind::Sad);
    let mut cfg = PipelineConfig::for_kind(kind)?;
    apply_config_entries(&mut cfg, &entries)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config_file(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

/// Serializes a config in the same flat format `parse_config_str` reads.
pub fn serialize_config(cfg: &PipelineConfig) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("cost_kind", cfg.cost_kind.as_str().to_string());
    push("radius", cfg.window.radius.to_string());
    push("d_max", cfg.d_max.to_string());
    push("p1", cfg.sgm.p1.to_string());
    push("p2", cfg.sgm.p2.to_string());
    push("theta", cfg.refine.theta.to_string());
    push("c_hi", cfg.refine.c_hi.to_string());
    push("c_low", cfg.refine.c_low.to_string());
    push("epsilon", cfg.train.epsilon.to_string());
    push("lr", cfg.train.lr.to_string());
    push("epochs", cfg.train.epochs.to_string());
    push("batch_size", cfg.train.batch_size.to_string());
    push("n_low", cfg.train.n_low.to_string());
    push("n_high", cfg.train.n_high.to_string());
    push("p_high", cfg.train.p_high.to_string());
    push("seed", cfg.train.seed.to_string());
    if let Some(p) = &cfg.model_path {
        push("model_path", p.display().to_string());
    }
    out
}

/// Loads an image and normalizes it for matching.
pub fn load_normalized(path: &Path) -> Result<GrayImage> {
    let img = imageio::load_gray(path)?;
    imageio::normalize(&img)
}

/// Initial cost volume for a normalized stereo pair under this config.
pub fn compute_cost_volume(
    cfg: &PipelineConfig,
    left: &GrayImage,
    right: &GrayImage,
) -> Result<CostVolume> {
    match cfg.cost_kind {
        CostKind::Sad => cost::sad_cost(left, right, cfg.d_max, cfg.window),
        CostKind::Census => cost::census_cost(left, right, cfg.d_max, cfg.window),
        CostKind::Refined => Err(Error::InvalidConfig(
            "pipeline cost kind must be sad or census".into(),
        )),
    }
}

/// Cost volume straight into semi-global matching, no refinement.
pub fn match_baseline(
    cfg: &PipelineConfig,
    left: &GrayImage,
    right: &GrayImage,
) -> Result<DisparityMap> {
    cfg.validate()?;
    let volume = compute_cost_volume(cfg, left, right)?;
    let aggregated = sgm::aggregate(&volume, &cfg.sgm)?;
    Ok(sgm::wta(&aggregated))
}

/// Output of a GCP-refined match.
#[derive(Debug, Clone)]
pub struct RefinedMatch {
    pub disparity: DisparityMap,
    pub mask: GcpMask,
}

/// Full pipeline: cost volume, CNN confidence volume, GCP selection,
/// cost refinement, then semi-global matching.
pub fn match_refined(
    cfg: &PipelineConfig,
    params: &NetworkParams,
    left: &GrayImage,
    right: &GrayImage,
) -> Result<RefinedMatch> {
    cfg.validate()?;
    let volume = compute_cost_volume(cfg, left, right)?;
    let confidence = net::confidence_volume(params, left, right, cfg.d_max)?;
    let maps = gcp::max_confidence(&confidence);
    let mask = gcp::select_gcps(&maps, cfg.refine.theta)?;
    let refined = gcp::refine_costs(&volume, &mask, &cfg.refine)?;
    let aggregated = sgm::aggregate(&refined, &cfg.sgm)?;
    Ok(RefinedMatch {
        disparity: sgm::wta(&aggregated),
        mask,
    })
}

/// File locations of one dataset frame.
#[derive(Debug, Clone)]
pub struct FramePaths {
    pub id: String,
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt: Option<PathBuf>,
}

/// Scans a dataset directory for `<id>_left.png` / `<id>_right.png`
/// (and `<id>_gt.png`) triples, sorted by id.
pub fn scan_dataset_dir(dir: &Path, require_gt: bool) -> Result<Vec<FramePaths>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(id) = name.strip_suffix("_left.png") else {
            continue;
        };
        let right = dir.join(format!("{id}_right.png"));
        if !right.exists() {
            return Err(Error::Format(format!(
                "{} has no matching right image",
                entry.path().display()
            )));
        }
        let gt_path = dir.join(format!("{id}_gt.png"));
        let gt = if gt_path.exists() {
            Some(gt_path)
        } else if require_gt {
            return Err(Error::Format(format!(
                "{} has no ground truth {id}_gt.png",
                entry.path().display()
            )));
        } else {
            None
        };
        frames.push(FramePaths {
            id: id.to_string(),
            left: entry.path(),
            right,
            gt,
        });
    }
    if frames.is_empty() {
        return Err(Error::Format(format!(
            "no `*_left.png` frames found in {}",
            dir.display()
        )));
    }
    frames.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(frames)
}

/// Loads and normalizes one frame; ground truth is required.
pub fn load_frame(paths: &FramePaths) -> Result<Frame> {
    let left = load_normalized(&paths.left)?;
    let right = load_normalized(&paths.right)?;
    let gt_path = paths
        .gt
        .as_ref()
        .ok_or_else(|| Error::Format(format!("frame {} has no ground truth", paths.id)))?;
    let gt = imageio::load_kitti_gt_with_size(gt_path, (left.width(), left.height()))?;
    if right.width() != left.width() || right.height() != left.height() {
        return Err(Error::DimensionMismatch(format!(
            "frame {}: left {}x{} vs right {}x{}",
            paths.id,
            left.width(),
            left.height(),
            right.width(),
            right.height()
        )));
    }
    Ok(Frame {
        id: paths.id.clone(),
        left,
        right,
        gt,
    })
}

/// Loads every frame of a dataset directory (ground truth required).
pub fn load_dataset(dir: &Path) -> Result<Vec<Frame>> {
    scan_dataset_dir(dir, true)?
        .iter()
        .map(load_frame)
        .collect()
}

/// Trains the network on all frames found in `dir`.
pub fn train_from_dir(dir: &Path, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let frames = load_dataset(dir)?;
    let dataset: Vec<_> = frames
        .into_iter()
        .map(|f| (f.left, f.right, f.gt))
        .collect();
    net::train(&dataset, &cfg.train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_declared_constants() {
        let sad = PipelineConfig::sad();
        assert_eq!(sad.sgm.p1, 1.0);
        assert_eq!(sad.sgm.p2, 14.0);
        assert_eq!(sad.refine.theta, 0.55);
        assert_eq!(sad.refine.c_hi, 5.0);
        assert_eq!(sad.refine.c_low, 0.001);
        assert_eq!(sad.window.radius, 4);
        assert_eq!(sad.sgm.directions.len(), 16);

        let census = PipelineConfig::census();
        assert_eq!(census.sgm.p1, 4.0);
        assert_eq!(census.sgm.p2, 128.0);
        assert_eq!(census.refine.theta, 0.60);
        assert_eq!(census.refine.c_hi, 200.0);
        assert_eq!(census.refine.c_low, 1.3);
        assert_eq!(census.train.n_low, 4);
        assert_eq!(census.train.n_high, 8);
        assert_eq!(census.train.p_high, 1);
        assert_eq!(census.train.epsilon, 0.2);
    }

    #[test]
    fn serialize_parse_roundtrip() {
        let mut cfg = PipelineConfig::census();
        cfg.d_max = 64;
        cfg.refine.theta = 0.45;
        cfg.model_path = Some(PathBuf::from("model.bin"));
        let text = serialize_config(&cfg);
        let back = parse_config_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn serialized_defaults_contain_verbatim_constants() {
        let text = serialize_config(&PipelineConfig::census());
        for line in [
            "cost_kind = census",
            "p1 = 4",
            "p2 = 128",
            "theta = 0.6",
            "c_hi = 200",
            "c_low = 1.3",
            "n_low = 4",
            "n_high = 8",
            "p_high = 1",
            "epsilon = 0.2",
            "radius = 4",
        ] {
            assert!(text.contains(line), "missing {line:?} in:\n{text}");
        }
        let text = serialize_config(&PipelineConfig::sad());
        for line in ["p1 = 1", "p2 = 14", "theta = 0.55", "c_hi = 5", "c_low = 0.001"] {
            assert!(text.contains(line), "missing {line:?} in:\n{text}");
        }
    }

    #[test]
    fn config_overrides_and_kind_defaults() {
        let cfg = parse_config_str("cost_kind = census\nd_max = 32\ntheta = 0.7\n").unwrap();
        assert_eq!(cfg.cost_kind, CostKind::Census);
        assert_eq!(cfg.d_max, 32);
        assert_eq!(cfg.refine.theta, 0.7);
        assert_eq!(cfg.sgm.p1, 4.0); // census default preserved
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(parse_config_str("bogus = 1\n").is_err());
        assert!(parse_config_str("d_max = many\n").is_err());
        assert!(parse_config_str("cost_kind = refined\n").is_err());
        assert!(parse_config_str("p1 = 5\np2 = 1\n").is_err());
        assert!(parse_config_str("just a line\n").is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = parse_config_str("# a comment\n\n  d_max = 16 \n").unwrap();
        assert_eq!(cfg.d_max, 16);
        assert_eq!(cfg.cost_kind, CostKind::Sad);
    }
}
