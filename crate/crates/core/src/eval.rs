//! Error metrics against ground truth, per-frame improvement reports,
//! and the confidence-threshold sweep.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gcp::{self, RefineConfig};
use crate::imageio::{DisparityMap, GrayImage, GroundTruth};
use crate::net::{self, NetworkParams};
use crate::pipeline::{self, PipelineConfig};
use crate::sgm;

/// Default bad-pixel threshold in pixels.
pub const DEFAULT_TAU: f32 = 3.0;

/// One evaluation frame: normalized stereo pair plus ground truth.
#[derive(Debug, Clone)]
pub struct Frame {
    pub id: String,
    pub left: GrayImage,
    pub right: GrayImage,
    pub gt: GroundTruth,
}

/// Fraction of known ground-truth pixels whose absolute disparity error
/// exceeds `tau`.
pub fn error_rate(d: &DisparityMap, gt: &GroundTruth, tau: f32) -> Result<f64> {
    if d.width() != gt.width() || d.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "disparity map {}x{} vs ground truth {}x{}",
            d.width(),
            d.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut known = 0u64;
    let mut bad = 0u64;
    for (est, truth) in d.disp().iter().zip(gt.disp()) {
        if let Some(t) = truth {
            known += 1;
            if (*est as f32 - t).abs() > tau {
                bad += 1;
            }
        }
    }
    if known == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(bad as f64 / known as f64)
}

/// Per-frame error rates of a baseline and a refined pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame_id: String,
    pub error_baseline: f64,
    pub error_refined: f64,
    /// `error_baseline - error_refined`; positive means improvement.
    pub improvement: f64,
}

fn frame_context<T>(id: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Other(format!("frame {id}: {e}")))
}

/// Runs both pipelines on every frame and reports per-frame errors.
pub fn per_frame_report<B, R>(
    frames: &[Frame],
    baseline: B,
    refined: R,
    tau: f32,
) -> Result<Vec<FrameReport>>
where
    B: Fn(&Frame) -> Result<DisparityMap>,
    R: Fn(&Frame) -> Result<DisparityMap>,
{
    let mut reports = Vec::with_capacity(frames.len());
    for frame in frames {
        let d_base = frame_context(&frame.id, baseline(frame))?;
        let d_ref = frame_context(&frame.id, refined(frame))?;
        let error_baseline = frame_context(&frame.id, error_rate(&d_base, &frame.gt, tau))?;
        let error_refined = frame_context(&frame.id, error_rate(&d_ref, &frame.gt, tau))?;
        reports.push(FrameReport {
            frame_id: frame.id.clone(),
            error_baseline,
            error_refined,
            improvement: error_baseline - error_refined,
        });
    }
    Ok(reports)
}

/// Dataset means: (baseline error, refined error, improvement).
pub fn mean_errors(reports: &[FrameReport]) -> (f64, f64, f64) {
    if reports.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = reports.len() as f64;
    let b = reports.iter().map(|r| r.error_baseline).sum::<f64>() / n;
    let r = reports.iter().map(|r| r.error_refined).sum::<f64>() / n;
    let i = reports.iter().map(|r| r.improvement).sum::<f64>() / n;
    (b, r, i)
}

/// Mean error of the refined pipeline at one threshold setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSweepPoint {
    pub theta: f32,
    pub mean_error: f64,
}

/// Sweeps the GCP threshold over the given values, holding the
/// refinement costs fixed. Cost and confidence volumes are computed once
/// per frame and reused across thresholds.
pub fn sweep_theta(
    frames: &[Frame],
    params: &NetworkParams,
    cfg: &PipelineConfig,
    thetas: &[f32],
    tau: f32,
) -> Result<Vec<ThetaSweepPoint>> {
    cfg.validate()?;
    if thetas.is_empty() {
        return Err(Error::InvalidConfig("empty theta list".into()));
    }
    for &t in thetas {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!(
                "theta must lie in [0, 1], got {t}"
            )));
        }
    }

    let mut sums = vec![0.0f64; thetas.len()];
    for frame in frames {
        let volume =
            frame_context(&frame.id, pipeline::compute_cost_volume(cfg, &frame.left, &frame.right))?;
        let confidence = frame_context(
            &frame.id,
            net::confidence_volume(params, &frame.left, &frame.right, cfg.d_max),
        )?;
        let maps = gcp::max_confidence(&confidence);
        for (i, &theta) in thetas.iter().enumerate() {
            let refine = RefineConfig {
                theta,
                ..cfg.refine
            };
            let mask = frame_context(&frame.id, gcp::select_gcps(&maps, theta))?;
            let refined = frame_context(&frame.id, gcp::refine_costs(&volume, &mask, &refine))?;
            let agg = frame_context(&frame.id, sgm::aggregate(&refined, &cfg.sgm))?;
            let err = frame_context(&frame.id, error_rate(&sgm::wta(&agg), &frame.gt, tau))?;
            sums[i] += err;
        }
    }

    Ok(thetas
        .iter()
        .zip(&sums)
        .map(|(&theta, &sum)| ThetaSweepPoint {
            theta,
            mean_error: sum / frames.len() as f64,
        })
        .collect())
}

/// The sweep point with the lowest mean error (first on ties).
pub fn argmin_theta(points: &[ThetaSweepPoint]) -> Option<&ThetaSweepPoint> {
    points.iter().reduce(|best, p| {
        if p.mean_error < best.mean_error {
            p
        } else {
            best
        }
    })
}

/// Writes `frames.csv`: frame_id, error_baseline, error_refined, improvement.
pub fn write_frames_csv(reports: &[FrameReport], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "frame_id,error_baseline,error_refined,improvement")
        .map_err(|e| Error::io(path, e))?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{}",
            r.frame_id, r.error_baseline, r.error_refined, r.improvement
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes `theta_sweep.csv`: theta, mean_error.
pub fn write_theta_csv(points: &[ThetaSweepPoint], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "theta,mean_error").map_err(|e| Error::io(path, e))?;
    for p in points {
        writeln!(out, "{},{}", p.theta, p.mean_error).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt_from(disp: Vec<Option<f32>>, w: usize, h: usize) -> GroundTruth {
        GroundTruth::new(w, h, disp).unwrap()
    }

    #[test]
    fn perfect_match_has_zero_error() {
        // known only where d <= x holds
        let gt = gt_from(
            (0..20)
                .map(|i| {
                    let (x, d) = (i % 5, i % 4);
                    if d <= x {
                        Some(d as f32)
                    } else {
                        None
                    }
                })
                .collect(),
            5,
            4,
        );
        let d = DisparityMap::new(5, 4, (0..20).map(|i| (i % 4) as u16).collect(), 4).unwrap();
        assert_eq!(error_rate(&d, &gt, DEFAULT_TAU).unwrap(), 0.0);
    }

    #[test]
    fn all_off_by_ten_is_one() {
        let gt = gt_from(
            (0..16)
                .map(|x| if x >= 12 { Some(12.0) } else { None })
                .collect(),
            16,
            1,
        );
        let d = DisparityMap::new(16, 1, vec![2; 16], 20).unwrap();
        assert_eq!(error_rate(&d, &gt, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn half_bad_is_half() {
        // known at columns 8..16: first 4 exact, next 4 off by 5
        let gt = gt_from(
            (0..16)
                .map(|x| if x >= 8 { Some(8.0) } else { None })
                .collect(),
            16,
            1,
        );
        let est: Vec<u16> = (0..16)
            .map(|x| if x < 12 { 8 } else { 13 })
            .collect();
        let d = DisparityMap::new(16, 1, est, 20).unwrap();
        assert_eq!(error_rate(&d, &gt, 3.0).unwrap(), 0.5);
    }

    #[test]
    fn no_known_pixels_is_error() {
        let gt = gt_from(vec![None; 4], 2, 2);
        let d = DisparityMap::new(2, 2, vec![0; 4], 1).unwrap();
        assert!(matches!(
            error_rate(&d, &gt, 3.0),
            Err(Error::EmptyGroundTruth)
        ));
    }

    fn tiny_frames(n: usize) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        (0..n)
            .map(|i| {
                let data: Vec<f32> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
                let left = GrayImage::new(10, 10, data.clone()).unwrap();
                let right = GrayImage::new(10, 10, data).unwrap();
                let gt = gt_from((0..100).map(|p| Some((p % 3) as f32 * 0.0)).collect(), 10, 10);
                Frame {
                    id: format!("{i:06}"),
                    left,
                    right,
                    gt,
                }
            })
            .collect()
    }

    #[test]
    fn identical_pipelines_give_zero_improvement() {
        let frames = tiny_frames(3);
        let pipe = |f: &Frame| {
            DisparityMap::new(f.left.width(), f.left.height(), vec![0; 100], 3)
        };
        let reports = per_frame_report(&frames, pipe, pipe, 3.0).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.improvement, 0.0);
            assert_eq!(r.error_baseline, r.error_refined);
        }
    }

    #[test]
    fn mean_of_two_frames() {
        let reports = vec![
            FrameReport {
                frame_id: "a".into(),
                error_baseline: 0.10,
                error_refined: 0.05,
                improvement: 0.05,
            },
            FrameReport {
                frame_id: "b".into(),
                error_baseline: 0.20,
                error_refined: 0.10,
                improvement: 0.10,
            },
        ];
        let (b, r, i) = mean_errors(&reports);
        assert!((b - 0.15).abs() < 1e-12);
        assert!((r - 0.075).abs() < 1e-12);
        assert!((i - 0.075).abs() < 1e-12);
        // mean improvement equals mean of per-frame improvements
        assert!((i - (b - r)).abs() < 1e-12);
    }

    #[test]
    fn failing_frame_carries_its_id() {
        let frames = tiny_frames(1);
        let bad = |_: &Frame| -> Result<DisparityMap> {
            Err(Error::Other("boom".into()))
        };
        let ok = |f: &Frame| DisparityMap::new(f.left.width(), f.left.height(), vec![0; 100], 3);
        let err = per_frame_report(&frames, bad, ok, 3.0).unwrap_err();
        assert!(err.to_string().contains("000000"));
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let frames_path = dir.path().join("frames.csv");
        write_frames_csv(
            &[FrameReport {
                frame_id: "000001".into(),
                error_baseline: 0.5,
                error_refined: 0.25,
                improvement: 0.25,
            }],
            &frames_path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&frames_path).unwrap();
        assert_eq!(
            text,
            "frame_id,error_baseline,error_refined,improvement\n000001,0.5,0.25,0.25\n"
        );

        let sweep_path = dir.path().join("theta_sweep.csv");
        write_theta_csv(
            &[ThetaSweepPoint {
                theta: 0.5,
                mean_error: 0.125,
            }],
            &sweep_path,
        )
        .unwrap();
        let text = std::fs::read_to_string(&sweep_path).unwrap();
        assert_eq!(text, "theta,mean_error\n0.5,0.125\n");
    }

    #[test]
    fn argmin_picks_lowest() {
        let pts = vec![
            ThetaSweepPoint {
                theta: 0.0,
                mean_error: 0.4,
            },
            ThetaSweepPoint {
                theta: 0.5,
                mean_error: 0.1,
            },
            ThetaSweepPoint {
                theta: 1.0,
                mean_error: 0.9,
            },
        ];
        assert_eq!(argmin_theta(&pts).unwrap().theta, 0.5);
        assert!(argmin_theta(&[]).is_none());
    }
}
