//! Command-line interface: train, match, eval, sweep-theta, gen-synth.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gcpstereo::eval::{self, Frame, FrameReport};
use gcpstereo::imageio::{self, GrayImage};
use gcpstereo::net;
use gcpstereo::pipeline::{self, PipelineConfig};
use gcpstereo::synth;
use gcpstereo::CostKind;

#[derive(Parser)]
#[command(
    name = "gcpstereo",
    about = "Stereo matching with CNN-scored ground control points and semi-global matching",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CostArg {
    Sad,
    Census,
}

impl From<CostArg> for CostKind {
    fn from(c: CostArg) -> CostKind {
        match c {
            CostArg::Sad => CostKind::Sad,
            CostArg::Census => CostKind::Census,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat key-value config file; CLI flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matching-cost function (selects kind-specific defaults)
    #[arg(long, value_enum)]
    cost: Option<CostArg>,
    /// Disparity search bound
    #[arg(long)]
    dmax: Option<usize>,
    /// GCP selection threshold in [0, 1]
    #[arg(long)]
    theta: Option<f32>,
    /// Seed for weight init, sampling, and shuffling
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the confidence network on a dataset directory
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory of NNNNNN_left.png / _right.png / _gt.png triples
        #[arg(long)]
        data: PathBuf,
        /// Output model path
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV path (default: <out>.log.csv)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compute a disparity map for one stereo pair
    Match {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Trained model; enables GCP refinement
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output disparity PNG (16-bit, value = disparity * 256)
        #[arg(long)]
        out: PathBuf,
        /// Also write the GCP mask next to the output (<out>.gcp.png)
        #[arg(long)]
        dump_gcp: bool,
        /// Also write the per-pixel max confidence (<out>.conf.png)
        #[arg(long)]
        dump_confidence: bool,
        /// Also write an 8-bit color preview to this path
        #[arg(long)]
        preview: Option<PathBuf>,
    },
    /// Evaluate error rates over a dataset directory
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Trained model; adds the refined pipeline to the report
        #[arg(long)]
        model: Option<PathBuf>,
        /// Where to write frames.csv
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Bad-pixel threshold in pixels
        #[arg(long, default_value_t = eval::DEFAULT_TAU)]
        tau: f32,
    },
    /// Sweep the GCP threshold and report mean error per value
    SweepTheta {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated thresholds (default 0.0,0.05,...,1.0)
        #[arg(long)]
        thetas: Option<String>,
        /// Where to write theta_sweep.csv
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = eval::DEFAULT_TAU)]
        tau: f32,
    },
    /// Generate a synthetic random-dot-stereogram dataset
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames: usize,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        dmax: u16,
        /// Keep every k-th known ground-truth pixel
        #[arg(long, default_value_t = 1)]
        gt_stride: usize,
        /// Per-camera Gaussian intensity noise (0 = exact matches)
        #[arg(long, default_value_t = 0.0)]
        noise: f32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

struct CliError {
    code: i32,
    message: String,
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError {
        code: 2,
        message: e.to_string(),
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: e.to_string(),
    }
}

type CliResult = Result<(), CliError>;

/// Defaults by cost kind, then config file values, then CLI flags.
fn resolve_config(args: &ConfigArgs, model: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let entries: BTreeMap<String, String> = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            pipeline::parse_config_entries(&text).map_err(usage)?
        }
        None => BTreeMap::new(),
    };
    let file_kind = pipeline::entries_cost_kind(&entries).map_err(usage)?;
    let kind = args
        .cost
        .map(CostKind::from)
        .or(file_kind)
        .unwrap_or(CostKind::Sad);
    let mut cfg = PipelineConfig::for_kind(kind).map_err(usage)?;
    pipeline::apply_config_entries(&mut cfg, &entries).map_err(usage)?;

    if let Some(d) = args.dmax {
        cfg.d_max = d;
    }
    if let Some(t) = args.theta {
        cfg.refine.theta = t;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(m) = model {
        cfg.model_path = Some(m.to_path_buf());
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn check_data_dir(dir: &Path) -> CliResult {
    if !dir.is_dir() {
        return Err(usage(format!("data directory {} does not exist", dir.display())));
    }
    Ok(())
}

fn cmd_train(
    config: &ConfigArgs,
    data: &Path,
    out: &Path,
    log: Option<&Path>,
) -> CliResult {
    let cfg = resolve_config(config, None)?;
    check_data_dir(data)?;
    // dataset discovery problems (empty dir, missing files) are config errors
    pipeline::scan_dataset_dir(data, true).map_err(usage)?;

    let outcome = pipeline::train_from_dir(data, &cfg).map_err(runtime)?;
    net::save_model(&outcome.params, out).map_err(runtime)?;
    let log_path = log
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.log.csv", out.display())));
    net::write_training_log(&outcome.trace, &log_path).map_err(runtime)?;

    let first = outcome.trace.first().map(|s| s.mean_loss).unwrap_or(0.0);
    let last = outcome.trace.last().map(|s| s.mean_loss).unwrap_or(0.0);
    println!(
        "trained {} epochs: mean loss {first:.6} -> {last:.6}",
        outcome.trace.len()
    );
    println!("model written to {}", out.display());
    println!("training log written to {}", log_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_match(
    config: &ConfigArgs,
    left: &Path,
    right: &Path,
    model: Option<&Path>,
    out: &Path,
    dump_gcp: bool,
    dump_confidence: bool,
    preview: Option<&Path>,
) -> CliResult {
    let cfg = resolve_config(config, model)?;
    let left_img = pipeline::load_normalized(left).map_err(runtime)?;
    let right_img = pipeline::load_normalized(right).map_err(runtime)?;

    let disparity = match &cfg.model_path {
        Some(model_path) => {
            let params = net::load_model(model_path).map_err(runtime)?;
            let refined =
                pipeline::match_refined(&cfg, &params, &left_img, &right_img).map_err(runtime)?;
            if dump_gcp {
                let path = PathBuf::from(format!("{}.gcp.png", out.display()));
                gcpstereo::gcp::save_gcp_mask_png(&refined.mask, &path).map_err(runtime)?;
                println!("gcp mask written to {}", path.display());
            }
            if dump_confidence {
                let path = PathBuf::from(format!("{}.conf.png", out.display()));
                let mask = &refined.mask;
                let conf = GrayImage::new(
                    mask.width(),
                    mask.height(),
                    mask.cof_c().to_vec(),
                )
                .map_err(runtime)?;
                imageio::save_gray_u8(&conf, &path).map_err(runtime)?;
                println!("confidence map written to {}", path.display());
            }
            refined.disparity
        }
        None => {
            if dump_gcp || dump_confidence {
                return Err(usage(
                    "--dump-gcp/--dump-confidence require --model".to_string(),
                ));
            }
            pipeline::match_baseline(&cfg, &left_img, &right_img).map_err(runtime)?
        }
    };

    imageio::save_disparity_png(&disparity, out).map_err(runtime)?;
    println!("disparity written to {}", out.display());
    if let Some(p) = preview {
        imageio::save_disparity_preview(&disparity, cfg.d_max, p).map_err(runtime)?;
        println!("preview written to {}", p.display());
    }
    Ok(())
}

fn cmd_eval(
    config: &ConfigArgs,
    data: &Path,
    model: Option<&Path>,
    out_dir: &Path,
    tau: f32,
) -> CliResult {
    let cfg = resolve_config(config, model)?;
    check_data_dir(data)?;
    let paths = pipeline::scan_dataset_dir(data, true).map_err(usage)?;

    let params = match &cfg.model_path {
        Some(p) => Some(net::load_model(p).map_err(runtime)?),
        None => None,
    };

    let mut reports: Vec<FrameReport> = Vec::new();
    let mut failures = 0usize;
    for frame_paths in &paths {
        let result = (|| -> gcpstereo::Result<FrameReport> {
            let frame = pipeline::load_frame(frame_paths)?;
            let base = pipeline::match_baseline(&cfg, &frame.left, &frame.right)?;
            let error_baseline = eval::error_rate(&base, &frame.gt, tau)?;
            let error_refined = match &params {
                Some(p) => {
                    let refined = pipeline::match_refined(&cfg, p, &frame.left, &frame.right)?;
                    eval::error_rate(&refined.disparity, &frame.gt, tau)?
                }
                None => error_baseline,
            };
            Ok(FrameReport {
                frame_id: frame.id.clone(),
                error_baseline,
                error_refined,
                improvement: error_baseline - error_refined,
            })
        })();
        match result {
            Ok(report) => reports.push(report),
            Err(e) => {
                eprintln!("frame {}: {e}", frame_paths.id);
                failures += 1;
            }
        }
    }
    if reports.is_empty() {
        return Err(runtime(format!("all {failures} frames failed")));
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("frames.csv");
    eval::write_frames_csv(&reports, &csv_path).map_err(runtime)?;

    let (mean_base, mean_ref, mean_imp) = eval::mean_errors(&reports);
    println!("frames evaluated: {} ({} failed)", reports.len(), failures);
    println!("mean error (baseline): {:.4}%", mean_base * 100.0);
    if params.is_some() {
        println!("mean error (refined):  {:.4}%", mean_ref * 100.0);
        println!("mean improvement:      {:.4} points", mean_imp * 100.0);
    }
    println!("report written to {}", csv_path.display());
    Ok(())
}

fn cmd_sweep_theta(
    config: &ConfigArgs,
    data: &Path,
    model: &Path,
    thetas: Option<&str>,
    out_dir: &Path,
    tau: f32,
) -> CliResult {
    let cfg = resolve_config(config, Some(model))?;
    check_data_dir(data)?;
    pipeline::scan_dataset_dir(data, true).map_err(usage)?;

    let thetas: Vec<f32> = match thetas {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f32>()
                    .map_err(|_| usage(format!("bad theta value {t:?}")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..=20).map(|i| i as f32 * 0.05).collect(),
    };
    for &t in &thetas {
        if !(0.0..=1.0).contains(&t) {
            return Err(usage(format!("theta {t} outside [0, 1]")));
        }
    }

    let params = net::load_model(model).map_err(runtime)?;
    let frames: Vec<Frame> = pipeline::load_dataset(data).map_err(runtime)?;
    let points = eval::sweep_theta(&frames, &params, &cfg, &thetas, tau).map_err(runtime)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("theta_sweep.csv");
    eval::write_theta_csv(&points, &csv_path).map_err(runtime)?;

    for p in &points {
        println!("theta {:.2}: mean error {:.4}%", p.theta, p.mean_error * 100.0);
    }
    if let Some(best) = eval::argmin_theta(&points) {
        println!(
            "best theta {:.2} with mean error {:.4}%",
            best.theta,
            best.mean_error * 100.0
        );
    }
    println!("sweep written to {}", csv_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_synth(
    out: &Path,
    frames: usize,
    width: usize,
    height: usize,
    dmax: u16,
    gt_stride: usize,
    noise: f32,
    seed: u64,
) -> CliResult {
    if frames == 0 {
        return Err(usage("--frames must be positive".to_string()));
    }
    if width < 16 || height < 16 {
        return Err(usage("synthetic frames must be at least 16x16".to_string()));
    }
    if gt_stride == 0 {
        return Err(usage("--gt-stride must be positive".to_string()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(usage("--noise must lie in [0, 1]".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth::write_synthetic_dataset(out, frames, width, height, dmax, gt_stride, noise, &mut rng)
        .map_err(runtime)?;
    println!(
        "wrote {frames} synthetic frames ({width}x{height}, d_max {dmax}) to {}",
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Train {
            config,
            data,
            out,
            log,
        } => cmd_train(config, data, out, log.as_deref()),
        Command::Match {
            config,
            left,
            right,
            model,
            out,
            dump_gcp,
            dump_confidence,
            preview,
        } => cmd_match(
            config,
            left,
            right,
            model.as_deref(),
            out,
            *dump_gcp,
            *dump_confidence,
            preview.as_deref(),
        ),
        Command::Eval {
            config,
            data,
            model,
            out_dir,
            tau,
        } => cmd_eval(config, data, model.as_deref(), out_dir, *tau),
        Command::SweepTheta {
            config,
            data,
            model,
            thetas,
            out_dir,
            tau,
        } => cmd_sweep_theta(config, data, model, thetas.as_deref(), out_dir, *tau),
        Command::GenSynth {
            out,
            frames,
            width,
            height,
            dmax,
            gt_stride,
            noise,
            seed,
        } => cmd_gen_synth(out, *frames, *width, *height, *dmax, *gt_stride, *noise, *seed),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
