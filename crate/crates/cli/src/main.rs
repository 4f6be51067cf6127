//! `graspmap`: synthesize, convert, train, evaluate, sweep and predict.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or format, 3 numerical failure.

mod render;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graspmap::dataset::io::{self, CornellLoad};
use graspmap::dataset::{DepthImage, Sample, SplitMode, make_synthetic, make_synthetic_scenes};
use graspmap::grasp::{default_min_separation, default_width_max};
use graspmap::train::{
    EpochProgress, ReportRecord, TrainConfig, cross_validate, evaluate, format_loss_history,
    jaccard_sweep, multi_grasp_eval, records_to_jsonl, train,
};
use graspmap::{Error, GraspFcn, GraspFcnConfig, decode_top_k, pixel_grasp_to_rectangle};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "graspmap", version, about = "Pixel-wise grasp detection on depth images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset of depth images with bars.
    Synth(SynthArgs),
    /// Convert a Cornell tree into the portable layout.
    Convert(ConvertArgs),
    /// Train (cross-validating when --folds > 1) and write the model.
    Train(TrainArgs),
    /// Best-grasp accuracy of a model on a dataset.
    Evaluate(EvaluateArgs),
    /// Jaccard-threshold or top-k sweep.
    Sweep(SweepArgs),
    /// Grasps, overlay and maps for depth images.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 96)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bars per image.
    #[arg(long, default_value_t = 1)]
    bars: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long)]
    cornell_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Multiplier from point-cloud z units to metres.
    #[arg(long, default_value_t = 0.001)]
    pcd_scale: f64,
    /// Lines of `<image number> <object id>`.
    #[arg(long)]
    object_map: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Paper,
    Desk,
    Tiny,
}

impl Preset {
    fn config(self) -> GraspFcnConfig {
        match self {
            Preset::Paper => GraspFcnConfig::paper(),
            Preset::Desk => GraspFcnConfig::desk(),
            Preset::Tiny => GraspFcnConfig::tiny(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Image,
    Object,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Portable dataset directory (or its manifest) or a Cornell tree.
    #[arg(long)]
    data: PathBuf,
    /// Point-cloud z scale when --data is a Cornell tree.
    #[arg(long, default_value_t = 0.001)]
    pcd_scale: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long, value_enum, default_value = "image")]
    split: Split,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Width normalizer in pixels (default scales with input size).
    #[arg(long)]
    width_max: Option<f64>,
    /// Train on the images as given, without random crops.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value_t = 0.25)]
    jaccard: f64,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Two-column `epoch mean_loss` file for the final model.
    #[arg(long)]
    loss_history: Option<PathBuf>,
    /// Leave wall-clock timing out of the report.
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.25)]
    jaccard: f64,
    #[arg(long)]
    width_max: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args, Debug)]
#[group(id = "sweep_kind", required = true, multiple = false, args = ["jaccard", "topk"])]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated, strictly increasing Jaccard thresholds.
    #[arg(long, value_delimiter = ',')]
    jaccard: Option<Vec<f64>>,
    /// Comma-separated grasp counts.
    #[arg(long, value_delimiter = ',')]
    topk: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.5)]
    q_threshold: f64,
    #[arg(long)]
    min_separation: Option<f64>,
    #[arg(long)]
    width_max: Option<f64>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// 16-bit depth PNG(s) in millimetres.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long = "num-grasps", default_value_t = 1)]
    num_grasps: usize,
    #[arg(long, default_value_t = 0.5)]
    q_threshold: f64,
    #[arg(long)]
    min_separation: Option<f64>,
    #[arg(long)]
    width_max: Option<f64>,
    /// Overlay PNG; with several inputs, a directory.
    #[arg(long)]
    out_overlay: PathBuf,
    /// Directory for the quality, angle and width map PNGs.
    #[arg(long)]
    out_maps: PathBuf,
    /// Grasp list file; stdout when absent.
    #[arg(long)]
    out_grasps: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_err(path: &Path, e: impl Into<Error>) -> Failure {
    let e: Error = e.into();
    Failure::Core(Error::File {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn require_path(flag: &str, p: &Path) -> CliResult {
    if p.as_os_str().is_empty() {
        return Err(Failure::Usage(format!("--{flag} must not be empty")));
    }
    Ok(())
}

fn echo(command: &str, fields: &[(&str, String)]) {
    let body: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("graspmap {command}: {}", body.join(" "));
}

fn load_data(args: &DataArgs) -> CliResult<Vec<Sample>> {
    require_path("data", &args.data)?;
    let CornellLoad { samples, failures } = io::load_any(&args.data, args.pcd_scale)?;
    for (path, why) in &failures {
        eprintln!("skipped {}: {why}", path.display());
    }
    if samples.is_empty() {
        return Err(Failure::Core(Error::Format(format!("{}: no usable samples", args.data.display()))));
    }
    Ok(samples)
}

fn load_model(path: &Path) -> CliResult<GraspFcn<f32>> {
    require_path("model", path)?;
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    GraspFcn::load(&bytes).map_err(|e| io_err(path, e))
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    echo(
        "synth",
        &[
            ("count", a.count.to_string()),
            ("size", a.size.to_string()),
            ("seed", a.seed.to_string()),
            ("bars", a.bars.to_string()),
            ("out_dir", a.out_dir.display().to_string()),
        ],
    );
    let samples = if a.bars == 1 {
        make_synthetic(a.count, a.size, a.seed)?
    } else {
        make_synthetic_scenes(a.count, a.size, a.bars, a.seed)?
    };
    io::write_dataset(&a.out_dir, &samples)?;
    eprintln!("wrote {} samples to {}", samples.len(), a.out_dir.display());
    Ok(())
}

fn cmd_convert(a: ConvertArgs) -> CliResult {
    echo(
        "convert",
        &[
            ("cornell_dir", a.cornell_dir.display().to_string()),
            ("out_dir", a.out_dir.display().to_string()),
            ("pcd_scale", a.pcd_scale.to_string()),
            ("object_map", a.object_map.as_ref().map_or("none".into(), |p| p.display().to_string())),
        ],
    );
    let map = match &a.object_map {
        Some(p) => Some(io::parse_object_map(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)),
        None => None,
    };
    let summary = io::convert_cornell(&a.cornell_dir, &a.out_dir, a.pcd_scale, map.as_ref())?;
    eprintln!("converted {} samples", summary.converted);
    if summary.failures.is_empty() {
        return Ok(());
    }
    eprintln!("{} failures:", summary.failures.len());
    for (path, why) in &summary.failures {
        eprintln!("  {}: {why}", path.display());
    }
    Err(Failure::Core(Error::Format(format!("{} samples failed to convert", summary.failures.len()))))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    require_path("out-model", &a.out_model)?;
    require_path("report", &a.report)?;
    let net_cfg = a.preset.config();
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        lr: a.lr,
        folds: a.folds,
        split: match a.split {
            Split::Image => SplitMode::ImageWise,
            Split::Object => SplitMode::ObjectWise,
        },
        seed: a.seed,
        width_max: a.width_max,
        augment: !a.no_augment,
        ..TrainConfig::default()
    };
    let w = cfg.loss_weights;
    echo(
        "train",
        &[
            ("data", a.data.data.display().to_string()),
            ("preset", format!("{:?}", a.preset).to_lowercase()),
            ("input_size", net_cfg.input_size.to_string()),
            ("split", format!("{:?}", a.split).to_lowercase()),
            ("folds", cfg.folds.to_string()),
            ("epochs", cfg.epochs.to_string()),
            ("batch", cfg.batch_size.to_string()),
            ("lr", cfg.lr.to_string()),
            ("loss_weights", format!("{},{},{}", w.lambda_q, w.lambda_phi, w.lambda_w)),
            ("seed", cfg.seed.to_string()),
            ("width_max", cfg.width_max_for(net_cfg.input_size).to_string()),
            ("augment", cfg.augment.to_string()),
            ("jaccard", a.jaccard.to_string()),
        ],
    );
    let samples = load_data(&a.data)?;
    let width_max = cfg.width_max_for(net_cfg.input_size);
    let mut records = Vec::new();
    if cfg.folds > 1 {
        let cv = cross_validate(&samples, &net_cfg, &cfg, a.jaccard, &mut |fold, p| {
            log_epoch(Some(fold), p)
        })?;
        for f in &cv.folds {
            eprintln!("fold {}: accuracy {:.4} on {}", f.fold + 1, f.report.accuracy, f.report.n_test);
        }
        eprintln!("cross-validated accuracy {:.4}", cv.aggregate.accuracy);
        records = ReportRecord::from_cross_validation(&cv, &net_cfg, &cfg);
    }
    let mut net = GraspFcn::build(net_cfg.clone(), cfg.seed)?;
    let history = train(&mut net, &samples, &cfg, &mut |p| log_epoch(None, p))?;
    if cfg.folds <= 1 {
        let report = evaluate(&net, &samples, a.jaccard, width_max)?;
        eprintln!("training-set accuracy {:.4}", report.accuracy);
        records.push(ReportRecord::new(&report, None, &net_cfg, &cfg));
    }
    write_file(&a.out_model, net.save())?;
    write_file(&a.report, records_to_jsonl(&records, !a.omit_timing))?;
    if let Some(p) = &a.loss_history {
        write_file(p, format_loss_history(&history))?;
    }
    eprintln!("trained {} epochs; model {}", history.len(), a.out_model.display());
    Ok(())
}

fn log_epoch(fold: Option<usize>, p: &EpochProgress) {
    let tag = fold.map_or("final".to_string(), |f| format!("fold {}", f + 1));
    eprintln!("{tag} epoch {}/{} loss {:.6}", p.epoch, p.epochs, p.mean_loss);
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let net = load_model(&a.model)?;
    let size = net.config().input_size;
    let width_max = a.width_max.unwrap_or_else(|| default_width_max(size));
    echo(
        "evaluate",
        &[
            ("model", a.model.display().to_string()),
            ("data", a.data.data.display().to_string()),
            ("jaccard", a.jaccard.to_string()),
            ("width_max", width_max.to_string()),
        ],
    );
    let samples = load_data(&a.data)?;
    let report = evaluate(&net, &samples, a.jaccard, width_max)?;
    println!(
        "accuracy {:.4} ({} of {}) at J={} mean_inference_ms {:.3}",
        report.accuracy,
        report.passed.iter().filter(|&&b| b).count(),
        report.n_test,
        a.jaccard,
        report.mean_inference_ms
    );
    if let Some(p) = &a.report {
        let cfg = TrainConfig::default();
        let rec = ReportRecord::new(&report, None, net.config(), &cfg);
        write_file(p, records_to_jsonl(&[rec], !a.omit_timing))?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let net = load_model(&a.model)?;
    let size = net.config().input_size;
    let width_max = a.width_max.unwrap_or_else(|| default_width_max(size));
    let min_sep = a.min_separation.unwrap_or_else(|| default_min_separation(size));
    let fmt_list = |v: &[String]| v.join(",");
    echo(
        "sweep",
        &[
            ("model", a.model.display().to_string()),
            ("data", a.data.data.display().to_string()),
            ("jaccard", a.jaccard.as_ref().map_or("-".into(), |v| fmt_list(&v.iter().map(f64::to_string).collect::<Vec<_>>()))),
            ("topk", a.topk.as_ref().map_or("-".into(), |v| fmt_list(&v.iter().map(usize::to_string).collect::<Vec<_>>()))),
            ("q_threshold", a.q_threshold.to_string()),
            ("min_separation", min_sep.to_string()),
            ("width_max", width_max.to_string()),
        ],
    );
    let samples = load_data(&a.data)?;
    if let Some(thresholds) = &a.jaccard {
        let reports = jaccard_sweep(&net, &samples, thresholds, width_max)?;
        println!("jaccard accuracy n_test");
        for r in &reports {
            println!("{:.2} {:.4} {}", r.jaccard_threshold, r.accuracy, r.n_test);
        }
        let monotone = reports.windows(2).all(|w| w[0].accuracy >= w[1].accuracy);
        println!("non-increasing: {}", if monotone { "yes" } else { "no" });
    } else if let Some(ks) = &a.topk {
        if ks.contains(&0) {
            return Err(Failure::Usage("--topk values must be positive".into()));
        }
        let rows = multi_grasp_eval(&net, &samples, ks, a.q_threshold, min_sep, width_max)?;
        println!("k emitted passed accuracy");
        for r in &rows {
            let acc = r.accuracy.map_or("absent".to_string(), |v| format!("{v:.4}"));
            println!("{} {} {} {acc}", r.k, r.emitted, r.passed);
        }
    }
    Ok(())
}

/// Centred square crop of the shorter side, resampled (nearest) to `size`.
fn fit_to_square(img: &DepthImage, size: usize) -> DepthImage {
    let side = img.height.min(img.width);
    let (oy, ox) = ((img.height - side) / 2, (img.width - side) / 2);
    let mut out = DepthImage::empty(size, size);
    for v in 0..size {
        for u in 0..size {
            let sy = oy + (v * side) / size;
            let sx = ox + (u * side) / size;
            let (i, j) = (img.index(sx, sy), out.index(u, v));
            out.depth[j] = img.depth[i];
            out.valid[j] = img.valid[i];
        }
    }
    out
}

fn output_path(base: &Path, input: &Path, multiple: bool, suffix: &str) -> PathBuf {
    if !multiple {
        return base.to_path_buf();
    }
    let stem = input.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned());
    base.join(format!("{stem}{suffix}"))
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let net = load_model(&a.model)?;
    let size = net.config().input_size;
    let width_max = a.width_max.unwrap_or_else(|| default_width_max(size));
    let min_sep = a.min_separation.unwrap_or_else(|| default_min_separation(size));
    echo(
        "predict",
        &[
            ("model", a.model.display().to_string()),
            ("inputs", a.input.len().to_string()),
            ("num_grasps", a.num_grasps.to_string()),
            ("q_threshold", a.q_threshold.to_string()),
            ("min_separation", min_sep.to_string()),
            ("width_max", width_max.to_string()),
            ("out_overlay", a.out_overlay.display().to_string()),
            ("out_maps", a.out_maps.display().to_string()),
        ],
    );
    if a.num_grasps == 0 {
        return Err(Failure::Usage("--num-grasps must be positive".into()));
    }
    let multiple = a.input.len() > 1;
    let lists: Vec<CliResult<String>> = a
        .input
        .par_iter()
        .map(|input| {
            let raw = io::read_depth_png(input)?;
            let depth = fit_to_square(&raw, size);
            let sample = Sample {
                id: input.display().to_string(),
                object_id: String::new(),
                depth,
                rects: Vec::new(),
            };
            let pred = graspmap::train::predict(&net, std::slice::from_ref(&sample))?.remove(0);
            let grasps = decode_top_k(&pred.maps, a.num_grasps, a.q_threshold, min_sep, width_max);
            let rects = grasps
                .iter()
                .map(|g| pixel_grasp_to_rectangle(g, graspmap::grasp::DEFAULT_HEIGHT_RATIO))
                .collect::<graspmap::Result<Vec<_>>>()?;
            let overlay = render::overlay(&pred.sample.depth, &rects);
            let overlay_path = output_path(&a.out_overlay, input, multiple, "_overlay.png");
            let maps_dir = output_path(&a.out_maps, input, multiple, "_maps");
            save_png(&overlay_path, &overlay)?;
            save_png(&maps_dir.join("quality.png"), &render::quality_map(&pred.maps))?;
            save_png(&maps_dir.join("angle.png"), &render::angle_map(&pred.maps))?;
            save_png(&maps_dir.join("width.png"), &render::width_map(&pred.maps))?;
            let mut text = String::new();
            if multiple {
                let _ = writeln!(text, "# {}", input.display());
            }
            let _ = writeln!(text, "# u v phi_deg width_px quality");
            for g in &grasps {
                let _ = writeln!(
                    text,
                    "{} {} {:.2} {:.2} {:.4}",
                    g.u,
                    g.v,
                    g.phi.to_degrees(),
                    g.width_px,
                    g.quality
                );
            }
            Ok(text)
        })
        .collect();
    let mut all = String::new();
    for l in lists {
        all.push_str(&l?);
    }
    match &a.out_grasps {
        Some(p) => write_file(p, all)?,
        None => print!("{all}"),
    }
    Ok(())
}

fn save_png(path: &Path, img: &image::RgbImage) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    img.save(path).map_err(|e| io_err(path, e))
}

fn configure_threads() -> CliResult {
    let Ok(v) = std::env::var("GRASPMAP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("GRASPMAP_THREADS={v} is not a positive integer")))?;
    // Only fails if a pool was already built, which this binary never does.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
