//! The `sv2a` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::batch::{
    batch_features, batch_metrics, batch_render, metric_inputs_from_dir, metric_inputs_from_manifest,
    validate_manifest, BatchRenderConfig,
};
use super::manifest::ClipManifest;
use super::preprocess::{preprocess, PreprocessConfig};
use super::worker_pool;
use crate::ambisonic::{ring_layout, Direction, Trajectory};
use crate::audio::{read_wav, write_wav, WavContents, WavEncoding};
use crate::error::{Error, Result};
use crate::flow::{
    constant_task, load_checkpoint, sample_binaural, save_checkpoint, train, PairedExample, TrainConfig,
    WeightSharing,
};
use crate::heatmap::{extract_features, FeatureConfig, HeatmapSequence, DEFAULT_HEATMAP_FPS};
use crate::hrir::{load_hrir_manifest, HeadModelConfig};
use crate::metrics::MetricConfig;
use crate::renderer::{render_static, render_trajectory, HrirSource, RenderConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sv2a",
    version,
    about = "Mono-to-binaural rendering, binaural metrics, heatmap features and a toy flow-matching model",
    after_help = "Batch commands use SV2A_THREADS worker threads when it is set.\n\
                  Exit status: 0 success, 1 failure (per-clip failures only with --strict), 2 usage error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter a clip manifest by readability, duration, and silence.
    Preprocess(PreprocessArgs),
    /// Render mono clips to binaural WAV files.
    Render(RenderArgs),
    /// Score stereo WAV files with the interaural metrics.
    Metrics(MetricsArgs),
    /// Extract spatial features from heatmap files.
    Features(FeaturesArgs),
    /// Train the toy binaural flow-matching model.
    CfmTrain(TrainArgs),
    /// Draw samples from a trained checkpoint.
    CfmSample(SampleArgs),
    /// Check that every file a manifest references exists and parses.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Input manifest (JSON array of clips).
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the manifest of kept clips.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    min_seconds: f64,
    #[arg(long, default_value_t = -50.0, allow_hyphen_values = true)]
    silence_dbfs: f64,
    #[arg(long, default_value_t = 0.8)]
    max_silence: f64,
    /// Exit 1 when any clip is unreadable.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct RenderOptions {
    /// Spherical-harmonic order (0 to 2).
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Number of virtual speakers on the horizontal ring.
    #[arg(long, default_value_t = 5)]
    speakers: usize,
    /// Measured HRIR set (JSON manifest of stereo WAVs); analytic head model otherwise.
    #[arg(long)]
    hrir_manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0875)]
    head_radius: f64,
    #[arg(long, default_value_t = 1024)]
    block_size: usize,
    #[arg(long, default_value_t = 256)]
    crossfade: usize,
    /// Scale the output so its peak is 1.
    #[arg(long)]
    normalize: bool,
    /// Keep the convolution tail instead of trimming to the input length.
    #[arg(long)]
    no_trim: bool,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pcm16: bool,
}

impl RenderOptions {
    fn config(&self) -> Result<RenderConfig> {
        let hrir_source = match &self.hrir_manifest {
            Some(p) => HrirSource::Set(load_hrir_manifest(p)?),
            None => HrirSource::Analytic(HeadModelConfig {
                head_radius: self.head_radius,
                ..HeadModelConfig::default()
            }),
        };
        let cfg = RenderConfig {
            order: self.order,
            layout: ring_layout(self.speakers)?,
            hrir_source,
            schedule: crate::ambisonic::BlockSchedule {
                block_size: self.block_size,
                crossfade: self.crossfade,
            },
            normalize_output: self.normalize,
            trim_output: !self.no_trim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn encoding(&self) -> WavEncoding {
        if self.pcm16 {
            WavEncoding::Pcm16
        } else {
            WavEncoding::Float32
        }
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Batch mode: manifest of clips.
    #[arg(long, conflicts_with = "input", requires = "out")]
    manifest: Option<PathBuf>,
    /// Batch mode: output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-file mode: mono (or stereo, downmixed) input WAV.
    #[arg(long, requires = "output")]
    input: Option<PathBuf>,
    /// Single-file mode: output WAV.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Single-file mode: fixed source azimuth in degrees (left positive).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "trajectory")]
    azimuth_deg: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation_deg: f64,
    /// Single-file mode: trajectory CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Horizontal field of view for heatmap-derived directions.
    #[arg(long, default_value_t = 90.0)]
    fov_deg: f64,
    /// Frame rate of heatmap files.
    #[arg(long, default_value_t = DEFAULT_HEATMAP_FPS)]
    heatmap_fps: f64,
    #[command(flatten)]
    options: RenderOptions,
    /// Exit 1 when any clip fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Directory of stereo WAV files, or a manifest JSON.
    input: PathBuf,
    /// Write per-clip reports and the aggregate as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the aggregate as CSV (`metric,mean,count`); printed when no output is given.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    max_lag_ms: f64,
    #[arg(long, default_value_t = -60.0, allow_hyphen_values = true)]
    gate_dbfs: f64,
    /// Exit 1 when any clip fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// A single heatmap file.
    #[arg(conflicts_with = "manifest", required_unless_present = "manifest")]
    input: Option<PathBuf>,
    /// Output CSV for a single file; output directory with --manifest.
    #[arg(long)]
    out: PathBuf,
    /// Batch mode: process every clip with a heatmap.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_HEATMAP_FPS)]
    heatmap_fps: f64,
    /// Mask threshold relative to the frame maximum.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Exit 1 when any clip fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training data: JSON array of {left, right, cond}. Defaults to the constant task.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target of the one-dimensional constant task.
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    target: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 8)]
    embed_dim: usize,
    /// One net for both channels, told apart by a flag input.
    #[arg(long)]
    shared: bool,
    /// Checkpoint output.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV output (`step,loss`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Condition vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    cond: Vec<f64>,
    /// Samples CSV output (`sample,channel,x0,x1,...`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Manifest to check.
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HEATMAP_FPS)]
    heatmap_fps: f64,
}

/// Runs the command line and returns the process exit status.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match worker_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn strict_code(strict: bool, failures: usize) -> i32 {
    if strict && failures > 0 {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Preprocess(a) => run_preprocess(a),
        Command::Render(a) => run_render(a),
        Command::Metrics(a) => run_metrics(a),
        Command::Features(a) => run_features(a),
        Command::CfmTrain(a) => run_train(a),
        Command::CfmSample(a) => run_sample(a),
        Command::Validate(a) => run_validate(a),
    }
}

fn run_preprocess(a: PreprocessArgs) -> Result<i32> {
    let manifest = ClipManifest::load(&a.manifest)?;
    let cfg = PreprocessConfig {
        min_seconds: a.min_seconds,
        silence_threshold_dbfs: a.silence_dbfs,
        max_silence_fraction: a.max_silence,
        ..PreprocessConfig::default()
    };
    let (kept, report) = preprocess(&manifest, &cfg);
    kept.save(&a.out)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    println!(
        "total {} kept {} rejected_short {} rejected_silent {} rejected_unreadable {} quality_flagged {}",
        report.total,
        report.kept,
        report.rejected_short,
        report.rejected_silent,
        report.rejected_unreadable,
        report.quality_flagged
    );
    Ok(strict_code(a.strict, report.rejected_unreadable))
}

fn run_render(a: RenderArgs) -> Result<i32> {
    let render = a.options.config()?;
    if let Some(manifest) = &a.manifest {
        let out = a.out.as_deref().expect("clap requires --out with --manifest");
        let cfg = BatchRenderConfig {
            render,
            field_of_view: a.fov_deg.to_radians(),
            heatmap_fps: a.heatmap_fps,
            features: FeatureConfig::default(),
            encoding: a.options.encoding(),
        };
        let log = batch_render(&ClipManifest::load(manifest)?, &cfg, out)?;
        println!("rendered {} failed {}", log.rendered, log.failed);
        return Ok(strict_code(a.strict, log.failed));
    }
    let (Some(input), Some(output)) = (&a.input, &a.output) else {
        eprintln!("error: render needs --manifest and --out, or --input and --output");
        return Ok(EXIT_USAGE);
    };
    let mono = read_wav(input)?.to_mono();
    let out = match (&a.trajectory, a.azimuth_deg) {
        (Some(t), _) => render_trajectory(&mono, &Trajectory::load_csv(t)?, &render)?,
        (None, az) => render_static(&mono, Direction::from_degrees(az.unwrap_or(0.0), a.elevation_deg), &render)?,
    };
    write_wav(output, &WavContents::Stereo(out), a.options.encoding())?;
    Ok(EXIT_OK)
}

fn run_metrics(a: MetricsArgs) -> Result<i32> {
    let inputs = if a.input.is_dir() {
        metric_inputs_from_dir(&a.input)?
    } else {
        metric_inputs_from_manifest(&ClipManifest::load(&a.input)?)
    };
    let cfg = MetricConfig {
        max_lag_ms: a.max_lag_ms,
        silence_gate_db: a.gate_dbfs,
        ..MetricConfig::default()
    };
    let batch = batch_metrics(&inputs, &cfg)?;
    if let Some(p) = &a.json {
        batch.save_json(p)?;
    }
    match &a.csv {
        Some(p) => batch.aggregate.write_csv(create(p)?)?,
        None if a.json.is_none() => batch.aggregate.write_csv(std::io::stdout().lock())?,
        None => {}
    }
    Ok(strict_code(a.strict, batch.aggregate.failed))
}

fn run_features(a: FeaturesArgs) -> Result<i32> {
    let cfg = FeatureConfig {
        mask_threshold_rel: a.threshold,
        ..FeatureConfig::default()
    };
    if let Some(m) = &a.manifest {
        let logs = batch_features(&ClipManifest::load(m)?, &cfg, a.heatmap_fps, &a.out)?;
        let failed = logs.iter().filter(|l| l.error.is_some()).count();
        println!("extracted {} failed {}", logs.len() - failed, failed);
        return Ok(strict_code(a.strict, failed));
    }
    let input = a.input.as_deref().expect("clap requires an input without --manifest");
    let seq = HeatmapSequence::load(input, a.heatmap_fps)?;
    extract_features(&seq, &cfg)?.write_csv(create(&a.out)?)?;
    Ok(EXIT_OK)
}

fn run_train(a: TrainArgs) -> Result<i32> {
    let data: Vec<PairedExample> = match &a.data {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: p.clone(),
                source,
            })?
        }
        None => constant_task(a.target),
    };
    let first = data.first().ok_or(Error::Empty("training set"))?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        steps: a.steps,
        seed: a.seed,
        hidden_width: a.hidden,
        embed_dim: a.embed_dim,
        sharing: if a.shared {
            WeightSharing::Shared
        } else {
            WeightSharing::Separate
        },
        ..TrainConfig::default()
    };
    let mut model = cfg.init_model(first.left.len(), first.cond.len())?;
    let report = train(&mut model, &data, &cfg)?;
    save_checkpoint(&a.out, &model)?;
    if let Some(p) = &a.trace {
        report.write_csv(create(p)?)?;
    }
    if let Some(l) = report.final_loss() {
        println!("final loss {l}");
    }
    Ok(EXIT_OK)
}

fn run_sample(a: SampleArgs) -> Result<i32> {
    let model = load_checkpoint(&a.checkpoint)?;
    if a.cond.len() != model.cond_dim() {
        return Err(Error::LengthMismatch(a.cond.len(), model.cond_dim()));
    }
    let samples = sample_binaural(&model, &a.cond, a.count, a.steps, a.seed)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["sample".to_string(), "channel".to_string()];
    header.extend((0..model.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (i, (l, r)) in samples.iter().enumerate() {
        for (ch, x) in [("left", l), ("right", r)] {
            let mut row = vec![i.to_string(), ch.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    Ok(EXIT_OK)
}

fn run_validate(a: ValidateArgs) -> Result<i32> {
    let manifest = ClipManifest::load(&a.manifest)?;
    let results = validate_manifest(&manifest, a.heatmap_fps);
    let mut bad = 0;
    for r in &results {
        for issue in &r.issues {
            println!("{}: {issue}", r.id);
        }
        bad += usize::from(!r.issues.is_empty());
    }
    println!("{} clips, {} with issues", results.len(), bad);
    Ok(if bad > 0 { EXIT_FAILURE } else { EXIT_OK })
}
