//! Command-line driver behind the `ssnl` binary.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 I/O or unreadable
//! input file, 3 contract or shape violation, 4 numerical failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ConfigError, RunConfig, KEYS};

use crate::autodiff::{Stencil, TensorError};
use crate::complexity::CostReport;
use crate::data::{
    extract_patch, load_cube, load_labels, split_samples, synthesize_cube, write_cube, write_labels, DataError,
    HsiCube, LabelRaster, SplitSpec, SynthSpec,
};
use crate::metrics::MetricsError;
use crate::model::{
    ensure_compatible, gradient_check, load_model, predict, save_model, ModelConfig, ModelError, ModelParams,
    PARAM_NAMES,
};
use crate::train::{evaluate, train, TrainError};

/// Worst relative error accepted by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Contract(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(format!("config: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let msg = e.to_string();
        match e {
            DataError::Io { .. }
            | DataError::Magic { .. }
            | DataError::Truncated { .. }
            | DataError::TrailingBytes(_)
            | DataError::Header(_) => CliError::Io(msg),
            DataError::Config(_) => CliError::Usage(msg),
            DataError::NonFinite(_) => CliError::Numerical(msg),
            DataError::Dimensions(_) | DataError::Contract(_) => CliError::Contract(msg),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::Config(m) => CliError::Usage(m),
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let msg = e.to_string();
        match e {
            ModelError::Tensor(t) => t.into(),
            ModelError::Io { .. }
            | ModelError::Magic { .. }
            | ModelError::Version(_)
            | ModelError::Header(_)
            | ModelError::Truncated(_) => CliError::Io(msg),
            ModelError::Config(_) => CliError::Usage(msg),
            ModelError::NonFinite(_) => CliError::Numerical(msg),
            ModelError::Contract(_)
            | ModelError::PatchMismatch { .. }
            | ModelError::BandMismatch { .. }
            | ModelError::ParamShape { .. } => CliError::Contract(msg),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Contract(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let msg = e.to_string();
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Data(d) => d.into(),
            TrainError::Metrics(m) => m.into(),
            TrainError::Config(_) => CliError::Usage(msg),
            TrainError::Contract(_) | TrainError::GradShape { .. } => CliError::Contract(msg),
            TrainError::NonFiniteGradient(_) | TrainError::NonFiniteLoss(_) => CliError::Numerical(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ssnl", version, about = "Spectral-spatial hyperspectral patch classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic striped cube and its label raster.
    Synth(SynthArgs),
    /// Split, train, evaluate on the test split; write checkpoint and report.
    Train(TrainArgs),
    /// Print per-class accuracy, OA, AA and kappa for a checkpoint.
    Eval(EvalArgs),
    /// Predict every pixel and write a binary PPM classification map.
    Map(MapArgs),
    /// Print parameter, MAC and FLOP counts for a configuration.
    Complexity(ComplexityArgs),
    /// Check every parameter gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct RunConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl RunConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut rc = RunConfig::default();
        if let Some(path) = &self.config {
            let text = read_text(path)?;
            rc.apply_text(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        for kv in &self.overrides {
            rc.apply_override(kv)?;
        }
        Ok(rc)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 48)]
    pub rows: usize,
    #[arg(long, default_value_t = 48)]
    pub cols: usize,
    #[arg(long, default_value_t = 24)]
    pub bands: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_cube: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub run: RunConfigArgs,
    /// Init and shuffle seed; overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 0.10)]
    pub ratio: f64,
    #[arg(long, value_enum, default_value_t = Subset::Test)]
    pub subset: Subset,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Paint pixels labeled 0 in this raster black.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// Take the configuration from a checkpoint instead of flags.
    #[arg(long, conflicts_with_all = ["config", "overrides", "bands", "classes"])]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfigArgs,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub batch: u64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step of the five-point stencil.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
}

/// Parses `args` (program name first) and runs the subcommand. Reports go to
/// `out`, diagnostics to `err`; the return value is the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Map(a) => cmd_map(a, out),
        Command::Complexity(a) => cmd_complexity(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Loads a cube with every band rescaled to [0, 1].
fn load_scaled_cube(path: &Path) -> Result<HsiCube, CliError> {
    Ok(load_cube(path)?.scale_bands())
}

fn load_checkpoint(path: &Path, cube: &HsiCube) -> Result<(ModelConfig, ModelParams), CliError> {
    let (config, params) = load_model(path)?;
    ensure_compatible(&config, cube.bands())?;
    Ok((config, params))
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = SynthSpec {
        rows: a.rows,
        cols: a.cols,
        bands: a.bands,
        classes: a.classes,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let (cube, labels) = synthesize_cube(&spec)?;
    write_cube(&a.out_cube, &cube)?;
    write_labels(&a.out_labels, &labels)?;
    emit(
        out,
        &format!(
            "synth rows={} cols={} bands={} classes={} noise={:?} seed={} counts={:?}\n",
            a.rows,
            a.cols,
            a.bands,
            a.classes,
            a.noise,
            a.seed,
            labels.class_counts()
        ),
    )
}

/// Splits `labels`, rejecting any class whose training or test part is empty.
pub fn checked_split(labels: &LabelRaster, ratio: f64, seed: u64) -> Result<SplitSpec, CliError> {
    let split = split_samples(labels, ratio, seed)?;
    for c in &split.classes {
        if c.train.is_empty() || c.test.is_empty() {
            let side = if c.train.is_empty() { "training" } else { "test" };
            return Err(CliError::Contract(format!(
                "class {} has an empty {side} split ({} labeled pixels, ratio {ratio})",
                c.class,
                c.train.len() + c.test.len()
            )));
        }
    }
    Ok(split)
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut rc = a.run.resolve()?;
    if let Some(seed) = a.seed {
        rc.seed = seed;
    }
    let cube = load_scaled_cube(&a.cube)?;
    let labels = load_labels(&a.labels)?;
    labels.ensure_matches(&cube)?;
    let model = rc.model_config(cube.bands(), labels.num_classes());
    model.validate()?;
    let split = checked_split(&labels, rc.ratio, rc.split_seed)?;
    let (params, report) = train(&cube, &labels, &split, &model, &rc.train_config())?;
    save_model(&a.out_model, &model, &params)?;

    let mut provenance = vec![
        format!("cube={}", a.cube.display()),
        format!("labels={}", a.labels.display()),
        format!("model={model}"),
        format!("train_samples={} test_samples={}", split.train_len(), split.test_len()),
    ];
    provenance.extend(rc.echo());
    write_file(&a.out_report, report.to_table(&provenance).as_bytes())?;

    let mut text = format!(
        "trained {} epochs on {} pixels ({} patches after augmentation)\n",
        report.epochs(),
        split.train_len(),
        if rc.augment { 6 * split.train_len() } else { split.train_len() }
    );
    if let Some(cm) = &report.test_confusion {
        text.push_str(&cm.render_table(None));
    }
    text.push_str(&format!(
        "train_seconds {:.3}\ntest_seconds {:.3}\n",
        report.train_seconds, report.test_seconds
    ));
    emit(out, &text)
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cube = load_scaled_cube(&a.cube)?;
    let labels = load_labels(&a.labels)?;
    labels.ensure_matches(&cube)?;
    let (model, params) = load_checkpoint(&a.model, &cube)?;
    let split = split_samples(&labels, a.ratio, a.split_seed)?;
    let coords = match a.subset {
        Subset::Train => split.train_coords(),
        Subset::Test => split.test_coords(),
        Subset::All => {
            let mut all = split.train_coords();
            all.extend(split.test_coords());
            all
        }
    };
    let cm = evaluate(&params, &model, &cube, &labels, &coords)?;
    emit(out, &cm.render_table(None))
}

/// RGB for class `c` of `k`: hue `(c−1)·360/k` at full saturation and value,
/// through the six-sector conversion; class 0 is black.
///
/// With `h' = hue/60`, `x = 1 − |h' mod 2 − 1|`, the sectors `⌊h'⌋ = 0..5`
/// give `(1,x,0) (x,1,0) (0,1,x) (0,x,1) (x,0,1) (1,0,x)`, each channel
/// scaled by 255 and rounded.
pub fn class_color(class: u16, k: usize) -> [u8; 3] {
    if class == 0 || k == 0 {
        return [0, 0, 0];
    }
    let hue = (class as f64 - 1.0) * 360.0 / k as f64;
    let h = hue / 60.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h.floor() as u32 % 6 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (v * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

/// Binary PPM with a `#` comment line carrying the model configuration.
pub fn encode_ppm(classes: &[u16], rows: usize, cols: usize, k: usize, comment: &str) -> Vec<u8> {
    let mut buf = format!("P6\n# {comment}\n{cols} {rows}\n255\n").into_bytes();
    buf.reserve(3 * classes.len());
    for &c in classes {
        buf.extend_from_slice(&class_color(c, k));
    }
    buf
}

/// Predicted class of every pixel in row-major order, 0 where `mask` is 0.
pub fn predict_map(
    cube: &HsiCube,
    params: &ModelParams,
    model: &ModelConfig,
    mask: Option<&LabelRaster>,
) -> Result<Vec<u16>, CliError> {
    let mut classes = Vec::with_capacity(cube.rows() * cube.cols());
    for r in 0..cube.rows() {
        for c in 0..cube.cols() {
            if mask.is_some_and(|m| m.get(r, c) == 0) {
                classes.push(0);
                continue;
            }
            let patch = extract_patch(cube, r, c, model.patch)?;
            classes.push(predict(&patch, params, model)?);
        }
    }
    Ok(classes)
}

pub fn cmd_map(a: &MapArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cube = load_scaled_cube(&a.cube)?;
    let (model, params) = load_checkpoint(&a.model, &cube)?;
    let mask = match &a.labels {
        Some(p) => {
            let l = load_labels(p)?;
            l.ensure_matches(&cube)?;
            Some(l)
        }
        None => None,
    };
    let classes = predict_map(&cube, &params, &model, mask.as_ref())?;
    let ppm = encode_ppm(&classes, cube.rows(), cube.cols(), model.classes, &format!("ssnl {model}"));
    write_file(&a.out, &ppm)?;
    emit(
        out,
        &format!("map {}x{} written to {}\n", cube.cols(), cube.rows(), a.out.display()),
    )
}

pub fn cmd_complexity(a: &ComplexityArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = match &a.model {
        Some(path) => load_model(path)?.0,
        None => {
            let rc = a.run.resolve()?;
            let (Some(bands), Some(classes)) = (a.bands, a.classes) else {
                return Err(CliError::Usage("complexity needs --model or both --bands and --classes".into()));
            };
            rc.model_config(bands, classes)
        }
    };
    let report = CostReport::new(&model, a.batch)?;
    emit(out, &report.render(&model, None))
}

/// Configuration exercised by `gradcheck`.
pub fn gradcheck_config() -> ModelConfig {
    let mut c = ModelConfig::new(6, 3, 3);
    c.hidden = 4;
    c.spatial_channels = 3;
    c.classifier_hidden = 8;
    c
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = gradcheck_config();
    let started = Instant::now();
    let r = gradient_check(&config, a.seed, a.step, Stencil::FivePoint)?;
    let worst = r
        .worst_at
        .map_or("-".to_string(), |(t, i)| format!("{}[{i}]", PARAM_NAMES[t]));
    let text = format!(
        "gradcheck seed={} step={:e} coordinates={} max_rel_error={:.3e} worst={worst} seconds={:.2}\n",
        a.seed,
        a.step,
        r.coordinates,
        r.max_rel_error,
        started.elapsed().as_secs_f64()
    );
    emit(out, &text)?;
    // NaN fails too
    if r.max_rel_error.is_nan() || r.max_rel_error >= GRADCHECK_TOLERANCE {
        return Err(CliError::Numerical(format!(
            "worst relative error {:.3e} is not below {GRADCHECK_TOLERANCE:e}",
            r.max_rel_error
        )));
    }
    Ok(())
}
