//! The `msast` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or configuration, 3 I/O or file format,
//! 4 numeric failure, 5 incompatible inputs, 6 mode violation.

pub mod config;

use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, KEYS};

use crate::data::{generate_synthetic, read_feature_file, DatasetManifest, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, emit_ribbon, format_report, AggregateMode, EvalReport, Summary};
use crate::model::{frame_label, Model, StreamState};
use crate::training::{load_checkpoint, save_checkpoint, train_with};

#[derive(Debug, Parser)]
#[command(name = "msast", version, about = "Multi-scale action segmentation transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset tree.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Label every frame of a feature file in one pass.
    Predict(PredictArgs),
    /// Label a feature file frame by frame with a causal model.
    Stream(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub videos: usize,
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub min_len: usize,
    #[arg(long, default_value_t = 400)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train the causal model: one decoder, causal attention and convolution.
    #[arg(long)]
    pub causal: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any config key, e.g. `--set feature_maps=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "oracle")]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub report: PathBuf,
    /// Directory for one ground-truth/prediction ribbon image per video.
    #[arg(long)]
    pub ribbon: Option<PathBuf>,
    /// Score the ground truth against itself.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Data(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Numeric(_) => 4,
        Error::Incompatible(_) | Error::Shape(_) => 5,
        Error::Mode(_) => 6,
    }
}

/// Runs one command, writing the echoed configuration and progress to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Stream(a) => stream(a, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn echo(out: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(out, "{k}={v}").map_err(io_err(Path::new("<stdout>")))?;
    }
    Ok(())
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(io_err(Path::new("<stdout>")))
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        num_classes: a.classes,
        num_videos: a.videos,
        min_len: a.min_len,
        max_len: a.max_len,
        feature_dim: a.dim,
        noise_sigma: a.noise,
        train_fraction: a.train_fraction,
        seed: a.seed,
        ..SynthConfig::default()
    };
    echo(
        out,
        &[
            ("out", a.out.display().to_string()),
            ("videos", cfg.num_videos.to_string()),
            ("classes", cfg.num_classes.to_string()),
            ("dim", cfg.feature_dim.to_string()),
            ("seed", cfg.seed.to_string()),
            ("min_len", cfg.min_len.to_string()),
            ("max_len", cfg.max_len.to_string()),
            ("noise", cfg.noise_sigma.to_string()),
            ("train_fraction", cfg.train_fraction.to_string()),
        ],
    )?;
    cfg.validate()?;
    let data = generate_synthetic(&cfg)?;
    let manifest = DatasetManifest::write(&a.out, &data.mapping, &data.train, &data.test)?;
    let frames: usize = data.train.iter().chain(&data.test).map(|v| v.len()).sum();
    say(
        out,
        format_args!(
            "wrote {} train and {} test videos ({frames} frames, {} classes) to {}",
            manifest.train.len(),
            manifest.test.len(),
            manifest.mapping.len(),
            manifest.root.display()
        ),
    )
}

fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &a.set {
        cfg.set_assignment(s)?;
    }
    if let Some(d) = &a.data {
        cfg.data_root = Some(d.clone());
    }
    if let Some(s) = &a.split {
        cfg.split = s.clone();
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.causal {
        cfg.causal = true;
        cfg.num_decoders = 1;
    }
    Ok(cfg)
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = resolve_train_config(&a)?;
    let root = cfg
        .data_root
        .clone()
        .ok_or_else(|| Error::Config("data_root is not set (use --data or the config)".into()))?;
    let manifest = DatasetManifest::open(&root)?;
    let videos = manifest.load_split(&cfg.split, true)?;
    let input_dim = videos.first().map_or(0, |v| v.features.cols());
    let model_cfg = cfg.model_config(input_dim, manifest.mapping.len());
    cfg.input_dim = Some(model_cfg.input_dim);
    cfg.num_classes = Some(model_cfg.num_classes);
    say(out, &cfg)?;
    say(out, format_args!("out={}", a.out.display()))?;
    if model_cfg.num_classes < manifest.mapping.len() {
        return Err(Error::Incompatible(format!(
            "model has {} classes, dataset maps {}",
            model_cfg.num_classes,
            manifest.mapping.len()
        )));
    }
    let mut model = Model::<f32>::build(&model_cfg, cfg.seed)?;
    let mut progress = Ok(());
    let (history, state) = train_with(&mut model, &videos, &cfg.train_config(), None, |rec, _| {
        progress = say(out, rec);
        if progress.is_err() {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    progress?;
    save_checkpoint(&a.out, &model, &state)?;
    let hist_path = PathBuf::from(format!("{}.history", a.out.display()));
    std::fs::write(&hist_path, history.to_text()).map_err(io_err(&hist_path))?;
    say(out, format_args!("wrote {}", a.out.display()))
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    Ok(load_checkpoint(path)?.0)
}

fn check_dim(model: &Model<f32>, features: &crate::Matrix<f32>, what: &str) -> Result<()> {
    let expected = model.config().input_dim;
    if features.cols() != expected {
        return Err(Error::Incompatible(format!(
            "{what}: expected feature dimension {expected}, found {}",
            features.cols()
        )));
    }
    Ok(())
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    echo(
        out,
        &[
            ("ckpt", a.ckpt.as_ref().map_or(String::new(), |p| p.display().to_string())),
            ("data", a.data.display().to_string()),
            ("split", a.split.clone()),
            ("report", a.report.display().to_string()),
            ("ribbon", a.ribbon.as_ref().map_or(String::new(), |p| p.display().to_string())),
            ("oracle", a.oracle.to_string()),
        ],
    )?;
    let manifest = DatasetManifest::open(&a.data)?;
    let ids = manifest.split(&a.split)?;
    let model = match (&a.ckpt, a.oracle) {
        (Some(p), false) => Some(load_model(p)?),
        _ => None,
    };
    let num_classes = match &model {
        Some(m) => {
            let c = m.config().num_classes;
            if c < manifest.mapping.len() {
                return Err(Error::Incompatible(format!(
                    "expected at most {c} classes, dataset maps {}",
                    manifest.mapping.len()
                )));
            }
            c
        }
        None => manifest.mapping.len(),
    };
    if let Some(dir) = &a.ribbon {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut reports = Vec::with_capacity(ids.len());
    for id in &ids {
        let video = manifest.load_video(id, true)?;
        let gt = video.labels()?;
        let pred = match &model {
            Some(m) => {
                check_dim(m, &video.features, &format!("video {id}"))?;
                m.predict(&video.features)?
            }
            None => gt.to_vec(),
        };
        if let Some(dir) = &a.ribbon {
            emit_ribbon(
                &[("ground truth", gt), ("prediction", &pred)],
                dir.join(format!("{id}.ppm")),
            )?;
        }
        reports.push((id.clone(), EvalReport::evaluate(&pred, gt, num_classes)?));
    }
    let text = format_report(&reports)?;
    std::fs::write(&a.report, &text).map_err(io_err(&a.report))?;
    let all: Vec<EvalReport> = reports.into_iter().map(|(_, r)| r).collect();
    if let Summary::Overall(pooled) = aggregate(&all, AggregateMode::Overall)? {
        let s = pooled.scores();
        say(
            out,
            format_args!(
                "{} videos: accuracy {:.2} edit {:.2} f1@10 {:.2} f1@25 {:.2} f1@50 {:.2}",
                all.len(),
                s.accuracy,
                s.edit,
                s.f1[0],
                s.f1[1],
                s.f1[2]
            ),
        )?;
    }
    Ok(())
}

fn echo_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    echo(
        out,
        &[
            ("ckpt", a.ckpt.display().to_string()),
            ("features", a.features.display().to_string()),
            ("out", a.out.display().to_string()),
        ],
    )
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    echo_predict(&a, out)?;
    let model = load_model(&a.ckpt)?;
    let features = read_feature_file(&a.features)?;
    check_dim(&model, &features, &a.features.display().to_string())?;
    let labels = model.predict(&features)?;
    crate::data::write_labels(&a.out, &labels)
}

fn stream(a: PredictArgs, out: &mut dyn Write) -> Result<()> {
    echo_predict(&a, out)?;
    let model = load_model(&a.ckpt)?;
    if !model.is_causal() {
        return Err(Error::Mode("streaming requires a causal model".into()));
    }
    let features = read_feature_file(&a.features)?;
    check_dim(&model, &features, &a.features.display().to_string())?;
    let file = std::fs::File::create(&a.out).map_err(io_err(&a.out))?;
    let mut sink = BufWriter::new(file);
    let mut state = StreamState::new();
    for t in 0..features.rows() {
        let logits = model.forward_stream(features.row(t), &mut state)?;
        writeln!(sink, "{}", frame_label(&logits)).map_err(io_err(&a.out))?;
        sink.flush().map_err(io_err(&a.out))?;
    }
    Ok(())
}
