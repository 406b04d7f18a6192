//! Command-line entry point: `split`, `train`, `eval`, `map`, `gradcheck`
//! and `synth`.
//!
//! Settings come from a flat `key = value` file (`--config`) overridden by
//! flags. Every run writes its resolved settings to `<out>/run.cfg`, which
//! can be passed back as `--config` to reproduce or evaluate it.

mod manifest;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    load_cube, load_labels, read_samples, save_cube, save_labels, stratified_split, synth_dataset,
    validate_samples, write_samples, Sample, SplitSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{default_palette, write_map};
use crate::model::{gradient_suite, MultiFormer};
use crate::tensor::{read_checkpoint, write_checkpoint};
use crate::train::{evaluate, predict, train};

pub use manifest::RunManifest;

/// Tolerance of the gradient suite.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "multiformer", version, about = "Hyperspectral pixel classification with a multiscale spectral-spatial transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratified train/test split of a label raster.
    Split {
        #[arg(long)]
        labels: PathBuf,
        /// Lines of `class count`.
        #[arg(long)]
        counts: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes checkpoint.mftc, metrics.log and run.cfg.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Training samples written by `split`.
        #[arg(long = "train")]
        train_samples: Option<PathBuf>,
        /// Held-out samples, scored after every epoch.
        #[arg(long = "test")]
        test_samples: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint; prints and writes report.txt.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Samples to score.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Classification map of every labeled pixel as map.ppm.
    Map {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Classify every pixel, labeled or not.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference gradient suite on the tiny configuration.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic cube and label raster.
    Synth {
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 16)]
        bands: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    /// Cube header.
    #[arg(long)]
    pub cube: Option<PathBuf>,
    /// Label raster header.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace multiscale tokenization with a flat projection.
    #[arg(long)]
    pub no_ms: bool,
    /// Disable cross-layer fusion.
    #[arg(long)]
    pub no_scaf: bool,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub spectral_neighbors: Option<usize>,
    /// Token width, inner and spectral.
    #[arg(long)]
    pub dim: Option<usize>,
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Split { labels, counts, common } => cmd_split(&labels, &counts, &common, out),
        Command::Train { data, train_samples, test_samples, epochs, common } => {
            let mut m = RunManifest::resolve("train", &common, &data)?;
            if let Some(p) = train_samples {
                m.train_samples = Some(p);
            }
            if let Some(p) = test_samples {
                m.test_samples = Some(p);
            }
            if let Some(e) = epochs {
                m.train.epochs = e;
            }
            cmd_train(m, out)
        }
        Command::Eval { data, checkpoint, samples, common } => {
            let mut m = RunManifest::resolve("eval", &common, &data)?;
            if let Some(p) = checkpoint {
                m.checkpoint = Some(p);
            }
            if let Some(p) = samples {
                m.test_samples = Some(p);
            }
            cmd_eval(m, out)
        }
        Command::Map { data, checkpoint, all, common } => {
            let mut m = RunManifest::resolve("map", &common, &data)?;
            if let Some(p) = checkpoint {
                m.checkpoint = Some(p);
            }
            cmd_map(m, all, out)
        }
        Command::Gradcheck { common } => cmd_gradcheck(&common, out),
        Command::Synth { height, width, bands, classes, noise, common } => {
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let (cube, labels) = synth_dataset(height, width, bands, classes, noise, common.seed.unwrap_or(0))?;
            create_dir(&dir)?;
            save_cube(&cube, &dir.join("cube.hdr"))?;
            save_labels(&labels, &dir.join("labels.hdr"))?;
            say(out, &format!("wrote {}x{}x{} cube and labels to {}", height, width, bands, dir.display()))
        }
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} {} does not exist", path.display())))
    }
}

fn cmd_split(labels_path: &Path, counts_path: &Path, common: &Common, out: &mut dyn Write) -> Result<()> {
    require_file(labels_path, "label raster")?;
    require_file(counts_path, "counts file")?;
    let labels = load_labels(labels_path)?;
    let text = std::fs::read_to_string(counts_path).map_err(|e| Error::io(counts_path, e))?;
    let spec = SplitSpec::parse_counts(&text, common.seed.unwrap_or(0), counts_path)?;
    let split = stratified_split(&labels, &spec)?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    create_dir(&dir)?;
    write_samples(&dir.join("train.txt"), &split.train)?;
    write_samples(&dir.join("test.txt"), &split.test)?;
    let mut table = String::from("class\ttrain\ttest\n");
    for (class, (tr, te)) in split.class_counts() {
        let _ = writeln!(table, "C{class}\t{tr}\t{te}");
    }
    let _ = write!(table, "{} train / {} test", split.train.len(), split.test.len());
    say(out, &table)
}

fn load_data(m: &RunManifest) -> Result<(crate::data::HsiCube, crate::data::LabelRaster)> {
    let cube_path = m.cube.as_deref().ok_or_else(|| Error::config("--cube is required"))?;
    let labels_path = m.labels.as_deref().ok_or_else(|| Error::config("--labels is required"))?;
    let cube = load_cube(cube_path)?;
    let labels = load_labels(labels_path)?;
    if !labels.matches(&cube) {
        return Err(Error::config(format!(
            "label raster {}x{} does not cover cube {}x{}",
            labels.height(),
            labels.width(),
            cube.height(),
            cube.width()
        )));
    }
    Ok((cube.normalize(), labels))
}

fn load_samples(path: Option<&Path>, labels: &crate::data::LabelRaster, what: &str) -> Result<Vec<Sample>> {
    match path {
        Some(p) => {
            let s = read_samples(p)?;
            validate_samples(labels, &s)?;
            Ok(s)
        }
        None => Err(Error::config(format!("{what} samples are required"))),
    }
}

fn all_labeled(labels: &crate::data::LabelRaster) -> Vec<Sample> {
    let mut out = Vec::new();
    for row in 0..labels.height() {
        for col in 0..labels.width() {
            let class = labels.get(row, col);
            if class != 0 {
                out.push(Sample { row, col, class });
            }
        }
    }
    out
}

fn cmd_train(mut m: RunManifest, out: &mut dyn Write) -> Result<()> {
    let (cube, labels) = load_data(&m)?;
    m.bind_data(&cube, &labels)?;
    let train_samples = load_samples(m.train_samples.as_deref(), &labels, "training")?;
    let test_samples = match &m.test_samples {
        Some(p) => Some(load_samples(Some(p), &labels, "test")?),
        None => None,
    };
    let dir = m.out.clone();
    create_dir(&dir)?;
    m.checkpoint = Some(dir.join("checkpoint.mftc"));
    m.write(&dir.join("run.cfg"))?;

    let mut model = MultiFormer::<f32>::init(m.model.clone(), m.train.seed)?;
    let mut log = String::new();
    let every = m.train.checkpoint_every;
    train(&mut model, &cube, &train_samples, test_samples.as_deref(), &m.train, |stats, model| {
        let line = stats.log_line();
        say(out, &line)?;
        log.push_str(&line);
        log.push('\n');
        if every > 0 && stats.epoch % every == 0 {
            write_checkpoint(&dir.join(format!("checkpoint_epoch{}.mftc", stats.epoch)), &model.to_named())?;
        }
        Ok(())
    })?;
    let log_path = dir.join("metrics.log");
    std::fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    write_checkpoint(&dir.join("checkpoint.mftc"), &model.to_named())?;
    say(out, &format!("wrote {}", dir.join("checkpoint.mftc").display()))
}

fn load_model(m: &RunManifest) -> Result<MultiFormer<f32>> {
    let path = m.checkpoint.as_deref().ok_or_else(|| Error::config("--checkpoint is required"))?;
    require_file(path, "checkpoint")?;
    MultiFormer::from_named(m.model.clone(), &read_checkpoint(path)?)
}

fn cmd_eval(mut m: RunManifest, out: &mut dyn Write) -> Result<()> {
    let (cube, labels) = load_data(&m)?;
    m.bind_data(&cube, &labels)?;
    let model = load_model(&m)?;
    let samples = load_samples(m.test_samples.as_deref(), &labels, "evaluation")?;
    let cm = evaluate(&model, &cube, &samples)?;
    let report = cm.report()?;
    create_dir(&m.out)?;
    let path = m.out.join("report.txt");
    std::fs::write(&path, &report).map_err(|e| Error::io(&path, e))?;
    out.write_all(report.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn cmd_map(mut m: RunManifest, all: bool, out: &mut dyn Write) -> Result<()> {
    let (cube, labels) = load_data(&m)?;
    m.bind_data(&cube, &labels)?;
    let model = load_model(&m)?;
    let targets = if all {
        let mut v = Vec::with_capacity(cube.height() * cube.width());
        for row in 0..cube.height() {
            for col in 0..cube.width() {
                v.push(Sample { row, col, class: labels.get(row, col) });
            }
        }
        v
    } else {
        all_labeled(&labels)
    };
    let preds = predict(&model, &cube, &targets)?;
    let mut map = crate::data::LabelRaster::new(labels.height(), labels.width(), vec![0; labels.labels().len()])?;
    for (s, p) in targets.iter().zip(preds) {
        map.set(s.row, s.col, p);
    }
    create_dir(&m.out)?;
    let path = m.out.join("map.ppm");
    write_map(&path, &map, &default_palette(m.model.classes))?;
    say(out, &format!("wrote {} ({} pixels classified)", path.display(), targets.len()))
}

fn cmd_gradcheck(common: &Common, out: &mut dyn Write) -> Result<()> {
    let mut m = RunManifest::resolve("gradcheck", common, &DataArgs::default())?;
    if common.config.is_none() {
        let mut tiny = crate::model::ModelConfig::tiny();
        manifest::apply_flags(&mut tiny, common);
        m.model = tiny;
    }
    m.model.validate()?;
    let (report, names) = gradient_suite(&m.model, m.train.seed)?;
    for p in &report.params {
        say(out, &format!("{:<32} rel {:.3e}  max abs {:.3e}", names[p.index], p.rel_error, p.max_abs_error))?;
    }
    let n = report.params.len();
    if report.passes(GRAD_TOLERANCE) {
        say(out, &format!("all {n} parameter groups < 1e-4"))
    } else {
        let bad = report.params.iter().filter(|p| p.rel_error >= GRAD_TOLERANCE).count();
        say(out, &format!("{bad} of {n} parameter groups >= 1e-4"))?;
        Err(Error::CheckFailed(format!(
            "max relative gradient error {:.3e}",
            report.max_rel_error()
        )))
    }
}
