use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{require_file, Common, DataArgs};
use crate::data::{HsiCube, LabelRaster};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Everything that determines one run: paths, model and training settings.
#[derive(Clone, Debug)]
pub struct RunManifest {
    pub command: String,
    pub cube: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub train_samples: Option<PathBuf>,
    pub test_samples: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Model keys given explicitly by the config file.
    explicit: BTreeSet<String>,
}

pub(crate) fn apply_flags(model: &mut ModelConfig, common: &Common) {
    if common.no_ms {
        model.use_ms = false;
    }
    if common.no_scaf {
        model.use_scaf = false;
    }
    if let Some(l) = common.layers {
        model.layers = l;
    }
    if let Some(n) = common.spectral_neighbors {
        model.spectral_neighbors = n;
    }
    if let Some(d) = common.dim {
        model.dim_inner = d;
        model.dim_spectral = d;
    }
}

impl RunManifest {
    fn empty(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            cube: None,
            labels: None,
            train_samples: None,
            test_samples: None,
            checkpoint: None,
            out: PathBuf::from("."),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            explicit: BTreeSet::new(),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, command: &str, path: &Path) -> Result<Self> {
        let mut m = RunManifest::empty(command);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("{}:{}: expected key = value", path.display(), n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let p = || Some(PathBuf::from(value));
            match key {
                "command" => {}
                "cube" => m.cube = p(),
                "labels" => m.labels = p(),
                "train_samples" => m.train_samples = p(),
                "test_samples" => m.test_samples = p(),
                "checkpoint" => m.checkpoint = p(),
                "out" => m.out = PathBuf::from(value),
                _ => {
                    if m.model.set(key, value)? {
                        m.explicit.insert(key.to_string());
                    } else if !m.train.set(key, value)? {
                        return Err(Error::config(format!(
                            "{}:{}: unknown key {key:?}",
                            path.display(),
                            n + 1
                        )));
                    }
                }
            }
        }
        Ok(m)
    }

    /// Config file (if any), then flags.
    pub fn resolve(command: &str, common: &Common, data: &DataArgs) -> Result<Self> {
        let mut m = match &common.config {
            Some(path) => {
                require_file(path, "config file")?;
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RunManifest::parse(&text, command, path)?
            }
            None => RunManifest::empty(command),
        };
        m.command = command.to_string();
        if let Some(seed) = common.seed {
            m.train.seed = seed;
        }
        if let Some(out) = &common.out {
            m.out = out.clone();
        }
        if let Some(c) = &data.cube {
            m.cube = Some(c.clone());
        }
        if let Some(l) = &data.labels {
            m.labels = Some(l.clone());
        }
        apply_flags(&mut m.model, common);
        for (path, what) in [
            (&m.cube, "cube"),
            (&m.labels, "label raster"),
            (&m.train_samples, "training samples"),
            (&m.test_samples, "test samples"),
        ] {
            if let Some(p) = path {
                require_file(p, what)?;
            }
        }
        Ok(m)
    }

    /// Takes band and class counts from the data, rejecting explicit
    /// settings that disagree, then validates everything.
    pub fn bind_data(&mut self, cube: &HsiCube, labels: &LabelRaster) -> Result<()> {
        if self.explicit.contains("bands") && self.model.bands != cube.bands() {
            return Err(Error::config(format!(
                "config sets bands = {} but the cube has {}",
                self.model.bands,
                cube.bands()
            )));
        }
        self.model.bands = cube.bands();
        let seen = labels.num_classes() as usize;
        if self.explicit.contains("classes") {
            if self.model.classes < seen {
                return Err(Error::config(format!(
                    "config sets classes = {} but labels go up to {seen}",
                    self.model.classes
                )));
            }
        } else {
            self.model.classes = seen;
        }
        self.model.validate()?;
        self.train.validate()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        for (key, path) in [
            ("cube", &self.cube),
            ("labels", &self.labels),
            ("train_samples", &self.train_samples),
            ("test_samples", &self.test_samples),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(p) = path {
                let _ = writeln!(s, "{key} = {}", p.display());
            }
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        s.push_str(&self.model.to_kv());
        s.push_str(&self.train.to_kv());
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
