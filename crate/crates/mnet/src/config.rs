//! The single JSON run document. Unknown keys are rejected at every level and
//! every command writes the resolved document next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use mnet_core::data::PhantomSpec;
use mnet_core::graph::{MNetConfig, Precision};
use mnet_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::arch::ArchChoice;
use crate::error::{Error, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Directory holding `manifest.json` and the volume pairs.
    pub dir: Option<PathBuf>,
    /// Number of cases `phantom` generates; case `i` uses seed `phantom.seed + i`.
    pub cases: usize,
    /// Seed of the train/test split used by `split: train|test`.
    pub split_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { dir: None, cases: 8, split_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateOptions {
    /// Defaults to `<output_dir>/model.ckpt`.
    pub checkpoint: Option<PathBuf>,
    pub split: Split,
    /// Fractional tile overlap of sliding-window inference.
    pub overlap: f64,
    /// Test hook: predict the ground truth one-hot instead of running a model.
    pub identity_model: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions { checkpoint: None, split: Split::All, overlap: 0.5, identity_model: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub split: Split,
    /// Evaluate training-set Dice every this many epochs (and after the last);
    /// 0 leaves the Dice columns empty.
    pub eval_every: usize,
    pub eval_overlap: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { split: Split::All, eval_every: 0, eval_overlap: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InspectOptions {
    pub format: ReportFormat,
}

impl Default for InspectOptions {
    fn default() -> Self {
        InspectOptions { format: ReportFormat::Text }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckOptions {
    /// Test hook: op whose backward rule is perturbed, e.g. `instance_norm`.
    pub fault: Option<String>,
    /// Coordinates sampled by the whole-model check; 0 skips it.
    pub model_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnisotropyOptions {
    /// Target inter-slice spacings; in-plane spacing is kept.
    pub spacings_mm: Vec<f64>,
    pub architectures: Vec<String>,
    pub overlap: f64,
}

impl Default for AnisotropyOptions {
    fn default() -> Self {
        AnisotropyOptions {
            spacings_mm: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            architectures: vec!["mesh".into(), "subnet:RRRRDDDD".into(), "subnet:DDDDRRRR".into()],
            overlap: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: MNetConfig,
    pub train: TrainConfig,
    pub phantom: PhantomSpec,
    pub dataset: DatasetConfig,
    pub output_dir: PathBuf,
    pub arch: String,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub train_options: TrainOptions,
    pub evaluate: EvaluateOptions,
    pub inspect: InspectOptions,
    pub gradcheck: GradcheckOptions,
    pub anisotropy: AnisotropyOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: MNetConfig::default(),
            train: TrainConfig::default(),
            phantom: PhantomSpec::default(),
            dataset: DatasetConfig::default(),
            output_dir: PathBuf::from("out"),
            arch: "mesh".into(),
            threads: None,
            train_options: TrainOptions::default(),
            evaluate: EvaluateOptions::default(),
            inspect: InspectOptions::default(),
            gradcheck: GradcheckOptions::default(),
            anisotropy: AnisotropyOptions::default(),
        }
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub arch: Option<String>,
    pub precision: Option<Precision>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// `--seed` drives both phantom generation and training.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.train.seed = seed;
            self.phantom.seed = seed;
        }
        if let Some(arch) = &o.arch {
            self.arch = arch.clone();
        }
        if let Some(p) = o.precision {
            self.model.precision = p;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.phantom.validate()?;
        self.arch_choice()?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        for o in [self.evaluate.overlap, self.train_options.eval_overlap, self.anisotropy.overlap] {
            if !(0.0..1.0).contains(&o) {
                return Err(Error::Config(format!("overlap {o} outside [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn arch_choice(&self) -> Result<ArchChoice> {
        self.arch.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RESOLVED_CONFIG);
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(&path, json + "\n").map_err(Error::io(&path))
    }
}
