//! One function per subcommand. Each takes the resolved [`RunConfig`](crate::config::RunConfig) and
//! writes its outputs under `output_dir`.

mod anisotropy;
mod evaluate;
mod gradcheck;
mod inspect;
mod phantom;
mod train;

use std::fs;
use std::path::Path;

use mnet_core::data::split_dataset;

pub use anisotropy::{cmd_experiment_anisotropy, AnisotropyRow};
pub use evaluate::{cmd_evaluate, EvalReport};
pub use gradcheck::{cmd_gradcheck, parse_fault, GradcheckReport};
pub use inspect::{cmd_inspect_arch, ArchReport, NodeReport};
pub use phantom::cmd_phantom;
pub use train::{cmd_train, MetricsRow, TrainReport};

use crate::config::Split;
use crate::dataset::NamedCase;
use crate::error::{Error, Result};

pub const METRICS_CSV: &str = "metrics.csv";
pub const CHECKPOINT: &str = "model.ckpt";
pub const DICE_CSV: &str = "dice.csv";
pub const ANISOTROPY_CSV: &str = "anisotropy.csv";
pub const ANISOTROPY_SVG: &str = "anisotropy.svg";

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(Error::io(path))
}

/// Cases of `split`; the partition is that of [`split_dataset`] by id.
pub(crate) fn select_split(cases: Vec<NamedCase>, split: Split, seed: u64) -> Result<Vec<NamedCase>> {
    if split == Split::All {
        return Ok(cases);
    }
    let ids: Vec<String> = cases.iter().map(|c| c.id.clone()).collect();
    let (train, test) = split_dataset(&ids, seed)?;
    let keep = if split == Split::Train { train } else { test };
    let mut out: Vec<NamedCase> = cases.into_iter().filter(|c| keep.contains(&c.id)).collect();
    out.sort_by_key(|c| keep.iter().position(|k| *k == c.id));
    Ok(out)
}

pub(crate) fn dataset_dir(config: &crate::config::RunConfig) -> Result<&Path> {
    config.dataset.dir.as_deref().ok_or_else(|| Error::Config("dataset.dir is required".into()))
}
