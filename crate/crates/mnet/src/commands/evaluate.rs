use mnet_core::data::Predictor;
use mnet_core::graph::{MNet, Precision};

use super::{dataset_dir, ensure_dir, select_split, write_file, CHECKPOINT, DICE_CSV};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::load_cases;
use crate::error::{Error, Result};
use crate::evaluation::{case_dice, column_means, TruthPredictor};
use crate::format::{csv_line, sig6};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `(case id, per-class Dice)`.
    pub cases: Vec<(String, Vec<f64>)>,
    pub mean: Vec<f64>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let k = self.mean.len();
        let mut s = csv_line(std::iter::once("case".to_string()).chain((0..k).map(|c| format!("dice_class{c}"))));
        for (id, d) in self.cases.iter().map(|(i, d)| (i.as_str(), d)).chain(std::iter::once(("mean", &self.mean))) {
            s.push_str(&csv_line(std::iter::once(id.to_string()).chain(d.iter().map(|&v| sig6(v)))));
        }
        s
    }
}

enum Model {
    F32(MNet<f32>),
    F64(MNet<f64>),
}

/// Sliding-window evaluation of a checkpoint on a dataset split; writes
/// `dice.csv` with one row per case and a final mean row.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvalReport> {
    config.validate()?;
    let k = config.model.num_classes;
    let model = if config.evaluate.identity_model {
        None
    } else {
        let path = config.evaluate.checkpoint.clone().unwrap_or_else(|| config.output_dir.join(CHECKPOINT));
        let ckpt = checkpoint::load(&path)?;
        if ckpt.header.config != config.model {
            return Err(Error::Config(format!(
                "checkpoint model config {:?} differs from run config {:?}",
                ckpt.header.config, config.model
            )));
        }
        Some(match config.model.precision {
            Precision::F32 => Model::F32(ckpt.into_model()?),
            Precision::F64 => Model::F64(ckpt.into_model()?),
        })
    };
    let cases = select_split(load_cases(dataset_dir(config)?)?, config.evaluate.split, config.dataset.split_seed)?;
    let mut rows = Vec::with_capacity(cases.len());
    for c in &cases {
        c.case.labels.check_classes(k)?;
        if c.case.image.channels() != config.model.in_channels {
            return Err(Error::Config(format!(
                "case {} has {} channels, model expects {}",
                c.id,
                c.case.image.channels(),
                config.model.in_channels
            )));
        }
        let truth = TruthPredictor { labels: &c.case.labels, num_classes: k };
        let predictor: &dyn Predictor = match &model {
            None => &truth,
            Some(Model::F32(m)) => m,
            Some(Model::F64(m)) => m,
        };
        rows.push((c.id.clone(), case_dice(predictor, &c.case, config.train.patch_size, config.evaluate.overlap)?));
    }
    let mean = column_means(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>());
    let report = EvalReport { cases: rows, mean };
    ensure_dir(&config.output_dir)?;
    config.write_resolved(&config.output_dir)?;
    write_file(&config.output_dir.join(DICE_CSV), &report.to_csv())?;
    Ok(report)
}
