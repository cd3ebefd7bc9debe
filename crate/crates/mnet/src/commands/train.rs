use std::time::Instant;

use mnet_core::graph::{MNet, Precision};
use mnet_core::tensor::Real;
use mnet_core::training::{train_loop, Case};

use super::{dataset_dir, ensure_dir, select_split, write_file, CHECKPOINT, METRICS_CSV};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::dataset::load_cases;
use crate::error::Result;
use crate::evaluation::{case_dice, column_means};
use crate::format::{csv_line, sig6};

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_main: f64,
    /// Mean training-set Dice per class, on evaluation epochs only.
    pub dice: Option<Vec<f64>>,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    pub fn header(num_classes: usize) -> String {
        let mut cols: Vec<String> = ["epoch", "lr", "loss_total", "loss_main"].map(String::from).to_vec();
        cols.extend((0..num_classes).map(|c| format!("dice_class{c}")));
        cols.push("wall_clock_s".into());
        csv_line(cols)
    }

    pub fn line(&self, num_classes: usize) -> String {
        let mut cols = vec![self.epoch.to_string(), sig6(self.lr), sig6(self.loss_total), sig6(self.loss_main)];
        match &self.dice {
            Some(d) => cols.extend(d.iter().map(|&v| sig6(v))),
            None => cols.extend(std::iter::repeat_n(String::new(), num_classes)),
        }
        cols.push(sig6(self.wall_clock_s));
        csv_line(cols)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rows: Vec<MetricsRow>,
}

/// Mean per-class Dice over `cases` under sliding-window inference.
pub(crate) fn mean_dice<T: Real>(model: &MNet<T>, cases: &[Case], patch: [usize; 3], overlap: f64) -> Result<Vec<f64>> {
    let rows = cases.iter().map(|c| case_dice(model, c, patch, overlap)).collect::<Result<Vec<_>>>()?;
    Ok(column_means(&rows))
}

/// Trains on the dataset and writes `model.ckpt`, `metrics.csv` and the
/// resolved config. On divergence the rows so far are still written.
pub fn cmd_train(config: &RunConfig) -> Result<TrainReport> {
    match config.model.precision {
        Precision::F32 => train_impl::<f32>(config),
        Precision::F64 => train_impl::<f64>(config),
    }
}

fn train_impl<T: Real>(config: &RunConfig) -> Result<TrainReport> {
    config.validate()?;
    let arch = config.arch_choice()?;
    let cases = load_cases(dataset_dir(config)?)?;
    let cases: Vec<Case> = select_split(cases, config.train_options.split, config.dataset.split_seed)?
        .into_iter()
        .map(|c| c.case)
        .collect();
    let out = &config.output_dir;
    ensure_dir(out)?;
    config.write_resolved(out)?;
    let mut model: MNet<T> = arch.model(&config.model, config.train.seed)?;
    let k = config.model.num_classes;
    let every = config.train_options.eval_every;
    let last = config.train.max_epochs.saturating_sub(1);
    let start = Instant::now();
    let mut rows = Vec::with_capacity(config.train.max_epochs);
    let result = train_loop(&mut model, &cases, &config.train, |s, m| {
        let dice = if every > 0 && ((s.epoch + 1) % every == 0 || s.epoch == last) {
            Some(mean_dice(m, &cases, config.train.patch_size, config.train_options.eval_overlap).map_err(|e| match e {
                crate::error::Error::Core(c) => c,
                other => mnet_core::Error::InvalidArgument(other.to_string()),
            })?)
        } else {
            None
        };
        rows.push(MetricsRow {
            epoch: s.epoch,
            lr: s.lr,
            loss_total: s.loss_total,
            loss_main: s.loss_main,
            dice,
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
        Ok(())
    });
    let mut csv = MetricsRow::header(k);
    for r in &rows {
        csv.push_str(&r.line(k));
    }
    write_file(&out.join(METRICS_CSV), &csv)?;
    result?;
    checkpoint::save(&out.join(CHECKPOINT), &model, &arch)?;
    Ok(TrainReport { rows })
}
