use mnet_core::data::{generate_phantom, resample_labels, resample_volume, split_dataset, Interpolation, PhantomSpec};
use mnet_core::graph::{MNet, Precision};
use mnet_core::tensor::Real;
use mnet_core::training::{train_loop, Case};

use super::train::mean_dice;
use super::{ensure_dir, write_file, ANISOTROPY_CSV, ANISOTROPY_SVG};
use crate::arch::ArchChoice;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::foreground_mean;
use crate::format::{csv_line, sig6};
use crate::svg::{line_chart, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyRow {
    pub architecture: String,
    pub spacing_mm: [f64; 3],
    /// Mean over held-out cases of the mean foreground-class Dice.
    pub mean_foreground_dice: f64,
}

/// Generates phantoms at 1 mm inter-slice spacing, resamples them to each
/// target spacing, trains every configured architecture from the same seed
/// and scores held-out cases. Writes `anisotropy.csv` and `anisotropy.svg`.
pub fn cmd_experiment_anisotropy(config: &RunConfig) -> Result<Vec<AnisotropyRow>> {
    config.validate()?;
    if config.phantom.spacing_mm[0] != 1.0 {
        return Err(Error::Config(format!(
            "the anisotropy sweep starts from 1 mm slices, phantom.spacing_mm[0] is {}",
            config.phantom.spacing_mm[0]
        )));
    }
    let opts = &config.anisotropy;
    if opts.spacings_mm.is_empty() || opts.architectures.is_empty() {
        return Err(Error::Config("anisotropy needs at least one spacing and one architecture".into()));
    }
    let archs = opts.architectures.iter().map(|a| a.parse::<ArchChoice>()).collect::<Result<Vec<_>>>()?;
    let base = (0..config.dataset.cases)
        .map(|i| {
            let spec = PhantomSpec { seed: config.phantom.seed.wrapping_add(i as u64), ..config.phantom.clone() };
            generate_phantom(&spec)
        })
        .collect::<mnet_core::Result<Vec<_>>>()?;
    let ids: Vec<usize> = (0..base.len()).collect();
    let (train_ids, test_ids) = split_dataset(&ids, config.dataset.split_seed)?;
    let out = &config.output_dir;
    ensure_dir(out)?;
    config.write_resolved(out)?;
    let mut rows = Vec::new();
    for arch in &archs {
        for &s in &opts.spacings_mm {
            let target = [s, config.phantom.spacing_mm[1], config.phantom.spacing_mm[2]];
            let resampled = |idx: &[usize]| -> Result<Vec<Case>> {
                idx.iter()
                    .map(|&i| {
                        let (v, l) = &base[i];
                        Ok(Case { image: resample_volume(v, target, Interpolation::Trilinear)?, labels: resample_labels(l, target)? })
                    })
                    .collect()
            };
            let train = resampled(&train_ids)?;
            let test = resampled(&test_ids)?;
            let dice = match config.model.precision {
                Precision::F32 => run_one::<f32>(config, arch, &train, &test)?,
                Precision::F64 => run_one::<f64>(config, arch, &train, &test)?,
            };
            rows.push(AnisotropyRow { architecture: arch.to_string(), spacing_mm: target, mean_foreground_dice: dice });
        }
    }
    let mut csv = csv_line(["architecture", "spacing_z_mm", "spacing_y_mm", "spacing_x_mm", "mean_foreground_dice"].map(String::from));
    for r in &rows {
        csv.push_str(&csv_line([
            r.architecture.clone(),
            sig6(r.spacing_mm[0]),
            sig6(r.spacing_mm[1]),
            sig6(r.spacing_mm[2]),
            sig6(r.mean_foreground_dice),
        ]));
    }
    write_file(&out.join(ANISOTROPY_CSV), &csv)?;
    let series: Vec<Series> = archs
        .iter()
        .map(|a| {
            let name = a.to_string();
            let points = rows.iter().filter(|r| r.architecture == name).map(|r| (r.spacing_mm[0], r.mean_foreground_dice)).collect();
            Series { name, points }
        })
        .collect();
    let svg = line_chart("Mean foreground Dice vs inter-slice spacing", "inter-slice spacing (mm)", "mean foreground Dice", &series);
    write_file(&out.join(ANISOTROPY_SVG), &svg)?;
    Ok(rows)
}

fn run_one<T: Real>(config: &RunConfig, arch: &ArchChoice, train: &[Case], test: &[Case]) -> Result<f64> {
    let mut model: MNet<T> = arch.model(&config.model, config.train.seed)?;
    train_loop(&mut model, train, &config.train, |_, _| Ok(()))?;
    let per_case = test
        .iter()
        .map(|c| Ok(foreground_mean(&mean_dice(&model, std::slice::from_ref(c), config.train.patch_size, config.anisotropy.overlap)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_case.iter().sum::<f64>() / per_case.len() as f64)
}
