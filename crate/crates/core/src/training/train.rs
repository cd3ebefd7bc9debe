use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{deep_supervision_loss, LossReport};
use super::optim::{poly_lr, Sgd};
use crate::autodiff::Tape;
use crate::data::{sample_patch, LabelVolume, Patch, Volume};
use crate::error::{Error, Result};
use crate::graph::MNet;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub poly_exponent: f64,
    pub max_epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    /// `(z, y, x)`.
    pub patch_size: [usize; 3],
    pub seed: u64,
    pub loss_eps: f64,
    pub fg_oversample_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.01,
            momentum: 0.99,
            nesterov: true,
            poly_exponent: 0.9,
            max_epochs: 500,
            iterations_per_epoch: 250,
            batch_size: 2,
            patch_size: [32, 64, 64],
            seed: 0,
            loss_eps: 1e-5,
            fg_oversample_prob: 0.5,
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted so a run can leave the initialization untouched.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("train: {m}")));
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.patch_size.iter().any(|&p| p < 16) {
            return bad("patch extents must be >= 16");
        }
        if self.max_epochs == 0 || self.iterations_per_epoch == 0 || self.batch_size == 0 {
            return bad("max_epochs, iterations_per_epoch and batch_size must be >= 1");
        }
        if !(self.loss_eps > 0.0) {
            return bad("loss_eps must be > 0");
        }
        if !(0.0..=1.0).contains(&self.fg_oversample_prob) {
            return bad("fg_oversample_prob must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One training volume with its labels.
#[derive(Debug, Clone)]
pub struct Case {
    pub image: Volume,
    pub labels: LabelVolume,
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_main: f64,
    pub iterations: Vec<LossReport>,
}

/// Stacks patches into `[N, C, pz, py, px]` and labels `[N, pz, py, px]`.
pub fn stack_patches<T: Real>(patches: &[Patch], channels: usize, size: [usize; 3]) -> Result<(Tensor<T>, Vec<u8>)> {
    let mut image = Vec::new();
    let mut labels = Vec::new();
    for p in patches {
        image.extend(p.image.iter().map(|&v| T::of(v as f64)));
        labels.extend_from_slice(&p.labels);
    }
    let t = Tensor::from_vec(&[patches.len(), channels, size[0], size[1], size[2]], image)?;
    Ok((t, labels))
}

/// Runs `max_epochs` epochs of patch-based SGD. Patches are drawn from a
/// stream seeded by `config.seed`; cases are picked uniformly. `on_epoch`
/// sees each epoch's statistics and the model after that epoch.
pub fn train_loop<T: Real, F>(model: &mut MNet<T>, cases: &[Case], config: &TrainConfig, mut on_epoch: F) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &MNet<T>) -> Result<()>,
{
    use rand::Rng;
    config.validate()?;
    if cases.is_empty() {
        return Err(Error::TooFewCases { got: 0, min: 1 });
    }
    let channels = model.config().in_channels;
    for c in cases {
        if c.image.channels() != channels {
            return Err(Error::AxisMismatch { op: "train_loop", axis: "channel", expected: channels, actual: c.image.channels() });
        }
        c.labels.check_classes(model.config().num_classes)?;
    }
    let mut dims = alloc::vec![config.batch_size, channels];
    dims.extend_from_slice(&config.patch_size);
    model.check_input(&dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::new(model.params(), config.momentum, config.nesterov);
    let n_aux = model.architecture().heads.len() - 1;
    let mut history = Vec::with_capacity(config.max_epochs);
    for epoch in 0..config.max_epochs {
        let lr = poly_lr(epoch, config.max_epochs, config.initial_lr, config.poly_exponent);
        let mut reports = Vec::with_capacity(config.iterations_per_epoch);
        for iteration in 0..config.iterations_per_epoch {
            let mut patches = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                let case = &cases[rng.random_range(0..cases.len())];
                patches.push(sample_patch(&case.image, &case.labels, config.patch_size, config.fg_oversample_prob, &mut rng)?);
            }
            let (x, y) = stack_patches::<T>(&patches, channels, config.patch_size)?;
            let mut tape = Tape::new();
            let input = tape.constant(x);
            let out = model.forward(&mut tape, input)?;
            let (loss, report) =
                deep_supervision_loss(&mut tape, &out, &y, config.batch_size, config.patch_size, n_aux, config.loss_eps)?;
            if !report.total.is_finite() {
                return Err(Error::Divergence { epoch, iteration, loss: report.total });
            }
            tape.backward(loss, model.params_mut())?;
            drop(tape);
            sgd.step(model.params_mut(), lr)?;
            reports.push(report);
        }
        let n = reports.len() as f64;
        let stats = EpochStats {
            epoch,
            lr,
            loss_total: reports.iter().map(|r| r.total).sum::<f64>() / n,
            loss_main: reports.iter().map(|r| r.main).sum::<f64>() / n,
            iterations: reports,
        };
        on_epoch(&stats, model)?;
        history.push(stats);
    }
    Ok(history)
}
