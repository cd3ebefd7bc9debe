//! Volumes, the synthetic phantom, resampling, patch sampling and metrics.

mod inference;
mod metrics;
mod patch;
mod phantom;
pub(crate) mod resample;
mod volume;

pub use inference::{sliding_window, tile_origins, Predictor, Tile};
pub use metrics::{argmax_labels, dice_score};
pub use patch::{sample_patch, Patch};
pub use phantom::{generate_phantom, organ_volume_mm3, PhantomSpec};
pub use resample::{downsample_label, resample_extent, resample_labels, resample_volume, Interpolation};
pub use volume::{LabelVolume, Volume};

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded shuffle into a training 80% and a testing 20% (at least one case
/// each).
pub fn split_dataset<I: Clone>(ids: &[I], seed: u64) -> Result<(Vec<I>, Vec<I>)> {
    if ids.len() < 2 {
        return Err(Error::TooFewCases { got: ids.len(), min: 2 });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (libm::round(ids.len() as f64 * 0.2) as usize).clamp(1, ids.len() - 1);
    let n_train = ids.len() - n_test;
    let pick = |r: &[usize]| r.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
