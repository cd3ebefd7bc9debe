use alloc::vec::Vec;

use super::volume::{LabelVolume, Volume};
use crate::error::{Error, Result};
use crate::kernels::interp;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// `max(1, round(extent * src / target))`.
pub fn resample_extent(extent: usize, src_mm: f64, target_mm: f64) -> usize {
    (libm::round(extent as f64 * src_mm / target_mm) as usize).max(1)
}

fn target_extents(extents: [usize; 3], src: [f64; 3], target: [f64; 3]) -> Result<[usize; 3]> {
    if !target.iter().all(|t| *t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("target spacing {target:?} must be positive")));
    }
    Ok(core::array::from_fn(|i| resample_extent(extents[i], src[i], target[i])))
}

/// Nearest-neighbour resize of `slices` stacked `[D, H, W]` grids.
pub(crate) fn nearest_grid<T: Copy>(src: &[T], slices: usize, from: [usize; 3], to: [usize; 3]) -> Vec<T> {
    let map = |s, d| (0..d).map(|t| interp::nearest_index(t, s, d)).collect::<Vec<_>>();
    let (zi, yi, xi) = (map(from[0], to[0]), map(from[1], to[1]), map(from[2], to[2]));
    let svol = from.iter().product::<usize>();
    let mut out = Vec::with_capacity(slices * to.iter().product::<usize>());
    for s in 0..slices {
        let base = &src[s * svol..(s + 1) * svol];
        for &z in &zi {
            for &y in &yi {
                let row = &base[(z * from[1] + y) * from[2]..];
                out.extend(xi.iter().map(|&x| row[x]));
            }
        }
    }
    out
}

/// Resamples an image to `target_mm` spacing.
pub fn resample_volume(vol: &Volume, target_mm: [f64; 3], mode: Interpolation) -> Result<Volume> {
    let src = vol.extents();
    let dst = target_extents(src, vol.spacing_mm, target_mm)?;
    let c = vol.channels();
    let data = match mode {
        Interpolation::Trilinear => interp::trilinear_forward(vol.voxels.data(), c, src, dst),
        Interpolation::Nearest => nearest_grid(vol.voxels.data(), c, src, dst),
    };
    Volume::new(Tensor::from_vec(&[c, dst[0], dst[1], dst[2]], data)?, target_mm)
}

/// Resamples labels to `target_mm` spacing (always nearest).
pub fn resample_labels(labels: &LabelVolume, target_mm: [f64; 3]) -> Result<LabelVolume> {
    let dst = target_extents(labels.shape, labels.spacing_mm, target_mm)?;
    LabelVolume::new(nearest_grid(&labels.labels, 1, labels.shape, dst), dst, target_mm)
}

/// Nearest-neighbour labels on an explicit target grid; spacing scales with
/// the extent ratio.
pub fn downsample_label(labels: &LabelVolume, target: [usize; 3]) -> Result<LabelVolume> {
    if let Some(axis) = target.iter().position(|&t| t == 0) {
        return Err(Error::ZeroExtent { axis });
    }
    let spacing = core::array::from_fn(|i| labels.spacing_mm[i] * labels.shape[i] as f64 / target[i] as f64);
    LabelVolume::new(nearest_grid(&labels.labels, 1, labels.shape, target), target, spacing)
}
