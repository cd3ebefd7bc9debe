//! Full-volume prediction from overlapping patches averaged in probability
//! space.

use alloc::vec::Vec;

use super::volume::Volume;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One window of the input volume.
#[derive(Debug, Clone)]
pub struct Tile {
    /// `[1, C, pz, py, px]`, zero outside the volume.
    pub image: Tensor<f32>,
    pub origin: [isize; 3],
}

/// Anything producing per-class probabilities `[1, K, pz, py, px]` for a tile.
pub trait Predictor {
    fn num_classes(&self) -> usize;
    fn predict(&self, tile: &Tile) -> Result<Tensor<f32>>;
}

/// Window corners along one axis: stride `patch * (1 - overlap)` (at least 1),
/// the last window flush with the end. A patch longer than the extent gives a
/// single centered window.
pub fn tile_origins(extent: usize, patch: usize, overlap: f64) -> Vec<isize> {
    if patch >= extent {
        return alloc::vec![-(((patch - extent) / 2) as isize)];
    }
    let stride = (libm::floor(patch as f64 * (1.0 - overlap)) as usize).max(1);
    let last = extent - patch;
    let mut v: Vec<isize> = (0..=last).step_by(stride).map(|o| o as isize).collect();
    if *v.last().unwrap_or(&0) != last as isize {
        v.push(last as isize);
    }
    v
}

/// Averages tile probabilities over every covering window; returns
/// `[1, K, D, H, W]`.
pub fn sliding_window(model: &dyn Predictor, vol: &Volume, patch: [usize; 3], overlap: f64) -> Result<Tensor<f32>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(alloc::format!("overlap {overlap} outside [0, 1)")));
    }
    let ext = vol.extents();
    let c = vol.channels();
    let k = model.num_classes();
    let nvox: usize = ext.iter().product();
    let pvox: usize = patch.iter().product();
    let mut acc = alloc::vec![0.0f64; k * nvox];
    let mut hits = alloc::vec![0u32; nvox];
    let o: [Vec<isize>; 3] = core::array::from_fn(|i| tile_origins(ext[i], patch[i], overlap));
    let dummy = super::volume::LabelVolume::new(alloc::vec![0; nvox], ext, vol.spacing_mm)?;
    for &oz in &o[0] {
        for &oy in &o[1] {
            for &ox in &o[2] {
                let origin = [oz, oy, ox];
                let p = super::patch::Patch::extract(vol, &dummy, origin, patch);
                let tile = Tile { image: Tensor::from_vec(&[1, c, patch[0], patch[1], patch[2]], p.image)?, origin };
                let probs = model.predict(&tile)?;
                let want = [1, k, patch[0], patch[1], patch[2]];
                if probs.dims() != want {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "predictor returned {:?}, expected {want:?}",
                        probs.dims()
                    )));
                }
                let pd = probs.data();
                for z in 0..patch[0] {
                    let sz = oz + z as isize;
                    if sz < 0 || sz >= ext[0] as isize {
                        continue;
                    }
                    for y in 0..patch[1] {
                        let sy = oy + y as isize;
                        if sy < 0 || sy >= ext[1] as isize {
                            continue;
                        }
                        for x in 0..patch[2] {
                            let sx = ox + x as isize;
                            if sx < 0 || sx >= ext[2] as isize {
                                continue;
                            }
                            let dst = (sz as usize * ext[1] + sy as usize) * ext[2] + sx as usize;
                            let src = (z * patch[1] + y) * patch[2] + x;
                            hits[dst] += 1;
                            for ch in 0..k {
                                acc[ch * nvox + dst] += pd[ch * pvox + src] as f64;
                            }
                        }
                    }
                }
            }
        }
    }
    let out = acc.iter().enumerate().map(|(i, &s)| (s / hits[i % nvox] as f64) as f32).collect();
    Tensor::from_vec(&[1, k, ext[0], ext[1], ext[2]], out)
}
