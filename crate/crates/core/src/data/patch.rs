use alloc::vec::Vec;

use rand::Rng;

use super::volume::{LabelVolume, Volume};
use crate::error::{Error, Result};

/// A cropped (zero-padded where needed) training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Voxel position of the patch corner; negative when padded.
    pub origin: [isize; 3],
    /// `[C, pz, py, px]`, x fastest.
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Patch {
    /// Copies the window at `origin` out of `vol`, zero outside.
    pub fn extract(vol: &Volume, labels: &LabelVolume, origin: [isize; 3], size: [usize; 3]) -> Self {
        let ext = vol.extents();
        let c = vol.channels();
        let n: usize = size.iter().product();
        let mut image = alloc::vec![0.0f32; c * n];
        let mut lab = alloc::vec![0u8; n];
        let src_vol: usize = ext.iter().product();
        let data = vol.voxels.data();
        for z in 0..size[0] {
            let sz = origin[0] + z as isize;
            if sz < 0 || sz >= ext[0] as isize {
                continue;
            }
            for y in 0..size[1] {
                let sy = origin[1] + y as isize;
                if sy < 0 || sy >= ext[1] as isize {
                    continue;
                }
                let x0 = (-origin[2]).clamp(0, size[2] as isize) as usize;
                let x1 = (ext[2] as isize - origin[2]).clamp(0, size[2] as isize) as usize;
                if x0 >= x1 {
                    continue;
                }
                let src_row = (sz as usize * ext[1] + sy as usize) * ext[2];
                let sx0 = (origin[2] + x0 as isize) as usize;
                let dst_row = (z * size[1] + y) * size[2];
                for ch in 0..c {
                    let s = ch * src_vol + src_row + sx0;
                    let d = ch * n + dst_row + x0;
                    image[d..d + (x1 - x0)].copy_from_slice(&data[s..s + (x1 - x0)]);
                }
                lab[dst_row + x0..dst_row + x1].copy_from_slice(&labels.labels[src_row + sx0..src_row + sx0 + (x1 - x0)]);
            }
        }
        Patch { origin, image, labels: lab }
    }
}

/// Window corner containing `center`, kept inside the volume where the
/// volume is large enough and centered otherwise.
fn origin_for(center: [usize; 3], ext: [usize; 3], size: [usize; 3]) -> [isize; 3] {
    core::array::from_fn(|i| {
        let (e, p) = (ext[i] as isize, size[i] as isize);
        if e >= p {
            (center[i] as isize - p / 2).clamp(0, e - p)
        } else {
            -((p - e) / 2)
        }
    })
}

/// Draws one patch. With probability `fg_oversample_prob` the window is
/// centered on a uniformly chosen foreground voxel, otherwise on a uniform
/// voxel.
pub fn sample_patch<R: Rng + ?Sized>(
    vol: &Volume,
    labels: &LabelVolume,
    size: [usize; 3],
    fg_oversample_prob: f64,
    rng: &mut R,
) -> Result<Patch> {
    let ext = vol.extents();
    if ext != labels.shape {
        return Err(Error::InvalidArgument(alloc::format!(
            "image extents {ext:?} differ from label extents {:?}",
            labels.shape
        )));
    }
    let want_fg = rng.random::<f64>() < fg_oversample_prob;
    let fg_count = if want_fg { labels.labels.iter().filter(|&&l| l != 0).count() } else { 0 };
    let flat = if fg_count > 0 {
        let k = rng.random_range(0..fg_count);
        labels.labels.iter().enumerate().filter(|(_, &l)| l != 0).nth(k).map(|(i, _)| i).unwrap_or(0)
    } else {
        rng.random_range(0..labels.labels.len())
    };
    let center = [flat / (ext[1] * ext[2]), (flat / ext[2]) % ext[1], flat % ext[2]];
    Ok(Patch::extract(vol, labels, origin_for(center, ext, size), size))
}
