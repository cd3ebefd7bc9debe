use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Image with `[C, D, H, W]` voxels and physical spacing `(z, y, x)` in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub voxels: Tensor<f32>,
    pub spacing_mm: [f64; 3],
}

/// Integer labels on a `[D, H, W]` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub labels: Vec<u8>,
    pub shape: [usize; 3],
    pub spacing_mm: [f64; 3],
}

fn check_spacing(spacing_mm: [f64; 3]) -> Result<()> {
    if spacing_mm.iter().all(|s| *s > 0.0 && s.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("spacing {spacing_mm:?} must be positive")))
    }
}

impl Volume {
    pub fn new(voxels: Tensor<f32>, spacing_mm: [f64; 3]) -> Result<Self> {
        if voxels.dims().len() != 4 {
            return Err(Error::Rank { got: voxels.dims().len() });
        }
        check_spacing(spacing_mm)?;
        Ok(Volume { voxels, spacing_mm })
    }

    pub fn channels(&self) -> usize {
        self.voxels.dims()[0]
    }

    /// `(D, H, W)`.
    pub fn extents(&self) -> [usize; 3] {
        let d = self.voxels.dims();
        [d[1], d[2], d[3]]
    }
}

impl LabelVolume {
    pub fn new(labels: Vec<u8>, shape: [usize; 3], spacing_mm: [f64; 3]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if labels.len() != n {
            return Err(Error::BufferLength { expected: n, actual: labels.len() });
        }
        if n == 0 {
            return Err(Error::ZeroExtent { axis: shape.iter().position(|&e| e == 0).unwrap_or(0) });
        }
        check_spacing(spacing_mm)?;
        Ok(LabelVolume { labels, shape, spacing_mm })
    }

    /// Rejects labels `>= num_classes`.
    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l as usize >= num_classes) {
            Some(l) => Err(Error::InvalidArgument(format!("label {l} outside 0..{num_classes}"))),
            None => Ok(()),
        }
    }

    /// Sorted distinct label values.
    pub fn label_set(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        self.labels.iter().for_each(|&l| seen[l as usize] = true);
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }

    pub fn count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}
