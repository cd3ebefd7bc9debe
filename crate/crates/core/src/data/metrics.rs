use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `2|P ∩ G| / (|P| + |G|)` for one class; 1 when both sets are empty.
pub fn dice_score(pred: &[u8], gt: &[u8], class: u8) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::AxisMismatch { op: "dice_score", axis: "voxel", expected: gt.len(), actual: pred.len() });
    }
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        let (in_p, in_g) = (a == class, b == class);
        p += in_p as usize;
        g += in_g as usize;
        inter += (in_p && in_g) as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Per-voxel argmax over channels of `[N, C, D, H, W]`; ties go to the
/// lower class.
pub fn argmax_labels<T: Real>(probs: &Tensor<T>) -> Result<Vec<u8>> {
    let [n, c, d, h, w] = probs.shape().dims5()?;
    let vox = d * h * w;
    let x = probs.data();
    let mut out = Vec::with_capacity(n * vox);
    for b in 0..n {
        for v in 0..vox {
            let mut best = 0;
            for k in 1..c {
                if x[(b * c + k) * vox + v] > x[(b * c + best) * vox + v] {
                    best = k;
                }
            }
            out.push(best as u8);
        }
    }
    Ok(out)
}
