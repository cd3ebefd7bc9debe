//! Sliding-window evaluation shared by `train`, `evaluate` and the
//! anisotropy sweep.

use mnet_core::data::{argmax_labels, dice_score, sliding_window, LabelVolume, Predictor, Tile};
use mnet_core::tensor::Tensor;
use mnet_core::training::Case;

use crate::error::Result;

/// Test hook: returns the one-hot ground truth of the case being evaluated.
pub struct TruthPredictor<'a> {
    pub labels: &'a LabelVolume,
    pub num_classes: usize,
}

impl Predictor for TruthPredictor<'_> {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, tile: &Tile) -> mnet_core::Result<Tensor<f32>> {
        let d = tile.image.dims();
        let p = [d[2], d[3], d[4]];
        let [ez, ey, ex] = self.labels.shape;
        let n = p[0] * p[1] * p[2];
        let mut out = vec![0.0f32; self.num_classes * n];
        for z in 0..p[0] {
            for y in 0..p[1] {
                for x in 0..p[2] {
                    let g = [tile.origin[0] + z as isize, tile.origin[1] + y as isize, tile.origin[2] + x as isize];
                    let inside = (0..3).all(|i| g[i] >= 0 && (g[i] as usize) < [ez, ey, ex][i]);
                    let class = if inside {
                        self.labels.labels[(g[0] as usize * ey + g[1] as usize) * ex + g[2] as usize] as usize
                    } else {
                        0
                    };
                    out[class * n + (z * p[1] + y) * p[2] + x] = 1.0;
                }
            }
        }
        Tensor::from_vec(&[1, self.num_classes, p[0], p[1], p[2]], out)
    }
}

/// Per-class Dice of one case, classes `0..K`.
pub fn case_dice(model: &dyn Predictor, case: &Case, patch: [usize; 3], overlap: f64) -> Result<Vec<f64>> {
    let probs = sliding_window(model, &case.image, patch, overlap)?;
    let pred = argmax_labels(&probs)?;
    (0..model.num_classes()).map(|c| Ok(dice_score(&pred, &case.labels.labels, c as u8)?)).collect()
}

/// Mean over classes `1..K`.
pub fn foreground_mean(dice: &[f64]) -> f64 {
    dice[1..].iter().sum::<f64>() / (dice.len() - 1) as f64
}

/// Per-class mean over rows.
pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    (0..k).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64).collect()
}
