use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::data::resample::nearest_grid;
use crate::error::{Error, Result};
use crate::graph::{GridPos, NetOutput};
use crate::tensor::{Real, Tensor};

/// One-hot `[N, K, D, H, W]` from labels `[N, D, H, W]`.
pub fn one_hot<T: Real>(labels: &[u8], batch: usize, extents: [usize; 3], classes: usize) -> Result<Tensor<T>> {
    let vox: usize = extents.iter().product();
    if labels.len() != batch * vox {
        return Err(Error::BufferLength { expected: batch * vox, actual: labels.len() });
    }
    let mut data = alloc::vec![T::zero(); batch * classes * vox];
    for b in 0..batch {
        for v in 0..vox {
            let l = labels[b * vox + v] as usize;
            if l >= classes {
                return Err(Error::InvalidArgument(format!("label {l} outside 0..{classes}")));
            }
            data[(b * classes + l) * vox + v] = T::one();
        }
    }
    Tensor::from_vec(&[batch, classes, extents[0], extents[1], extents[2]], data)
}

/// Nearest-neighbour labels of a `[N, D, H, W]` batch on the `to` grid.
pub fn downsample_label_batch(labels: &[u8], batch: usize, from: [usize; 3], to: [usize; 3]) -> Vec<u8> {
    nearest_grid(labels, batch, from, to)
}

/// Value of one weighted loss term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLoss {
    pub node: GridPos,
    pub weight: f64,
    pub loss: f64,
}

/// Per-branch losses and their combination `main + sum(weight * aux)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub main: f64,
    pub aux: Vec<ScoredLoss>,
    pub total: f64,
}

impl LossReport {
    pub fn combine(main: f64, aux: Vec<ScoredLoss>) -> Self {
        let total = main + aux.iter().map(|a| a.weight * a.loss).sum::<f64>();
        LossReport { main, aux, total }
    }
}

/// Builds the weighted sum of hybrid losses over the main and every auxiliary
/// head, each against labels resampled to the head's grid. Returns the
/// differentiable total and its report.
pub fn deep_supervision_loss<T: Real>(
    tape: &mut Tape<T>,
    out: &NetOutput,
    labels: &[u8],
    batch: usize,
    extents: [usize; 3],
    expected_aux: usize,
    eps: f64,
) -> Result<(Var, LossReport)> {
    if out.aux.len() != expected_aux {
        return Err(Error::MissingBranch(format!("{} auxiliary outputs, expected {expected_aux}", out.aux.len())));
    }
    let branch = |tape: &mut Tape<T>, logits: Var| -> Result<(Var, f64)> {
        let [n, k, d, h, w] = tape.shape(logits).dims5()?;
        if n != batch {
            return Err(Error::AxisMismatch { op: "deep_supervision_loss", axis: "batch", expected: batch, actual: n });
        }
        let grid = [d, h, w];
        let y = if grid == extents {
            one_hot(labels, batch, grid, k)?
        } else {
            one_hot(&downsample_label_batch(labels, batch, extents, grid), batch, grid, k)?
        };
        let probs = tape.softmax_channels(logits)?;
        let l = tape.hybrid_loss(probs, &y, eps)?;
        Ok((l, tape.value(l).item()?.f64()))
    };
    let (mut total, main) = branch(tape, out.main)?;
    let mut aux = Vec::with_capacity(out.aux.len());
    for a in &out.aux {
        let (l, v) = branch(tape, a.logits)?;
        let scaled = tape.scale(l, a.weight);
        total = tape.add(total, scaled)?;
        aux.push(ScoredLoss { node: a.node, weight: a.weight, loss: v });
    }
    Ok((total, LossReport::combine(main, aux)))
}
