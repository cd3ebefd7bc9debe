//! Stride-1 3D cross-correlation lowered onto GEMM.
//!
//! Output rows are processed in fixed-size chunks: each chunk unfolds its
//! receptive fields into a column matrix and multiplies it by the weight
//! matrix `[Cout, Cin * kd * kh * kw]`. Weight gradients are reduced over the
//! same chunk partition in index order. The input gradient is a convolution
//! of the output gradient with the flipped, channel-transposed kernel.

use alloc::vec;
use alloc::vec::Vec;

use crate::par;
use crate::tensor::{gemm, sum_fixed, Real};

/// Target size of one column buffer in elements; keeps it cache resident.
const COL_BUDGET: usize = 1 << 16;
const MIN_POSITIONS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Input extents (z, y, x).
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    /// Zero padding per side; negative values crop.
    pub padding: [isize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    /// Output extents, or the first axis where the output would be empty.
    pub fn output_extents(input: [usize; 3], kernel: [usize; 3], padding: [isize; 3]) -> Result<[usize; 3], (usize, isize)> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let e = input[a] as isize + 2 * padding[a] - kernel[a] as isize + 1;
            if e < 1 {
                return Err((a, e));
            }
            out[a] = e as usize;
        }
        Ok(out)
    }

    fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    fn cols(&self) -> usize {
        self.in_channels * self.taps()
    }

    /// Output rows (one per `(z, y)` pair) in a sample.
    fn rows_out(&self) -> usize {
        self.output[0] * self.output[1]
    }

    fn vol_in(&self) -> usize {
        self.input.iter().product()
    }

    fn vol_out(&self) -> usize {
        self.output.iter().product()
    }

    fn rows_per_chunk(&self) -> usize {
        let positions = (COL_BUDGET / self.cols()).clamp(MIN_POSITIONS, COL_BUDGET);
        (positions / self.output[2]).clamp(1, self.rows_out())
    }

    /// `(sample, first output row, row count)` for every chunk.
    fn chunks(&self) -> Vec<(usize, usize, usize)> {
        let per = self.rows_per_chunk();
        let rows = self.rows_out();
        let mut v = Vec::new();
        for n in 0..self.batch {
            let mut r = 0;
            while r < rows {
                let len = per.min(rows - r);
                v.push((n, r, len));
                r += len;
            }
        }
        v
    }

    fn is_pointwise(&self) -> bool {
        self.taps() == 1 && self.padding == [0, 0, 0]
    }
}

/// Unfolds `input` (one sample, `[Cin, D, H, W]`) for output rows
/// `r0..r0 + nr` into `col` of shape `[Cin * taps, nr * OW]`.
fn im2col<T: Real>(input: &[T], g: &ConvGeometry, r0: usize, nr: usize, col: &mut [T]) {
    let [d, h, w] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [pz, py, px] = g.padding;
    let [_, oh, ow] = g.output;
    let ncols = nr * ow;
    debug_assert_eq!(col.len(), g.cols() * ncols);
    let mut row = 0;
    for ci in 0..g.in_channels {
        let chan = &input[ci * d * h * w..(ci + 1) * d * h * w];
        for kz in 0..kd {
            for ky in 0..kh {
                for kx in 0..kw {
                    let dst = &mut col[row * ncols..(row + 1) * ncols];
                    let dx = kx as isize - px;
                    // Valid output x range where 0 <= ox + dx < w.
                    let x_lo = (-dx).clamp(0, ow as isize) as usize;
                    let x_hi = (w as isize - dx).clamp(0, ow as isize) as usize;
                    for lr in 0..nr {
                        let (oz, oy) = ((r0 + lr) / oh, (r0 + lr) % oh);
                        let iz = oz as isize + kz as isize - pz;
                        let iy = oy as isize + ky as isize - py;
                        let seg = &mut dst[lr * ow..(lr + 1) * ow];
                        if iz < 0 || iz >= d as isize || iy < 0 || iy >= h as isize || x_lo >= x_hi {
                            seg.fill(T::zero());
                            continue;
                        }
                        let src_row = (iz as usize * h + iy as usize) * w;
                        seg[..x_lo].fill(T::zero());
                        let s0 = (src_row as isize + x_lo as isize + dx) as usize;
                        seg[x_lo..x_hi].copy_from_slice(&chan[s0..s0 + (x_hi - x_lo)]);
                        seg[x_hi..].fill(T::zero());
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Chunks handled by one task. Fixed so that the dW accumulation order only
/// depends on the geometry, never on the worker count.
const CHUNKS_PER_TASK: usize = 32;

fn tasks(chunks: usize) -> Vec<core::ops::Range<usize>> {
    (0..chunks).step_by(CHUNKS_PER_TASK).map(|s| s..(s + CHUNKS_PER_TASK).min(chunks)).collect()
}

/// Forward convolution; `input` is `[N, Cin, D, H, W]`, `weight` is
/// `[Cout, Cin, kd, kh, kw]`. Returns `[N, Cout, OD, OH, OW]`.
pub fn forward<T: Real>(input: &[T], weight: &[T], bias: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    let chunks = g.chunks();
    let (cout, k) = (g.out_channels, g.cols());
    let ow = g.output[2];
    let vol = g.vol_out();
    let tasks = tasks(chunks.len());
    let parts = par::map_indexed(tasks.len(), |ti| {
        let range = tasks[ti].clone();
        let cols_total: usize = chunks[range.clone()].iter().map(|c| c.2 * ow).sum();
        let mut out = vec![T::zero(); cout * cols_total];
        let mut col = Vec::new();
        let mut off = 0;
        for &(n, r0, nr) in &chunks[range] {
            let sample = &input[n * g.in_channels * g.vol_in()..(n + 1) * g.in_channels * g.vol_in()];
            let ncols = nr * ow;
            let dst = &mut out[off..off + cout * ncols];
            if g.is_pointwise() {
                let b = &sample[r0 * ow..];
                gemm(cout, k, ncols, T::one(), weight, (k, 1), b, (g.vol_in(), 1), T::zero(), dst, (ncols, 1));
            } else {
                col.resize(k * ncols, T::zero());
                im2col(sample, g, r0, nr, &mut col);
                gemm(cout, k, ncols, T::one(), weight, (k, 1), &col, (ncols, 1), T::zero(), dst, (ncols, 1));
            }
            if let Some(bias) = bias {
                for (co, row) in dst.chunks_mut(ncols).enumerate() {
                    let b = bias[co];
                    row.iter_mut().for_each(|v| *v = *v + b);
                }
            }
            off += cout * ncols;
        }
        out
    });
    let mut output = vec![T::zero(); g.batch * cout * vol];
    for (range, part) in tasks.into_iter().zip(parts) {
        let mut off = 0;
        for &(n, r0, nr) in &chunks[range] {
            let ncols = nr * ow;
            for co in 0..cout {
                let dst = (n * cout + co) * vol + r0 * ow;
                output[dst..dst + ncols].copy_from_slice(&part[off + co * ncols..off + (co + 1) * ncols]);
            }
            off += cout * ncols;
        }
    }
    output
}

/// Gradients of the weight `[Cout, Cin, kd, kh, kw]` and bias `[Cout]`.
pub fn backward_params<T: Real>(input: &[T], grad_out: &[T], g: &ConvGeometry) -> (Vec<T>, Vec<T>) {
    let chunks = g.chunks();
    let (cout, k) = (g.out_channels, g.cols());
    let ow = g.output[2];
    let vol = g.vol_out();
    let tasks = tasks(chunks.len());
    let parts = par::map_indexed(tasks.len(), |ti| {
        let mut dw = vec![T::zero(); cout * k];
        let mut col = Vec::new();
        for &(n, r0, nr) in &chunks[tasks[ti].clone()] {
            let sample = &input[n * g.in_channels * g.vol_in()..(n + 1) * g.in_channels * g.vol_in()];
            let ncols = nr * ow;
            let dy = &grad_out[n * cout * vol + r0 * ow..];
            if g.is_pointwise() {
                let b = &sample[r0 * ow..];
                gemm(cout, ncols, k, T::one(), dy, (vol, 1), b, (1, g.vol_in()), T::one(), &mut dw, (k, 1));
            } else {
                col.resize(k * ncols, T::zero());
                im2col(sample, g, r0, nr, &mut col);
                gemm(cout, ncols, k, T::one(), dy, (vol, 1), &col, (1, ncols), T::one(), &mut dw, (k, 1));
            }
        }
        dw
    });
    let mut dw = vec![T::zero(); cout * k];
    for part in parts {
        for (a, b) in dw.iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    let mut db = vec![T::zero(); cout];
    for n in 0..g.batch {
        for (co, acc) in db.iter_mut().enumerate() {
            let base = (n * cout + co) * vol;
            *acc = *acc + sum_fixed(&grad_out[base..base + vol]);
        }
    }
    (dw, db)
}

/// Gradient of the input, computed as a convolution of `grad_out` with the
/// spatially flipped kernel whose channel axes are swapped.
pub fn backward_input<T: Real>(grad_out: &[T], weight: &[T], g: &ConvGeometry) -> Vec<T> {
    let [kd, kh, kw] = g.kernel;
    let taps = g.taps();
    let (cin, cout) = (g.in_channels, g.out_channels);
    let mut flipped = vec![T::zero(); weight.len()];
    for co in 0..cout {
        for ci in 0..cin {
            let src = &weight[(co * cin + ci) * taps..(co * cin + ci + 1) * taps];
            let dst = &mut flipped[(ci * cout + co) * taps..(ci * cout + co + 1) * taps];
            for (t, &v) in src.iter().enumerate() {
                dst[taps - 1 - t] = v;
            }
        }
    }
    let tg = ConvGeometry {
        batch: g.batch,
        in_channels: cout,
        out_channels: cin,
        input: g.output,
        kernel: g.kernel,
        padding: [
            kd as isize - 1 - g.padding[0],
            kh as isize - 1 - g.padding[1],
            kw as isize - 1 - g.padding[2],
        ],
        output: g.input,
    };
    debug_assert_eq!(ConvGeometry::output_extents(tg.input, tg.kernel, tg.padding), Ok(g.input));
    forward(grad_out, &flipped, None, &tg)
}
