//! Separable resampling with the half-pixel convention: output index `t` on
//! an axis of source length `s` and target length `s'` reads source
//! coordinate `(t + 0.5) * s / s' - 0.5`, clamped to `[0, s - 1]`.

use alloc::vec::Vec;

use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub lo: usize,
    pub hi: usize,
    /// Weight of `hi`; `lo` gets `1 - frac`.
    pub frac: f64,
}

pub fn source_coord(t: usize, src: usize, dst: usize) -> f64 {
    let c = (t as f64 + 0.5) * src as f64 / dst as f64 - 0.5;
    c.clamp(0.0, (src - 1) as f64)
}

pub fn linear_taps(src: usize, dst: usize) -> Vec<Tap> {
    (0..dst)
        .map(|t| {
            let c = source_coord(t, src, dst);
            let lo = libm::floor(c) as usize;
            let hi = (lo + 1).min(src - 1);
            Tap { lo, hi, frac: c - lo as f64 }
        })
        .collect()
}

/// Nearest source index: `floor((t + 0.5) * s / s')`, i.e. the half-pixel
/// coordinate rounded half-up.
pub fn nearest_index(t: usize, src: usize, dst: usize) -> usize {
    let c = (t as f64 + 0.5) * src as f64 / dst as f64;
    (libm::floor(c) as usize).min(src - 1)
}

struct Tables<T> {
    z: Vec<(usize, usize, T, T)>,
    y: Vec<(usize, usize, T, T)>,
    x: Vec<(usize, usize, T, T)>,
}

fn tables<T: Real>(src: [usize; 3], dst: [usize; 3]) -> Tables<T> {
    let conv = |s, d| {
        linear_taps(s, d)
            .into_iter()
            .map(|t| (t.lo, t.hi, T::of(1.0 - t.frac), T::of(t.frac)))
            .collect::<Vec<_>>()
    };
    Tables { z: conv(src[0], dst[0]), y: conv(src[1], dst[1]), x: conv(src[2], dst[2]) }
}

/// Trilinear resize of `slices` independent `[D, H, W]` volumes.
pub fn trilinear_forward<T: Real>(input: &[T], slices: usize, src: [usize; 3], dst: [usize; 3]) -> Vec<T> {
    let t = tables::<T>(src, dst);
    let [_, h, w] = src;
    let (svol, dvol) = (src.iter().product::<usize>(), dst.iter().product::<usize>());
    let mut out = Vec::with_capacity(slices * dvol);
    for s in 0..slices {
        let x_in = &input[s * svol..(s + 1) * svol];
        for &(z0, z1, wz0, wz1) in &t.z {
            for &(y0, y1, wy0, wy1) in &t.y {
                let r00 = &x_in[(z0 * h + y0) * w..][..w];
                let r01 = &x_in[(z0 * h + y1) * w..][..w];
                let r10 = &x_in[(z1 * h + y0) * w..][..w];
                let r11 = &x_in[(z1 * h + y1) * w..][..w];
                let (a, b, c, d) = (wz0 * wy0, wz0 * wy1, wz1 * wy0, wz1 * wy1);
                for &(x0, x1, wx0, wx1) in &t.x {
                    let v0 = a * r00[x0] + b * r01[x0] + c * r10[x0] + d * r11[x0];
                    let v1 = a * r00[x1] + b * r01[x1] + c * r10[x1] + d * r11[x1];
                    out.push(wx0 * v0 + wx1 * v1);
                }
            }
        }
    }
    out
}

/// Adjoint of [`trilinear_forward`].
pub fn trilinear_backward<T: Real>(grad_out: &[T], slices: usize, src: [usize; 3], dst: [usize; 3]) -> Vec<T> {
    let t = tables::<T>(src, dst);
    let [_, h, w] = src;
    let (svol, dvol) = (src.iter().product::<usize>(), dst.iter().product::<usize>());
    let mut g = alloc::vec![T::zero(); slices * svol];
    for s in 0..slices {
        let gi = &mut g[s * svol..(s + 1) * svol];
        let mut k = s * dvol;
        for &(z0, z1, wz0, wz1) in &t.z {
            for &(y0, y1, wy0, wy1) in &t.y {
                let corners = [
                    ((z0 * h + y0) * w, wz0 * wy0),
                    ((z0 * h + y1) * w, wz0 * wy1),
                    ((z1 * h + y0) * w, wz1 * wy0),
                    ((z1 * h + y1) * w, wz1 * wy1),
                ];
                for &(x0, x1, wx0, wx1) in &t.x {
                    let dy = grad_out[k];
                    k += 1;
                    for &(row, wr) in &corners {
                        gi[row + x0] = gi[row + x0] + wr * wx0 * dy;
                        gi[row + x1] = gi[row + x1] + wr * wx1 * dy;
                    }
                }
            }
        }
    }
    g
}
