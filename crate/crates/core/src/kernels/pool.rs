use alloc::vec::Vec;

use crate::tensor::Real;

/// Non-overlapping max pooling over `[N*C, D, H, W]` slices; stride equals the
/// window and trailing remainders are dropped. Returns the pooled values and,
/// for each output, the flat input index of its first maximal element in scan
/// order.
pub fn max_forward<T: Real>(
    input: &[T],
    slices: usize,
    extents: [usize; 3],
    window: [usize; 3],
) -> (Vec<T>, Vec<usize>) {
    let [d, h, w] = extents;
    let [wz, wy, wx] = window;
    let (od, oh, ow) = (d / wz, h / wy, w / wx);
    let vol = d * h * w;
    let mut out = Vec::with_capacity(slices * od * oh * ow);
    let mut arg = Vec::with_capacity(slices * od * oh * ow);
    for s in 0..slices {
        let base = s * vol;
        for oz in 0..od {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = usize::MAX;
                    for z in oz * wz..(oz + 1) * wz {
                        for y in oy * wy..(oy + 1) * wy {
                            let row = base + (z * h + y) * w;
                            for x in ox * wx..(ox + 1) * wx {
                                let v = input[row + x];
                                // Strict comparison keeps the first maximum; NaN propagates.
                                if v > best || best_i == usize::MAX || v.is_nan() && !best.is_nan() {
                                    best = v;
                                    best_i = row + x;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    (out, arg)
}

pub fn max_backward<T: Real>(grad_out: &[T], argmax: &[usize], input_len: usize) -> Vec<T> {
    let mut g = alloc::vec![T::zero(); input_len];
    for (&i, &dy) in argmax.iter().zip(grad_out) {
        g[i] = g[i] + dy;
    }
    g
}
