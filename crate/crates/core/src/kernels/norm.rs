use alloc::vec::Vec;

use crate::tensor::Real;

/// Per-slice statistics saved by the forward pass.
#[derive(Debug, Clone)]
pub struct SliceStats {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Instance normalization of `[N, C, V]` data (V = voxels per slice).
pub fn instance_forward<T: Real>(
    input: &[T],
    batch: usize,
    channels: usize,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Vec<T>, SliceStats) {
    let slices = batch * channels;
    let vox = input.len() / slices;
    let mut out = Vec::with_capacity(input.len());
    let mut stats = SliceStats { mean: Vec::with_capacity(slices), inv_std: Vec::with_capacity(slices) };
    for s in 0..slices {
        let x = &input[s * vox..(s + 1) * vox];
        let mean = x.iter().map(|v| v.f64()).sum::<f64>() / vox as f64;
        let var = x.iter().map(|v| { let d = v.f64() - mean; d * d }).sum::<f64>() / vox as f64;
        let inv_std = 1.0 / libm::sqrt(var + eps);
        let c = s % channels;
        let (g, b) = (gamma[c].f64(), beta[c].f64());
        let scale = T::of(g * inv_std);
        let shift = T::of(b - g * mean * inv_std);
        out.extend(x.iter().map(|&v| v * scale + shift));
        stats.mean.push(mean);
        stats.inv_std.push(inv_std);
    }
    (out, stats)
}

/// Returns `(d_input, d_gamma, d_beta)`.
pub fn instance_backward<T: Real>(
    input: &[T],
    grad_out: &[T],
    batch: usize,
    channels: usize,
    gamma: &[T],
    stats: &SliceStats,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let slices = batch * channels;
    let vox = input.len() / slices;
    let m = vox as f64;
    let mut dx = Vec::with_capacity(input.len());
    let mut dgamma = alloc::vec![0.0f64; channels];
    let mut dbeta = alloc::vec![0.0f64; channels];
    for s in 0..slices {
        let c = s % channels;
        let x = &input[s * vox..(s + 1) * vox];
        let dy = &grad_out[s * vox..(s + 1) * vox];
        let (mean, inv_std) = (stats.mean[s], stats.inv_std[s]);
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (&xv, &g) in x.iter().zip(dy) {
            let xhat = (xv.f64() - mean) * inv_std;
            sum_dy += g.f64();
            sum_dy_xhat += g.f64() * xhat;
        }
        dgamma[c] += sum_dy_xhat;
        dbeta[c] += sum_dy;
        let g = gamma[c].f64();
        // dx = g * inv_std / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
        let k = g * inv_std / m;
        for (&xv, &gy) in x.iter().zip(dy) {
            let xhat = (xv.f64() - mean) * inv_std;
            dx.push(T::of(k * (m * gy.f64() - sum_dy - xhat * sum_dy_xhat)));
        }
    }
    (dx, dgamma.into_iter().map(T::of).collect(), dbeta.into_iter().map(T::of).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_values_normalize_to_unit() {
        let (y, _) = instance_forward(&[1.0f64, 3.0], 1, 1, &[1.0], &[0.0], 1e-5);
        assert!((y[0] + 1.0).abs() < 1e-5 && (y[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_slice_is_zero() {
        let (y, _) = instance_forward(&[5.0f32; 8], 1, 1, &[1.0], &[0.0], 1e-5);
        assert!(y.iter().all(|v| v.abs() < 1e-6));
    }
}
