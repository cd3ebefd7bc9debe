//! Central finite-difference verification of every backward rule, in f64.
//!
//! Each check contracts the op output with a fixed random tensor `R`, so the
//! scalar under test is `<R, f(x)>` and its analytic gradient is the VJP of
//! `R`. The error of one check is
//! `max |analytic - numeric| / max(max |analytic|, max |numeric|)` over every
//! checked coordinate.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{OpKind, Tape, Var};
use crate::error::Result;
use crate::graph::{MNet, MNetConfig};
use crate::tensor::Tensor;
use crate::training::deep_supervision_loss;

pub const STEP: f64 = 1e-5;
/// Smaller for the whole model: with ~1e5 kinked activations a 1e-5 step
/// routinely moves one across its kink.
pub const MODEL_STEP: f64 = 1e-7;
pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
pub const SEEDS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    /// Worst error over all seeds.
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub coordinates: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let amax = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    if amax == 0.0 {
        return diff;
    }
    diff / amax.max(f64::MIN_POSITIVE)
}

/// Draws `numel` values uniform in `[lo, hi]`, each with a random sign when
/// `signed`; keeps values away from zero so kinks are not straddled.
fn uniform(rng: &mut ChaCha8Rng, numel: usize, lo: f64, hi: f64, signed: bool) -> Vec<f64> {
    (0..numel)
        .map(|_| {
            let v = rng.random_range(lo..hi);
            if signed && rng.random::<bool>() { -v } else { v }
        })
        .collect()
}

fn tensor(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(dims, data).expect("shape matches data")
}

type Build<'a> = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'a;

/// Compares the VJP against central differences for every coordinate of
/// every input.
pub fn check_op(inputs: &[Tensor<f64>], fault: Option<OpKind>, rng: &mut ChaCha8Rng, build: &Build<'_>) -> Result<(f64, usize)> {
    let eval = |xs: &[Tensor<f64>]| -> Result<(Tape<f64>, Var, Vec<Var>)> {
        let mut tape = Tape::new();
        if let Some(k) = fault {
            tape.inject_fault(k);
        }
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok((tape, out, vars))
    };
    let (tape, out, vars) = eval(inputs)?;
    let out_shape = tape.shape(out).clone();
    let r = tensor(out_shape.dims(), uniform(rng, out_shape.numel(), 0.5, 1.5, true));
    let grads = tape.vjp(out, r.clone())?;
    let contract = |xs: &[Tensor<f64>]| -> Result<f64> {
        let (t, o, _) = eval(xs)?;
        Ok(t.value(o).data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let mut ana = Vec::new();
    let mut num = Vec::new();
    for (i, x) in inputs.iter().enumerate() {
        let g = grads.wrt(vars[i]).cloned().unwrap_or_else(|| x.map(|_| 0.0));
        for j in 0..x.len() {
            let mut xs: Vec<Tensor<f64>> = inputs.to_vec();
            xs[i].data_mut()[j] += STEP;
            let fp = contract(&xs)?;
            xs[i].data_mut()[j] -= 2.0 * STEP;
            let fm = contract(&xs)?;
            ana.push(g.data()[j]);
            num.push((fp - fm) / (2.0 * STEP));
        }
    }
    Ok((relative_error(&ana, &num), ana.len()))
}

struct OpCase {
    name: &'static str,
    kind: OpKind,
    make: fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    build: fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
}

fn rand_5d(rng: &mut ChaCha8Rng, max: [usize; 5]) -> [usize; 5] {
    core::array::from_fn(|i| rng.random_range(1..=max[i]))
}

fn conv_inputs(rng: &mut ChaCha8Rng, kernel: [usize; 3]) -> Vec<Tensor<f64>> {
    let [n, cin, d, h, w] = rand_5d(rng, [2, 3, 4, 5, 5]);
    let cout = rng.random_range(1..=3);
    let x = tensor(&[n, cin, d, h, w], uniform(rng, n * cin * d * h * w, 0.0, 1.0, true));
    let wn = cout * cin * kernel.iter().product::<usize>();
    let wt = tensor(&[cout, cin, kernel[0], kernel[1], kernel[2]], uniform(rng, wn, 0.0, 1.0, true));
    let b = tensor(&[cout], uniform(rng, cout, 0.0, 1.0, true));
    alloc::vec![x, wt, b]
}

fn distinct_values(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    // A shuffled grid with spacing far above the FD step: no ties, no argmax flips.
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + rng.random_range(0.0..0.1 / n as f64)).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    tensor(dims, v)
}

fn small(rng: &mut ChaCha8Rng, max: [usize; 5], signed: bool) -> Tensor<f64> {
    let dims = rand_5d(rng, max);
    tensor(&dims, uniform(rng, dims.iter().product(), 0.1, 1.0, signed))
}

fn op_cases() -> Vec<OpCase> {
    let mut v = Vec::new();
    v.push(OpCase {
        name: "conv3d (3,3,3)",
        kind: OpKind::Conv3d,
        make: |r| conv_inputs(r, [3, 3, 3]),
        build: |t, x| t.conv3d(x[0], x[1], x[2], [1, 1, 1]),
    });
    v.push(OpCase {
        name: "conv3d (1,3,3)",
        kind: OpKind::Conv3d,
        make: |r| conv_inputs(r, [1, 3, 3]),
        build: |t, x| t.conv3d(x[0], x[1], x[2], [0, 1, 1]),
    });
    v.push(OpCase {
        name: "conv3d (1,1,1)",
        kind: OpKind::Conv3d,
        make: |r| conv_inputs(r, [1, 1, 1]),
        build: |t, x| t.conv3d(x[0], x[1], x[2], [0, 0, 0]),
    });
    v.push(OpCase {
        name: "maxpool3d (1,2,2)",
        kind: OpKind::MaxPool3d,
        make: |r| {
            let d = rand_5d(r, [2, 2, 3, 5, 5]);
            alloc::vec![distinct_values(r, &[d[0], d[1], d[2], d[3] + 1, d[4] + 1])]
        },
        build: |t, x| t.maxpool3d(x[0], [1, 2, 2]),
    });
    v.push(OpCase {
        name: "maxpool3d (2,2,2)",
        kind: OpKind::MaxPool3d,
        make: |r| {
            let d = rand_5d(r, [2, 2, 4, 5, 5]);
            alloc::vec![distinct_values(r, &[d[0], d[1], d[2] + 1, d[3] + 1, d[4] + 1])]
        },
        build: |t, x| t.maxpool3d(x[0], [2, 2, 2]),
    });
    v.push(OpCase {
        name: "upsample_trilinear",
        kind: OpKind::Upsample,
        make: |r| alloc::vec![small(r, [2, 2, 3, 3, 3], true)],
        build: |t, x| {
            let d = t.shape(x[0]).dims().to_vec();
            t.upsample_trilinear(x[0], [2 * d[2], 2 * d[3] + 1, 2 * d[4]])
        },
    });
    v.push(OpCase {
        name: "instance_norm",
        kind: OpKind::InstanceNorm,
        make: |r| {
            let x = small(r, [2, 3, 3, 4, 4], true);
            let c = x.dims()[1];
            let g = tensor(&[c], uniform(r, c, 0.5, 1.5, true));
            let b = tensor(&[c], uniform(r, c, 0.0, 1.0, true));
            alloc::vec![x, g, b]
        },
        build: |t, x| t.instance_norm(x[0], x[1], x[2], 1e-5),
    });
    v.push(OpCase {
        name: "leaky_relu",
        kind: OpKind::LeakyRelu,
        make: |r| alloc::vec![small(r, [2, 2, 3, 4, 4], true)],
        build: |t, x| Ok(t.leaky_relu(x[0], 0.01)),
    });
    v.push(OpCase {
        name: "add",
        kind: OpKind::Add,
        make: |r| {
            let a = small(r, [2, 2, 3, 3, 3], true);
            let b = tensor(a.dims(), uniform(r, a.len(), 0.0, 1.0, true));
            alloc::vec![a, b]
        },
        build: |t, x| t.add(x[0], x[1]),
    });
    v.push(OpCase {
        name: "sub",
        kind: OpKind::Sub,
        make: |r| {
            let a = small(r, [2, 2, 3, 3, 3], true);
            let b = tensor(a.dims(), uniform(r, a.len(), 0.0, 1.0, true));
            alloc::vec![a, b]
        },
        build: |t, x| t.sub(x[0], x[1]),
    });
    v.push(OpCase {
        name: "abs",
        kind: OpKind::Abs,
        make: |r| alloc::vec![small(r, [2, 2, 3, 3, 3], true)],
        build: |t, x| Ok(t.abs(x[0])),
    });
    v.push(OpCase {
        name: "scale",
        kind: OpKind::Scale,
        make: |r| alloc::vec![small(r, [2, 2, 3, 3, 3], true)],
        build: |t, x| Ok(t.scale(x[0], -0.375)),
    });
    v.push(OpCase {
        name: "sum",
        kind: OpKind::Sum,
        make: |r| alloc::vec![small(r, [2, 2, 3, 3, 3], true)],
        build: |t, x| Ok(t.sum(x[0])),
    });
    v.push(OpCase {
        name: "concat_channels",
        kind: OpKind::Concat,
        make: |r| {
            let a = small(r, [2, 3, 2, 3, 3], true);
            let d = a.dims().to_vec();
            let cb = r.random_range(1..=3);
            let b = tensor(&[d[0], cb, d[2], d[3], d[4]], uniform(r, d[0] * cb * d[2] * d[3] * d[4], 0.1, 1.0, true));
            alloc::vec![a, b]
        },
        build: |t, x| t.concat_channels(x[0], x[1]),
    });
    v.push(OpCase {
        name: "slice_channels",
        kind: OpKind::SliceChannels,
        make: |r| {
            let d = rand_5d(r, [2, 1, 2, 3, 3]);
            alloc::vec![tensor(&[d[0], 4, d[2], d[3], d[4]], uniform(r, d[0] * 4 * d[2] * d[3] * d[4], 0.1, 1.0, true))]
        },
        build: |t, x| t.slice_channels(x[0], 1, 2),
    });
    v.push(OpCase {
        name: "softmax_channels",
        kind: OpKind::Softmax,
        make: |r| alloc::vec![small(r, [2, 4, 2, 3, 3], true)],
        build: |t, x| t.softmax_channels(x[0]),
    });
    v.push(OpCase {
        name: "hybrid_loss",
        kind: OpKind::HybridLoss,
        make: |r| {
            let mut d = rand_5d(r, [2, 4, 2, 3, 3]);
            d[1] = d[1].max(2);
            let vox = d[2] * d[3] * d[4];
            let mut y = alloc::vec![0.0; d.iter().product()];
            for n in 0..d[0] {
                for v in 0..vox {
                    let c = r.random_range(0..d[1]);
                    y[(n * d[1] + c) * vox + v] = 1.0;
                }
            }
            let x = tensor(&d, uniform(r, d.iter().product(), 0.05, 1.0, false));
            alloc::vec![x, tensor(&d, y)]
        },
        build: |t, x| {
            let label = t.value(x[1]).clone();
            t.hybrid_loss(x[0], &label, 1e-5)
        },
    });
    v
}

/// Runs every op check over [`SEEDS`] seeds. With `fault`, that op's backward
/// rule is perturbed on the analytic side.
pub fn op_suite(fault: Option<OpKind>) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for case in op_cases() {
        let mut worst = 0.0f64;
        let mut coords = 0;
        for seed in 0..SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + seed);
            let mut inputs = (case.make)(&mut rng);
            if case.kind == OpKind::HybridLoss {
                // The label is data, not a differentiable input.
                let label = inputs.pop().expect("label");
                let build = move |t: &mut Tape<f64>, x: &[Var]| {
                    let lv = t.constant(label.clone());
                    (case.build)(t, &[x[0], lv])
                };
                let (e, c) = check_op(&inputs, fault.filter(|&k| k == case.kind), &mut rng, &build)?;
                worst = worst.max(e);
                coords += c;
                continue;
            }
            let (e, c) = check_op(&inputs, fault.filter(|&k| k == case.kind), &mut rng, &case.build)?;
            worst = worst.max(e);
            coords += c;
        }
        reports.push(CheckReport { name: case.name.into(), max_rel_err: worst, tolerance: OP_TOLERANCE, coordinates: coords });
    }
    Ok(reports)
}

/// Geometry of the model-level check.
pub fn tiny_model_config() -> MNetConfig {
    MNetConfig { grid_n: 5, base_channels: 4, channel_growth: 2, ..MNetConfig::default() }
}

/// Full deep-supervision loss of the tiny mesh against finite differences on
/// `samples` randomly chosen parameter coordinates.
pub fn model_check(samples: usize, fault: Option<OpKind>, seed: u64) -> Result<CheckReport> {
    let config = tiny_model_config();
    let mut net = MNet::<f64>::mesh(&config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d6f_6465_6c00);
    let ext = [16usize, 16, 16];
    let vox: usize = ext.iter().product();
    let image = tensor(&[1, 1, ext[0], ext[1], ext[2]], uniform(&mut rng, vox, 0.0, 1.0, true));
    let labels: Vec<u8> = (0..vox).map(|_| rng.random_range(0..config.num_classes as u8)).collect();
    let n_aux = net.architecture().heads.len() - 1;
    let loss_of = |net: &MNet<f64>, backward: bool| -> Result<(f64, Option<MNet<f64>>)> {
        let mut tape = Tape::new();
        if let Some(k) = fault {
            tape.inject_fault(k);
        }
        let x = tape.constant(image.clone());
        let out = net.forward(&mut tape, x)?;
        let (loss, report) = deep_supervision_loss(&mut tape, &out, &labels, 1, ext, n_aux, 1e-5)?;
        if backward {
            let mut with_grads = net.clone();
            tape.backward(loss, with_grads.params_mut())?;
            return Ok((report.total, Some(with_grads)));
        }
        Ok((tape.value(loss).data()[0], None))
    };
    let (_, graded) = loss_of(&net, true)?;
    let graded = graded.expect("backward requested");
    let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut ana = Vec::with_capacity(samples);
    let mut num = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut flat = rng.random_range(0..total);
        let mut pi = 0;
        while flat >= sizes[pi] {
            flat -= sizes[pi];
            pi += 1;
        }
        let id = net.params().iter().nth(pi).expect("index in range").id;
        ana.push(graded.params().get(id)?.grad.data()[flat]);
        let orig = net.params().get(id)?.value.data()[flat];
        net.params_mut().get_mut(id)?.value.data_mut()[flat] = orig + MODEL_STEP;
        let (fp, _) = loss_of(&net, false)?;
        net.params_mut().get_mut(id)?.value.data_mut()[flat] = orig - MODEL_STEP;
        let (fm, _) = loss_of(&net, false)?;
        net.params_mut().get_mut(id)?.value.data_mut()[flat] = orig;
        num.push((fp - fm) / (2.0 * MODEL_STEP));
    }
    Ok(CheckReport {
        name: alloc::format!("model grid {} base {} growth {}", config.grid_n, config.base_channels, config.channel_growth),
        max_rel_err: relative_error(&ana, &num),
        tolerance: MODEL_TOLERANCE,
        coordinates: samples,
    })
}
