use mnet_core::data::{generate_phantom, LabelVolume, PhantomSpec};
use mnet_core::graph::{GridPos, MNet, MNetConfig};
use mnet_core::training::*;
use mnet_core::{Error, ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent evaluation of the hybrid loss on flat `[N, C, V]` buffers.
fn hybrid_oracle(x: &[f64], y: &[f64], n: usize, c: usize, eps: f64) -> f64 {
    let v = x.len() / (n * c);
    let mut dice = 0.0;
    for k in 0..c {
        let (mut i, mut s) = (0.0, 0.0);
        for b in 0..n {
            for p in 0..v {
                let idx = (b * c + k) * v + p;
                i += x[idx] * y[idx];
                s += x[idx] + y[idx];
            }
        }
        dice += (i + eps / 2.0) / (s + eps);
    }
    let ce: f64 = x.iter().zip(y).map(|(a, b)| b * (a + eps).ln()).sum();
    -(2.0 / c as f64 * dice + ce / (n * v) as f64)
}

fn softmax_oracle(z: &[f64], n: usize, c: usize) -> Vec<f64> {
    let v = z.len() / (n * c);
    let mut out = vec![0.0; z.len()];
    for b in 0..n {
        for p in 0..v {
            let m = (0..c).map(|k| z[(b * c + k) * v + p]).fold(f64::MIN, f64::max);
            let s: f64 = (0..c).map(|k| (z[(b * c + k) * v + p] - m).exp()).sum();
            for k in 0..c {
                out[(b * c + k) * v + p] = (z[(b * c + k) * v + p] - m).exp() / s;
            }
        }
    }
    out
}

fn loss_of(x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let mut tape = Tape::new();
    let p = tape.leaf(x.clone());
    let l = tape.hybrid_loss(p, y, 1e-5).unwrap();
    tape.value(l).data()[0]
}

#[test]
fn perfect_prediction_scores_minus_one() {
    let labels: Vec<u8> = (0..2 * 4 * 4 * 4).map(|i| (i % 3) as u8).collect();
    let y = one_hot::<f64>(&labels, 2, [4, 4, 4], 3).unwrap();
    assert!((loss_of(&y, &y) + 1.0).abs() < 1e-3);
}

#[test]
fn uniform_prediction_has_log_c_cross_entropy() {
    let c = 4;
    let labels: Vec<u8> = (0..64).map(|i| (i * 7 % c) as u8).collect();
    let y = one_hot::<f64>(&labels, 1, [4, 4, 4], c).unwrap();
    let x = y.map(|_| 1.0 / c as f64);
    let total = loss_of(&x, &y);
    let eps = 1e-5;
    let dice_part: f64 = (0..c)
        .map(|k| {
            let cnt = labels.iter().filter(|&&l| l as usize == k).count() as f64;
            (cnt / c as f64 + eps / 2.0) / (64.0 / c as f64 + cnt + eps)
        })
        .sum::<f64>()
        * 2.0
        / c as f64;
    let ce = total + dice_part;
    assert!((ce - (c as f64).ln()).abs() < 1e-4, "{ce}");
}

#[test]
fn empty_class_stays_finite() {
    let labels = vec![0u8; 27];
    let y = one_hot::<f64>(&labels, 1, [3, 3, 3], 2).unwrap();
    let l = loss_of(&y, &y);
    assert!(l.is_finite());
    assert!((l + 1.0).abs() < 1e-3);
}

#[test]
fn hybrid_loss_matches_oracle_and_rejects_bad_shapes() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<u8> = (0..2 * 27).map(|_| r.random_range(0..3)).collect();
    let y = one_hot::<f64>(&labels, 2, [3, 3, 3], 3).unwrap();
    let z: Vec<f64> = (0..y.len()).map(|_| r.random_range(-2.0..2.0)).collect();
    let x = Tensor::from_vec(y.dims(), softmax_oracle(&z, 2, 3)).unwrap();
    assert!((loss_of(&x, &y) - hybrid_oracle(x.data(), y.data(), 2, 3, 1e-5)).abs() < 1e-12);
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::<f64>::zeros(&[1, 2, 3, 3, 3]).unwrap());
    assert!(matches!(tape.hybrid_loss(p, &y, 1e-5), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn mesh_aux_weights_are_powers_of_half() {
    let net = MNet::<f32>::mesh(&MNetConfig::default(), 0).unwrap();
    let mut w: Vec<(GridPos, f64)> = net.architecture().heads.iter().filter(|h| !h.main).map(|h| (h.node, h.weight)).collect();
    w.sort_by_key(|(p, _)| (p.row, p.col));
    for (pos, weight) in &w {
        let i = if pos.col == 5 { pos.row } else { pos.col };
        assert_eq!(*weight, [0.125, 0.25, 0.5][i - 2], "{pos}");
    }
    assert_eq!(w.len(), 6);
}

#[test]
fn report_combination_identities() {
    let aux = |loss: f64| -> Vec<ScoredLoss> {
        [4usize, 3, 2]
            .iter()
            .flat_map(|&i| {
                let weight = 0.5f64.powi(5 - i as i32);
                [GridPos::new(i, 5), GridPos::new(5, i)].map(|node| ScoredLoss { node, weight, loss })
            })
            .collect()
    };
    assert_eq!(LossReport::combine(0.0, aux(1.0)).total, 1.75);
    assert_eq!(LossReport::combine(0.3, aux(0.0)).total, 0.3);
}

#[test]
fn deep_supervision_total_matches_independent_recomputation() {
    let cfg = MNetConfig { base_channels: 3, channel_growth: 2, ..MNetConfig::default() };
    let net = MNet::<f64>::mesh(&cfg, 4).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let ext = [16usize, 32, 16];
    let vox: usize = ext.iter().product();
    let img: Vec<f64> = (0..2 * vox).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels: Vec<u8> = (0..2 * vox).map(|_| r.random_range(0..3)).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(&[2, 1, 16, 32, 16], img).unwrap());
    let out = net.forward(&mut tape, x).unwrap();
    let (total, report) = deep_supervision_loss(&mut tape, &out, &labels, 2, ext, 6, 1e-5).unwrap();
    let branch = |logits: mnet_core::Var| -> f64 {
        let d = tape.shape(logits).dims().to_vec();
        let grid = [d[2], d[3], d[4]];
        let near = |t: usize, s: usize, dd: usize| (((t as f64 + 0.5) * s as f64 / dd as f64).floor() as usize).min(s - 1);
        let mut y = vec![0.0; d.iter().product()];
        let gv: usize = grid.iter().product();
        for b in 0..2 {
            for z in 0..grid[0] {
                for yy in 0..grid[1] {
                    for xx in 0..grid[2] {
                        let src = ((b * ext[0] + near(z, ext[0], grid[0])) * ext[1] + near(yy, ext[1], grid[1])) * ext[2]
                            + near(xx, ext[2], grid[2]);
                        let p = (z * grid[1] + yy) * grid[2] + xx;
                        y[(b * 3 + labels[src] as usize) * gv + p] = 1.0;
                    }
                }
            }
        }
        hybrid_oracle(&softmax_oracle(tape.value(logits).data(), 2, 3), &y, 2, 3, 1e-5)
    };
    let main = branch(out.main);
    assert!((main - report.main).abs() < 1e-12);
    let mut expect = main;
    for (a, s) in out.aux.iter().zip(&report.aux) {
        let l = branch(a.logits);
        assert!((l - s.loss).abs() < 1e-12);
        expect += a.weight * l;
    }
    assert!((expect - report.total).abs() < 1e-12);
    assert!((tape.value(total).data()[0] - report.total).abs() < 1e-12);
}

#[test]
fn missing_branch_is_an_error() {
    let cfg = MNetConfig { base_channels: 2, channel_growth: 1, ..MNetConfig::default() };
    let net = MNet::<f32>::mesh(&cfg, 0).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 1, 16, 16, 16]).unwrap());
    let mut out = net.forward(&mut tape, x).unwrap();
    out.aux.pop();
    let labels = vec![0u8; 4096];
    assert!(matches!(
        deep_supervision_loss(&mut tape, &out, &labels, 1, [16, 16, 16], 6, 1e-5),
        Err(Error::MissingBranch(_))
    ));
}

#[test]
fn label_downsampling() {
    let lv = LabelVolume::new((0..16).map(|i| ((i / 4 + i % 4) % 2) as u8).collect(), [1, 4, 4], [1.0; 3]).unwrap();
    let same = mnet_core::data::downsample_label(&lv, [1, 4, 4]).unwrap();
    assert_eq!(same.labels, lv.labels);
    // Half-pixel nearest picks source rows/cols 1 and 3: board[(1,1)], board[(1,3)], ...
    let half = mnet_core::data::downsample_label(&lv, [1, 2, 2]).unwrap();
    let board = |y: usize, x: usize| lv.labels[y * 4 + x];
    assert_eq!(half.labels, vec![board(1, 1), board(1, 3), board(3, 1), board(3, 3)]);
    let c = LabelVolume::new(vec![2; 60], [3, 4, 5], [1.0; 3]).unwrap();
    let d = mnet_core::data::downsample_label(&c, [2, 3, 7]).unwrap();
    assert!(d.labels.iter().all(|&l| l == 2));
}

#[test]
fn poly_schedule() {
    assert_eq!(poly_lr(0, 500, 0.01, 0.9), 0.01);
    assert_eq!(poly_lr(500, 500, 0.01, 0.9), 0.0);
    assert!((poly_lr(250, 500, 0.01, 0.9) - 0.005359).abs() < 1e-6);
}

fn store_with(v: f64) -> (ParamStore<f64>, mnet_core::ParamId) {
    let mut s = ParamStore::new();
    let id = s.add("p", Tensor::from_vec(&[1], vec![v]).unwrap());
    (s, id)
}

#[test]
fn sgd_examples() {
    let (mut s, id) = store_with(1.0);
    let mut opt = Sgd::new(&s, 0.0, false);
    s.get_mut(id).unwrap().grad.data_mut()[0] = 2.0;
    opt.step(&mut s, 0.1).unwrap();
    assert!((s.get(id).unwrap().value.data()[0] - 0.8).abs() < 1e-15);

    let (mut s, id) = store_with(0.0);
    let mut opt = Sgd::new(&s, 0.9, false);
    let mut deltas = vec![];
    for _ in 0..2 {
        s.get_mut(id).unwrap().grad.data_mut()[0] = 1.0;
        let before = s.get(id).unwrap().value.data()[0];
        opt.step(&mut s, 1.0).unwrap();
        deltas.push(s.get(id).unwrap().value.data()[0] - before);
    }
    assert!((deltas[0] + 1.0).abs() < 1e-15 && (deltas[1] + 1.9).abs() < 1e-15);
    assert!((opt.velocity(0).unwrap().data()[0] - 1.9).abs() < 1e-15);

    let (mut s, id) = store_with(3.0);
    let mut opt = Sgd::new(&s, 0.99, true);
    opt.step(&mut s, 0.5).unwrap();
    assert_eq!(s.get(id).unwrap().value.data()[0], 3.0);

    let (small, _) = store_with(0.0);
    let mut opt = Sgd::new(&small, 0.9, true);
    let (mut bigger, _) = store_with(0.0);
    bigger.add("q", Tensor::from_vec(&[1], vec![0.0]).unwrap());
    assert!(matches!(opt.step(&mut bigger, 0.1), Err(Error::UnknownParam(1))));
}

fn tiny_cases(n: u64, seed: u64) -> Vec<Case> {
    (0..n)
        .map(|k| {
            let spec = PhantomSpec {
                shape: [16, 32, 32],
                spacing_mm: [4.0, 2.0, 2.0],
                organ_radius_mm: [[16.0, 24.0], [12.0, 18.0], [12.0, 18.0]],
                tumor_radius_mm: [4.0, 6.0],
                seed: seed * 100 + k,
                ..PhantomSpec::default()
            };
            let (image, labels) = generate_phantom(&spec).unwrap();
            Case { image, labels }
        })
        .collect()
}

fn tiny_train(seed: u64, lr: f64, iterations: usize) -> (MNet<f32>, Vec<f64>) {
    let cfg = MNetConfig { base_channels: 4, channel_growth: 2, ..MNetConfig::default() };
    let mut net = MNet::<f32>::mesh(&cfg, seed).unwrap();
    let tc = TrainConfig {
        max_epochs: 1,
        iterations_per_epoch: iterations,
        batch_size: 1,
        patch_size: [16, 32, 32],
        initial_lr: lr,
        seed,
        ..TrainConfig::default()
    };
    let hist = train_loop(&mut net, &tiny_cases(2, seed), &tc, |_, _| Ok(())).unwrap();
    let losses = hist[0].iterations.iter().map(|r| r.total).collect();
    (net, losses)
}

#[test]
fn zero_learning_rate_keeps_parameters_bitwise() {
    let cfg = MNetConfig { base_channels: 4, channel_growth: 2, ..MNetConfig::default() };
    let init = MNet::<f32>::mesh(&cfg, 9).unwrap();
    let (trained, _) = tiny_train(9, 0.0, 2);
    for (a, b) in init.params().iter().zip(trained.params().iter()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
}

#[test]
fn training_is_reproducible() {
    let (a, la) = tiny_train(5, 0.01, 3);
    let (b, lb) = tiny_train(5, 0.01, 3);
    assert_eq!(la, lb);
    for (p, q) in a.params().iter().zip(b.params().iter()) {
        assert_eq!(p.value.data(), q.value.data());
    }
}

/// Loss trend over the first 20 iterations: the mean of the last five must
/// be below the mean of the first five.
#[test]
fn early_training_reduces_loss_in_most_seeds() {
    let mut decreasing = 0;
    for seed in 0..10 {
        let (_, l) = tiny_train(seed, 0.01, 20);
        let head: f64 = l[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = l[15..].iter().sum::<f64>() / 5.0;
        decreasing += (tail < head) as usize;
    }
    assert!(decreasing >= 9, "{decreasing}/10");
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig { momentum: 1.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { patch_size: [8, 64, 64], ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { initial_lr: -1.0, ..TrainConfig::default() }.validate().is_err());
}

proptest! {
    #[test]
    fn poly_is_non_increasing(e in 0usize..499, max in 500usize..1000, p in 0.1f64..3.0) {
        prop_assert!(poly_lr(e + 1, max, 0.01, p) <= poly_lr(e, max, 0.01, p));
    }

    #[test]
    fn hybrid_loss_bounded_and_improves_toward_label(seed in 0u64..1000, t in 0.05f64..0.95) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..27).map(|_| r.random_range(0..3)).collect();
        let y = one_hot::<f64>(&labels, 1, [3, 3, 3], 3).unwrap();
        let z: Vec<f64> = (0..81).map(|_| r.random_range(-3.0..3.0)).collect();
        let x0 = softmax_oracle(&z, 1, 3);
        let mix = |a: f64| Tensor::from_vec(&[1, 3, 3, 3, 3], x0.iter().zip(y.data()).map(|(p, q)| (1.0 - a) * p + a * q).collect()).unwrap();
        let (l0, l1) = (loss_of(&mix(t), &y), loss_of(&mix((t + 0.05).min(1.0)), &y));
        prop_assert!(l0 >= -1.0 - 1e-4);
        prop_assert!(l1 <= l0 + 1e-12);
    }
}
