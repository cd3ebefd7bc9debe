use mnet_core::{Error, ParamStore, Tape, Tensor};
use proptest::prelude::*;

fn t(dims: &[usize], v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(dims, v.to_vec()).unwrap()
}

#[test]
fn identity_and_box_convolutions() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]));
    let w = tape.leaf(t(&[1, 1, 1, 1, 1], &[1.]));
    let b = tape.leaf(t(&[1], &[0.]));
    let y = tape.conv3d(x, w, b, [0, 0, 0]).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    let ones = tape.leaf(Tensor::ones(&[1, 1, 1, 3, 3]).unwrap());
    let k = tape.leaf(Tensor::ones(&[1, 1, 1, 3, 3]).unwrap());
    let y = tape.conv3d(ones, k, b, [0, 1, 1]).unwrap();
    let v = tape.value(y).data();
    assert_eq!((v[4], v[0], v[2], v[6], v[8]), (9.0, 4.0, 4.0, 4.0, 4.0));
}

#[test]
fn conv_errors_name_the_axis() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::ones(&[1, 2, 1, 3, 3]).unwrap());
    let w = tape.leaf(Tensor::ones(&[1, 3, 1, 3, 3]).unwrap());
    let b = tape.leaf(Tensor::ones(&[1]).unwrap());
    assert!(matches!(tape.conv3d(x, w, b, [0, 1, 1]), Err(Error::AxisMismatch { axis: "channel", .. })));
    let w2 = tape.leaf(Tensor::ones(&[1, 2, 3, 3, 3]).unwrap());
    assert!(matches!(tape.conv3d(x, w2, b, [0, 1, 1]), Err(Error::NonPositiveExtent { axis: "depth", .. })));
    let even = tape.leaf(Tensor::ones(&[1, 2, 1, 2, 2]).unwrap());
    assert!(matches!(tape.conv3d(x, even, b, [0, 0, 0]), Err(Error::EvenKernel { .. })));
}

#[test]
fn maxpool_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 1, 2, 2], &[1., 2., 3., 4.]));
    let y = tape.maxpool3d(x, [1, 2, 2]).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0]);
    let x = tape.leaf(t(&[1, 1, 2, 2, 2], &[1., 2., 3., 4., 5., 6., 7., 8.]));
    let y = tape.maxpool3d(x, [2, 2, 2]).unwrap();
    assert_eq!(tape.value(y).data(), &[8.0]);
    let x = tape.leaf(Tensor::zeros(&[1, 1, 5, 2, 2]).unwrap());
    let y = tape.maxpool3d(x, [2, 2, 2]).unwrap();
    assert_eq!(tape.shape(y).dims(), &[1, 1, 2, 1, 1]);
    assert!(matches!(tape.maxpool3d(x, [1, 4, 1]), Err(Error::WindowTooLarge { axis: "height", .. })));
}

#[test]
fn maxpool_ties_route_to_first_occurrence() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 1, 2, 2], &[3., 3., 3., 3.]));
    let y = tape.maxpool3d(x, [1, 2, 2]).unwrap();
    let s = tape.sum(y);
    let g = tape.gradients(s).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn upsample_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 1, 1, 2], &[0., 1.]));
    let y = tape.upsample_trilinear(x, [1, 1, 4]).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.25, 0.75, 1.0]);
    let c = tape.leaf(Tensor::full(&[1, 2, 2, 3, 3], 1.5).unwrap());
    let y = tape.upsample_trilinear(c, [5, 7, 4]).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    let r = tape.leaf(t(&[1, 1, 1, 2, 3], &[1., 5., 2., 8., 3., 7.]));
    let y = tape.upsample_trilinear(r, [1, 2, 3]).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(r).data());
}

#[test]
fn instance_norm_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 1, 1, 2], &[1., 3.]));
    let g = tape.leaf(t(&[1], &[1.]));
    let b = tape.leaf(t(&[1], &[0.]));
    let y = tape.instance_norm(x, g, b, 1e-5).unwrap();
    let v = tape.value(y).data();
    assert!((v[0] + 1.0).abs() < 1e-5 && (v[1] - 1.0).abs() < 1e-5);
    let c = tape.leaf(Tensor::full(&[1, 1, 2, 2, 2], 4.0).unwrap());
    let y = tape.instance_norm(c, g, b, 1e-5).unwrap();
    assert!(tape.value(y).data().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn leaky_relu_and_elementwise() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[4], &[2., -1., 0., -3.]));
    let y = tape.leaky_relu(x, 0.01);
    assert_eq!(tape.value(y).data(), &[2.0, -0.01, 0.0, -0.03]);
    let a = tape.leaf(t(&[2], &[1., 2.]));
    let b = tape.leaf(t(&[2], &[3., 4.]));
    let s = tape.add(a, b).unwrap();
    assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
    let d = tape.sub(a, a).unwrap();
    let z = tape.abs(d);
    assert_eq!(tape.value(z).data(), &[0.0, 0.0]);
    let other = tape.leaf(t(&[3], &[1., 2., 3.]));
    assert!(matches!(tape.add(a, other), Err(Error::ShapeMismatch { .. })));

    let m = tape.leaf(t(&[3], &[-2., 0., 5.]));
    let am = tape.abs(m);
    let sm = tape.sum(am);
    let g = tape.gradients(sm).unwrap();
    assert_eq!(g.wrt(m).unwrap().data(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn concat_slice_roundtrip_and_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(t(&[1, 2, 1, 1, 1], &[1., 2.]));
    let b = tape.leaf(t(&[1, 3, 1, 1, 1], &[3., 4., 5.]));
    let c = tape.concat_channels(a, b).unwrap();
    assert_eq!(tape.shape(c).dims()[1], 5);
    let a2 = tape.slice_channels(c, 0, 2).unwrap();
    let b2 = tape.slice_channels(c, 2, 3).unwrap();
    assert_eq!(tape.value(a2).data(), tape.value(a).data());
    assert_eq!(tape.value(b2).data(), tape.value(b).data());
    let s = tape.sum(c);
    let g = tape.gradients(s).unwrap();
    assert_eq!(g.wrt(a).unwrap().data(), &[1.0, 1.0]);
    assert_eq!(g.wrt(b).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 2, 1, 1, 2], &[0.7, 0., 0.7, 3f64.ln()]));
    let y = tape.softmax_channels(x).unwrap();
    let v = tape.value(y).data();
    assert!((v[0] - 0.5).abs() < 1e-15 && (v[2] - 0.5).abs() < 1e-15);
    assert!((v[1] - 0.25).abs() < 1e-15 && (v[3] - 0.75).abs() < 1e-15);
}

#[test]
fn backward_contract() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[1., 2., 3.]));
    let s = tape.sum(x);
    assert_eq!(tape.gradients(s).unwrap().wrt(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    assert!(matches!(tape.gradients(x), Err(Error::NotScalar { .. })));

    let mut store = ParamStore::new();
    let used = store.add("used", t(&[1], &[2.0]));
    let unused = store.add("unused", t(&[1], &[5.0]));
    store.get_mut(unused).unwrap().grad.data_mut()[0] = 9.0;
    let mut tape = Tape::new();
    let p = tape.param(&store, used).unwrap();
    let q = tape.scale(p, 3.0);
    let l = tape.sum(q);
    tape.backward(l, &mut store).unwrap();
    assert_eq!(store.get(used).unwrap().grad.data(), &[3.0]);
    assert_eq!(store.get(unused).unwrap().grad.data(), &[0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pool_then_upsample_preserves_shape(d in 2usize..9, h in 2usize..13, w in 2usize..13, iso in any::<bool>()) {
        let win = if iso { [2, 2, 2] } else { [1, 2, 2] };
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones(&[1, 1, d, h, w]).unwrap());
        let p = tape.maxpool3d(x, win).unwrap();
        let u = tape.upsample_trilinear(p, [d, h, w]).unwrap();
        prop_assert_eq!(tape.shape(u).dims(), &[1, 1, d, h, w]);
    }

    #[test]
    fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-30.0f64..30.0, 12)) {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 3, 1, 2, 2], vals).unwrap());
        let y = tape.softmax_channels(x).unwrap();
        let v = tape.value(y).data();
        for i in 0..4 {
            let s = v[i] + v[4 + i] + v[8 + i];
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(v[i] > 0.0 && v[4 + i] > 0.0 && v[8 + i] > 0.0);
        }
    }

    #[test]
    fn leaky_relu_matches_scalar_rule(vals in proptest::collection::vec(-5.0f64..5.0, 1..40), slope in 0.0f64..0.5) {
        let n = vals.len();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[n], vals.clone()).unwrap());
        let y = tape.leaky_relu(x, slope);
        for (o, i) in tape.value(y).data().iter().zip(&vals) {
            prop_assert_eq!(*o, if *i >= 0.0 { *i } else { slope * i });
        }
    }
}
