use std::fs;

use mnet::arch::ArchChoice;
use mnet::checkpoint;
use mnet::volume_io::{read_image, read_labels, write_image, write_labels};
use mnet::Error;
use mnet_core::data::{LabelVolume, Volume};
use mnet_core::graph::{MNet, MNetConfig, Precision};
use mnet_core::tensor::Tensor;
use proptest::prelude::*;

fn image(shape: [usize; 4], seed: u64) -> Volume {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 7.0 - 50.0).collect();
    Volume::new(Tensor::from_vec(&shape, data).unwrap(), [5.0, 0.75, 0.75]).unwrap()
}

#[test]
fn image_and_label_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let v = image([2, 3, 4, 5], 1);
    write_image(dir.path(), "img", &v).unwrap();
    assert_eq!(read_image(dir.path(), "img").unwrap(), v);
    let l = LabelVolume::new((0..60).map(|i| (i % 3) as u8).collect(), [3, 4, 5], [2.0, 1.0, 1.0]).unwrap();
    write_labels(dir.path(), "lab", &l).unwrap();
    assert_eq!(read_labels(dir.path(), "lab").unwrap(), l);
    let raw = fs::read(dir.path().join("img.raw")).unwrap();
    assert_eq!(raw.len(), 120 * 4);
    assert_eq!(&raw[..4], &v.voxels.data()[0].to_le_bytes());
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("lab.json")).unwrap()).unwrap();
    assert_eq!(sidecar["format_version"], 1);
    assert_eq!(sidecar["kind"], "label");
    assert_eq!(sidecar["dtype"], "u8");
    assert_eq!(sidecar["byte_length"], 60);
    assert_eq!(sidecar["shape"], serde_json::json!([3, 4, 5]));
}

#[test]
fn truncated_payload_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "img", &image([1, 2, 2, 2], 0)).unwrap();
    let p = dir.path().join("img.raw");
    let mut raw = fs::read(&p).unwrap();
    raw.truncate(raw.len() - 3);
    fs::write(&p, raw).unwrap();
    match read_image(dir.path(), "img") {
        Err(Error::PayloadLength { expected: 32, actual: 29, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_dtype_and_bad_sidecars_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_image(dir.path(), "img", &image([1, 2, 2, 2], 0)).unwrap();
    let p = dir.path().join("img.json");
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, text.replace("f32le", "f16le")).unwrap();
    assert!(matches!(read_image(dir.path(), "img"), Err(Error::UnknownDtype { ref dtype, .. }) if dtype == "f16le"));
    fs::write(&p, text.replace("\"kind\"", "\"extra\": 1, \"kind\"")).unwrap();
    assert!(matches!(read_image(dir.path(), "img"), Err(Error::Format { .. })));
    fs::write(&p, text.replace("\"byte_length\": 32", "\"byte_length\": 31")).unwrap();
    assert!(matches!(read_image(dir.path(), "img"), Err(Error::Format { .. })));
    fs::write(&p, &text).unwrap();
    assert!(matches!(read_labels(dir.path(), "img"), Err(Error::Format { .. })), "kind mismatch");
    assert!(matches!(read_image(dir.path(), "missing"), Err(Error::Io { .. })));
}

#[test]
fn checkpoint_round_trip_restores_every_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MNetConfig { base_channels: 2, channel_growth: 1, ..Default::default() };
    let arch = ArchChoice::Subnet("RRDDRRDD".into());
    let model: MNet<f32> = arch.model(&cfg, 9).unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &model, &arch).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"MNETCKPT");
    let ck = checkpoint::load(&path).unwrap();
    assert_eq!(ck.header.arch, "subnet:RRDDRRDD");
    assert_eq!(ck.header.dtype, "f32le");
    let back: MNet<f32> = ck.into_model().unwrap();
    for (a, b) in model.params().iter().zip(back.params().iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value, b.value);
    }

    let cfg64 = MNetConfig { precision: Precision::F64, ..cfg.clone() };
    let m64: MNet<f64> = ArchChoice::Mesh.model(&cfg64, 2).unwrap();
    checkpoint::save(&path, &m64, &ArchChoice::Mesh).unwrap();
    let back: MNet<f64> = checkpoint::load(&path).unwrap().into_model().unwrap();
    assert!(m64.params().iter().zip(back.params().iter()).all(|(a, b)| a.value == b.value));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MNetConfig { base_channels: 2, channel_growth: 1, ..Default::default() };
    let model: MNet<f32> = ArchChoice::Mesh.model(&cfg, 0).unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &model, &ArchChoice::Mesh).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::PayloadLength { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, bad).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(Error::Format { .. })));
    // A header naming a different architecture no longer matches the payload.
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = String::from_utf8(bytes[16..16 + hlen].to_vec()).unwrap().replace("\"mesh\"", "\"subnet:DDDDRRRR\"");
    let mut swapped = b"MNETCKPT".to_vec();
    swapped.extend_from_slice(&(header.len() as u64).to_le_bytes());
    swapped.extend_from_slice(header.as_bytes());
    swapped.extend_from_slice(&bytes[16 + hlen..]);
    fs::write(&path, swapped).unwrap();
    let ck = checkpoint::load(&path).unwrap();
    assert!(matches!(ck.into_model::<f32>(), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_image_round_trips(c in 1usize..3, d in 1usize..4, h in 1usize..5, w in 1usize..5,
                             vals in proptest::collection::vec(-1e6f32..1e6, 1..=96)) {
        let n = c * d * h * w;
        let data: Vec<f32> = (0..n).map(|i| vals[i % vals.len()]).collect();
        let v = Volume::new(Tensor::from_vec(&[c, d, h, w], data).unwrap(), [1.0, 2.0, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_image(dir.path(), "v", &v).unwrap();
        prop_assert_eq!(read_image(dir.path(), "v").unwrap(), v);
    }

    #[test]
    fn sig6_round_trips_to_six_digits(x in -1e9f64..1e9) {
        let s = mnet::format::sig6(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs().max(1e-300), "{} -> {}", x, s);
    }
}
