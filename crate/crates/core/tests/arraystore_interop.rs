// SPDX-License-Identifier: MIT OR Apache-2.0

//! NPY and manifest files written by numpy must load, and our writer must
//! reproduce numpy's bytes.

use std::fs;
use std::path::PathBuf;

use probekit::arraystore::{encode_tensor, load_dataset, read_tensor, DType, TensorFile};
use probekit::synth::{gen_planted_linear, gen_pixels, write_dataset, SynthSpec};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/npy").join(name)
}

#[test]
fn numpy_float32_tokens() {
    let t = read_tensor(fixture("tokens_f32.npy")).unwrap();
    assert_eq!(t.shape, vec![2, 3, 4]);
    assert_eq!(t.dtype(), DType::F32);
    let v = t.to_f64();
    assert_eq!(v[0], 0.0);
    assert_eq!(v[23], 23.0 / 8.0);
}

#[test]
fn writer_matches_numpy_bytes() {
    for name in ["tokens_f32.npy", "targets_f64.npy", "mask_shared.npy", "scalar_vec.npy"] {
        let original = fs::read(fixture(name)).unwrap();
        let t = read_tensor(fixture(name)).unwrap();
        assert_eq!(encode_tensor(&t).unwrap(), original, "{name}");
    }
    let v = TensorFile::from_vector(&[3.0, 1.0, 2.0]);
    assert_eq!(encode_tensor(&v).unwrap(), fs::read(fixture("scalar_vec.npy")).unwrap());
}

#[test]
fn numpy_manifest_loads() {
    let (fs, ts) = load_dataset(fixture("manifest.json")).unwrap();
    assert_eq!(fs.model_id, "tiny-vit");
    assert_eq!(fs.layer, 2);
    assert_eq!(fs.tokens.tokens(), 3);
    assert!(!fs.pre_pooled);
    // mask excludes token 0
    assert_eq!(fs.mask.row(0), &[false, true, true]);
    let pooled = fs.pooled().unwrap();
    // image 0, channel 0: tokens 1 and 2 hold 4/8 and 8/8
    assert!((pooled[(0, 0)] - 0.75).abs() < 1e-12);
    assert_eq!(ts.names, vec!["a", "b"]);
    assert_eq!(ts.values[(1, 1)], 4.0);
    assert_eq!(ts.units, "deg");
}

#[test]
fn synthetic_dataset_round_trip() {
    let spec = SynthSpec {
        n: 60,
        t: 5,
        d: 6,
        k: 3,
        rank: 2,
        seed: 9,
        ..Default::default()
    };
    let data = gen_planted_linear(&spec).unwrap();
    let pixels = gen_pixels(60, 10, 9);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &data, "synth", 4, Some(&pixels)).unwrap();
    let (fs, ts) = load_dataset(&manifest).unwrap();
    assert_eq!(fs.tokens, data.features);
    assert_eq!(ts.values, data.targets);
    assert_eq!(fs.split, data.split);
    assert_eq!(fs.pixels.unwrap(), pixels);
    assert_eq!(fs.layer, 4);
}
