use std::fs;

use slowbreath::mind::{read_weights, write_weights, NetworkSpec, WeightBundle};
use slowbreath::session::{read_rate_series, read_session, write_rate_series, write_session};
use slowbreath::synth::{self, generate, generate_corpus, Manifest};
use slowbreath::Error;

#[test]
fn session_and_ground_truth_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let (rec, gt) = generate(&synth::SynthProfile::default()).unwrap();
    let (sp, gp) = (dir.path().join("s.csv"), dir.path().join("gt.csv"));
    write_session(&rec, &sp).unwrap();
    write_rate_series(&gt, &gp).unwrap();
    assert_eq!(read_session(&sp).unwrap(), rec);
    assert_eq!(read_rate_series(&gp).unwrap(), gt);
}

#[test]
fn corpus_regenerates_byte_identically_from_its_manifest() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let profiles: Vec<_> = synth::noisy_corpus().into_iter().take(4).collect();
    let manifest = generate_corpus(&profiles, a.path()).unwrap();
    let reread = Manifest::read(a.path()).unwrap();
    assert_eq!(reread, manifest);
    generate_corpus(&reread.profiles(), b.path()).unwrap();
    for i in 0..manifest.sessions.len() {
        for path in [Manifest::session_path, Manifest::ground_truth_path] {
            let x = fs::read(path(&manifest, a.path(), i)).unwrap();
            let y = fs::read(path(&manifest, b.path(), i)).unwrap();
            assert!(x == y, "session {i} differs");
        }
    }
}

#[test]
fn sweep_corpus_layout_and_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_corpus(&synth::rate_sweep_corpus(), dir.path()).unwrap();
    assert_eq!(m.sessions.len(), 27);
    // 27 sessions, 27 ground truths, one manifest.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 55);

    let empty = tempfile::tempdir().unwrap();
    let m = generate_corpus(&[], empty.path()).unwrap();
    assert!(m.sessions.is_empty());
    let files: Vec<_> = fs::read_dir(empty.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(files.iter().all(|f| f == "manifest.json"), "{files:?}");
}

#[test]
fn weight_bundles_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let spec = NetworkSpec::with_widths([4, 4, 8, 8], 1200);
    let mut bundle = WeightBundle::zeros(spec);
    for (k, t) in bundle.tensors.values_mut().enumerate() {
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = ((k * 31 + i) as f32 * 0.37).sin();
        }
    }
    let path = dir.path().join("w.bkw");
    write_weights(&bundle, &path).unwrap();
    assert_eq!(read_weights(&path).unwrap(), bundle);
}

#[test]
fn malformed_inputs_name_their_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "t,x,y,z\n0.0,0,0,1\n0.01,0,zero,1\n").unwrap();
    let err = read_session(&p).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");

    let missing = read_session(dir.path().join("absent.csv")).unwrap_err();
    assert!(matches!(missing, Error::Io { .. }));

    let w = dir.path().join("trunc.bkw");
    let bytes = WeightBundle::zeros(NetworkSpec::with_widths([4, 4, 8, 8], 1200)).to_bytes().unwrap();
    fs::write(&w, &bytes[..bytes.len() - 4]).unwrap();
    assert!(read_weights(&w).is_err());
}
