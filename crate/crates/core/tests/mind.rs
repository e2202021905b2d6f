use std::path::PathBuf;

use slowbreath::mind::{
    predict_session, read_weights, segment, segment_probabilities, NetworkSpec, SessionLabel, SkillBundles,
    WeightBundle,
};
use slowbreath::session::read_session;
use slowbreath::synth::{generate, RateProfile, SynthProfile};
use slowbreath::{Error, SessionRecording};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn reference() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("reference.json")).unwrap()).unwrap()
}

fn skills() -> SkillBundles {
    SkillBundles::from_dir(fixtures().join("skills")).unwrap()
}

fn session_at_25hz(bpm: f64, duration_s: f64, seed: u64) -> SessionRecording {
    let p = SynthProfile {
        duration_s,
        sample_rate_hz: 25.0,
        rate_profile: RateProfile::Constant { bpm },
        seed,
        ..SynthProfile::default()
    };
    generate(&p).unwrap().0
}

#[test]
fn full_fixture_bundle_matches_the_default_architecture() {
    let bundle = read_weights(fixtures().join("random_full.bkw")).unwrap();
    let spec = NetworkSpec::default();
    assert_eq!(bundle.spec, spec);
    assert_eq!(bundle.parameter_count(), spec.parameter_count());
    assert_eq!(WeightBundle::zeros(spec.clone()).parameter_count(), spec.parameter_count());
}

#[test]
fn fixture_probabilities_match_the_reference() {
    let r = reference();
    let rec = read_session(fixtures().join(r["random_full"]["session"].as_str().unwrap())).unwrap();
    let bundle = read_weights(fixtures().join("random_full.bkw")).unwrap();
    let got = segment_probabilities(&bundle.spec, &bundle, &segment(&rec).unwrap()).unwrap();
    let want: Vec<f64> = serde_json::from_value(r["random_full"]["probs"].clone()).unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-4, "{g} vs {w}");
    }

    let rec = read_session(fixtures().join(r["skills"]["session"].as_str().unwrap())).unwrap();
    let bundles = skills();
    let pred = predict_session(&rec, &bundles.concentration.spec, &bundles).unwrap();
    for (name, result) in pred.skills() {
        let want: Vec<f64> = serde_json::from_value(r["skills"][name].clone()).unwrap();
        assert_eq!(result.segment_probs.len(), want.len());
        for (g, w) in result.segment_probs.iter().zip(&want) {
            assert!((g - w).abs() < 1e-4, "{name}: {g} vs {w}");
        }
    }
}

#[test]
fn identical_segments_give_identical_outputs() {
    let bundles = skills();
    let rec = session_at_25hz(6.0, 120.0, 1);
    let seg = segment(&rec).unwrap().remove(0);
    let batch = vec![seg; 4];
    let spec = &bundles.equanimity.spec;
    let a = segment_probabilities(spec, &bundles.equanimity, &batch).unwrap();
    let b = segment_probabilities(spec, &bundles.equanimity, &batch).unwrap();
    assert!(a.iter().all(|p| p.to_bits() == a[0].to_bits()));
    assert_eq!(a.iter().map(|p| p.to_bits()).collect::<Vec<_>>(), b.iter().map(|p| p.to_bits()).collect::<Vec<_>>());
    assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn segment_order_permutes_probabilities_and_keeps_the_vote() {
    let bundles = skills();
    let spec = &bundles.concentration.spec;
    let mut segs = segment(&session_at_25hz(6.0, 120.0, 2)).unwrap();
    segs.extend(segment(&session_at_25hz(16.0, 240.0, 3)).unwrap());
    let fwd = segment_probabilities(spec, &bundles.concentration, &segs).unwrap();
    segs.reverse();
    let mut rev = segment_probabilities(spec, &bundles.concentration, &segs).unwrap();
    rev.reverse();
    assert_eq!(fwd, rev);
}

#[test]
fn slow_steady_sessions_are_improved_and_fast_ones_are_not() {
    let bundles = skills();
    let spec = bundles.concentration.spec.clone();
    for seed in 0..3 {
        let pred = predict_session(&session_at_25hz(6.0, 360.0, 10 + seed), &spec, &bundles).unwrap();
        for (name, r) in pred.skills() {
            assert_eq!(r.session_label, SessionLabel::Improved, "{name}: {:?}", r.segment_probs);
        }
        let pred = predict_session(&session_at_25hz(16.0, 360.0, 20 + seed), &spec, &bundles).unwrap();
        for (name, r) in pred.skills() {
            assert_eq!(r.session_label, SessionLabel::NotImproved, "{name}: {:?}", r.segment_probs);
        }
    }
}

#[test]
fn prediction_shape_and_preconditions() {
    let bundles = skills();
    let spec = bundles.concentration.spec.clone();
    let pred = predict_session(&session_at_25hz(7.0, 600.0, 4), &spec, &bundles).unwrap();
    for (_, r) in pred.skills() {
        assert_eq!(r.segment_probs.len(), 5);
        assert_eq!(r.vote.0 + r.vote.1, 5);
    }

    let short = session_at_25hz(7.0, 119.0, 5);
    assert!(matches!(predict_session(&short, &spec, &bundles), Err(Error::TooShort(_))));

    // A 100 Hz session does not fit a 25 Hz network.
    let p = SynthProfile::default();
    let rec = generate(&p).unwrap().0;
    assert!(predict_session(&rec, &spec, &bundles).is_err());
}
