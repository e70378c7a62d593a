use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

mod common;

use layerbench::codec;
use layerbench::dataset::{
    instance_distribution, load_manifest, occlusion_rate, pair_predictions, quality_audit, save_manifest,
    size_ratio_histogram, DatasetError, DatasetManifest, PredictionSet, SampleEntry,
};
use layerbench::embedder::ReferenceEmbedder;
use layerbench::eval::{evaluate_model, EvalConfig};
use layerbench::synth::{generate, write_dataset, write_predictions, SynthConfig};
use common::*;
use layerbench::{AlphaMap, BinaryMask, Image, LayerKind};

#[test]
fn golden_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = golden(dir.path());
    let first = dir.path().join("manifest.json");
    save_manifest(&manifest, &first).unwrap();
    let a = load_manifest(&first).unwrap();
    assert_eq!(a.manifest, manifest);
    let second = dir.path().join("again.json");
    save_manifest(&a.manifest, &second).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    let b = load_manifest(&second).unwrap();
    assert_eq!(b.manifest, a.manifest);
    for ((_, la), (_, lb)) in a.layers().zip(b.layers()) {
        assert_eq!(la.layer, lb.layer);
        assert_eq!(la.prompts, lb.prompts);
    }

    // 8-bit payloads survive a write/read cycle bit for bit
    let cup = &a.samples[0].layers[0].layer;
    let p = dir.path().join("cup_copy.png");
    codec::write_rgba(&p, cup.rgb(), cup.alpha()).unwrap();
    assert_eq!(fs::read(&p).unwrap(), fs::read(dir.path().join("cup.png")).unwrap());

    // background alpha is forced opaque and the visibility kept
    let plate = &a.samples[0].layers[1].layer;
    assert!(plate.alpha().is_opaque());
    assert_eq!(plate.visibility().count(), 6 * 16);
}

#[test]
fn golden_statistics_match_hand_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    save_manifest(&golden(dir.path()), &path).unwrap();
    let ds = load_manifest(&path).unwrap();
    assert_eq!(instance_distribution(&ds.manifest), BTreeMap::from([(1, 3)]));
    // areas: cup 64/256, dog 128/256, cat 64/256
    let h = size_ratio_histogram(&ds, 4);
    assert_eq!(h.counts, vec![0, 2, 1, 0]);
    let occ = occlusion_rate(&ds, 0.01).unwrap();
    assert_eq!((occ.occluded_layers, occ.foreground_layers), (1, 3));
    let flags = occ.consistency.unwrap();
    assert_eq!((flags.flagged_layers, flags.agreeing), (1, 1));
    let q = quality_audit(&ds.manifest);
    assert_eq!((q.foreground.good, q.foreground.poor, q.foreground.unlabeled), (1, 1, 1));
    assert_eq!(q.foreground.pass_share, Some(0.5));
    assert_eq!(q.background.pass_share, Some(1.0));
}

/// Five foreground layers, three of them occluded by more than 1%.
#[test]
fn occlusion_rate_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let m = occlusion_fixture(root);
    let path = root.join("manifest.json");
    save_manifest(&m, &path).unwrap();
    let ds = load_manifest(&path).unwrap();
    assert_eq!(occlusion_rate(&ds, 0.01).unwrap().rate, 0.6);
    assert!(occlusion_rate(&ds, 0.01).unwrap().consistency.is_none());
    let mut last = 1.0;
    for t in [0.0, 0.005, 0.01, 0.02, 0.3, 0.5, 0.9, 0.99] {
        let r = occlusion_rate(&ds, t).unwrap().rate;
        assert!(r <= last, "rate must not grow with the threshold");
        last = r;
    }
    assert_eq!(occlusion_rate(&ds, 0.0).unwrap().rate, 0.8);
}

#[test]
fn invariant_violations_name_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let img = write_image(root, "image");
    let empty = entry("ghost", LayerKind::Foreground, write_layer(root, "ghost", |_, _| false, |_, _| false));
    let m = DatasetManifest::new(vec![SampleEntry {
        id: "s".into(),
        image_path: img.clone(),
        background_path: None,
        layers: vec![empty],
    }]);
    let path = root.join("manifest.json");
    save_manifest(&m, &path).unwrap();
    match load_manifest(&path) {
        Err(DatasetError::InvariantViolation { sample, layer, .. }) => {
            assert_eq!((sample.as_str(), layer.as_deref()), ("s", Some("ghost")));
        }
        other => panic!("unexpected {other:?}"),
    }

    // visibility far outside the alpha support is rejected
    let rgb = Image::filled(H, W, [0.5; 3]);
    let alpha = AlphaMap::from_fn(H, W, |x, _| if x < 4 { 1.0 } else { 0.0 });
    codec::write_rgba(&root.join("leaky.png"), &rgb, &alpha).unwrap();
    codec::write_mask(&root.join("leaky_vis.png"), &BinaryMask::filled(H, W, true)).unwrap();
    let leaky = entry("leaky", LayerKind::Foreground, ("leaky.png".into(), "leaky_vis.png".into()));
    let m = DatasetManifest::new(vec![SampleEntry {
        id: "s".into(),
        image_path: img,
        background_path: None,
        layers: vec![leaky],
    }]);
    save_manifest(&m, &path).unwrap();
    assert!(matches!(load_manifest(&path), Err(DatasetError::InvariantViolation { .. })));
}

fn synthetic(dir: &Path, samples: usize) -> (std::path::PathBuf, Vec<layerbench::synth::SynthSample>) {
    let scenes = generate(&SynthConfig {
        samples,
        height: 48,
        width: 48,
        ..Default::default()
    });
    let data = dir.join("data");
    write_dataset(&scenes, &data).unwrap();
    (data.join("manifest.json"), scenes)
}

#[test]
fn synthetic_dataset_loads_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (path, scenes) = synthetic(dir.path(), 5);
    let ds = load_manifest(&path).unwrap();
    assert_eq!(ds.samples.len(), 5);
    for (s, scene) in ds.samples.iter().zip(&scenes) {
        for (l, sl) in s.layers.iter().zip(&scene.layers) {
            assert_eq!(l.layer, sl.layer);
            assert_eq!(l.prompts, sl.prompts);
        }
    }
    // foreground pattern 2,0,1,0,2
    let hist = instance_distribution(&ds.manifest);
    assert_eq!(hist, BTreeMap::from([(0, 2), (1, 1), (2, 2)]));
    let by_hand: usize = scenes.iter().map(|s| s.layers.len() - 1).sum();
    let mean = hist.iter().map(|(k, v)| k * v).sum::<usize>() as f64 / 5.0;
    assert_eq!(mean, by_hand as f64 / 5.0);
    let occ = occlusion_rate(&ds, 0.01).unwrap();
    assert_eq!(occ.consistency.unwrap().disagreeing, Vec::<String>::new());
}

#[test]
fn prediction_pairing() {
    let dir = tempfile::tempdir().unwrap();
    let (path, scenes) = synthetic(dir.path(), 5);
    let ds = load_manifest(&path).unwrap();
    let preds = dir.path().join("preds");
    write_predictions(&scenes, &preds, &[("multi".into(), 0.0), ("single".into(), 0.5)], 1, 7).unwrap();
    write_predictions(&scenes, &dir.path().join("k5"), &[("multi".into(), 0.3)], 5, 7).unwrap();

    let total: usize = scenes.iter().map(|s| s.layers.len()).sum();
    assert_eq!(total, 10);

    // K = 5: all candidates exposed, the first one scored
    let set = PredictionSet::scan(&dir.path().join("k5"), "multi", &ds).unwrap();
    let paired = pair_predictions(&ds, &set, false).unwrap();
    assert_eq!(paired.pairs.len(), 10);
    for p in &paired.pairs {
        assert_eq!(p.candidates.len(), 5);
        assert!(p.candidates[0].ends_with(format!("{}_0.png", p.key.layer_id)));
        let (rgb, _) = codec::read_rgba(&p.candidates[0]).unwrap();
        assert_eq!(&rgb, p.pair.pred.rgb());
    }

    // identity predictions reproduce the ground truth exactly
    let set = PredictionSet::scan(&preds, "multi", &ds).unwrap();
    let paired = pair_predictions(&ds, &set, false).unwrap();
    for p in &paired.pairs {
        assert_eq!(p.pair.gt.rgb(), p.pair.pred.rgb());
        assert_eq!(p.pair.occluded, p.computed_occluded);
    }
    let eval = evaluate_model(&ds, &preds, "multi", &ReferenceEmbedder::new(), &EvalConfig::default()).unwrap();
    assert_eq!(eval.raw.s_vis, 0.0);
    assert!((eval.raw.s_gen - 1.0).abs() < 1e-12);
    assert!(eval.raw.s_fid <= 1e-3);

    // one missing layer: an error naming it, or coverage with --allow-missing
    let victim = preds.join("single").join("s001").join("bg.png");
    fs::remove_file(&victim).unwrap();
    let set = PredictionSet::scan(&preds, "single", &ds).unwrap();
    match pair_predictions(&ds, &set, false) {
        Err(DatasetError::MissingPredictions(keys)) => assert_eq!(keys, vec!["s001/bg".to_string()]),
        other => panic!("unexpected {other:?}"),
    }
    let paired = pair_predictions(&ds, &set, true).unwrap();
    assert_eq!((paired.coverage.expected, paired.coverage.matched), (10, 9));

    // wrong size
    codec::write_rgb(&victim, &Image::filled(8, 8, [0.0; 3])).unwrap();
    let set = PredictionSet::scan(&preds, "single", &ds).unwrap();
    assert!(matches!(pair_predictions(&ds, &set, false), Err(DatasetError::DimensionMismatch { .. })));

    // stray file
    fs::write(preds.join("single").join("s001").join("unicorn.png"), b"").unwrap();
    assert!(matches!(PredictionSet::scan(&preds, "single", &ds), Err(DatasetError::UnknownPrediction(_))));
}
