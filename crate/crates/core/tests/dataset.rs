use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use t2c_core::dataset::{
    generate_ambiguous_pair, generate_corpus, generate_sample, load_manifest, random_pair_scene, random_scene,
    render_camera_image, write_corpus, CorpusSpec, Maneuver, SceneParams, Split, SpeedProfile, TEMPLATES,
};
use t2c_core::geometry::CameraModel;
use t2c_core::metrics::split_caption;
use t2c_core::raster::{render_trajectory_image, SLOW};
use t2c_core::text::tokenize;

fn cam() -> CameraModel {
    CameraModel::toy_default()
}

#[test]
fn template_captions() {
    let c = generate_sample("a", &SceneParams::new(Some(30.0), SpeedProfile::Steady, Maneuver::Straight), &cam(), 1, Split::Train)
        .unwrap();
    assert_eq!(
        tokenize(&c.caption),
        tokenize("i will drive at a steady speed . ; because there is a safe distance from the front vehicle .")
    );
    let c = generate_sample("b", &SceneParams::new(Some(8.0), SpeedProfile::Decelerating, Maneuver::StopBehind), &cam(), 1, Split::Train)
        .unwrap();
    assert_eq!(tokenize(&c.caption), tokenize("i will slow down . ; because the front vehicle is stopped ."));
}

#[test]
fn stopped_profile_is_all_green() {
    let scene = SceneParams::new(Some(5.0), SpeedProfile::Stopped, Maneuver::Straight);
    let s = generate_sample("s", &scene, &cam(), 3, Split::Test).unwrap();
    assert!(s.plan.trajectory.iter().all(|p| p.speed == 0.0));
    // the last drawn polyline is the trajectory: every one of its pixels is green
    let polys = t2c_core::geometry::plan_to_polylines(&s.plan, &cam());
    assert!(polys.last().unwrap().colors.iter().all(|&c| c == SLOW));
    let img = render_trajectory_image(&s.plan, &cam());
    assert!(img.pixels().any(|p| p == SLOW));
}

#[test]
fn ambiguous_pairs_over_100_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sides = BTreeSet::new();
    for i in 0..100 {
        let scene = random_pair_scene(&mut rng);
        let (a, b) = generate_ambiguous_pair(&format!("p{i}"), &scene, &cam(), rng.random(), Split::Test).unwrap();
        let digest = |img: &t2c_core::raster::RgbImage| hex::encode(Sha256::digest(img.to_ppm()));
        assert_eq!(digest(&a.image), digest(&b.image));
        assert_eq!(a.image.digest(), b.image.digest());
        assert_ne!(split_caption(&a.caption).action, split_caption(&b.caption).action);
        assert_ne!(a.plan, b.plan);
        let lateral_gap = a
            .plan
            .trajectory
            .iter()
            .zip(&b.plan.trajectory)
            .map(|(p, q)| (p.position.y - q.position.y).abs())
            .fold(0.0, f64::max);
        assert!(lateral_gap > 0.5, "pair {i}: {lateral_gap}");
        assert_eq!(a.scene.maneuver, Maneuver::StopBehind);
        sides.insert(format!("{:?}", b.scene.maneuver));
    }
    assert_eq!(sides.len(), 2);
    assert!(generate_ambiguous_pair("x", &SceneParams::new(None, SpeedProfile::Steady, Maneuver::Straight), &cam(), 0, Split::Test)
        .is_err());
}

#[test]
fn captions_split_and_vocabulary_is_closed() {
    let template_tokens: BTreeSet<String> = TEMPLATES
        .iter()
        .flat_map(|(a, j)| tokenize(a).into_iter().chain(tokenize(j)))
        .chain(std::iter::once(";".to_string()))
        .collect();
    assert!(template_tokens.len() <= 40, "{}", template_tokens.len());
    let corpus = generate_corpus(&CorpusSpec { seed: 5, standard: 120, pairs: 40 }, &cam()).unwrap();
    let mut seen = BTreeSet::new();
    for s in &corpus {
        assert!(!split_caption(&s.caption).missing_delimiter, "{}", s.caption);
        assert_eq!(s.caption.matches(';').count(), 1);
        for t in tokenize(&s.caption) {
            assert!(template_tokens.contains(&t), "{t}");
            seen.insert(t);
        }
    }
    assert_eq!(seen, template_tokens);
}

#[test]
fn every_template_is_reachable() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut actions = BTreeSet::new();
    for _ in 0..300 {
        let s = random_scene(&mut rng);
        s.validate().unwrap();
        actions.insert(split_caption(&t2c_core::dataset::caption_for(&s)).action);
    }
    assert_eq!(actions.len(), TEMPLATES.iter().map(|t| t.0).collect::<BTreeSet<_>>().len());
}

#[test]
fn lead_vehicle_scales_with_distance() {
    let near = SceneParams::new(Some(10.0), SpeedProfile::Steady, Maneuver::Straight);
    let far = SceneParams::new(Some(40.0), SpeedProfile::Steady, Maneuver::Straight);
    let extent = |s: &SceneParams| {
        let img = render_camera_image(s, &cam());
        let mut xs = (usize::MAX, 0);
        let mut ys = (usize::MAX, 0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.get(x, y) == t2c_core::dataset::VEHICLE {
                    xs = (xs.0.min(x), xs.1.max(x));
                    ys = (ys.0.min(y), ys.1.max(y));
                }
            }
        }
        ((xs.1 + 1).saturating_sub(xs.0), (ys.1 + 1).saturating_sub(ys.0))
    };
    let (wn, hn) = extent(&near);
    let (wf, hf) = extent(&far);
    assert!(wn > wf && hn > hf, "{wn}x{hn} vs {wf}x{hf}");
    // pinhole width ratio is roughly the inverse depth ratio
    let ratio = wn as f64 / wf as f64;
    assert!(ratio > 2.0, "{ratio}");
}

#[test]
fn manifest_is_deterministic_and_lossless() {
    let spec = CorpusSpec { seed: 42, standard: 20, pairs: 10 };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let c1 = generate_corpus(&spec, &cam()).unwrap();
    let c2 = generate_corpus(&spec, &cam()).unwrap();
    assert_eq!(c1, c2);
    let m1 = write_corpus(d1.path(), &c1, &cam()).unwrap();
    let m2 = write_corpus(d2.path(), &c2, &cam()).unwrap();
    let b1 = std::fs::read(&m1).unwrap();
    assert_eq!(b1, std::fs::read(&m2).unwrap());
    assert_eq!(b1.iter().filter(|&&b| b == b'\n').count(), 40);
    let loaded = load_manifest(&m1).unwrap();
    assert_eq!(loaded.len(), 40);
    for (s, g) in loaded.iter().zip(&c1) {
        assert_eq!((&s.id, &s.caption, s.split), (&g.id, &g.caption, g.split));
    }
    let other = generate_corpus(&CorpusSpec { seed: 43, ..spec }, &cam()).unwrap();
    assert_ne!(other, c1);
}

#[test]
fn default_corpus_size() {
    let spec = CorpusSpec::default();
    assert_eq!(spec.standard + 2 * spec.pairs, 800);
    assert_eq!(t2c_core::dataset::split_counts(400), (280, 60, 60));
}
