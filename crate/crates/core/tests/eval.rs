use std::f64::consts::{PI, TAU};

use lieproj::compatibility::{find_coincidences, GridCheck};
use lieproj::dataset::{generate_dataset, DatasetConfig};
use lieproj::error::Error;
use lieproj::eval::{
    align_poses, coincidence_collapse, emit_plots, fold_score, infer_poses, pose_report, spearman, PosePair,
};
use lieproj::geometry::{PointVolume, RasterSettings};
use lieproj::scalar::{canonical_angle, wrap_angle};
use lieproj::vae::{VaeConfig, VaeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn thetas(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..TAU)).collect()
}

fn pairs(f: impl Fn(f64) -> f64) -> Vec<PosePair> {
    thetas(500, 3)
        .into_iter()
        .map(|t| PosePair {
            theta_true: t,
            theta_est: canonical_angle(f(t)),
        })
        .collect()
}

/// Two-to-one map folding the circle about `a` and covering it once per half.
fn fold(t: f64, a: f64) -> f64 {
    2.0 * wrap_angle(t - a).abs()
}

#[test]
fn identity_map_aligns_exactly() {
    let r = align_poses(&pairs(|t| t)).unwrap();
    assert_eq!(r.g, 1);
    assert!(r.c.abs() < 1e-12);
    assert!(r.median_error < 1e-12);
    assert!((r.latent_spearman() - 1.0).abs() < 1e-12);
}

#[test]
fn reflection_with_offset_is_recognised() {
    let r = align_poses(&pairs(|t| 1.0 - t)).unwrap();
    assert_eq!(r.g, -1);
    assert!((r.c - 1.0).abs() < 1e-12);
    assert!(r.median_error < 1e-12);
    assert!(r.latent_spearman() > 0.999);
}

#[test]
fn folded_map_fails_both_classes() {
    let p = pairs(|t| fold(t, PI));
    let r = align_poses(&p).unwrap();
    assert!(r.median_error > 30f64.to_radians(), "{}", r.median_error.to_degrees());
}

#[test]
fn global_rotation_changes_offset_only() {
    let noisy = |t: f64| t + 0.2 * (3.0 * t).sin();
    let base = align_poses(&pairs(noisy)).unwrap();
    for k in [0.3, 2.0, -4.0] {
        let shifted = align_poses(&pairs(|t| noisy(t) + k)).unwrap();
        assert!((shifted.median_error - base.median_error).abs() < 1e-12);
        assert!(wrap_angle(shifted.c - base.c - k).abs() < 1e-9);
    }
}

#[test]
fn reflected_inputs_reproduce_the_error() {
    let noisy = |t: f64| t + 0.3 * (2.0 * t).cos();
    let direct = align_poses(&pairs(noisy)).unwrap();
    let mirrored = align_poses(&pairs(|t| -noisy(t))).unwrap();
    assert_eq!(direct.g, 1);
    assert_eq!(mirrored.g, -1);
    assert!((direct.median_error - mirrored.median_error).abs() < 1e-12);
}

#[test]
fn too_few_pairs() {
    let one = &pairs(|t| t)[..1];
    assert!(matches!(align_poses(one), Err(Error::InsufficientData { need: 2, got: 1 })));
    let seven = &pairs(|t| t)[..7];
    assert!(matches!(fold_score(seven, 360), Err(Error::InsufficientData { need: 8, .. })));
}

#[test]
fn fold_scores() {
    assert!(fold_score(&pairs(|t| t), 360).unwrap() <= 0.0);
    assert!(fold_score(&pairs(|t| 0.5 - t), 360).unwrap() <= 0.0);
    let v = fold_score(&pairs(|t| fold(t, PI)), 360).unwrap();
    assert!(v > 0.5, "fold score {v}");
    let off_grid = fold_score(&pairs(|t| fold(t, 1.234) + 0.7), 360).unwrap();
    assert!(off_grid > 0.5, "fold score {off_grid}");
    let constant = fold_score(&pairs(|_| 2.0), 360).unwrap();
    assert!(constant.abs() < 1e-12, "fold score {constant}");
}

#[test]
fn spearman_basics() {
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]) - 0.866_025_403_784_438_6).abs() < 1e-12);
    assert!(spearman(&[1.0, 2.0], &[1.0, 1.0]).is_nan());
}

fn volume() -> PointVolume<f64> {
    PointVolume::planar(&[(0.6, 0.0), (-0.3, 0.7), (-0.3, -0.7)], &[1.0, 1.0, 1.0], 1.0).unwrap()
}

fn untrained(width: usize) -> VaeModel {
    VaeModel::new(width, 1.0, &VaeConfig::default(), 4).unwrap()
}

#[test]
fn inference_is_total_and_deterministic() {
    let d = generate_dataset(&volume(), &DatasetConfig { count: 1, ..DatasetConfig::default() });
    assert!(d.is_err(), "one sample cannot be split");
    let d = generate_dataset(
        &volume(),
        &DatasetConfig {
            count: 20,
            ..DatasetConfig::default()
        },
    )
    .unwrap();
    let m = untrained(64);
    let a = infer_poses(&m, &d).unwrap();
    assert_eq!(a.len(), 20);
    assert_eq!(a, infer_poses(&m, &d).unwrap());
    assert!(a.iter().all(|p| (0.0..TAU).contains(&p.theta_est)));
    assert!(matches!(infer_poses(&untrained(32), &d), Err(Error::InvalidArgument(_))));

    let single = lieproj::dataset::Dataset {
        samples: d.samples[..1].to_vec(),
        split: d.split[..1].to_vec(),
        ..d.clone()
    };
    assert_eq!(infer_poses(&m, &single).unwrap().len(), 1);
}

#[test]
fn coincident_poses_collapse_for_any_encoder() {
    let v = volume();
    let pairs = find_coincidences(&v, &GridCheck::exact(1.0)).unwrap();
    assert!(!pairs.is_empty());
    let raster = RasterSettings::with_default_splat(64, 1.0);
    for seed in 0..3 {
        let m = VaeModel::new(64, 1.0, &VaeConfig::default(), seed).unwrap();
        assert!(coincidence_collapse(&m, &v, &raster, &pairs).unwrap() < 1e-6);
    }
}

#[test]
fn plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let report = pose_report(&pairs(|t| t + 0.1), 90).unwrap();
    assert!(report.fold_score.unwrap() <= 0.0);
    let files = emit_plots(&report, &dir.path().join("run")).unwrap();
    let latent = std::fs::read_to_string(&files.latent_csv).unwrap();
    let rows: Vec<&str> = latent.lines().skip(1).collect();
    assert_eq!(rows.len(), 500);
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12);
    }
    let poses = std::fs::read_to_string(&files.poses_csv).unwrap();
    assert_eq!(poses.lines().count(), 501);
    assert!(std::fs::read_to_string(&files.latent_svg).unwrap().starts_with("<svg"));
    let again = emit_plots(&report, &dir.path().join("run2")).unwrap();
    assert_eq!(
        std::fs::read(&files.poses_svg).unwrap(),
        std::fs::read(&again.poses_svg).unwrap()
    );
    assert!(emit_plots(&report, &dir.path().join("missing/run")).is_err());
}
