use lieproj::compatibility::{check_injectivity, GridCheck};
use lieproj::dataset::{generate_dataset, load_dataset, meta_path, render_pose, save_dataset, DatasetConfig, Split};
use lieproj::error::Error;
use lieproj::geometry::{image_distance, project, rasterize, PointVolume};

fn volume() -> PointVolume<f64> {
    PointVolume::planar(&[(1.0, 0.0), (0.0, 2.0), (-1.3, -0.6)], &[1.0, 1.0, 1.0], 2.0).unwrap()
}

fn small(count: usize) -> DatasetConfig {
    DatasetConfig {
        count,
        ..DatasetConfig::default()
    }
}

fn ks_uniform(thetas: &[f64]) -> f64 {
    let mut u: Vec<f64> = thetas.iter().map(|t| t / std::f64::consts::TAU).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn full_size_dataset_is_uniform_and_in_range() {
    let d = generate_dataset(&volume(), &DatasetConfig::default()).unwrap();
    assert_eq!(d.len(), 2000);
    assert_eq!(d.width(), 64);
    assert!(d
        .samples
        .iter()
        .all(|s| s.image.pixels().iter().all(|&p| (0.0..=1.0).contains(&p))));
    assert!(d.thetas().iter().all(|&t| (0.0..std::f64::consts::TAU).contains(&t)));
    let ks = ks_uniform(&d.thetas());
    assert!(ks < 0.05, "KS statistic {ks}");
    assert_eq!(d.indices(Split::Validation).len(), 200);
    assert_eq!(d.indices(Split::Validation)[0], 1800);
}

#[test]
fn same_seed_gives_identical_images() {
    let cfg = DatasetConfig {
        noise_sigma: 0.05,
        ..small(50)
    };
    let a = generate_dataset(&volume(), &cfg).unwrap();
    let b = generate_dataset(&volume(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = generate_dataset(&volume(), &DatasetConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.thetas(), c.thetas());
}

#[test]
fn noise_does_not_change_poses() {
    let clean = generate_dataset(&volume(), &small(30)).unwrap();
    let noisy = generate_dataset(&volume(), &DatasetConfig { noise_sigma: 0.1, ..small(30) }).unwrap();
    assert_eq!(clean.thetas(), noisy.thetas());
    assert_ne!(clean.samples, noisy.samples);
}

#[test]
fn identity_pose_is_the_plain_projection() {
    let v = volume();
    let d = generate_dataset(&v, &small(10)).unwrap();
    let at_zero = render_pose(&v, 0.0, &d.raster).unwrap();
    let direct = rasterize(&project(&v), d.raster.width, d.raster.splat_sigma, d.raster.domain_radius).unwrap();
    assert_eq!(at_zero, direct);
}

#[test]
fn noise_free_images_depend_on_pose_only() {
    let d = generate_dataset(&volume(), &small(20)).unwrap();
    for s in &d.samples {
        let again = render_pose(&d.volume, s.theta_true + 1e-13, &d.raster).unwrap();
        assert!(image_distance(&s.image, &again).unwrap() < 1e-9);
    }
}

#[test]
fn round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.csv");
    let d = generate_dataset(&volume(), &DatasetConfig { noise_sigma: 0.02, ..small(40) }).unwrap();
    save_dataset(&d, &path).unwrap();
    assert!(meta_path(&path).exists());
    let back = load_dataset(&path).unwrap();
    assert_eq!(d, back);

    let check = GridCheck::exact(2.0);
    let before = check_injectivity(&d.volume, &check).unwrap();
    let after = check_injectivity(&back.volume, &check).unwrap();
    assert_eq!(before.satisfies_injectivity, after.satisfies_injectivity);
    assert_eq!(before.coincidences.len(), after.coincidences.len());
}

#[test]
fn truncated_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.csv");
    let d = generate_dataset(&volume(), &small(5)).unwrap();
    save_dataset(&d, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = &text[..text.len() - 200];
    std::fs::write(&path, cut).unwrap();
    match load_dataset(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn malformed_sidecar_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.csv");
    save_dataset(&generate_dataset(&volume(), &small(3)).unwrap(), &path).unwrap();
    let meta = std::fs::read_to_string(meta_path(&path)).unwrap();
    std::fs::write(meta_path(&path), meta.replace("seed=1", "seed=one")).unwrap();
    match load_dataset(&path) {
        Err(Error::Parse { line, msg, .. }) => {
            assert_eq!(line, 2);
            assert!(msg.contains("seed"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let v = volume();
    for cfg in [
        small(0),
        DatasetConfig { val_fraction: 1.0, ..small(10) },
        DatasetConfig { val_fraction: -0.1, ..small(10) },
        DatasetConfig { val_fraction: 0.5, ..small(1) },
        DatasetConfig { noise_sigma: -1.0, ..small(10) },
    ] {
        assert!(matches!(generate_dataset(&v, &cfg), Err(Error::InvalidArgument(_))), "{cfg:?}");
    }
}
