use std::f64::consts::{FRAC_PI_2, PI, TAU};

use lieproj::dataset::{generate_dataset, DatasetConfig, Split};
use lieproj::error::Error;
use lieproj::geometry::{Image1D, PointVolume};
use lieproj::scalar::{canonical_angle, wrap_angle};
use lieproj::vae::{
    irrep_matrix, kl_term, reparametrize, restart_seed, train, VaeConfig, VaeModel, LOG_VAR_MAX, LOG_VAR_MIN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i * n + j] += a[i * n + k] * b[k * n + j];
            }
        }
    }
    c
}

#[test]
fn irrep_is_a_homomorphism() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (a, b) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let ta = irrep_matrix(a, 4).unwrap().matrix();
        let tb = irrep_matrix(b, 4).unwrap().matrix();
        let tab = irrep_matrix(a + b, 4).unwrap().matrix();
        let prod = matmul(&ta, &tb, 8);
        let err = prod.iter().zip(&tab).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }
}

#[test]
fn irrep_known_values() {
    let id = irrep_matrix(0.0, 3).unwrap().matrix();
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(id[i * 6 + j], if i == j { 1.0 } else { 0.0 });
        }
    }
    let q = irrep_matrix(FRAC_PI_2, 1).unwrap().matrix();
    let want = [0.0, -1.0, 1.0, 0.0];
    for (x, y) in q.iter().zip(want) {
        assert!((x - y).abs() < 1e-15);
    }
    let e = irrep_matrix(0.7, 2).unwrap();
    let c = [0.3, -1.2, 2.0, 0.5];
    let dense = e.matrix();
    let applied = e.apply(&c);
    for i in 0..4 {
        let row: f64 = (0..4).map(|j| dense[i * 4 + j] * c[j]).sum();
        assert!((row - applied[i]).abs() < 1e-14);
    }
    assert!(matches!(irrep_matrix(1.0, 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn reparametrization() {
    assert_eq!(reparametrize(1.25, -3.0, 0.0).unwrap().angle().unwrap(), 1.25);
    let tight = reparametrize(2.0, LOG_VAR_MIN, 3.0).unwrap().angle().unwrap();
    assert!((tight - 2.0).abs() <= 3.0 * (0.5 * LOG_VAR_MIN).exp() + 1e-12);

    let (mu, sd) = (1.0, 0.2);
    let lv = (sd * sd as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            let a = reparametrize(mu, lv, e).unwrap().angle().unwrap();
            mu + wrap_angle(a - mu)
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - mu).abs() / mu < 0.02, "mean {mean}");
    assert!((var.sqrt() - sd).abs() / sd < 0.02, "sd {}", var.sqrt());
}

fn model(width: usize, seed: u64) -> VaeModel {
    VaeModel::new(width, 1.0, &VaeConfig::default(), seed).unwrap()
}

fn image(width: usize, seed: u64) -> Image1D<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image1D::new((0..width).map(|_| rng.gen_range(0.0..1.0)).collect(), 1.0).unwrap()
}

#[test]
fn posterior_gradient_matches_differences() {
    let m = model(16, 2);
    let x = image(16, 3);
    for &(mu, lv, eps) in &[(0.4, -2.0, 0.7), (3.0, -0.5, -1.3), (5.5, 1.0, 0.2)] {
        let (l, dmu, dlv) = m.posterior_gradient(&x, mu, lv, eps).unwrap();
        let f = |mu: f64, lv: f64| m.posterior_gradient(&x, mu, lv, eps).unwrap().0;
        assert!((l - f(mu, lv)).abs() < 1e-12);
        let h = 1e-6;
        let nmu = (f(mu + h, lv) - f(mu - h, lv)) / (2.0 * h);
        let nlv = (f(mu, lv + h) - f(mu, lv - h)) / (2.0 * h);
        assert!((dmu - nmu).abs() < 1e-3, "{dmu} {nmu}");
        assert!((dlv - nlv).abs() < 1e-3, "{dlv} {nlv}");
    }
}

#[test]
fn posterior_loss_agrees_with_direct_loss() {
    let m = model(16, 2);
    let x = image(16, 9);
    let (mu, lv, eps) = (1.1, -1.0, 0.6);
    let theta = mu + (0.5 * lv as f64).exp() * eps;
    let direct = m.loss(&x, theta, lv).unwrap();
    let (sampled, _, _) = m.posterior_gradient(&x, mu, lv, eps).unwrap();
    assert!((direct - sampled).abs() < 1e-10);
}

#[test]
fn encoder_outputs() {
    let m = model(32, 7);
    let x = image(32, 1);
    let a = m.encode(&x).unwrap();
    assert!((0.0..TAU).contains(&a.mu));
    assert!((a.mu - canonical_angle(a.mean_vector[1].atan2(a.mean_vector[0]))).abs() < 1e-15);
    assert!((LOG_VAR_MIN..=LOG_VAR_MAX).contains(&a.log_var));

    let mut p = x.pixels().to_vec();
    p[5] += 1e-6;
    let b = m.encode(&Image1D::new(p, 1.0).unwrap()).unwrap();
    assert!(wrap_angle(a.mu - b.mu).abs() < 1e-3);
    assert!((a.log_var - b.log_var).abs() < 1e-3);

    assert!(matches!(m.encode(&image(16, 1)), Err(Error::DimensionMismatch { expected: 32, got: 16 })));
}

#[test]
fn mean_vector_angle_convention() {
    // A hand-built encoder whose output is (0, 1, lv) for every input.
    let mut m = model(4, 1);
    let text = m.to_text();
    let mut parsed = VaeModel::parse_text(&text, std::path::Path::new("m")).unwrap();
    assert_eq!(parsed, m);
    {
        let layers = parsed.encoder.params_mut();
        let n = layers.len();
        for (i, p) in layers.into_iter().enumerate() {
            for v in p.data_mut() {
                *v = 0.0;
            }
            if i == n - 1 {
                p.data_mut()[1] = 1.0;
                p.data_mut()[2] = 50.0;
            }
        }
    }
    let out = parsed.encode(&image(4, 0)).unwrap();
    assert!((out.mu - FRAC_PI_2).abs() < 1e-15);
    assert_eq!(out.log_var, LOG_VAR_MAX);
    m = parsed;
    let last = m.encoder.params_mut().pop().unwrap();
    last.data_mut()[2] = -50.0;
    assert_eq!(m.encode(&image(4, 0)).unwrap().log_var, LOG_VAR_MIN);
}

#[test]
fn decoder_outputs() {
    let m = model(24, 3);
    for t in [0.0, 1.0, PI, 5.0] {
        let img = m.decode(&irrep_matrix(t, 4).unwrap()).unwrap();
        assert_eq!(img.width(), 24);
        assert!(img.pixels().iter().all(|&p| p > 0.0 && p < 1.0));
    }
    let at_zero = m.decode(&irrep_matrix(0.0, 4).unwrap()).unwrap();
    let logits = m.decoder.eval(&m.content).unwrap();
    for (p, z) in at_zero.pixels().iter().zip(logits.data()) {
        assert!((p - 1.0 / (1.0 + (-z).exp())).abs() < 1e-15);
    }
    let a = m.decode(&irrep_matrix(0.3, 4).unwrap()).unwrap();
    let b = m.decode(&irrep_matrix(0.3 + TAU, 4).unwrap()).unwrap();
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(m.decode(&irrep_matrix(0.0, 2).unwrap()).is_err());
}

#[test]
fn kl_behaviour() {
    let offset = 0.5 * TAU.ln() - 0.5;
    assert!((kl_term(0.0) - offset).abs() < 1e-15);
    assert_eq!(kl_term(2.0 * offset), 0.0);
    assert_eq!(kl_term(5.0), 0.0);
    let mut prev = f64::INFINITY;
    for i in 0..=40 {
        let lv = LOG_VAR_MIN + i as f64 * (LOG_VAR_MAX - LOG_VAR_MIN) / 40.0;
        let k = kl_term(lv);
        assert!(k >= 0.0 && k <= prev);
        prev = k;
    }
    let m = model(8, 1);
    let x = m.decode(&irrep_matrix(0.0, 4).unwrap()).unwrap();
    let a = m.loss(&x, 0.0, -30.0).unwrap();
    let b = m.loss(&x, 0.0, LOG_VAR_MIN).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bce_vanishes_for_saturated_targets() {
    let mut m = model(8, 1);
    let last = m.decoder.params_mut().pop().unwrap();
    for (i, v) in last.data_mut().iter_mut().enumerate() {
        *v = if i % 2 == 0 { 60.0 } else { -60.0 };
    }
    for p in m.decoder.params_mut().into_iter().rev().skip(1).take(1) {
        for v in p.data_mut() {
            *v = 0.0;
        }
    }
    let target = Image1D::new((0..8).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(), 1.0).unwrap();
    let lv = 1.0;
    let l = m.loss(&target, 0.4, lv).unwrap();
    assert!((l - kl_term(lv)).abs() < 1e-20 + 1e-12, "{l}");

    let bad = Image1D::new(vec![0.5, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0);
    assert!(matches!(bad, Err(Error::InvalidInput(_))));
}

fn small_dataset() -> lieproj::dataset::Dataset {
    let v = PointVolume::planar(&[(0.2, 0.35), (-0.12, -0.83), (-0.49, 0.6)], &[1.0, 1.0, 1.0], 1.0).unwrap();
    generate_dataset(
        &v,
        &DatasetConfig {
            count: 200,
            width: 32,
            ..DatasetConfig::default()
        },
    )
    .unwrap()
}

fn quick(epochs: usize) -> VaeConfig {
    VaeConfig {
        encoder_hidden: vec![32],
        decoder_hidden: vec![32],
        epochs,
        restarts: 1,
        batch: 32,
        lr: 3e-3,
        ..VaeConfig::default()
    }
}

#[test]
fn zero_epochs_leaves_initial_state() {
    let d = small_dataset();
    let out = train(&d, &quick(0)).unwrap();
    assert_eq!(out.history[0].epochs.len(), 0);
    assert_eq!(out.model, VaeModel::new(32, 1.0, &quick(0), restart_seed(1, 0)).unwrap());
    assert_eq!(out.history_csv().lines().count(), 2);
}

#[test]
fn training_reduces_validation_bce_and_is_deterministic() {
    let d = small_dataset();
    let cfg = quick(80);
    let a = train(&d, &cfg).unwrap();
    let h = &a.history[0];
    let first = h.initial.bce;
    let last = h.epochs.last().unwrap().val_bce;
    assert!(last <= 0.5 * first, "val bce {first} -> {last}");
    assert!(h.diverged_at.is_none());
    let b = train(&d, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history_csv(), b.history_csv());
    let val = d.indices(Split::Validation);
    assert_eq!(a.model.evaluate(&d, &val).unwrap(), b.model.evaluate(&d, &val).unwrap());
}

#[test]
fn restarts_pick_lowest_validation_loss() {
    let d = small_dataset();
    let out = train(
        &d,
        &VaeConfig {
            restarts: 3,
            ..quick(3)
        },
    )
    .unwrap();
    assert_eq!(out.history.len(), 3);
    let best = out
        .history
        .iter()
        .map(|h| h.final_val_loss().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.selected].final_val_loss().unwrap(), best);
    assert_eq!(out.model.seed, restart_seed(1, out.selected));
}

#[test]
fn checkpoint_round_trip() {
    let d = small_dataset();
    let out = train(&d, &quick(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    out.model.save(&path).unwrap();
    let back = VaeModel::load(&path).unwrap();
    assert_eq!(back, out.model);
    let x = &d.samples[0].image;
    assert_eq!(back.encode(x).unwrap(), out.model.encode(x).unwrap());

    let text = std::fs::read_to_string(&path).unwrap();
    let broken: String = text.lines().take(text.lines().count() / 2).collect::<Vec<_>>().join("\n");
    std::fs::write(&path, broken).unwrap();
    assert!(VaeModel::load(&path).is_err());
}

#[test]
fn invalid_training_configs() {
    let d = small_dataset();
    assert!(train(&d, &VaeConfig { restarts: 0, ..quick(1) }).is_err());
    assert!(train(&d, &VaeConfig { batch: 0, ..quick(1) }).is_err());
    assert!(train(&d, &VaeConfig { lr: 0.0, ..quick(1) }).is_err());
    assert!(VaeModel::new(32, 1.0, &VaeConfig { k: 0, ..quick(1) }, 1).is_err());
}
