//! SO(2) geometric VAE: the encoder predicts a pose and a variance, a pose is
//! sampled on the circle, and the decoder reconstructs the image from the
//! learned content vector turned by the irreducible representation of that pose.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{sigmoid, Tape, Tensor, Var};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::geometry::{fmt_num, Image1D, Rotation};
use crate::nn::{Activation, Adam, AdamConfig, Layer, Mlp};
use crate::scalar::canonical_angle;

pub const LOG_VAR_MIN: f64 = -9.0;
pub const LOG_VAR_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub k: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Weight of the KL term.
    pub beta: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            k: 4,
            encoder_hidden: vec![128, 128],
            decoder_hidden: vec![128, 128],
            lr: 1e-3,
            batch: 64,
            epochs: 200,
            restarts: 3,
            seed: 1,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderOutput {
    pub mean_vector: [f64; 2],
    /// Canonical angle in `[0, 2π)`.
    pub mu: f64,
    pub log_var: f64,
}

/// Block-diagonal representation of a planar rotation: block `k` turns by `k·θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrrepEmbedding {
    pub k: usize,
    pub theta: f64,
}

impl IrrepEmbedding {
    pub fn size(&self) -> usize {
        2 * self.k
    }

    /// Dense `2K×2K` matrix, row-major.
    pub fn matrix(&self) -> Vec<f64> {
        let n = self.size();
        let mut m = vec![0.0; n * n];
        for f in 1..=self.k {
            let (s, c) = (f as f64 * self.theta).sin_cos();
            let i = 2 * (f - 1);
            m[i * n + i] = c;
            m[i * n + i + 1] = -s;
            m[(i + 1) * n + i] = s;
            m[(i + 1) * n + i + 1] = c;
        }
        m
    }

    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(c.len());
        for f in 1..=self.k {
            let (s, co) = (f as f64 * self.theta).sin_cos();
            let (a, b) = (c[2 * f - 2], c[2 * f - 1]);
            out.push(co * a - s * b);
            out.push(s * a + co * b);
        }
        out
    }
}

pub fn irrep_matrix(theta: f64, k: usize) -> Result<IrrepEmbedding> {
    if k == 0 {
        return Err(Error::invalid("at least one frequency is required"));
    }
    Ok(IrrepEmbedding { k, theta })
}

/// `θ = μ + exp(log_var / 2)·ε`, as a rotation.
pub fn reparametrize(mu: f64, log_var: f64, epsilon: f64) -> Result<Rotation<f64>> {
    Rotation::from_angle(mu + (0.5 * log_var).exp() * epsilon)
}

/// KL divergence of a wrapped small-variance Gaussian on the circle from the
/// uniform distribution, floored at zero.
pub fn kl_term(log_var: f64) -> f64 {
    (kl_offset() - 0.5 * log_var).max(0.0)
}

fn kl_offset() -> f64 {
    0.5 * TAU.ln() - 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: Mlp<f64>,
    /// Decoder body; its last layer produces logits.
    pub decoder: Mlp<f64>,
    /// `[1 × 2K]` latent content vector.
    pub content: Tensor<f64>,
    pub k: usize,
    pub domain_radius: f64,
    pub config: VaeConfig,
    /// Seed of the restart that produced these parameters.
    pub seed: u64,
}

/// Nodes of one forward pass that callers may inspect.
struct Graph {
    loss: Var,
    bce: Var,
}

impl VaeModel {
    pub fn new(width: usize, domain_radius: f64, config: &VaeConfig, seed: u64) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::invalid("at least one frequency is required"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut enc = vec![width];
        enc.extend(&config.encoder_hidden);
        enc.push(3);
        let mut dec = vec![2 * config.k];
        dec.extend(&config.decoder_hidden);
        dec.push(width);
        let encoder = Mlp::new(&enc, Activation::Relu, Activation::Identity, &mut rng)?;
        let decoder = Mlp::new(&dec, Activation::Relu, Activation::Identity, &mut rng)?;
        let content = Tensor::row(
            (0..2 * config.k)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect::<Vec<f64>>(),
        );
        Ok(Self {
            encoder,
            decoder,
            content,
            k: config.k,
            domain_radius,
            config: config.clone(),
            seed,
        })
    }

    pub fn width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder.parameter_count() + self.decoder.parameter_count() + self.content.len()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite() && self.content.is_finite()
    }

    fn check_width(&self, w: usize) -> Result<()> {
        if w != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                got: w,
            });
        }
        Ok(())
    }

    /// Encode every row of a `[B × W]` batch.
    pub fn encode_batch(&self, images: &Tensor<f64>) -> Result<Vec<EncoderOutput>> {
        self.check_width(images.cols())?;
        let out = self.encoder.eval(images)?;
        (0..out.rows())
            .map(|r| {
                let row = out.row_slice(r);
                if !row.iter().all(|x| x.is_finite()) {
                    return Err(Error::Numeric { index: r });
                }
                Ok(EncoderOutput {
                    mean_vector: [row[0], row[1]],
                    mu: canonical_angle(row[1].atan2(row[0])),
                    log_var: row[2].clamp(LOG_VAR_MIN, LOG_VAR_MAX),
                })
            })
            .collect()
    }

    pub fn encode(&self, image: &Image1D<f64>) -> Result<EncoderOutput> {
        let x = Tensor::row(image.pixels().to_vec());
        Ok(self.encode_batch(&x)?[0])
    }

    fn decode_logits(&self, emb: &IrrepEmbedding) -> Result<Tensor<f64>> {
        if emb.k != self.k {
            return Err(Error::invalid(format!("embedding has K={}, model has K={}", emb.k, self.k)));
        }
        let z = Tensor::row(emb.apply(self.content.data()));
        let logits = self.decoder.eval(&z)?;
        if !logits.is_finite() {
            return Err(Error::Numeric { index: 0 });
        }
        Ok(logits)
    }

    pub fn decode(&self, emb: &IrrepEmbedding) -> Result<Image1D<f64>> {
        let logits = self.decode_logits(emb)?;
        Image1D::new(logits.data().iter().map(|&z| sigmoid(z)).collect(), self.domain_radius)
    }

    /// Per-image objective: summed pixel BCE against the reconstruction at
    /// `theta_sample`, plus `beta·KL(log_var)`.
    pub fn loss(&self, image: &Image1D<f64>, theta_sample: f64, log_var: f64) -> Result<f64> {
        self.check_width(image.width())?;
        check_pixels(image.pixels())?;
        let logits = self.decode_logits(&irrep_matrix(theta_sample, self.k)?)?;
        let bce: f64 = logits
            .data()
            .iter()
            .zip(image.pixels())
            .map(|(&z, &x)| z.max(0.0) - z * x + (-z.abs()).exp().ln_1p())
            .sum();
        Ok(bce + self.config.beta * kl_term(log_var.clamp(LOG_VAR_MIN, LOG_VAR_MAX)))
    }

    /// Loss of one image through the full sampling path with fixed `epsilon`,
    /// and its derivatives with respect to the posterior mean and log-variance.
    pub fn posterior_gradient(&self, image: &Image1D<f64>, mu: f64, log_var: f64, epsilon: f64) -> Result<(f64, f64, f64)> {
        self.check_width(image.width())?;
        check_pixels(image.pixels())?;
        let mut tape = Tape::new();
        let dec = self.decoder.bind(&mut tape);
        let c = tape.leaf(self.content.clone());
        let x = tape.leaf(Tensor::row(image.pixels().to_vec()));
        let m = tape.leaf(Tensor::scalar(mu));
        let lv = tape.leaf(Tensor::scalar(log_var));
        let eps = tape.leaf(Tensor::scalar(epsilon));
        let g = self.sample_loss(&mut tape, &dec, c, x, m, lv, eps)?;
        tape.backward(g.loss)?;
        Ok((tape.value(g.loss).data()[0], tape.grad(m).data()[0], tape.grad(lv).data()[0]))
    }

    #[allow(clippy::too_many_arguments)]
    fn sample_loss(&self, tape: &mut Tape<f64>, dec: &[Var], c: Var, x: Var, mu: Var, lv: Var, eps: Var) -> Result<Graph> {
        let batch = tape.shape(x)[0] as f64;
        let half = tape.scale(lv, 0.5);
        let sd = tape.exp(half);
        let noise = tape.mul(sd, eps)?;
        let theta = tape.add(mu, noise)?;
        let z = tape.irrep_rotate(theta, c, self.k)?;
        let logits = self.decoder.forward(tape, dec, z)?;
        let bce = tape.bce_with_logits(logits, x)?;
        let bce = tape.sum(bce);
        let kl = tape.scale(lv, -0.5);
        let kl = tape.add_scalar(kl, kl_offset());
        let kl = tape.relu(kl);
        let kl = tape.sum(kl);
        let kl = tape.scale(kl, self.config.beta);
        let total = tape.add(bce, kl)?;
        let loss = tape.scale(total, 1.0 / batch);
        Ok(Graph { loss, bce })
    }

    /// Build the batch objective on `tape`. Returns the graph and the bound
    /// parameter nodes (encoder, decoder, content).
    fn batch_graph(&self, tape: &mut Tape<f64>, images: Tensor<f64>, eps: Tensor<f64>) -> Result<(Graph, Vec<Var>)> {
        let enc = self.encoder.bind(tape);
        let dec = self.decoder.bind(tape);
        let c = tape.leaf(self.content.clone());
        let x = tape.leaf(images);
        let e = tape.leaf(eps);
        let h = self.encoder.forward(tape, &enc, x)?;
        let u1 = tape.slice_cols(h, 0, 1)?;
        let u2 = tape.slice_cols(h, 1, 1)?;
        let raw = tape.slice_cols(h, 2, 1)?;
        let lv = tape.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
        let mu = tape.atan2(u2, u1)?;
        let g = self.sample_loss(tape, &dec, c, x, mu, lv, e)?;
        let mut params = enc;
        params.extend(dec);
        params.push(c);
        Ok((g, params))
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p.push(&mut self.content);
        p
    }

    fn param_shapes(&self) -> Vec<[usize; 2]> {
        let mut s: Vec<_> = self.encoder.params().iter().map(|p| p.shape()).collect();
        s.extend(self.decoder.params().iter().map(|p| p.shape()));
        s.push(self.content.shape());
        s
    }

    /// Mean loss and mean summed BCE over `indices` with zero sampling noise.
    pub fn evaluate(&self, d: &Dataset, indices: &[usize]) -> Result<EvalLoss> {
        if indices.is_empty() {
            return Err(Error::InsufficientData { need: 1, got: 0 });
        }
        self.check_width(d.width())?;
        let mut loss = 0.0;
        let mut bce = 0.0;
        for chunk in indices.chunks(256) {
            let mut tape = Tape::new();
            let (g, _) = self.batch_graph(&mut tape, batch_tensor(d, chunk), Tensor::zeros(chunk.len(), 1))?;
            let n = chunk.len() as f64;
            loss += tape.value(g.loss).data()[0] * n;
            bce += tape.value(g.bce).data()[0];
        }
        let n = indices.len() as f64;
        Ok(EvalLoss {
            loss: loss / n,
            bce: bce / n,
        })
    }

    pub fn to_text(&self) -> String {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let cfg = &self.config;
        kv.insert("batch".into(), cfg.batch.to_string());
        kv.insert("beta".into(), fmt_num(cfg.beta));
        kv.insert("content".into(), tensor_text(&self.content));
        kv.insert("domain_radius".into(), fmt_num(self.domain_radius));
        kv.insert("epochs".into(), cfg.epochs.to_string());
        kv.insert("k".into(), self.k.to_string());
        kv.insert("lr".into(), fmt_num(cfg.lr));
        kv.insert("restarts".into(), cfg.restarts.to_string());
        kv.insert("seed".into(), cfg.seed.to_string());
        kv.insert("restart_seed".into(), self.seed.to_string());
        for (name, mlp) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            kv.insert(format!("{name}.layers"), mlp.layers().len().to_string());
            for (i, l) in mlp.layers().iter().enumerate() {
                kv.insert(format!("{name}.{i}.activation"), l.activation.name().into());
                kv.insert(format!("{name}.{i}.bias"), tensor_text(&l.bias));
                kv.insert(format!("{name}.{i}.weight"), tensor_text(&l.weight));
            }
        }
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse_text(text: &str, origin: &Path) -> Result<Self> {
        let mut kv: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut last = 0;
        for (i, line) in text.lines().enumerate() {
            last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected key=value"))?;
            kv.insert(k, (i + 1, v));
        }
        let get = |key: &str| {
            kv.get(key)
                .copied()
                .ok_or_else(|| Error::parse(origin, last, format!("missing key `{key}`")))
        };
        fn num<V: std::str::FromStr>(origin: &Path, key: &str, (line, raw): (usize, &str)) -> Result<V>
        where
            V::Err: std::fmt::Display,
        {
            raw.trim()
                .parse()
                .map_err(|e| Error::parse(origin, line, format!("bad value for `{key}`: {e}")))
        }
        let tensor = |key: &str| -> Result<Tensor<f64>> {
            let (line, raw) = get(key)?;
            parse_tensor(raw).map_err(|msg| Error::parse(origin, line, format!("`{key}`: {msg}")))
        };
        let mlp = |name: &str| -> Result<Mlp<f64>> {
            let key = format!("{name}.layers");
            let n: usize = num(origin, &key, get(&key)?)?;
            let mut layers = Vec::with_capacity(n);
            for i in 0..n {
                let akey = format!("{name}.{i}.activation");
                let (line, raw) = get(&akey)?;
                let activation = Activation::from_name(raw.trim())
                    .ok_or_else(|| Error::parse(origin, line, format!("unknown activation `{raw}`")))?;
                layers.push(Layer {
                    weight: tensor(&format!("{name}.{i}.weight"))?,
                    bias: tensor(&format!("{name}.{i}.bias"))?,
                    activation,
                });
            }
            Mlp::from_layers(layers).map_err(|e| Error::parse(origin, last, e.to_string()))
        };
        let encoder = mlp("encoder")?;
        let decoder = mlp("decoder")?;
        let content = tensor("content")?;
        let k: usize = num(origin, "k", get("k")?)?;
        if k == 0 || content.shape() != [1, 2 * k] || decoder.input_width() != 2 * k || encoder.output_width() != 3 {
            return Err(Error::parse(origin, last, "inconsistent model shapes"));
        }
        let widths = |m: &Mlp<f64>| {
            let w = m.widths();
            w[1..w.len() - 1].to_vec()
        };
        let config = VaeConfig {
            k,
            encoder_hidden: widths(&encoder),
            decoder_hidden: widths(&decoder),
            lr: num(origin, "lr", get("lr")?)?,
            batch: num(origin, "batch", get("batch")?)?,
            epochs: num(origin, "epochs", get("epochs")?)?,
            restarts: num(origin, "restarts", get("restarts")?)?,
            seed: num(origin, "seed", get("seed")?)?,
            beta: num(origin, "beta", get("beta")?)?,
        };
        Ok(Self {
            encoder,
            decoder,
            content,
            k,
            domain_radius: num(origin, "domain_radius", get("domain_radius")?)?,
            config,
            seed: num(origin, "restart_seed", get("restart_seed")?)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_text(&std::fs::read_to_string(path)?, path)
    }
}

fn check_pixels(pixels: &[f64]) -> Result<()> {
    if let Some((j, p)) = pixels.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("pixel {j} = {p} outside [0, 1]")));
    }
    Ok(())
}

fn tensor_text(t: &Tensor<f64>) -> String {
    let mut s = format!("{}x{}", t.rows(), t.cols());
    for &x in t.data() {
        s.push(' ');
        s.push_str(&fmt_num(x));
    }
    s
}

fn parse_tensor(raw: &str) -> std::result::Result<Tensor<f64>, String> {
    let mut toks = raw.split_whitespace();
    let shape = toks.next().ok_or("empty tensor")?;
    let (r, c) = shape.split_once('x').ok_or("missing shape")?;
    let r: usize = r.parse().map_err(|e| format!("bad rows: {e}"))?;
    let c: usize = c.parse().map_err(|e| format!("bad cols: {e}"))?;
    let data = toks
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| format!("bad number: {e}"))?;
    Tensor::new(r, c, data).map_err(|e| e.to_string())
}

fn batch_tensor(d: &Dataset, indices: &[usize]) -> Tensor<f64> {
    let w = d.width();
    let mut data = Vec::with_capacity(indices.len() * w);
    for &i in indices {
        data.extend_from_slice(d.samples[i].image.pixels());
    }
    Tensor::new(indices.len(), w, data).expect("sized")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalLoss {
    pub loss: f64,
    pub bce: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_bce: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartHistory {
    pub restart: usize,
    pub seed: u64,
    /// Validation losses of the freshly initialized model.
    pub initial: EvalLoss,
    pub epochs: Vec<EpochRecord>,
    /// Optimizer step at which a non-finite value appeared.
    pub diverged_at: Option<usize>,
}

impl RestartHistory {
    pub fn final_val_loss(&self) -> Option<f64> {
        if self.diverged_at.is_some() {
            return None;
        }
        Some(self.epochs.last().map_or(self.initial.loss, |e| e.val_loss))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: VaeModel,
    pub selected: usize,
    pub history: Vec<RestartHistory>,
}

impl TrainOutcome {
    /// CSV of every epoch of every restart.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("restart,epoch,train_loss,val_loss,val_bce\n");
        for h in &self.history {
            let _ = writeln!(
                s,
                "{},0,,{},{}",
                h.restart,
                fmt_num(h.initial.loss),
                fmt_num(h.initial.bce)
            );
            for e in &h.epochs {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    h.restart,
                    e.epoch,
                    fmt_num(e.train_loss),
                    fmt_num(e.val_loss),
                    fmt_num(e.val_bce)
                );
            }
        }
        s
    }
}

/// Restart seeds derive from the base seed; restart `r` uses stream `r`.
pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(restart as u64)
}

fn train_one(d: &Dataset, cfg: &VaeConfig, restart: usize) -> Result<(VaeModel, RestartHistory)> {
    let seed = restart_seed(cfg.seed, restart);
    let mut model = VaeModel::new(d.width(), d.raster.domain_radius, cfg, seed)?;
    let train = d.indices(Split::Train);
    let val = d.indices(Split::Validation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, &model.param_shapes());
    let mut history = RestartHistory {
        restart,
        seed,
        initial: model.evaluate(d, &val)?,
        epochs: Vec::with_capacity(cfg.epochs),
        diverged_at: None,
    };
    let mut order = train.clone();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let eps = Tensor::column(
                (0..chunk.len())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
            let mut tape = Tape::new();
            let (g, params) = model.batch_graph(&mut tape, batch_tensor(d, chunk), eps)?;
            let loss = tape.value(g.loss).data()[0];
            if !loss.is_finite() {
                history.diverged_at = Some(adam.steps_taken());
                break 'epochs;
            }
            total += loss * chunk.len() as f64;
            tape.backward(g.loss)?;
            let grads: Vec<_> = params.iter().map(|&p| tape.grad(p)).collect();
            match adam.step(&mut model.params_mut(), &grads) {
                Ok(()) => {}
                Err(Error::Divergence { step }) => {
                    history.diverged_at = Some(step);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let v = model.evaluate(d, &val)?;
        if !v.loss.is_finite() {
            history.diverged_at = Some(adam.steps_taken());
            break;
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: v.loss,
            val_bce: v.bce,
        });
    }
    Ok((model, history))
}

/// Train `cfg.restarts` independently seeded models and keep the one with
/// the lowest final validation loss (ties go to the earlier restart).
pub fn train(d: &Dataset, cfg: &VaeConfig) -> Result<TrainOutcome> {
    if cfg.restarts == 0 || cfg.batch == 0 {
        return Err(Error::invalid("restarts and batch size must be positive"));
    }
    if !(cfg.lr > 0.0) || !(cfg.beta >= 0.0) {
        return Err(Error::invalid("learning rate must be positive and beta non-negative"));
    }
    let val = d.indices(Split::Validation).len();
    if val == 0 {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let mut best: Option<(f64, usize, VaeModel)> = None;
    let mut history = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let (model, h) = train_one(d, cfg, r)?;
        if let Some(v) = h.final_val_loss() {
            if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                best = Some((v, r, model));
            }
        }
        history.push(h);
    }
    let (_, selected, model) = best.ok_or(Error::TrainingFailure {
        restarts: cfg.restarts,
    })?;
    Ok(TrainOutcome {
        model,
        selected,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchEntry {
    pub depth: usize,
    pub width: usize,
    pub val_loss: f64,
}

/// Architecture search over depths {2, 3} and widths {64, 128} for both
/// networks, keeping the best validation loss.
pub fn hyperparameter_search(d: &Dataset, base: &VaeConfig) -> Result<(TrainOutcome, Vec<SearchEntry>)> {
    let mut best: Option<(f64, TrainOutcome)> = None;
    let mut table = Vec::new();
    for depth in [2, 3] {
        for width in [64, 128] {
            let cfg = VaeConfig {
                encoder_hidden: vec![width; depth],
                decoder_hidden: vec![width; depth],
                ..base.clone()
            };
            let out = match train(d, &cfg) {
                Ok(o) => o,
                Err(Error::TrainingFailure { .. }) => continue,
                Err(e) => return Err(e),
            };
            let v = out.history[out.selected].final_val_loss().unwrap_or(f64::INFINITY);
            table.push(SearchEntry {
                depth,
                width,
                val_loss: v,
            });
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, out));
            }
        }
    }
    let (_, out) = best.ok_or(Error::TrainingFailure { restarts: 0 })?;
    Ok((out, table))
}
