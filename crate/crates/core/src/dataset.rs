//! Synthetic (pose, image) pairs from a rotated planar volume.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{fmt_num, project_rotated, Image1D, PointVolume, RasterSettings, Rotation};

pub const DEFAULT_COUNT: usize = 2000;
pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub theta_true: f64,
    pub image: Image1D<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub count: usize,
    pub width: usize,
    /// `None` uses 5% of the volume's domain radius.
    pub splat_sigma: Option<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: DEFAULT_COUNT,
            width: DEFAULT_WIDTH,
            splat_sigma: None,
            noise_sigma: 0.0,
            seed: 1,
            val_fraction: DEFAULT_VAL_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub volume: PointVolume<f64>,
    pub samples: Vec<PoseSample>,
    pub raster: RasterSettings<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn width(&self) -> usize {
        self.raster.width
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.theta_true).collect()
    }
}

fn validation_count(count: usize, val_fraction: f64) -> usize {
    (count as f64 * val_fraction).ceil() as usize
}

fn split_tags(count: usize, val_fraction: f64) -> Vec<Split> {
    let train = count - validation_count(count, val_fraction);
    (0..count)
        .map(|i| if i < train { Split::Train } else { Split::Validation })
        .collect()
}

/// Noise-free image of `v` seen at pose `theta`.
pub fn render_pose(v: &PointVolume<f64>, theta: f64, raster: &RasterSettings<f64>) -> Result<Image1D<f64>> {
    let r = Rotation::from_angle(theta)?;
    raster.render(&project_rotated(&r, v)?)
}

pub fn generate_dataset(v: &PointVolume<f64>, cfg: &DatasetConfig) -> Result<Dataset> {
    if v.dim() != 2 {
        return Err(Error::UnsupportedDimension(v.dim()));
    }
    if cfg.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::invalid(format!("validation fraction {} not in [0, 1)", cfg.val_fraction)));
    }
    if validation_count(cfg.count, cfg.val_fraction) == cfg.count {
        return Err(Error::invalid("validation split leaves no training samples"));
    }
    if !(cfg.noise_sigma >= 0.0) || !cfg.noise_sigma.is_finite() {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let raster = RasterSettings {
        width: cfg.width,
        splat_sigma: cfg.splat_sigma.unwrap_or(0.05 * v.domain_radius()),
        domain_radius: v.domain_radius(),
    };
    let mut pose_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("valid sigma"));
    let mut samples = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let theta = pose_rng.gen_range(0.0..std::f64::consts::TAU);
        let mut image = render_pose(v, theta, &raster)?;
        if let Some(n) = &noise {
            let pixels = image
                .into_pixels()
                .into_iter()
                .map(|p| (p + n.sample(&mut noise_rng)).clamp(0.0, 1.0))
                .collect();
            image = Image1D::new(pixels, raster.domain_radius)?;
        }
        samples.push(PoseSample { theta_true: theta, image });
    }
    Ok(Dataset {
        volume: v.clone(),
        samples,
        raster,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
        val_fraction: cfg.val_fraction,
        split: split_tags(cfg.count, cfg.val_fraction),
    })
}

/// Sidecar path: same stem, `.meta` suffix.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

/// Writes the CSV at `path` and the metadata sidecar next to it.
pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let mut csv = String::from("theta");
    for j in 0..d.width() {
        let _ = write!(csv, ",x{j}");
    }
    csv.push('\n');
    for s in &d.samples {
        csv.push_str(&fmt_num(s.theta_true));
        for &p in s.image.pixels() {
            csv.push(',');
            csv.push_str(&fmt_num(p));
        }
        csv.push('\n');
    }
    std::fs::write(path, csv)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "count={}", d.len());
    let _ = writeln!(meta, "seed={}", d.seed);
    let _ = writeln!(meta, "width={}", d.width());
    let _ = writeln!(meta, "splat_sigma={}", fmt_num(d.raster.splat_sigma));
    let _ = writeln!(meta, "noise_sigma={}", fmt_num(d.noise_sigma));
    let _ = writeln!(meta, "domain_radius={}", fmt_num(d.raster.domain_radius));
    let _ = writeln!(meta, "val_fraction={}", fmt_num(d.val_fraction));
    meta.push_str("volume:\n");
    meta.push_str(&d.volume.to_text());
    std::fs::write(meta_path(path), meta)?;
    Ok(())
}

struct Meta {
    count: usize,
    seed: u64,
    width: usize,
    splat_sigma: f64,
    noise_sigma: f64,
    domain_radius: f64,
    val_fraction: f64,
    volume: PointVolume<f64>,
}

fn parse_meta(text: &str, path: &Path) -> Result<Meta> {
    let mut fields = std::collections::BTreeMap::new();
    let mut volume = None;
    let mut last = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        last = lineno;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "volume:" {
            let rest: String = text.lines().skip(lineno).map(|l| format!("{l}\n")).collect();
            volume = Some(PointVolume::parse_text(&rest, path, lineno)?);
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, lineno, format!("expected key=value, found `{line}`")))?;
        fields.insert(k.trim().to_string(), (lineno, v.trim().to_string()));
    }
    let volume = volume.ok_or_else(|| Error::parse(path, last, "missing `volume:` section"))?;
    fn get<V: std::str::FromStr>(
        fields: &std::collections::BTreeMap<String, (usize, String)>,
        key: &str,
        path: &Path,
        last: usize,
    ) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        let (line, raw) = fields
            .get(key)
            .ok_or_else(|| Error::parse(path, last, format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|e| Error::parse(path, *line, format!("bad value for `{key}`: {e}")))
    }
    Ok(Meta {
        count: get(&fields, "count", path, last)?,
        seed: get(&fields, "seed", path, last)?,
        width: get(&fields, "width", path, last)?,
        splat_sigma: get(&fields, "splat_sigma", path, last)?,
        noise_sigma: get(&fields, "noise_sigma", path, last)?,
        domain_radius: get(&fields, "domain_radius", path, last)?,
        val_fraction: get(&fields, "val_fraction", path, last)?,
        volume,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mpath = meta_path(path);
    let meta = parse_meta(&std::fs::read_to_string(&mpath)?, &mpath)?;
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty dataset file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() != meta.width + 1 || cols[0] != "theta" {
        return Err(Error::parse(path, 1, format!("expected header `theta,x0..x{}`", meta.width.saturating_sub(1))));
    }
    let mut samples = Vec::with_capacity(meta.count);
    let mut last = 1;
    for (lineno, line) in lines {
        last = lineno;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, lineno, format!("bad number: {e}")))?;
        if vals.len() != meta.width + 1 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} values, found {}", meta.width + 1, vals.len()),
            ));
        }
        let image = Image1D::new(vals[1..].to_vec(), meta.domain_radius).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        samples.push(PoseSample { theta_true: vals[0], image });
    }
    if samples.len() != meta.count {
        return Err(Error::parse(
            path,
            last,
            format!("expected {} samples, found {}", meta.count, samples.len()),
        ));
    }
    Ok(Dataset {
        volume: meta.volume,
        samples,
        raster: RasterSettings {
            width: meta.width,
            splat_sigma: meta.splat_sigma,
            domain_radius: meta.domain_radius,
        },
        noise_sigma: meta.noise_sigma,
        seed: meta.seed,
        val_fraction: meta.val_fraction,
        split: split_tags(meta.count, meta.val_fraction),
    })
}
