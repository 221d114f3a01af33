//! Pose-inference quality: global alignment up to offset and reflection,
//! detection of two-to-one ("V-shaped") estimates, and plot data.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::compatibility::CoincidencePair;
use crate::dataset::{render_pose, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{fmt_num, PointVolume, RasterSettings};
use crate::scalar::{canonical_angle, wrap_angle};
use crate::vae::VaeModel;

pub const DEFAULT_MAX_ERROR_DEG: f64 = 15.0;
pub const DEFAULT_FOLD_GRID: usize = 360;
pub const MIN_FOLD_PAIRS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePair {
    pub theta_true: f64,
    pub theta_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRow {
    pub theta_true: f64,
    pub theta_est: f64,
    /// `wrap(theta_est − g·theta_true − c)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseReport {
    /// Reflection class, `+1` or `−1`.
    pub g: i8,
    /// Global offset in `(−π, π]`.
    pub c: f64,
    pub median_error: f64,
    pub mean_error: f64,
    pub fold_score: Option<f64>,
    pub rows: Vec<PoseRow>,
}

impl PoseReport {
    pub fn passed(&self, max_error_deg: f64) -> bool {
        self.median_error <= max_error_deg.to_radians()
    }

    /// Estimates mapped back into the frame of the true poses, unwrapped
    /// around them: `θ + g·residual`.
    pub fn aligned_estimates(&self) -> Vec<f64> {
        let g = f64::from(self.g);
        self.rows.iter().map(|r| r.theta_true + g * r.residual).collect()
    }

    /// Spearman rank correlation between true poses and aligned estimates.
    pub fn latent_spearman(&self) -> f64 {
        let t: Vec<f64> = self.rows.iter().map(|r| r.theta_true).collect();
        spearman(&t, &self.aligned_estimates())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples={}", self.rows.len());
        let _ = writeln!(s, "g={}", self.g);
        let _ = writeln!(s, "c={}", fmt_num(self.c));
        let _ = writeln!(s, "median_error_deg={}", fmt_num(self.median_error.to_degrees()));
        let _ = writeln!(s, "mean_error_deg={}", fmt_num(self.mean_error.to_degrees()));
        match self.fold_score {
            Some(f) => {
                let _ = writeln!(s, "fold_score_deg={}", fmt_num(f.to_degrees()));
            }
            None => s.push_str("fold_score_deg=na\n"),
        }
        let _ = writeln!(s, "latent_spearman={}", fmt_num(self.latent_spearman()));
        s
    }
}

/// `theta_est = encode(image).mu` for every sample, in dataset order.
pub fn infer_poses(model: &VaeModel, d: &Dataset) -> Result<Vec<PosePair>> {
    if model.width() != d.width() {
        return Err(Error::invalid(format!(
            "model expects width {}, dataset has width {}",
            model.width(),
            d.width()
        )));
    }
    let mut out = Vec::with_capacity(d.len());
    for (start, chunk) in (0..d.len()).step_by(256).zip(d.samples.chunks(256)) {
        let data = chunk.iter().flat_map(|s| s.image.pixels().iter().copied()).collect();
        let x = Tensor::new(chunk.len(), d.width(), data)?;
        let enc = model.encode_batch(&x).map_err(|e| match e {
            Error::Numeric { index } => Error::Numeric { index: start + index },
            e => e,
        })?;
        out.extend(chunk.iter().zip(enc).map(|(s, e)| PosePair {
            theta_true: s.theta_true,
            theta_est: e.mu,
        }));
    }
    Ok(out)
}

fn circular_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0.0), |(s, c), v| (s + v.sin(), c + v.cos()));
    s.atan2(c)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit `theta_est ≈ s·x + c` on the circle: `c` is the circular mean of the
/// offsets; returns `(c, median |residual|)`.
fn circular_fit(pairs: &[(f64, f64)], s: f64) -> (f64, f64) {
    let c = circular_mean(pairs.iter().map(|&(x, y)| y - s * x));
    let err = median(pairs.iter().map(|&(x, y)| wrap_angle(y - s * x - c).abs()).collect());
    (c, err)
}

pub fn align_poses(pairs: &[PosePair]) -> Result<PoseReport> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            need: 2,
            got: pairs.len(),
        });
    }
    let xy: Vec<(f64, f64)> = pairs.iter().map(|p| (p.theta_true, p.theta_est)).collect();
    let (g, c, median_error) = [1i8, -1]
        .into_iter()
        .map(|g| {
            let (c, e) = circular_fit(&xy, f64::from(g));
            (g, c, e)
        })
        .fold(None, |best: Option<(i8, f64, f64)>, cand| match best {
            Some(b) if b.2 <= cand.2 => Some(b),
            _ => Some(cand),
        })
        .expect("two candidates");
    let gf = f64::from(g);
    let rows: Vec<PoseRow> = pairs
        .iter()
        .map(|p| PoseRow {
            theta_true: p.theta_true,
            theta_est: p.theta_est,
            residual: wrap_angle(p.theta_est - gf * p.theta_true - c),
        })
        .collect();
    let mean_error = rows.iter().map(|r| r.residual.abs()).sum::<f64>() / rows.len() as f64;
    Ok(PoseReport {
        g,
        c,
        median_error,
        mean_error,
        fold_score: None,
        rows,
    })
}

/// Best median error of a folded model `theta_est ≈ s·|wrap(theta_true − a)| + c`
/// over `grid_size` fold axes `a`. The sign of the fitted slope `s` plays the
/// role of the reflection class.
fn best_folded_error(pairs: &[(f64, f64)], grid_size: usize) -> f64 {
    let mut best = f64::INFINITY;
    let mut folded = vec![(0.0, 0.0); pairs.len()];
    for i in 0..grid_size {
        let a = TAU * i as f64 / grid_size as f64;
        for (f, &(x, y)) in folded.iter_mut().zip(pairs) {
            *f = (wrap_angle(x - a).abs(), y);
        }
        for s0 in [0.0, 1.0, -1.0, 2.0, -2.0] {
            let (mut s, mut fit) = (s0, circular_fit(&folded, s0));
            // Least-squares slope refinement on residuals unwrapped around the current fit.
            for _ in 0..2 {
                let n = folded.len() as f64;
                let ys: Vec<f64> = folded
                    .iter()
                    .map(|&(f, y)| s * f + fit.0 + wrap_angle(y - s * f - fit.0))
                    .collect();
                let mf = folded.iter().map(|p| p.0).sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let sxx: f64 = folded.iter().map(|p| (p.0 - mf).powi(2)).sum();
                if sxx == 0.0 {
                    break;
                }
                let sxy: f64 = folded.iter().zip(&ys).map(|(p, y)| (p.0 - mf) * (y - my)).sum();
                let cand = sxy / sxx;
                let cand_fit = circular_fit(&folded, cand);
                if cand_fit.1 >= fit.1 {
                    break;
                }
                s = cand;
                fit = cand_fit;
            }
            best = best.min(fit.1);
        }
    }
    best
}

/// Margin by which a folded (two-to-one) model explains the estimates better
/// than the best one-to-one circular-affine model (slopes +1, −1, or the
/// degenerate constant). Positive means V-shaped estimates.
pub fn fold_score(pairs: &[PosePair], grid_size: usize) -> Result<f64> {
    if pairs.len() < MIN_FOLD_PAIRS {
        return Err(Error::InsufficientData {
            need: MIN_FOLD_PAIRS,
            got: pairs.len(),
        });
    }
    if grid_size == 0 {
        return Err(Error::invalid("fold-axis grid must be non-empty"));
    }
    let xy: Vec<(f64, f64)> = pairs.iter().map(|p| (p.theta_true, p.theta_est)).collect();
    let one_to_one = [1.0, -1.0, 0.0]
        .into_iter()
        .map(|s| circular_fit(&xy, s).1)
        .fold(f64::INFINITY, f64::min);
    Ok(one_to_one - best_folded_error(&xy, grid_size))
}

/// Alignment plus fold score (when there are enough pairs).
pub fn pose_report(pairs: &[PosePair], fold_grid: usize) -> Result<PoseReport> {
    let mut report = align_poses(pairs)?;
    if pairs.len() >= MIN_FOLD_PAIRS {
        report.fold_score = Some(fold_score(pairs, fold_grid)?);
    }
    Ok(report)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties). NaN when either side
/// is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    sxy / (sxx * syy).sqrt()
}

/// Largest estimate disagreement over images rendered at coincident poses.
/// Any deterministic encoder gives (numerically) zero.
pub fn coincidence_collapse(
    model: &VaeModel,
    v: &PointVolume<f64>,
    raster: &RasterSettings<f64>,
    pairs: &[CoincidencePair],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in pairs {
        let a = model.encode(&render_pose(v, p.theta1, raster)?)?;
        let b = model.encode(&render_pose(v, p.theta2, raster)?)?;
        worst = worst.max(wrap_angle(a.mu - b.mu).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub latent_csv: PathBuf,
    pub poses_csv: PathBuf,
    pub latent_svg: PathBuf,
    pub poses_svg: PathBuf,
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Latent-circle and true-vs-estimated scatter data as CSV and SVG.
pub fn emit_plots(report: &PoseReport, out_stem: &Path) -> Result<PlotFiles> {
    let files = PlotFiles {
        latent_csv: with_suffix(out_stem, "_latent.csv"),
        poses_csv: with_suffix(out_stem, "_poses.csv"),
        latent_svg: with_suffix(out_stem, "_latent.svg"),
        poses_svg: with_suffix(out_stem, "_poses.svg"),
    };
    let mut latent = String::from("cos_est,sin_est,theta_true\n");
    let mut poses = String::from("theta_true,theta_est,aligned_est,residual\n");
    let aligned = report.aligned_estimates();
    for (r, a) in report.rows.iter().zip(&aligned) {
        let _ = writeln!(
            latent,
            "{},{},{}",
            fmt_num(r.theta_est.cos()),
            fmt_num(r.theta_est.sin()),
            fmt_num(r.theta_true)
        );
        let _ = writeln!(
            poses,
            "{},{},{},{}",
            fmt_num(r.theta_true),
            fmt_num(r.theta_est),
            fmt_num(*a),
            fmt_num(r.residual)
        );
    }
    std::fs::write(&files.latent_csv, latent)?;
    std::fs::write(&files.poses_csv, poses)?;
    std::fs::write(&files.latent_svg, latent_svg(report))?;
    std::fs::write(&files.poses_svg, poses_svg(report))?;
    Ok(files)
}

/// Hue for an angle, used to colour points by true pose.
fn hue(theta: f64) -> String {
    format!("hsl({:.0},70%,45%)", canonical_angle(theta).to_degrees())
}

fn latent_svg(report: &PoseReport) -> String {
    let mut s = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"320\" height=\"320\" viewBox=\"-1.2 -1.2 2.4 2.4\">\n\
         <circle cx=\"0\" cy=\"0\" r=\"1\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.005\"/>\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.5}\" cy=\"{:.5}\" r=\"0.02\" fill=\"{}\"/>",
            r.theta_est.cos(),
            -r.theta_est.sin(),
            hue(r.theta_true)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn poses_svg(report: &PoseReport) -> String {
    let size = 320.0;
    let scale = size / TAU;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\">\n\
         <rect width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#999\"/>\n"
    );
    for r in &report.rows {
        let x = canonical_angle(r.theta_true) * scale;
        let y = size - canonical_angle(r.theta_est) * scale;
        let _ = writeln!(s, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"1.5\" fill=\"{}\"/>", hue(r.theta_true));
    }
    let _ = writeln!(
        s,
        "<text x=\"4\" y=\"14\" font-size=\"11\">median error {:.1} deg, g={}</text>",
        report.median_error.to_degrees(),
        report.g
    );
    s.push_str("</svg>\n");
    s
}
