//! Rotations, point-mass volumes, axis projection and rasterization.
//!
//! A volume is a finite sum of weighted Dirac masses inside a ball of radius
//! `domain_radius`. Rotating a volume carries every mass forward by the
//! rotation matrix, so `R·V(x) = V(R⁻¹x)` holds for the induced density.
//! Projection integrates along the last coordinate axis, which for point
//! masses amounts to dropping that coordinate.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{canonical_angle, Real};

/// Slack allowed when checking that rotated points stay inside the domain.
const DOMAIN_SLACK: f64 = 1e-9;

/// An element of SO(d), stored as a row-major `d×d` matrix.
///
/// For `d = 2` the canonical angle in `[0, 2π)` is kept alongside the matrix
/// and the matrix is always rebuilt from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation<T> {
    dim: usize,
    matrix: Vec<T>,
    angle: Option<T>,
}

impl<T: Real> Rotation<T> {
    pub fn identity(dim: usize) -> Self {
        if dim == 2 {
            return Self::planar(T::zero());
        }
        let mut matrix = vec![T::zero(); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = T::one();
        }
        Self {
            dim,
            matrix,
            angle: None,
        }
    }

    /// Planar rotation by `theta` radians (counter-clockwise).
    pub fn from_angle(theta: T) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::invalid(format!("rotation angle {theta} is not finite")));
        }
        Ok(Self::planar(canonical_angle(theta)))
    }

    fn planar(theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            dim: 2,
            matrix: vec![c, -s, s, c],
            angle: Some(theta),
        }
    }

    /// Rotation by `theta` in the `(i, j)` coordinate plane of R^d.
    pub fn plane(dim: usize, i: usize, j: usize, theta: T) -> Result<Self> {
        if dim < 2 || i >= dim || j >= dim || i == j {
            return Err(Error::invalid(format!(
                "plane ({i}, {j}) is not a coordinate plane of R^{dim}"
            )));
        }
        if dim == 2 {
            let theta = if i < j { theta } else { -theta };
            return Self::from_angle(theta);
        }
        if !theta.is_finite() {
            return Err(Error::invalid("rotation angle is not finite"));
        }
        let mut r = Self::identity(dim);
        let (s, c) = theta.sin_cos();
        r.matrix[i * dim + i] = c;
        r.matrix[j * dim + j] = c;
        r.matrix[i * dim + j] = -s;
        r.matrix[j * dim + i] = s;
        Ok(r)
    }

    /// Validates orthonormality and unit determinant to within `tol`.
    pub fn from_matrix(dim: usize, matrix: Vec<T>, tol: T) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("rotations need d >= 2"));
        }
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: matrix.len(),
            });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        for a in 0..dim {
            for b in 0..dim {
                let dot: T = (0..dim)
                    .map(|k| matrix[k * dim + a] * matrix[k * dim + b])
                    .sum();
                let target = if a == b { T::one() } else { T::zero() };
                if (dot - target).abs() > tol {
                    return Err(Error::invalid("matrix is not orthonormal"));
                }
            }
        }
        let det = determinant(dim, &matrix);
        if (det - T::one()).abs() > tol {
            return Err(Error::invalid(format!("determinant {det} is not +1")));
        }
        if dim == 2 {
            return Ok(Self::planar(canonical_angle(matrix[2].atan2(matrix[0]))));
        }
        Ok(Self {
            dim,
            matrix,
            angle: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    /// Canonical angle for planar rotations.
    pub fn angle(&self) -> Option<T> {
        self.angle
    }

    pub fn entry(&self, row: usize, col: usize) -> T {
        self.matrix[row * self.dim + col]
    }

    pub fn determinant(&self) -> T {
        determinant(self.dim, &self.matrix)
    }

    pub fn inverse(&self) -> Self {
        if let Some(theta) = self.angle {
            return Self::planar(canonical_angle(-theta));
        }
        let d = self.dim;
        let mut matrix = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[j * d + i] = self.matrix[i * d + j];
            }
        }
        Self {
            dim: d,
            matrix,
            angle: None,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if let (Some(a), Some(b)) = (self.angle, other.angle) {
            return Ok(Self::planar(canonical_angle(a + b)));
        }
        let d = self.dim;
        let mut matrix = vec![T::zero(); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.matrix[i * d + k];
                for j in 0..d {
                    matrix[i * d + j] = matrix[i * d + j] + a * other.matrix[k * d + j];
                }
            }
        }
        Ok(Self {
            dim: d,
            matrix,
            angle: None,
        })
    }

    /// Rotate a single point.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        (0..d)
            .map(|i| {
                let row = &self.matrix[i * d..(i + 1) * d];
                row.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }
}

fn determinant<T: Real>(dim: usize, matrix: &[T]) -> T {
    let mut a = matrix.to_vec();
    let mut det = T::one();
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&p, &q| {
                a[p * dim + col]
                    .abs()
                    .partial_cmp(&a[q * dim + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if a[pivot * dim + col] == T::zero() {
            return T::zero();
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(pivot * dim + k, col * dim + k);
            }
            det = -det;
        }
        let p = a[col * dim + col];
        det = det * p;
        for row in col + 1..dim {
            let f = a[row * dim + col] / p;
            for k in col..dim {
                a[row * dim + k] = a[row * dim + k] - f * a[col * dim + k];
            }
        }
    }
    det
}

/// Finite sum of weighted point masses in the ball of radius `domain_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointVolume<T> {
    dim: usize,
    coords: Vec<T>,
    masses: Vec<T>,
    domain_radius: T,
}

impl<T: Real> PointVolume<T> {
    pub fn new(dim: usize, points: Vec<Vec<T>>, masses: Vec<T>, domain_radius: T) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("volumes need d >= 2"));
        }
        if points.is_empty() {
            return Err(Error::invalid("a volume needs at least one point"));
        }
        if points.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: masses.len(),
            });
        }
        if !(domain_radius > T::zero()) || !domain_radius.is_finite() {
            return Err(Error::invalid("domain radius must be positive and finite"));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("point coordinates must be finite"));
            }
            let norm = p.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > domain_radius {
                return Err(Error::OutOfDomain {
                    position: norm.to_f64_lossy(),
                    radius: domain_radius.to_f64_lossy(),
                });
            }
            coords.extend_from_slice(p);
        }
        if masses.iter().any(|&m| !(m > T::zero()) || !m.is_finite()) {
            return Err(Error::invalid("masses must be positive and finite"));
        }
        Ok(Self {
            dim,
            coords,
            masses,
            domain_radius,
        })
    }

    /// Planar volume from `(x, y)` pairs.
    pub fn planar(points: &[(T, T)], masses: &[T], domain_radius: T) -> Result<Self> {
        Self::new(
            2,
            points.iter().map(|&(x, y)| vec![x, y]).collect(),
            masses.to_vec(),
            domain_radius,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[T]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn domain_radius(&self) -> T {
        self.domain_radius
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }

    pub fn with_scaled_masses(&self, factor: T) -> Result<Self> {
        if !(factor > T::zero()) || !factor.is_finite() {
            return Err(Error::invalid("mass scale must be positive"));
        }
        let mut out = self.clone();
        for m in &mut out.masses {
            *m = *m * factor;
        }
        Ok(out)
    }

    /// Polar coordinates `(r, φ)` of every point of a planar volume.
    pub fn polar(&self) -> Result<Vec<(T, T)>> {
        if self.dim != 2 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        Ok(self
            .points()
            .map(|p| (p[0].hypot(p[1]), p[1].atan2(p[0])))
            .collect())
    }
}

/// `R·V`: every point mass is carried forward by `R`.
pub fn apply_rotation<T: Real>(r: &Rotation<T>, v: &PointVolume<T>) -> Result<PointVolume<T>> {
    if r.dim() != v.dim {
        return Err(Error::DimensionMismatch {
            expected: v.dim,
            got: r.dim(),
        });
    }
    let coords = v.points().flat_map(|p| r.apply(p)).collect();
    Ok(PointVolume {
        dim: v.dim,
        coords,
        masses: v.masses.clone(),
        domain_radius: v.domain_radius,
    })
}

/// Exact projection of a point volume onto the hyperplane `x_d = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMasses<T> {
    dim: usize,
    positions: Vec<T>,
    masses: Vec<T>,
}

impl<T: Real> ProjectedMasses<T> {
    pub fn new(dim: usize, positions: Vec<T>, masses: Vec<T>) -> Result<Self> {
        if dim == 0 || positions.len() != dim * masses.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * masses.len(),
                got: positions.len(),
            });
        }
        Ok(Self {
            dim,
            positions,
            masses,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn position(&self, i: usize) -> &[T] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[T] {
        &self.positions
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn total_mass(&self) -> T {
        self.masses.iter().copied().sum()
    }

    /// Indices ordered by `(mass, position…)`. Masses are copied verbatim from
    /// the source volume, so equal masses compare exactly and the ordering
    /// within a mass class is continuous in the positions.
    fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.masses[a]
                .partial_cmp(&self.masses[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let (pa, pb) = (self.position(a), self.position(b));
                    pa.iter()
                        .zip(pb)
                        .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
        });
        idx
    }
}

/// Drop the last coordinate of every point.
pub fn project<T: Real>(v: &PointVolume<T>) -> ProjectedMasses<T> {
    let d = v.dim;
    let positions = v.points().flat_map(|p| p[..d - 1].to_vec()).collect();
    ProjectedMasses {
        dim: d - 1,
        positions,
        masses: v.masses.clone(),
    }
}

/// `P[R·V]`.
pub fn project_rotated<T: Real>(r: &Rotation<T>, v: &PointVolume<T>) -> Result<ProjectedMasses<T>> {
    Ok(project(&apply_rotation(r, v)?))
}

/// Distance between two projected point sets viewed as measures.
///
/// Both sets are put in canonical `(mass, position)` order. If the mass lists
/// differ by more than `mass_tol` anywhere the sets cannot be equal and the
/// distance is infinite; otherwise it is the RMS of the matched position
/// differences.
pub fn multiset_distance<T: Real>(a: &ProjectedMasses<T>, b: &ProjectedMasses<T>, mass_tol: T) -> T {
    if a.dim != b.dim || a.len() != b.len() {
        return T::infinity();
    }
    let (ia, ib) = (a.canonical_order(), b.canonical_order());
    let mut acc = T::zero();
    for (&i, &j) in ia.iter().zip(&ib) {
        if (a.masses[i] - b.masses[j]).abs() > mass_tol {
            return T::infinity();
        }
        for (x, y) in a.position(i).iter().zip(b.position(j)) {
            acc = acc + (*x - *y) * (*x - *y);
        }
    }
    (acc / T::from_usize(a.len()).unwrap_or_else(T::one)).sqrt()
}

/// Discretized 1D image. Pixel `j` covers
/// `[-r + 2rj/W, -r + 2r(j+1)/W)` where `r = domain_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image1D<T> {
    pixels: Vec<T>,
    domain_radius: T,
}

impl<T: Real> Image1D<T> {
    pub fn new(pixels: Vec<T>, domain_radius: T) -> Result<Self> {
        if pixels.len() < 2 {
            return Err(Error::invalid("images need at least 2 pixels"));
        }
        if let Some(p) = pixels.iter().find(|&&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidInput(format!("pixel value {p} outside [0, 1]")));
        }
        if !(domain_radius > T::zero()) {
            return Err(Error::invalid("domain radius must be positive"));
        }
        Ok(Self {
            pixels,
            domain_radius,
        })
    }

    pub fn width(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn domain_radius(&self) -> T {
        self.domain_radius
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }
}

/// Rendering parameters for turning projected masses into images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSettings<T> {
    pub width: usize,
    /// Gaussian standard deviation in domain units; 0 selects nearest-pixel binning.
    pub splat_sigma: T,
    pub domain_radius: T,
}

impl<T: Real> RasterSettings<T> {
    /// Splat width defaults to 5% of the domain radius.
    pub fn with_default_splat(width: usize, domain_radius: T) -> Self {
        Self {
            width,
            splat_sigma: T::lit(0.05) * domain_radius,
            domain_radius,
        }
    }

    pub fn exact(&self) -> bool {
        self.splat_sigma == T::zero()
    }

    pub fn render(&self, p: &ProjectedMasses<T>) -> Result<Image1D<T>> {
        rasterize(p, self.width, self.splat_sigma, self.domain_radius)
    }
}

/// Render 1D projected masses into a max-normalized image.
pub fn rasterize<T: Real>(
    p: &ProjectedMasses<T>,
    width: usize,
    splat_sigma: T,
    domain_radius: T,
) -> Result<Image1D<T>> {
    if p.dim != 1 {
        return Err(Error::UnsupportedDimension(p.dim + 1));
    }
    if width < 2 {
        return Err(Error::invalid("image width must be at least 2"));
    }
    if !(splat_sigma >= T::zero()) || !splat_sigma.is_finite() {
        return Err(Error::invalid("splat sigma must be non-negative"));
    }
    if !(domain_radius > T::zero()) {
        return Err(Error::invalid("domain radius must be positive"));
    }
    let limit = domain_radius * (T::one() + T::lit(DOMAIN_SLACK));
    if let Some(&x) = p.positions.iter().find(|&&x| !(x.abs() <= limit)) {
        return Err(Error::OutOfDomain {
            position: x.to_f64_lossy(),
            radius: domain_radius.to_f64_lossy(),
        });
    }

    let w = T::from_usize(width).expect("width fits");
    let pixel = (domain_radius + domain_radius) / w;
    let mut signal = vec![T::zero(); width];
    if splat_sigma > T::zero() {
        let inv = T::one() / (splat_sigma * splat_sigma * T::lit(2.0));
        for (j, s) in signal.iter_mut().enumerate() {
            let center = -domain_radius + pixel * (T::from_usize(j).unwrap() + T::lit(0.5));
            *s = p
                .positions
                .iter()
                .zip(&p.masses)
                .map(|(&x, &m)| m * (-(center - x) * (center - x) * inv).exp())
                .sum();
        }
    }
    // Narrow kernels can underflow between pixel centers; binning takes over.
    if signal.iter().all(|&s| s == T::zero()) {
        for (&x, &m) in p.positions.iter().zip(&p.masses) {
            let j = ((x + domain_radius) / pixel).floor().to_usize().unwrap_or(0);
            let j = j.min(width - 1);
            signal[j] = signal[j] + m;
        }
    }
    let max = signal.iter().copied().fold(T::zero(), T::max);
    let pixels = signal
        .into_iter()
        .map(|s| (s / max).min(T::one()).max(T::zero()))
        .collect();
    Ok(Image1D {
        pixels,
        domain_radius,
    })
}

/// Root-mean-square pixel difference.
pub fn image_distance<T: Real>(a: &Image1D<T>, b: &Image1D<T>) -> Result<T> {
    if a.width() != b.width() {
        return Err(Error::DimensionMismatch {
            expected: a.width(),
            got: b.width(),
        });
    }
    let ss: T = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((ss / T::from_usize(a.width()).unwrap()).sqrt())
}

/// Format a number with 17 significant digits.
pub(crate) fn fmt_num<T: Real>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

impl<T: Real> PointVolume<T> {
    /// Text form: `dim=<d> radius=<r>` header, then `x_1 … x_d mass` per point.
    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} radius={}\n", self.dim, fmt_num(self.domain_radius));
        for (p, &m) in self.points().zip(&self.masses) {
            for &x in p {
                let _ = write!(out, "{} ", fmt_num(x));
            }
            let _ = writeln!(out, "{}", fmt_num(m));
        }
        out
    }

    /// Parse the text form. `origin` names the source in error messages and
    /// `line_offset` shifts reported line numbers for embedded volumes.
    pub fn parse_text(text: &str, origin: &Path, line_offset: usize) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1 + line_offset, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, line_offset + 1, "missing `dim=<d> radius=<r>` header"))?;
        let mut dim = None;
        let mut radius = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("dim", v)) => {
                    dim = Some(v.parse::<usize>().map_err(|e| Error::parse(origin, hline, format!("bad dim: {e}")))?)
                }
                Some(("radius", v)) => {
                    radius = Some(v.parse::<f64>().map_err(|e| Error::parse(origin, hline, format!("bad radius: {e}")))?)
                }
                _ => return Err(Error::parse(origin, hline, format!("unexpected header token `{tok}`"))),
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(origin, hline, "header lacks dim"))?;
        let radius = radius.ok_or_else(|| Error::parse(origin, hline, "header lacks radius"))?;
        let mut points = Vec::new();
        let mut masses = Vec::new();
        let mut last = hline;
        for (lineno, line) in lines {
            last = lineno;
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(origin, lineno, format!("bad number: {e}")))?;
            if vals.len() != dim + 1 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {} values, found {}", dim + 1, vals.len()),
                ));
            }
            points.push(vals[..dim].iter().map(|&x| T::lit(x)).collect());
            masses.push(T::lit(vals[dim]));
        }
        Self::new(dim, points, masses, T::lit(radius)).map_err(|e| Error::parse(origin, last, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text, path, 0)
    }
}
