//! Deciding whether a planar volume induces a well-defined rotation action on
//! its projected images.
//!
//! Two conditions are checked:
//!
//! * **coincidence closure**: whenever `P[R₁·V] = P[R₂·V]`, also
//!   `P[R₃R₁·V] = P[R₃R₂·V]` for every `R₃`. This is exactly what makes
//!   `ρ(R, I) = P[R·R_I·V]` independent of the chosen preimage `R_I`.
//! * **injectivity**: `P[R₁·V] = P[R₂·V]` implies `R₁ = R₂`. It implies
//!   closure and makes the image space a copy of SO(2).
//!
//! Both are decided numerically. The grid checkers compare projections at
//! `grid_size` uniformly spaced angles, either exactly (sorted point masses,
//! when `splat_sigma == 0`) or as rendered images. The algebraic checker
//! enumerates permutations of the point masses and solves the matching
//! equations for the two rotation angles directly.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{
    image_distance, multiset_distance, project_rotated, Image1D, PointVolume, ProjectedMasses,
    RasterSettings, Rotation,
};
use crate::scalar::{canonical_angle, circular_distance};

/// Mass lists are compared with this tolerance on the exact path.
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Default coincidence tolerance on the exact (multiset) path.
pub const EXACT_TOLERANCE: f64 = 1e-6;
/// Default coincidence tolerance on the rendered-image path.
pub const RASTER_TOLERANCE: f64 = 1e-3;
/// Residual below which an algebraic solution is accepted.
pub const WITNESS_RESIDUAL: f64 = 1e-9;
/// Largest volume the permutation enumeration accepts.
pub const MAX_ALGEBRAIC_POINTS: usize = 8;
/// Golden-section phase offset for the closure probes. A probe grid starting
/// at 0 aliases with the symmetry angles of regular polygons.
const PROBE_PHASE: f64 = 0.381_966_011_250_105_1;
/// Two angles closer than this are the same rotation for witness purposes.
const DISTINCT_ANGLES: f64 = 1e-6;

/// Settings shared by the grid-based checkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCheck {
    pub grid_size: usize,
    /// `splat_sigma == 0` selects the exact multiset comparison.
    pub raster: RasterSettings<f64>,
    pub tol: f64,
    /// Number of `R₃` probes per coincidence pair in the closure check.
    pub probe_count: usize,
}

impl GridCheck {
    /// Exact comparison, 720 angles, tolerance 1e-6.
    pub fn exact(domain_radius: f64) -> Self {
        Self {
            grid_size: 720,
            raster: RasterSettings {
                width: 64,
                splat_sigma: 0.0,
                domain_radius,
            },
            tol: EXACT_TOLERANCE,
            probe_count: 16,
        }
    }

    /// Rendered comparison with the default splat, tolerance 1e-3.
    pub fn rendered(width: usize, domain_radius: f64) -> Self {
        Self {
            raster: RasterSettings::with_default_splat(width, domain_radius),
            tol: RASTER_TOLERANCE,
            ..Self::exact(domain_radius)
        }
    }

    pub fn for_volume(v: &PointVolume<f64>) -> Self {
        Self::exact(v.domain_radius())
    }

    fn validate(&self, v: &PointVolume<f64>) -> Result<()> {
        if v.dim() != 2 {
            return Err(Error::UnsupportedDimension(v.dim()));
        }
        if self.grid_size < 8 {
            return Err(Error::invalid("grid_size must be at least 8"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tolerance must be non-negative"));
        }
        Ok(())
    }

    /// Pairs closer than two grid steps are treated as the same rotation.
    pub fn resolution_guard(&self) -> f64 {
        2.0 * TAU / self.grid_size as f64
    }

    fn angle(&self, k: usize) -> f64 {
        TAU * k as f64 / self.grid_size as f64
    }
}

/// What a projection is compared as.
#[derive(Debug, Clone)]
pub(crate) enum Snapshot {
    Exact(ProjectedMasses<f64>),
    Rendered(Image1D<f64>),
}

impl Snapshot {
    pub(crate) fn take(v: &PointVolume<f64>, theta: f64, raster: &RasterSettings<f64>) -> Result<Self> {
        let p = project_rotated(&Rotation::from_angle(theta)?, v)?;
        Self::of(p, raster, v.domain_radius())
    }

    fn of(p: ProjectedMasses<f64>, raster: &RasterSettings<f64>, radius: f64) -> Result<Self> {
        if raster.exact() {
            Ok(Snapshot::Exact(p))
        } else {
            let settings = RasterSettings {
                domain_radius: radius,
                ..*raster
            };
            Ok(Snapshot::Rendered(settings.render(&p)?))
        }
    }

    pub(crate) fn distance(&self, other: &Self) -> f64 {
        match (self, other) {
            (Snapshot::Exact(a), Snapshot::Exact(b)) => multiset_distance(a, b, MASS_TOLERANCE),
            (Snapshot::Rendered(a), Snapshot::Rendered(b)) => image_distance(a, b).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        }
    }
}

/// Two distinct rotations with (numerically) identical projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidencePair {
    pub theta1: f64,
    pub theta2: f64,
    pub image_rms: f64,
}

impl CoincidencePair {
    pub fn separation(&self) -> f64 {
        circular_distance(self.theta1, self.theta2)
    }
}

/// A coincidence pair that stops coinciding after a further rotation `theta3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarViolation {
    pub pair: CoincidencePair,
    pub theta3: f64,
    pub image_rms: f64,
}

/// Solution of the permutation system: projecting `R(theta1)·X_i` equals
/// projecting `R(theta2)·X_{σ(i)}` for every point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationWitness {
    pub permutation: Vec<usize>,
    pub theta1: f64,
    pub theta2: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMethod {
    Grid,
    Algebraic,
}

/// Outcome of a compatibility check.
///
/// `satisfies_injectivity` is always decided. `satisfies_star` is `None` when
/// the check that produced the verdict cannot decide it (a non-injective
/// grid or algebraic check); injectivity implies closure, so an injective
/// verdict always carries `Some(true)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityVerdict {
    pub satisfies_star: Option<bool>,
    pub satisfies_injectivity: bool,
    pub coincidences: Vec<CoincidencePair>,
    pub star_violations: Vec<StarViolation>,
    pub permutation_witness: Option<PermutationWitness>,
    pub method: CheckMethod,
    /// Grid size or θ₁-sweep resolution the claim was made at.
    pub resolution: usize,
}

impl CompatibilityVerdict {
    fn from_injectivity(
        injective: bool,
        method: CheckMethod,
        resolution: usize,
        coincidences: Vec<CoincidencePair>,
        witness: Option<PermutationWitness>,
    ) -> Self {
        Self {
            satisfies_star: injective.then_some(true),
            satisfies_injectivity: injective,
            coincidences,
            star_violations: Vec::new(),
            permutation_witness: witness,
            method,
            resolution,
        }
    }
}

fn grid_snapshots(v: &PointVolume<f64>, check: &GridCheck) -> Result<Vec<Snapshot>> {
    (0..check.grid_size)
        .map(|k| Snapshot::take(v, check.angle(k), &check.raster))
        .collect()
}

/// Every pair of grid angles whose projections agree within `tol`, sorted by
/// distance (ties in grid order).
///
/// On the exact path a partner angle that falls between grid points is also
/// found: a grid pair that is a local minimum of the distance along `θ₂` and
/// lies within the slope bound `R·step` is polished by golden-section search
/// in `θ₂` with `θ₁` held on the grid.
pub fn find_coincidences(v: &PointVolume<f64>, check: &GridCheck) -> Result<Vec<CoincidencePair>> {
    check.validate(v)?;
    let snaps = grid_snapshots(v, check)?;
    let n = snaps.len();
    let step = TAU / n as f64;
    let loose = if check.raster.exact() {
        v.domain_radius() * step
    } else {
        check.tol
    };
    let guard = check.resolution_guard();
    let mut pairs = Vec::new();
    for a in 0..n {
        let row: Vec<f64> = (0..n).map(|b| if b == a { 0.0 } else { snaps[a].distance(&snaps[b]) }).collect();
        for b in a + 1..n {
            let d = row[b];
            if d <= check.tol {
                pairs.push(CoincidencePair {
                    theta1: check.angle(a),
                    theta2: check.angle(b),
                    image_rms: d,
                });
                continue;
            }
            let (prev, next) = (row[(b + n - 1) % n], row[(b + 1) % n]);
            let separated = circular_distance(check.angle(a), check.angle(b)) > guard + 1e-12;
            if d > loose || !separated || d > prev || d > next || prev <= check.tol || next <= check.tol {
                continue;
            }
            let (theta2, rms) = polish_partner(v, &snaps[a], check.angle(b), step, &check.raster)?;
            if rms <= check.tol {
                pairs.push(CoincidencePair {
                    theta1: check.angle(a),
                    theta2,
                    image_rms: rms,
                });
            }
        }
    }
    pairs.sort_by(|p, q| p.image_rms.total_cmp(&q.image_rms));
    Ok(pairs)
}

/// Minimize the distance to `target` over `θ ∈ [center − half, center + half]`.
fn polish_partner(
    v: &PointVolume<f64>,
    target: &Snapshot,
    center: f64,
    half: f64,
    raster: &RasterSettings<f64>,
) -> Result<(f64, f64)> {
    let f = |t: f64| -> Result<f64> { Ok(Snapshot::take(v, t, raster)?.distance(target)) };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (center - half, center + half);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let (t, d) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok((canonical_angle(t), d))
}

fn resolved_coincidences(v: &PointVolume<f64>, check: &GridCheck) -> Result<Vec<CoincidencePair>> {
    let guard = check.resolution_guard();
    Ok(find_coincidences(v, check)?
        .into_iter()
        .filter(|p| p.separation() > guard + 1e-12)
        .collect())
}

/// Injectivity at grid resolution: no coincidence pair separated by more
/// than two grid steps.
pub fn check_injectivity(v: &PointVolume<f64>, check: &GridCheck) -> Result<CompatibilityVerdict> {
    let coincidences = resolved_coincidences(v, check)?;
    Ok(CompatibilityVerdict::from_injectivity(
        coincidences.is_empty(),
        CheckMethod::Grid,
        check.grid_size,
        coincidences,
        None,
    ))
}

/// Coincidence closure: every resolved coincidence pair is probed with
/// `probe_count` further rotations.
pub fn check_star(v: &PointVolume<f64>, check: &GridCheck) -> Result<CompatibilityVerdict> {
    if check.probe_count < 8 {
        return Err(Error::invalid("probe_count must be at least 8"));
    }
    let coincidences = resolved_coincidences(v, check)?;
    let probes: Vec<f64> = (0..check.probe_count)
        .map(|k| TAU * (k as f64 + PROBE_PHASE) / check.probe_count as f64)
        .collect();
    let mut violations = Vec::new();
    for pair in &coincidences {
        for &theta3 in &probes {
            let a = Snapshot::take(v, theta3 + pair.theta1, &check.raster)?;
            let b = Snapshot::take(v, theta3 + pair.theta2, &check.raster)?;
            let d = a.distance(&b);
            if d > check.tol {
                violations.push(StarViolation {
                    pair: *pair,
                    theta3,
                    image_rms: d,
                });
            }
        }
    }
    Ok(CompatibilityVerdict {
        satisfies_star: Some(violations.is_empty()),
        satisfies_injectivity: coincidences.is_empty(),
        coincidences,
        star_violations: violations,
        permutation_witness: None,
        method: CheckMethod::Grid,
        resolution: check.grid_size,
    })
}

/// Planar point data used by the algebraic solver.
struct Planar {
    x: Vec<f64>,
    y: Vec<f64>,
    r: Vec<f64>,
    phi: Vec<f64>,
    m: Vec<f64>,
}

impl Planar {
    fn new(v: &PointVolume<f64>) -> Result<Self> {
        if v.dim() != 2 {
            return Err(Error::UnsupportedDimension(v.dim()));
        }
        let polar = v.polar()?;
        Ok(Self {
            x: v.points().map(|p| p[0]).collect(),
            y: v.points().map(|p| p[1]).collect(),
            r: polar.iter().map(|p| p.0).collect(),
            phi: polar.iter().map(|p| p.1).collect(),
            m: v.masses().to_vec(),
        })
    }

    fn len(&self) -> usize {
        self.m.len()
    }

    /// First coordinate of `R(theta)·X_i` given `(cos θ, sin θ)`.
    #[inline]
    fn proj(&self, i: usize, c: f64, s: f64) -> f64 {
        self.x[i] * c - self.y[i] * s
    }

    fn anchor(&self) -> usize {
        let mut best = 0;
        for i in 1..self.len() {
            if self.r[i] > self.r[best] {
                best = i;
            }
        }
        best
    }

    fn residuals(&self, sigma: &[usize], t1: f64, t2: f64) -> Vec<f64> {
        let (s1, c1) = t1.sin_cos();
        let (s2, c2) = t2.sin_cos();
        (0..self.len())
            .map(|i| self.proj(i, c1, s1) - self.proj(sigma[i], c2, s2))
            .collect()
    }

    /// Levenberg–Marquardt polish of `(θ₁, θ₂)` for a fixed permutation.
    fn polish(&self, sigma: &[usize], mut t1: f64, mut t2: f64) -> (f64, f64, f64) {
        let mut lambda = 1e-6;
        let mut res = self.residuals(sigma, t1, t2);
        let mut cost: f64 = res.iter().map(|e| e * e).sum();
        for _ in 0..200 {
            if res.iter().all(|e| e.abs() < 1e-14) {
                break;
            }
            let (s1, c1) = t1.sin_cos();
            let (s2, c2) = t2.sin_cos();
            let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..self.len() {
                let j = sigma[i];
                // d/dθ of x cos θ − y sin θ is −(x sin θ + y cos θ)
                let j1 = -(self.x[i] * s1 + self.y[i] * c1);
                let j2 = self.x[j] * s2 + self.y[j] * c2;
                a11 += j1 * j1;
                a12 += j1 * j2;
                a22 += j2 * j2;
                g1 += j1 * res[i];
                g2 += j2 * res[i];
            }
            let mut improved = false;
            for _ in 0..30 {
                let (d11, d22) = (a11 * (1.0 + lambda) + 1e-300, a22 * (1.0 + lambda) + 1e-300);
                let det = d11 * d22 - a12 * a12;
                if det.abs() < 1e-300 {
                    lambda *= 10.0;
                    continue;
                }
                let dt1 = -(d22 * g1 - a12 * g2) / det;
                let dt2 = -(d11 * g2 - a12 * g1) / det;
                let (n1, n2) = (t1 + dt1, t2 + dt2);
                let nres = self.residuals(sigma, n1, n2);
                let ncost: f64 = nres.iter().map(|e| e * e).sum();
                if ncost < cost {
                    t1 = n1;
                    t2 = n2;
                    res = nres;
                    cost = ncost;
                    lambda = (lambda * 0.1).max(1e-15);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let max = res.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        (canonical_angle(t1), canonical_angle(t2), max)
    }
}

/// Next permutation in lexicographic order; false after the last one.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Projections along both arccos branches of the anchor equation, cached
/// per (anchor target, branch, θ₁ grid index).
struct BranchTable {
    resolution: usize,
    n: usize,
    /// `[k * n + i]`: projection of point `i` under `R(θ₁ₖ)`.
    first: Vec<f64>,
    /// `[target][branch]`: `θ₂` per grid index (NaN if infeasible) and the
    /// projections of every point under `R(θ₂)`.
    second: Vec<[(Vec<f64>, Vec<f64>); 2]>,
}

impl BranchTable {
    fn build(pts: &Planar, anchor: usize, resolution: usize) -> Self {
        let n = pts.len();
        let mut first = Vec::with_capacity(resolution * n);
        for k in 0..resolution {
            let (s, c) = (TAU * k as f64 / resolution as f64).sin_cos();
            first.extend((0..n).map(|i| pts.proj(i, c, s)));
        }
        let mut second = Vec::with_capacity(n);
        for target in 0..n {
            let mut branches: [(Vec<f64>, Vec<f64>); 2] = Default::default();
            if pts.m[target] != pts.m[anchor] || pts.r[target] == 0.0 {
                second.push(branches);
                continue;
            }
            for (b, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut thetas = Vec::with_capacity(resolution);
                let mut proj = Vec::with_capacity(resolution * n);
                for k in 0..resolution {
                    let c = first[k * n + anchor] / pts.r[target];
                    if c.abs() > 1.0 + 1e-12 {
                        thetas.push(f64::NAN);
                        proj.extend(std::iter::repeat(f64::NAN).take(n));
                        continue;
                    }
                    let t2 = sign * c.clamp(-1.0, 1.0).acos() - pts.phi[target];
                    let (s2, c2) = t2.sin_cos();
                    thetas.push(t2);
                    proj.extend((0..n).map(|i| pts.proj(i, c2, s2)));
                }
                branches[b] = (thetas, proj);
            }
            second.push(branches);
        }
        Self {
            resolution,
            n,
            first,
            second,
        }
    }
}

/// Search for permutation witnesses. With `all = false` the search stops at
/// the first witness in lexicographic permutation order; otherwise at most
/// one witness per (permutation, branch) is reported.
pub fn algebraic_witnesses(
    v: &PointVolume<f64>,
    angular_resolution: usize,
    all: bool,
) -> Result<Vec<PermutationWitness>> {
    if v.dim() != 2 {
        return Err(Error::UnsupportedDimension(v.dim()));
    }
    if v.len() > MAX_ALGEBRAIC_POINTS {
        return Err(Error::TooLarge {
            n: v.len(),
            max: MAX_ALGEBRAIC_POINTS,
        });
    }
    if angular_resolution < 8 {
        return Err(Error::invalid("angular_resolution must be at least 8"));
    }
    let pts = Planar::new(v)?;
    let n = pts.len();
    let anchor = pts.anchor();
    let mut sigma: Vec<usize> = (0..n).collect();

    // Every point at the origin: every pair of rotations coincides.
    if pts.r[anchor] == 0.0 {
        return Ok(vec![PermutationWitness {
            permutation: sigma,
            theta1: 0.0,
            theta2: std::f64::consts::PI,
            max_residual: 0.0,
        }]);
    }

    let table = BranchTable::build(&pts, anchor, angular_resolution);
    let h = TAU / angular_resolution as f64;
    let scale = pts.r[anchor];
    let mut witnesses = Vec::new();
    let mut cost = vec![f64::INFINITY; angular_resolution];
    loop {
        let mass_ok = (0..n).all(|i| pts.m[i] == pts.m[sigma[i]]);
        if mass_ok {
            let target = sigma[anchor];
            for branch in 0..2 {
                let (thetas, proj) = &table.second[target][branch];
                if thetas.is_empty() {
                    continue;
                }
                for k in 0..table.resolution {
                    cost[k] = if thetas[k].is_nan() {
                        f64::INFINITY
                    } else {
                        let f = &table.first[k * table.n..(k + 1) * table.n];
                        let s = &proj[k * table.n..(k + 1) * table.n];
                        (0..n).map(|i| (f[i] - s[sigma[i]]).powi(2)).sum()
                    };
                }
                if let Some(w) = polish_candidates(&pts, &sigma, thetas, &cost, h, scale) {
                    witnesses.push(w);
                    if !all {
                        return Ok(witnesses);
                    }
                }
            }
        }
        if !next_permutation(&mut sigma) {
            break;
        }
    }
    Ok(witnesses)
}

fn polish_candidates(
    pts: &Planar,
    sigma: &[usize],
    thetas: &[f64],
    cost: &[f64],
    h: f64,
    scale: f64,
) -> Option<PermutationWitness> {
    let len = cost.len();
    // Coarse acceptance: a root within one grid step cannot leave a residual
    // much larger than the step times the largest radius.
    let coarse = (0.25 * scale).powi(2);
    for k in 0..len {
        let c = cost[k];
        if !(c <= coarse) {
            continue;
        }
        let prev = cost[(k + len - 1) % len];
        let next = cost[(k + 1) % len];
        if c > prev || c > next {
            continue;
        }
        let t1 = TAU * k as f64 / len as f64;
        let t2 = thetas[k];
        // The identity branch θ₂ = θ₁ is a continuum of trivial solutions.
        if circular_distance(t1, t2) < 0.5 * h {
            continue;
        }
        let (p1, p2, max_residual) = pts.polish(sigma, t1, t2);
        if max_residual < WITNESS_RESIDUAL && circular_distance(p1, p2) > DISTINCT_ANGLES {
            return Some(PermutationWitness {
                permutation: sigma.to_vec(),
                theta1: p1,
                theta2: p2,
                max_residual,
            });
        }
    }
    None
}

/// Injectivity from the permutation system, swept at `angular_resolution`
/// values of θ₁ with Newton polish.
pub fn check_injectivity_algebraic(v: &PointVolume<f64>, angular_resolution: usize) -> Result<CompatibilityVerdict> {
    let witness = algebraic_witnesses(v, angular_resolution, false)?.into_iter().next();
    Ok(CompatibilityVerdict::from_injectivity(
        witness.is_none(),
        CheckMethod::Algebraic,
        angular_resolution,
        Vec::new(),
        witness,
    ))
}

/// Default θ₁-sweep resolution of the algebraic checker.
pub const DEFAULT_ANGULAR_RESOLUTION: usize = 4096;

/// All rotations whose projection of `v` equals `target`, as canonical
/// angles in increasing order. Returns `None` when every rotation qualifies
/// (all mass at the origin).
pub fn preimages(v: &PointVolume<f64>, target: &ProjectedMasses<f64>, tol: f64) -> Result<Option<Vec<f64>>> {
    let pts = Planar::new(v)?;
    let anchor = pts.anchor();
    let r = pts.r[anchor];
    if r == 0.0 {
        return Ok(None);
    }
    let mut out: Vec<f64> = Vec::new();
    for j in 0..target.len() {
        if (target.masses()[j] - pts.m[anchor]).abs() > MASS_TOLERANCE {
            continue;
        }
        let c = target.position(j)[0] / r;
        if c.abs() > 1.0 + 1e-9 {
            continue;
        }
        let a = c.clamp(-1.0, 1.0).acos();
        for t in [a - pts.phi[anchor], -a - pts.phi[anchor]] {
            let t = canonical_angle(t);
            if out.iter().any(|&u| circular_distance(u, t) < 1e-9) {
                continue;
            }
            let p = project_rotated(&Rotation::from_angle(t)?, v)?;
            if multiset_distance(&p, target, MASS_TOLERANCE) <= tol {
                out.push(t);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(Some(out))
}

/// Worst-case deviations observed while checking the action axioms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupActionReport {
    pub passed: bool,
    pub samples: usize,
    pub worst_identity: f64,
    pub worst_compatibility: f64,
}

impl GroupActionReport {
    pub fn worst_deviation(&self) -> f64 {
        self.worst_identity.max(self.worst_compatibility)
    }
}

/// `ρ(R, I) = P[R·R_I·V]` on images, with `R_I` the smallest canonical
/// preimage of `I`.
pub struct ImageAction<'a> {
    volume: &'a PointVolume<f64>,
    raster: RasterSettings<f64>,
}

impl<'a> ImageAction<'a> {
    pub fn new(volume: &'a PointVolume<f64>, raster: RasterSettings<f64>) -> Result<Self> {
        if volume.dim() != 2 {
            return Err(Error::UnsupportedDimension(volume.dim()));
        }
        Ok(Self { volume, raster })
    }

    /// `P[R(theta)·V]` in exact form.
    pub fn image_at(&self, theta: f64) -> Result<ProjectedMasses<f64>> {
        project_rotated(&Rotation::from_angle(theta)?, self.volume)
    }

    /// The representative preimage used by `act`.
    pub fn representative(&self, image: &ProjectedMasses<f64>) -> Result<f64> {
        match preimages(self.volume, image, 1e-9)? {
            None => Ok(0.0),
            Some(list) => list
                .first()
                .copied()
                .ok_or_else(|| Error::invalid("image is not a projection of this volume")),
        }
    }

    pub fn act(&self, theta: f64, image: &ProjectedMasses<f64>) -> Result<ProjectedMasses<f64>> {
        let rep = self.representative(image)?;
        self.image_at(theta + rep)
    }

    fn compare(&self, a: &ProjectedMasses<f64>, b: &ProjectedMasses<f64>) -> Result<f64> {
        let r = self.volume.domain_radius();
        Ok(Snapshot::of(a.clone(), &self.raster, r)?.distance(&Snapshot::of(b.clone(), &self.raster, r)?))
    }
}

/// Check the identity and compatibility axioms of `ρ` on `sample_count`
/// random `(θ_I, θ₁, θ₂)`. Requires the volume to pass the closure check.
pub fn verify_group_action(
    v: &PointVolume<f64>,
    sample_count: usize,
    check: &GridCheck,
    seed: u64,
) -> Result<GroupActionReport> {
    if check_star(v, check)?.satisfies_star != Some(true) {
        return Err(Error::IncompatibleVolume);
    }
    probe_group_action(v, sample_count, check, seed)
}

/// [`verify_group_action`] without the closure precondition. On a volume
/// that violates closure this exposes the multi-valued action.
pub fn probe_group_action(
    v: &PointVolume<f64>,
    sample_count: usize,
    check: &GridCheck,
    seed: u64,
) -> Result<GroupActionReport> {
    check.validate(v)?;
    let action = ImageAction::new(v, check.raster)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_identity = 0.0f64;
    let mut worst_compatibility = 0.0f64;
    for _ in 0..sample_count {
        let theta_i = rng.gen_range(0.0..TAU);
        let theta1 = rng.gen_range(0.0..TAU);
        let theta2 = rng.gen_range(0.0..TAU);
        let image = action.image_at(theta_i)?;
        let same = action.act(0.0, &image)?;
        worst_identity = worst_identity.max(action.compare(&same, &image)?);
        let stepwise = action.act(theta2, &action.act(theta1, &image)?)?;
        let direct = action.act(theta2 + theta1, &image)?;
        worst_compatibility = worst_compatibility.max(action.compare(&stepwise, &direct)?);
    }
    Ok(GroupActionReport {
        passed: worst_identity <= check.tol && worst_compatibility <= check.tol,
        samples: sample_count,
        worst_identity,
        worst_compatibility,
    })
}

/// Sample `n` unit masses uniformly in the disk until the algebraic checker
/// finds no witness. Two equal masses always admit a half-turn coincidence,
/// so `n = 2` exhausts `max_attempts`; generic `n >= 3` succeeds at once.
pub fn random_compatible_volume(
    n: usize,
    seed: u64,
    domain_radius: f64,
    max_attempts: usize,
) -> Result<PointVolume<f64>> {
    // n = 1 is accepted so callers can observe that it never succeeds.
    if !(1..=MAX_ALGEBRAIC_POINTS).contains(&n) {
        return Err(Error::invalid(format!(
            "n must lie in 1..={MAX_ALGEBRAIC_POINTS}, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts {
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let r = domain_radius * rng.gen::<f64>().sqrt();
                let (s, c) = rng.gen_range(0.0..TAU).sin_cos();
                (r * c, r * s)
            })
            .collect();
        let v = PointVolume::planar(&points, &vec![1.0; n], domain_radius)?;
        if check_injectivity_algebraic(&v, DEFAULT_ANGULAR_RESOLUTION)?.satisfies_injectivity {
            return Ok(v);
        }
    }
    Err(Error::ConstructionFailure {
        attempts: max_attempts,
    })
}

/// Grid verdicts for both conditions plus, optionally, the algebraic check.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeReport {
    pub grid: CompatibilityVerdict,
    pub algebraic: Option<CompatibilityVerdict>,
}

impl VolumeReport {
    /// Compatible means injective: trivial stabilizer and an image space
    /// that is a copy of SO(2).
    pub fn compatible(&self) -> bool {
        self.grid.satisfies_injectivity && self.algebraic.as_ref().map_or(true, |a| a.satisfies_injectivity)
    }

    pub fn render(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let g = &self.grid;
        let yn = |b: bool| if b { "true" } else { "false" };
        let _ = writeln!(out, "compatible={}", yn(self.compatible()));
        let _ = writeln!(out, "grid.resolution={}", g.resolution);
        let _ = writeln!(out, "grid.injectivity={}", yn(g.satisfies_injectivity));
        let _ = writeln!(
            out,
            "grid.closure={}",
            g.satisfies_star.map_or("undecided", yn)
        );
        let _ = writeln!(out, "grid.coincidences={}", g.coincidences.len());
        for p in g.coincidences.iter().take(5) {
            let _ = writeln!(
                out,
                "  coincidence theta1_deg={:.4} theta2_deg={:.4} rms={:.3e}",
                p.theta1.to_degrees(),
                p.theta2.to_degrees(),
                p.image_rms
            );
        }
        let _ = writeln!(out, "grid.closure_violations={}", g.star_violations.len());
        for s in g.star_violations.iter().take(5) {
            let _ = writeln!(
                out,
                "  violation theta1_deg={:.4} theta2_deg={:.4} theta3_deg={:.4} rms={:.3e}",
                s.pair.theta1.to_degrees(),
                s.pair.theta2.to_degrees(),
                s.theta3.to_degrees(),
                s.image_rms
            );
        }
        if let Some(a) = &self.algebraic {
            let _ = writeln!(out, "algebraic.resolution={}", a.resolution);
            let _ = writeln!(out, "algebraic.injectivity={}", yn(a.satisfies_injectivity));
            if let Some(w) = &a.permutation_witness {
                let perm: Vec<String> = w.permutation.iter().map(|i| i.to_string()).collect();
                let _ = writeln!(
                    out,
                    "  witness permutation=[{}] theta1_deg={:.6} theta2_deg={:.6} residual={:.3e}",
                    perm.join(","),
                    w.theta1.to_degrees(),
                    w.theta2.to_degrees(),
                    w.max_residual
                );
            }
        }
        out
    }
}

pub fn check_volume(v: &PointVolume<f64>, check: &GridCheck, algebraic: Option<usize>) -> Result<VolumeReport> {
    let grid = check_star(v, check)?;
    let algebraic = algebraic
        .map(|res| check_injectivity_algebraic(v, res))
        .transpose()?;
    Ok(VolumeReport { grid, algebraic })
}
