//! Quasi-metric spaces, weighted point clouds standing in for ADR sets, the
//! regularized distance to a set, and the empirical ADR check.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spatial::SpatialIndex;

/// Above this many points `diam` switches from the exact pairwise scan to
/// certified bounds.
pub const DIAM_EXACT_LIMIT: usize = 10_000;

pub type DistanceFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Distance {
    Euclidean,
    Custom(DistanceFn),
}

/// An ambient space `X` with a quasi-distance `rho`, its symmetry constant
/// and its (max-form) quasi-triangle constant.
///
/// The ambient measure is Lebesgue measure on the coordinate space `R^m`;
/// Whitney cells carry their Lebesgue volume.
#[derive(Clone)]
pub struct QuasiMetricSpace {
    ambient_dim: usize,
    distance: Distance,
    sym_const: f64,
    tri_const: f64,
    symmetric: bool,
}

impl fmt::Debug for QuasiMetricSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiMetricSpace")
            .field("ambient_dim", &self.ambient_dim)
            .field("euclidean", &self.is_euclidean())
            .field("sym_const", &self.sym_const)
            .field("tri_const", &self.tri_const)
            .finish()
    }
}

impl QuasiMetricSpace {
    /// `R^m` with the Euclidean distance. In max-form the triangle inequality
    /// holds with constant 2.
    pub fn euclidean(m: usize) -> Self {
        Self {
            ambient_dim: m,
            distance: Distance::Euclidean,
            sym_const: 1.0,
            tri_const: 2.0,
            symmetric: true,
        }
    }

    pub fn custom(
        m: usize,
        rho: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        sym_const: f64,
        tri_const: f64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(invalid("ambient dimension must be positive"));
        }
        if !(sym_const >= 1.0) {
            return Err(invalid(format!("symmetry constant {sym_const} must be >= 1")));
        }
        if !(tri_const >= 1.0) {
            return Err(Error::InvalidTriangleConstant(tri_const));
        }
        Ok(Self {
            ambient_dim: m,
            distance: Distance::Custom(Arc::new(rho)),
            sym_const,
            tri_const,
            symmetric: sym_const == 1.0,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn sym_const(&self) -> f64 {
        self.sym_const
    }

    pub fn tri_const(&self) -> f64 {
        self.tri_const
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.distance, Distance::Euclidean)
    }

    #[inline]
    pub fn rho(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.distance {
            Distance::Euclidean => euclid(x, y),
            Distance::Custom(f) => f(x, y),
        }
    }

    /// The symmetrized distance `max(rho(x,y), rho(y,x))`.
    #[inline]
    pub fn rho_sharp(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.symmetric {
            self.rho(x, y)
        } else {
            self.rho(x, y).max(self.rho(y, x))
        }
    }
}

#[inline]
pub(crate) fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric regularization of `rho`.
///
/// Symmetric inputs come back unchanged. Otherwise the result is
/// `max(rho(x,y), rho(y,x))`, which is within a factor `sym_const` of `rho`
/// and satisfies the quasi-triangle inequality with `sym_const * tri_const`.
pub fn regularized_metric(space: &QuasiMetricSpace) -> QuasiMetricSpace {
    if space.symmetric {
        return space.clone();
    }
    let inner = space.clone();
    QuasiMetricSpace {
        ambient_dim: space.ambient_dim,
        distance: Distance::Custom(Arc::new(move |x, y| inner.rho(x, y).max(inner.rho(y, x)))),
        sym_const: 1.0,
        tri_const: space.sym_const * space.tri_const,
        symmetric: true,
    }
}

/// `1 / log2(C_rho)`; `+inf` when `C_rho = 1` (ultrametric limit).
pub fn alpha_rho(space: &QuasiMetricSpace) -> Result<f64> {
    alpha_from_tri_const(space.tri_const)
}

pub fn alpha_from_tri_const(c: f64) -> Result<f64> {
    if !(c >= 1.0) {
        return Err(Error::InvalidTriangleConstant(c));
    }
    if c == 1.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0 / c.log2())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct AxiomViolations {
    pub pairs: usize,
    pub triples: usize,
    pub coincidence: usize,
    pub symmetry: usize,
    pub triangle: usize,
}

impl AxiomViolations {
    pub fn total(&self) -> usize {
        self.coincidence + self.symmetry + self.triangle
    }
}

/// Samples pairs and triples from `points` (flat, row-major) and counts
/// violations of the three quasi-distance axioms.
pub fn verify_quasi_axioms(
    space: &QuasiMetricSpace,
    points: &[f64],
    triples: usize,
    seed: u64,
) -> AxiomViolations {
    let m = space.ambient_dim;
    let n = points.len() / m;
    let p = |i: usize| &points[i * m..(i + 1) * m];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AxiomViolations::default();
    if n == 0 {
        return out;
    }
    // relative slack for floating-point round-off
    let tol = 1e-12;
    for _ in 0..triples {
        let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
        let (x, y, z) = (p(i), p(j), p(k));
        let dxy = space.rho(x, y);
        let dyx = space.rho(y, x);
        out.pairs += 1;
        out.triples += 1;
        let same = x == y;
        if (dxy == 0.0) != same || space.rho(x, x) != 0.0 {
            out.coincidence += 1;
        }
        if dyx > space.sym_const * dxy * (1.0 + tol) + tol * f64::MIN_POSITIVE {
            out.symmetry += 1;
        }
        let bound = space.tri_const * space.rho(x, z).max(space.rho(z, y));
        if dxy > bound * (1.0 + tol) {
            out.triangle += 1;
        }
    }
    out
}

/// A finite weighted point cloud approximating `(E, rho|_E, sigma)`.
///
/// Each weight is the `sigma`-mass carried by its sample. Optional labels tag
/// points with the Lipschitz sub-piece they were sampled from.
pub struct AdrSet {
    space: QuasiMetricSpace,
    coords: Vec<f64>,
    weights: Vec<f64>,
    dim: f64,
    diam: f64,
    diam_exact: bool,
    adr_const: f64,
    labels: Option<Vec<Option<u32>>>,
    index: OnceLock<SpatialIndex>,
    resolution: OnceLock<f64>,
}

impl Clone for AdrSet {
    fn clone(&self) -> Self {
        Self {
            space: self.space.clone(),
            coords: self.coords.clone(),
            weights: self.weights.clone(),
            dim: self.dim,
            diam: self.diam,
            diam_exact: self.diam_exact,
            adr_const: self.adr_const,
            labels: self.labels.clone(),
            index: OnceLock::new(),
            resolution: self.resolution.clone(),
        }
    }
}

impl fmt::Debug for AdrSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdrSet")
            .field("len", &self.len())
            .field("ambient_dim", &self.space.ambient_dim)
            .field("dim", &self.dim)
            .field("diam", &self.diam)
            .field("total_mass", &self.total_mass())
            .finish()
    }
}

impl AdrSet {
    /// Builds a cloud from flat row-major coordinates.
    pub fn new(space: QuasiMetricSpace, coords: Vec<f64>, weights: Vec<f64>, dim: f64) -> Result<Self> {
        let m = space.ambient_dim;
        if coords.is_empty() || weights.is_empty() {
            return Err(Error::EmptySet);
        }
        if coords.len() % m != 0 || coords.len() / m != weights.len() {
            return Err(invalid(format!(
                "coordinate buffer of length {} does not match {} weights in dimension {m}",
                coords.len(),
                weights.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(invalid("total weight must be positive"));
        }
        if !(dim > 0.0 && dim < m as f64) {
            return Err(invalid(format!("dimension d = {dim} must satisfy 0 < d < m = {m}")));
        }
        if weights.len() < 2 {
            return Err(Error::Degenerate);
        }
        let (lo, hi) = diam_bounds(&space, &coords);
        if !(hi > 0.0) {
            return Err(Error::Degenerate);
        }
        Ok(Self {
            space,
            coords,
            weights,
            dim,
            diam: hi,
            diam_exact: lo == hi,
            adr_const: f64::INFINITY,
            labels: None,
            index: OnceLock::new(),
            resolution: OnceLock::new(),
        })
    }

    pub fn with_adr_const(mut self, c: f64) -> Self {
        self.adr_const = c;
        self
    }

    pub fn with_labels(mut self, labels: Vec<Option<u32>>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(invalid("label count does not match point count"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn space(&self) -> &QuasiMetricSpace {
        &self.space
    }

    pub fn ambient_dim(&self) -> usize {
        self.space.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let m = self.space.ambient_dim;
        &self.coords[i * m..(i + 1) * m]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> f64 {
        self.dim
    }

    /// `diam_rho(E)`; exact below [`DIAM_EXACT_LIMIT`] points, otherwise a
    /// certified upper bound.
    pub fn diam(&self) -> f64 {
        self.diam
    }

    pub fn diam_is_exact(&self) -> bool {
        self.diam_exact
    }

    pub fn adr_const(&self) -> f64 {
        self.adr_const
    }

    pub fn labels(&self) -> Option<&[Option<u32>]> {
        self.labels.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub(crate) fn index(&self) -> &SpatialIndex {
        self.index
            .get_or_init(|| SpatialIndex::new(&self.space, self.space.ambient_dim, &self.coords))
    }

    /// Largest nearest-neighbour spacing `h` in the cloud.
    pub fn resolution(&self) -> f64 {
        *self.resolution.get_or_init(|| {
            let idx = self.index();
            (0..self.len())
                .into_par_iter()
                .map(|i| idx.nearest_other(i).map(|(d, _)| d).unwrap_or(0.0))
                .reduce(|| 0.0, f64::max)
        })
    }

    /// Regularized distance `delta_E(x) = min_j rho_sharp(x, y_j)`.
    pub fn delta(&self, x: &[f64]) -> f64 {
        self.index().nearest(x).map(|(d, _)| d).unwrap_or(f64::INFINITY)
    }

    /// `delta_E(x)` together with the index of a nearest cloud point.
    pub fn nearest(&self, x: &[f64]) -> (f64, usize) {
        self.index().nearest(x).unwrap_or((f64::INFINITY, 0))
    }

    /// Sorted indices inside the open `rho_sharp`-ball `B(x, r)`.
    pub fn ball(&self, x: &[f64], r: f64) -> Vec<usize> {
        self.index().within(x, r)
    }

    /// Restriction to the given (sorted, in-range) indices.
    pub fn subset(&self, indices: &[usize]) -> Result<AdrSet> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::NotAligned);
        }
        let mut coords = Vec::with_capacity(indices.len() * self.ambient_dim());
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        let mut out = AdrSet::new(self.space.clone(), coords, weights, self.dim)?;
        if let Some(l) = &self.labels {
            out.labels = Some(indices.iter().map(|&i| l[i]).collect());
        }
        Ok(out)
    }

    /// Dilation `x -> factor * x`; weights scale by `factor^d`.
    pub fn dilate(&self, factor: f64) -> Result<AdrSet> {
        if !self.space.is_euclidean() {
            return Err(invalid("dilation needs the Euclidean ambient"));
        }
        let coords = self.coords.iter().map(|c| c * factor).collect();
        let scale = factor.powf(self.dim);
        let weights = self.weights.iter().map(|w| w * scale).collect();
        let mut out = AdrSet::new(self.space.clone(), coords, weights, self.dim)?;
        out.adr_const = self.adr_const;
        out.labels = self.labels.clone();
        Ok(out)
    }
}

/// `delta_E(x)`; errors on an empty cloud.
pub fn delta_e(x: &[f64], e: &AdrSet) -> Result<f64> {
    if e.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(e.delta(x))
}

/// Exact diameter for small clouds, `(lower, upper)` bounds otherwise.
pub fn diam_bounds(space: &QuasiMetricSpace, coords: &[f64]) -> (f64, f64) {
    let m = space.ambient_dim;
    let n = coords.len() / m;
    let p = |i: usize| &coords[i * m..(i + 1) * m];
    if n < 2 {
        return (0.0, 0.0);
    }
    if n <= DIAM_EXACT_LIMIT {
        let d = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = p(i);
                (i + 1..n).map(|j| space.rho_sharp(x, p(j))).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        return (d, d);
    }
    let ecc = |i: usize| -> (f64, usize) {
        (0..n)
            .into_par_iter()
            .map(|j| (space.rho_sharp(p(i), p(j)), j))
            .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
    };
    let (e0, a) = ecc(0);
    let (lower, _) = ecc(a);
    let mut upper = space.tri_const * e0;
    if space.is_euclidean() {
        let mut diag = 0.0;
        for k in 0..m {
            let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                (lo.min(coords[i * m + k]), hi.max(coords[i * m + k]))
            });
            diag += (hi - lo) * (hi - lo);
        }
        upper = upper.min(diag.sqrt());
    }
    (lower, upper.max(lower))
}

/// `diam_rho(E)`; errors for fewer than two points.
pub fn diam(e: &AdrSet) -> Result<f64> {
    if e.len() < 2 {
        return Err(Error::Degenerate);
    }
    Ok(e.diam())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RadiusRatios {
    pub radius: f64,
    /// min and max over centers of `sigma(B(x,r)) / r^d`
    pub min_ratio: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdrReport {
    pub best_const: f64,
    pub worst_radius: f64,
    pub samples: usize,
    pub per_radius_ratios: Vec<RadiusRatios>,
}

impl AdrReport {
    pub fn passes(&self, claimed: f64) -> bool {
        self.best_const <= claimed
    }
}

/// Log-spaced radii from `4h` (clamped into range) to `diam`.
pub fn default_radii(e: &AdrSet, count: usize) -> Vec<f64> {
    let hi = e.diam();
    let lo = (4.0 * e.resolution()).min(hi / 4.0).max(hi * 1e-6);
    log_grid(lo, hi, count.max(2))
}

/// Evenly strided center indices, at most `max` of them.
pub fn default_centers(e: &AdrSet, max: usize) -> Vec<usize> {
    let n = e.len();
    let step = n.div_ceil(max.max(1)).max(1);
    (0..n).step_by(step).collect()
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Empirical ADR constant over the `(center, radius)` grid.
///
/// For each sample the ratio `sigma(B(x,r)) / r^d` is compared against both
/// bounds. A sampled ball can pick up the half-spacing layer just outside
/// it, so the upper ratio is divided by `(1 + h/(2r))^d`; the lower bound
/// carries the slack `1 + 4h/r`.
pub fn check_adr(e: &AdrSet, radii: &[f64], centers: &[usize]) -> Result<AdrReport> {
    let diam = e.diam();
    if let Some(&r) = radii.iter().find(|&&r| !(r > 0.0 && r <= diam * (1.0 + 1e-9))) {
        return Err(Error::RadiusOutOfRange(r));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= e.len()) {
        return Err(invalid(format!("center index {c} outside the cloud")));
    }
    let h = e.resolution();
    let d = e.dim;
    let n = e.len();
    // per center: per radius ratio sigma/r^d
    let rows: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&c| {
            let x = e.point(c);
            let mut dist: Vec<(f64, f64)> =
                (0..n).map(|j| (e.space.rho(x, e.point(j)), e.weights[j])).collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(n + 1);
            prefix.push(0.0);
            let mut acc = 0.0;
            for (_, w) in &dist {
                acc += w;
                prefix.push(acc);
            }
            radii
                .iter()
                .map(|&r| {
                    let k = dist.partition_point(|(dd, _)| *dd < r);
                    prefix[k] / r.powf(d)
                })
                .collect()
        })
        .collect();
    let mut best = 1.0f64;
    let mut worst_radius = radii.first().copied().unwrap_or(0.0);
    let mut per_radius = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let slack = 1.0 + 4.0 * h / r;
        let upper_slack = (1.0 + h / (2.0 * r)).powf(d);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for row in &rows {
            let ratio = row[k];
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            let c = (ratio / upper_slack).max(1.0 / (ratio * slack));
            if c > best {
                best = c;
                worst_radius = r;
            }
        }
        per_radius.push(RadiusRatios {
            radius: r,
            min_ratio: lo,
            max_ratio: hi,
        });
    }
    Ok(AdrReport {
        best_const: best,
        worst_radius,
        samples: rows.len() * radii.len(),
        per_radius_ratios: per_radius,
    })
}
