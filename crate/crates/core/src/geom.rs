//! Test geometries: flat pieces, circles, Lipschitz graphs, four-corner
//! Cantor iterates and labelled composites.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicLattice;
use crate::error::{invalid, Result};
use crate::qm::{AdrSet, QuasiMetricSpace};

pub const MIN_RESOLUTION: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum GraphProfile {
    /// Triangle wave of slope `±lip` with the given period.
    Sawtooth { period: f64 },
    /// `A sin(omega t)` with `A omega = lip`.
    Sine { omega: f64 },
    /// Piecewise linear with `pieces` random slopes in `[-lip, lip]`.
    Random { pieces: usize },
    /// User-supplied heights on a uniform grid over `[0, length]`.
    Samples { heights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryKind {
    /// `[-half_length, half_length] x {0}`, standing in for the line.
    Line { half_length: f64 },
    /// `[0, length] x {0}`.
    Segment { length: f64 },
    Circle { radius: f64 },
    LipschitzGraph {
        lip: f64,
        length: f64,
        #[serde(flatten)]
        profile: GraphProfile,
        /// label rising and falling pieces separately (sawtooth only)
        #[serde(default)]
        split_slopes: bool,
    },
    /// Generation-`g` four-corner Cantor set in the unit square; `4^g`
    /// points, `resolution` is only checked against the minimum.
    Cantor4 { generation: u32 },
    /// Parts are concatenated; Lipschitz parts are labelled by position.
    Composite { parts: Vec<GeometrySpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    #[serde(flatten)]
    pub kind: GeometryKind,
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub offset: [f64; 2],
}

impl GeometrySpec {
    pub fn new(kind: GeometryKind, resolution: usize) -> Self {
        Self {
            kind,
            resolution,
            seed: 0,
            offset: [0.0, 0.0],
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_offset(mut self, offset: [f64; 2]) -> Self {
        self.offset = offset;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            GeometryKind::Line { .. } => "line",
            GeometryKind::Segment { .. } => "segment",
            GeometryKind::Circle { .. } => "circle",
            GeometryKind::LipschitzGraph { .. } => "lipschitz_graph",
            GeometryKind::Cantor4 { .. } => "cantor4",
            GeometryKind::Composite { .. } => "composite",
        }
    }

    /// Upper bound expected from `check_adr` for this kind.
    ///
    /// Flat pieces carry at most `2r` in a ball, a curve of slope `L` at most
    /// `2r sqrt(1+L^2)`, a circle at most its length `2 pi R` against radii up
    /// to `2R`. The Cantor bound is uniform in the generation. A 10% margin
    /// absorbs sampling.
    pub fn expected_adr_const(&self) -> f64 {
        let margin = 1.1;
        match &self.kind {
            GeometryKind::Line { .. } | GeometryKind::Segment { .. } => 2.0 * margin,
            GeometryKind::Circle { .. } => 3.3,
            GeometryKind::LipschitzGraph { lip, .. } => 2.0 * (1.0 + lip * lip).sqrt() * margin,
            GeometryKind::Cantor4 { .. } => 6.0,
            GeometryKind::Composite { parts } => {
                parts.iter().map(|p| p.expected_adr_const()).sum::<f64>()
            }
        }
    }
}

/// Builds the weighted cloud described by `spec`.
pub fn generate(spec: &GeometrySpec) -> Result<AdrSet> {
    let (coords, weights, labels) = raw(spec)?;
    let set = AdrSet::new(QuasiMetricSpace::euclidean(2), coords, weights, 1.0)?
        .with_adr_const(spec.expected_adr_const());
    match labels {
        Some(l) => set.with_labels(l),
        None => Ok(set),
    }
}

type Raw = (Vec<f64>, Vec<f64>, Option<Vec<Option<u32>>>);

fn raw(spec: &GeometrySpec) -> Result<Raw> {
    let n = spec.resolution;
    if n < MIN_RESOLUTION {
        return Err(invalid(format!("resolution {n} is below the minimum {MIN_RESOLUTION}")));
    }
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("{name} must be positive, got {v}")))
        }
    };
    let [ox, oy] = spec.offset;
    let (mut coords, weights, labels) = match &spec.kind {
        GeometryKind::Line { half_length } => {
            positive("half_length", *half_length)?;
            flat(-half_length, 2.0 * half_length, n)
        }
        GeometryKind::Segment { length } => {
            positive("length", *length)?;
            flat(0.0, *length, n)
        }
        GeometryKind::Circle { radius } => {
            positive("radius", *radius)?;
            circle(*radius, n)?
        }
        GeometryKind::LipschitzGraph {
            lip,
            length,
            profile,
            split_slopes,
        } => {
            positive("lip", *lip)?;
            positive("length", *length)?;
            graph(*lip, *length, profile, *split_slopes, n, spec.seed)?
        }
        GeometryKind::Cantor4 { generation } => cantor4(*generation)?,
        GeometryKind::Composite { parts } => composite(parts)?,
    };
    for p in coords.chunks_exact_mut(2) {
        p[0] += ox;
        p[1] += oy;
    }
    Ok((coords, weights, labels))
}

fn flat(start: f64, length: f64, n: usize) -> Raw {
    let h = length / n as f64;
    let coords = (0..n).flat_map(|i| [start + (i as f64 + 0.5) * h, 0.0]).collect();
    (coords, vec![h; n], Some(vec![Some(0); n]))
}

/// Equally spaced points; point `k + n/2` is exactly `-point k`.
fn circle(radius: f64, n: usize) -> Result<Raw> {
    if n % 2 != 0 {
        return Err(invalid("circle resolution must be even"));
    }
    let half = n / 2;
    let mut coords = vec![0.0; 2 * n];
    for k in 0..half {
        let t = 2.0 * PI * k as f64 / n as f64;
        let (s, c) = t.sin_cos();
        coords[2 * k] = radius * c;
        coords[2 * k + 1] = radius * s;
        coords[2 * (k + half)] = -radius * c;
        coords[2 * (k + half) + 1] = -radius * s;
    }
    Ok((coords, vec![2.0 * PI * radius / n as f64; n], Some(vec![Some(0); n])))
}

/// Checks `|phi(s) - phi(t)| <= lip |s - t|` on consecutive grid pairs and
/// 1000 random pairs of the piecewise-linear interpolant.
pub fn check_lipschitz(heights: &[f64], length: f64, lip: f64, seed: u64) -> Result<()> {
    if heights.len() < 2 {
        return Err(invalid("need at least two graph samples"));
    }
    if heights.iter().any(|h| !h.is_finite()) {
        return Err(invalid("non-finite graph sample"));
    }
    let dt = length / (heights.len() - 1) as f64;
    let tol = 1e-12 * (1.0 + lip);
    for (i, w) in heights.windows(2).enumerate() {
        let slope = (w[1] - w[0]).abs() / dt;
        if slope > lip + tol {
            return Err(invalid(format!(
                "graph samples {i} and {} violate the Lipschitz bound {lip} (slope {slope})",
                i + 1
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = |t: f64| {
        let x = (t / dt).clamp(0.0, (heights.len() - 1) as f64);
        let i = (x.floor() as usize).min(heights.len() - 2);
        let a = x - i as f64;
        heights[i] * (1.0 - a) + heights[i + 1] * a
    };
    for _ in 0..1000 {
        let (s, t) = (rng.gen_range(0.0..length), rng.gen_range(0.0..length));
        if s != t && (phi(s) - phi(t)).abs() > (lip + tol) * (s - t).abs() {
            return Err(invalid(format!("graph violates the Lipschitz bound {lip} at ({s}, {t})")));
        }
    }
    Ok(())
}

fn graph(lip: f64, length: f64, profile: &GraphProfile, split: bool, n: usize, seed: u64) -> Result<Raw> {
    // (height, slope) at parameter t, and the exact arc length
    let ts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * length / n as f64).collect();
    let (heights, slopes, total): (Vec<f64>, Vec<f64>, f64) = match profile {
        GraphProfile::Sawtooth { period } => {
            if !(*period > 0.0) {
                return Err(invalid("sawtooth period must be positive"));
            }
            let p = *period;
            let (h, s) = ts
                .iter()
                .map(|&t| {
                    let u = t.rem_euclid(p);
                    if u < p / 2.0 {
                        (lip * u, lip)
                    } else {
                        (lip * (p - u), -lip)
                    }
                })
                .unzip();
            (h, s, length * (1.0 + lip * lip).sqrt())
        }
        GraphProfile::Sine { omega } => {
            if !(*omega > 0.0) {
                return Err(invalid("sine frequency must be positive"));
            }
            let a = lip / omega;
            let (h, s) = ts.iter().map(|&t| (a * (omega * t).sin(), lip * (omega * t).cos())).unzip();
            let speed = |t: f64| (1.0 + (lip * (omega * t).cos()).powi(2)).sqrt();
            (h, s, simpson(speed, 0.0, length, 200_000))
        }
        GraphProfile::Random { pieces } => {
            if *pieces == 0 {
                return Err(invalid("random graph needs at least one piece"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let slopes: Vec<f64> = (0..*pieces).map(|_| rng.gen_range(-lip..=lip)).collect();
            let dt = length / *pieces as f64;
            let mut knots = vec![0.0];
            for s in &slopes {
                knots.push(knots.last().unwrap() + s * dt);
            }
            let (h, s) = ts
                .iter()
                .map(|&t| {
                    let i = ((t / dt) as usize).min(pieces - 1);
                    (knots[i] + slopes[i] * (t - i as f64 * dt), slopes[i])
                })
                .unzip();
            let total = slopes.iter().map(|s| dt * (1.0 + s * s).sqrt()).sum();
            (h, s, total)
        }
        GraphProfile::Samples { heights } => {
            check_lipschitz(heights, length, lip, seed)?;
            let k = heights.len() - 1;
            let dt = length / k as f64;
            let (h, s) = ts
                .iter()
                .map(|&t| {
                    let i = ((t / dt) as usize).min(k - 1);
                    let slope = (heights[i + 1] - heights[i]) / dt;
                    (heights[i] + slope * (t - i as f64 * dt), slope)
                })
                .unzip();
            let total = heights.windows(2).map(|w| (dt * dt + (w[1] - w[0]).powi(2)).sqrt()).sum();
            (h, s, total)
        }
    };
    let speeds: Vec<f64> = slopes.iter().map(|s| (1.0 + s * s).sqrt()).collect();
    let sum: f64 = speeds.iter().sum();
    let weights = speeds.iter().map(|v| total * v / sum).collect();
    let coords = ts.iter().zip(&heights).flat_map(|(t, h)| [*t, *h]).collect();
    let split = split && matches!(profile, GraphProfile::Sawtooth { .. });
    let labels = slopes
        .iter()
        .map(|s| Some(if split && *s < 0.0 { 1 } else { 0 }))
        .collect();
    Ok((coords, weights, Some(labels)))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Centers of the `4^g` generation-`g` squares, each of mass `4^{-g}`.
fn cantor4(g: u32) -> Result<Raw> {
    if !(2..=8).contains(&g) {
        return Err(invalid(format!("cantor4 generation {g} must lie in 2..=8")));
    }
    let mut pts = vec![(0.0f64, 0.0f64)];
    let mut side = 1.0;
    for _ in 0..g {
        let s = side / 4.0;
        pts = pts
            .into_iter()
            .flat_map(|(x, y)| {
                [(x, y), (x + 3.0 * s, y), (x, y + 3.0 * s), (x + 3.0 * s, y + 3.0 * s)]
            })
            .collect();
        side = s;
    }
    let coords = pts.iter().flat_map(|(x, y)| [x + side / 2.0, y + side / 2.0]).collect();
    Ok((coords, vec![side; pts.len()], None))
}

fn composite(parts: &[GeometrySpec]) -> Result<Raw> {
    if parts.is_empty() {
        return Err(invalid("composite geometry needs at least one part"));
    }
    let (mut coords, mut weights, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (k, part) in parts.iter().enumerate() {
        let (c, w, l) = raw(part)?;
        let base = k as u32 * 16;
        labels.extend(match l {
            Some(l) => l.into_iter().map(|x| x.map(|v| base + v)).collect::<Vec<_>>(),
            None => vec![None; w.len()],
        });
        coords.extend(c);
        weights.extend(w);
    }
    Ok((coords, weights, Some(labels)))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CubeWitness {
    pub cube: usize,
    pub label: Option<u32>,
    pub eta: f64,
}

/// Per-cube choice of the labelled Lipschitz piece carrying most mass.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BpsfeWitness {
    pub per_cube: Vec<CubeWitness>,
    pub min_eta: f64,
}

pub fn big_pieces_witness(e: &AdrSet, lattice: &DyadicLattice) -> BpsfeWitness {
    let w = e.weights();
    let labels = e.labels();
    let per_cube: Vec<CubeWitness> = lattice
        .cubes()
        .iter()
        .map(|q| {
            let mut mass: Vec<(u32, f64)> = Vec::new();
            if let Some(labels) = labels {
                for &i in &q.members {
                    if let Some(l) = labels[i] {
                        match mass.iter_mut().find(|(k, _)| *k == l) {
                            Some(slot) => slot.1 += w[i],
                            None => mass.push((l, w[i])),
                        }
                    }
                }
            }
            mass.sort_by_key(|(k, _)| *k);
            let best = mass
                .iter()
                .fold(None::<(u32, f64)>, |acc, &(k, m)| match acc {
                    Some((_, bm)) if bm >= m => acc,
                    _ => Some((k, m)),
                });
            match best {
                Some((label, m)) => CubeWitness {
                    cube: q.id,
                    label: Some(label),
                    eta: m / q.mass,
                },
                None => CubeWitness {
                    cube: q.id,
                    label: None,
                    eta: 0.0,
                },
            }
        })
        .collect();
    let min_eta = per_cube.iter().map(|c| c.eta).fold(f64::INFINITY, f64::min);
    BpsfeWitness { per_cube, min_eta }
}
