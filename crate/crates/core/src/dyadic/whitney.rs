use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::lattice::{DyadicCube, DyadicLattice};
use crate::error::{invalid, Error, Result};
use crate::qm::AdrSet;

/// Upper end of the Whitney window: accepted cells satisfy
/// `side <= dist(cell, E)` and `delta_E(center) <= WHITNEY_RATIO * side`.
pub const WHITNEY_RATIO: f64 = 6.0;

pub const DEFAULT_C_ASSIGN: f64 = 8.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WhitneyCell {
    pub center: Vec<f64>,
    pub side: f64,
    /// Lebesgue measure `side^m`
    pub measure: f64,
    /// `delta_E` at the center
    pub dist_to_e: f64,
    /// index of a nearest cloud point to the center
    pub nearest: usize,
}

impl WhitneyCell {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.center
            .iter()
            .zip(x)
            .all(|(c, xi)| *xi >= c - self.side / 2.0 && *xi < c + self.side / 2.0)
    }
}

/// Maximal dyadic boxes of `R^m \ E` with size comparable to their distance
/// to `E`, restricted to `eps_min <= delta_E <= truncation_radius`.
#[derive(Debug, Clone)]
pub struct WhitneyCover {
    ambient_dim: usize,
    cells: Vec<WhitneyCell>,
    assignment: Vec<Option<usize>>,
    lattice_id: Option<u64>,
    truncation_radius: f64,
    eps_min: f64,
    c_assign: f64,
}

/// Default truncation radius `4 diam(E)`.
pub fn default_truncation(e: &AdrSet) -> f64 {
    4.0 * e.diam()
}

/// Whitney cover of the Euclidean complement of the cloud.
///
/// A dyadic box (grid anchored at the origin) with side `s`, center `c` is
/// accepted when `s <= delta_E(c) - s sqrt(m)/2`, the half-diagonal correction
/// turning the center distance into a lower bound for the box distance.
/// Boxes entirely beyond `truncation_radius` or entirely inside the
/// `eps_min`-layer are dropped; everything else is split into `2^m` children.
pub fn whitney_cover(e: &AdrSet, truncation_radius: f64, eps_min: f64) -> Result<WhitneyCover> {
    if !e.space().is_euclidean() {
        return Err(invalid("Whitney covers need the Euclidean ambient"));
    }
    if !(eps_min > 0.0) {
        return Err(invalid("eps_min must be positive"));
    }
    if eps_min >= truncation_radius {
        return Err(invalid(format!(
            "eps_min = {eps_min} must be smaller than truncation_radius = {truncation_radius}"
        )));
    }
    if truncation_radius < e.diam() * (1.0 - 1e-12) {
        return Err(invalid(format!(
            "truncation_radius = {truncation_radius} must be at least diam(E) = {}",
            e.diam()
        )));
    }
    let m = e.ambient_dim();
    let r = truncation_radius;
    let top = 2f64.powi(r.log2().ceil() as i32);
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for i in 0..e.len() {
        for (k, &c) in e.point(i).iter().enumerate() {
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    let ranges: Vec<(i64, i64)> = (0..m)
        .map(|k| (((lo[k] - r) / top).floor() as i64, ((hi[k] + r) / top).floor() as i64))
        .collect();
    let mut roots: Vec<Vec<f64>> = vec![Vec::new()];
    for &(a, b) in &ranges {
        roots = roots
            .into_iter()
            .flat_map(|prefix| {
                (a..=b).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(i as f64 * top);
                    p
                })
            })
            .collect();
    }
    let half_diag_factor = (m as f64).sqrt() / 2.0;
    let cells: Vec<WhitneyCell> = roots
        .into_par_iter()
        .flat_map_iter(|corner| {
            let mut out = Vec::new();
            let mut stack = vec![(corner, top)];
            while let Some((corner, s)) = stack.pop() {
                let center: Vec<f64> = corner.iter().map(|c| c + s / 2.0).collect();
                let (delta, nearest) = e.nearest(&center);
                let hd = s * half_diag_factor;
                let lower = (delta - hd).max(0.0);
                if lower > r || delta + hd < eps_min {
                    continue;
                }
                if s <= lower {
                    out.push(WhitneyCell {
                        measure: s.powi(m as i32),
                        center,
                        side: s,
                        dist_to_e: delta,
                        nearest,
                    });
                    continue;
                }
                let h = s / 2.0;
                // children in reverse lexicographic order so the DFS pops them in order
                for bits in (0..(1usize << m)).rev() {
                    let child: Vec<f64> = corner
                        .iter()
                        .enumerate()
                        .map(|(k, c)| if bits >> k & 1 == 1 { c + h } else { *c })
                        .collect();
                    stack.push((child, h));
                }
            }
            out
        })
        .collect();
    let n = cells.len();
    Ok(WhitneyCover {
        ambient_dim: m,
        cells,
        assignment: vec![None; n],
        lattice_id: None,
        truncation_radius,
        eps_min,
        c_assign: DEFAULT_C_ASSIGN,
    })
}

impl WhitneyCover {
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn cells(&self) -> &[WhitneyCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }

    pub fn eps_min(&self) -> f64 {
        self.eps_min
    }

    pub fn c_assign(&self) -> f64 {
        self.c_assign
    }

    pub fn lattice_id(&self) -> Option<u64> {
        self.lattice_id
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn finest_side(&self) -> f64 {
        self.cells.iter().map(|c| c.side).fold(f64::INFINITY, f64::min)
    }

    /// Index of the cell containing `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(x))
    }

    /// Assigns each cell to a cube defining the Whitney regions `U_Q`.
    ///
    /// The target generation is the one whose side is nearest (in log scale)
    /// to the cell side; the cube is the one owning the cell's nearest cloud
    /// point. When `delta_E(center) > c_assign * l(Q)` the cell moves to the
    /// parent, up to the root; cells too far even for the root stay unassigned.
    pub fn assign(&mut self, lattice: &DyadicLattice, c_assign: f64) -> Result<()> {
        if !(c_assign > 0.0) {
            return Err(invalid("C_assign must be positive"));
        }
        let (k0, k1) = (lattice.kappa_e(), lattice.finest_generation());
        self.assignment = self
            .cells
            .par_iter()
            .map(|cell| {
                let target = (-cell.side.log2()).round() as i32;
                let mut k = target.clamp(k0, k1);
                loop {
                    let q = lattice.owner(k, cell.nearest)?;
                    if cell.dist_to_e <= c_assign * lattice.cube(q).side {
                        return Some(q);
                    }
                    if k == k0 {
                        return None;
                    }
                    k -= 1;
                }
            })
            .collect();
        self.lattice_id = Some(lattice.id());
        self.c_assign = c_assign;
        Ok(())
    }

    fn check_lattice(&self, q: &DyadicCube, lattice: &DyadicLattice) -> Result<()> {
        if !lattice.contains_cube(q) || self.lattice_id != Some(lattice.id()) {
            return Err(Error::ForeignCube);
        }
        Ok(())
    }

    /// Cells of `U_Q` (assigned directly to `q`).
    pub fn region(&self, q: &DyadicCube, lattice: &DyadicLattice) -> Result<Vec<usize>> {
        self.check_lattice(q, lattice)?;
        Ok((0..self.cells.len())
            .filter(|&c| self.assignment[c] == Some(q.id))
            .collect())
    }

    /// Per-cube lists of directly assigned cells, indexed by cube id.
    pub fn regions(&self, lattice: &DyadicLattice) -> Result<Vec<Vec<usize>>> {
        if self.lattice_id != Some(lattice.id()) {
            return Err(Error::ForeignCube);
        }
        let mut out = vec![Vec::new(); lattice.cubes().len()];
        for (c, a) in self.assignment.iter().enumerate() {
            if let Some(q) = a {
                out[*q].push(c);
            }
        }
        Ok(out)
    }
}

/// The Carleson tent `T_E(Q)`: cells assigned to `Q` or any descendant.
#[derive(Debug, Clone, PartialEq)]
pub struct Tent {
    pub cube: usize,
    pub cells: Vec<usize>,
}

pub fn tent(q: &DyadicCube, cover: &WhitneyCover, lattice: &DyadicLattice) -> Result<Tent> {
    cover.check_lattice(q, lattice)?;
    let cells = (0..cover.cells.len())
        .filter(|&c| cover.assignment[c].is_some_and(|a| lattice.is_descendant(a, q.id)))
        .collect();
    Ok(Tent { cube: q.id, cells })
}

/// Tents of every cube at once, indexed by cube id; cells sorted.
pub fn all_tents(cover: &WhitneyCover, lattice: &DyadicLattice) -> Result<Vec<Vec<usize>>> {
    let regions = cover.regions(lattice)?;
    let cubes = lattice.cubes();
    let mut tents: Vec<Vec<usize>> = regions.clone();
    // cubes are stored coarse to fine, so a reverse sweep pushes children up
    for id in (0..cubes.len()).rev() {
        if let Some(p) = cubes[id].parent {
            let child = std::mem::take(&mut tents[id]);
            tents[p].extend_from_slice(&child);
            tents[id] = child;
        }
    }
    for t in &mut tents {
        t.sort_unstable();
    }
    Ok(tents)
}

/// Cells whose centers `y` satisfy `rho#(x, y) < (1 + kappa) delta_E(y)`.
pub fn cone(x: &[f64], kappa: f64, cover: &WhitneyCover, e: &AdrSet) -> Vec<usize> {
    let space = e.space();
    cover
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| space.rho_sharp(x, &c.center) < (1.0 + kappa) * c.dist_to_e)
        .map(|(i, _)| i)
        .collect()
}

/// Cone membership for every cloud point: `lists[i]` holds the (sorted) cells
/// of `Gamma_kappa(x_i)`.
#[derive(Debug, Clone)]
pub struct ConeIndex {
    pub kappa: f64,
    pub lists: Vec<Vec<usize>>,
}

impl ConeIndex {
    pub fn build(e: &AdrSet, cover: &WhitneyCover, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(invalid("cone aperture kappa must be positive"));
        }
        let hits: Vec<Vec<usize>> = cover
            .cells
            .par_iter()
            .map(|c| e.ball(&c.center, (1.0 + kappa) * c.dist_to_e))
            .collect();
        let mut lists = vec![Vec::new(); e.len()];
        for (cell, pts) in hits.into_iter().enumerate() {
            for i in pts {
                lists[i].push(cell);
            }
        }
        Ok(Self { kappa, lists })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::lattice::build_lattice;
    use crate::qm::QuasiMetricSpace;

    fn segment(n: usize, a: f64, b: f64) -> AdrSet {
        let len = b - a;
        let coords = (0..n)
            .flat_map(|i| [a + (i as f64 + 0.5) * len / n as f64, 0.0])
            .collect();
        AdrSet::new(QuasiMetricSpace::euclidean(2), coords, vec![len / n as f64; n], 1.0).unwrap()
    }

    #[test]
    fn rule_on_axis_examples() {
        // E = x-axis stand-in: long dense segment
        let e = segment(4000, -20.0, 20.0);
        let ok = |s: f64, cy: f64| {
            let delta = e.delta(&[0.5 * s, cy]);
            let lower = delta - s * 2f64.sqrt() / 2.0;
            s <= lower && delta <= WHITNEY_RATIO * s
        };
        assert!(ok(1.0, 2.5));
        assert!(!ok(1.0, 8.5));
        assert!(ok(2.0, 9.0));
    }

    #[test]
    fn cells_obey_window_and_are_disjoint() {
        let e = segment(256, 0.0, 1.0);
        let cover = whitney_cover(&e, 4.0, 0.01).unwrap();
        assert!(!cover.is_empty());
        for c in cover.cells() {
            assert!(c.side <= c.dist_to_e && c.dist_to_e <= WHITNEY_RATIO * c.side, "{c:?}");
        }
        // disjointness of dyadic boxes: pairwise no overlap in interiors
        let cells = cover.cells();
        for i in (0..cells.len()).step_by(7) {
            for j in 0..cells.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&cells[i], &cells[j]);
                let overlap = a
                    .center
                    .iter()
                    .zip(&b.center)
                    .all(|(x, y)| (x - y).abs() < (a.side + b.side) / 2.0 - 1e-15);
                assert!(!overlap, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn box_measure_above_segment() {
        let e = segment(512, 0.0, 1.0);
        let eps = 0.01;
        let cover = whitney_cover(&e, 4.0, eps).unwrap();
        let h = 1.0;
        let clipped: f64 = cover
            .cells()
            .iter()
            .map(|c| {
                let x = ((c.center[0] + c.side / 2.0).min(1.0) - (c.center[0] - c.side / 2.0).max(0.0)).max(0.0);
                let y = ((c.center[1] + c.side / 2.0).min(h) - (c.center[1] - c.side / 2.0).max(0.0)).max(0.0);
                x * y
            })
            .sum();
        assert!((clipped - h).abs() <= 2.0 * eps, "{clipped}");
    }

    #[test]
    fn input_gates() {
        let e = segment(64, 0.0, 1.0);
        assert!(whitney_cover(&e, 1.0, 1.0).is_err());
        assert!(whitney_cover(&e, 0.5, 0.01).is_err());
        assert!(whitney_cover(&e, 4.0, 0.0).is_err());
    }

    #[test]
    fn tents_nest_and_root_takes_everything() {
        let e = segment(256, 0.0, 1.0);
        let lat = build_lattice(&e, 5).unwrap();
        let mut cover = whitney_cover(&e, 4.0, 0.01).unwrap();
        assert!(matches!(tent(lat.root(), &cover, &lat), Err(Error::ForeignCube)));
        cover.assign(&lat, DEFAULT_C_ASSIGN).unwrap();
        assert!(cover.assignment().iter().all(|a| a.is_some()));
        let root = tent(lat.root(), &cover, &lat).unwrap();
        assert_eq!(root.cells.len(), cover.len());
        let tents = all_tents(&cover, &lat).unwrap();
        for q in lat.cubes() {
            let t = tent(q, &cover, &lat).unwrap();
            assert_eq!(t.cells, tents[q.id]);
            if let Some(p) = q.parent {
                assert!(t.cells.iter().all(|c| tents[p].binary_search(c).is_ok()));
            }
        }
        let other = build_lattice(&e, 2).unwrap();
        assert!(matches!(tent(other.root(), &cover, &lat), Err(Error::ForeignCube)));
    }

    #[test]
    fn cone_membership_and_monotonicity() {
        let e = segment(2000, -10.0, 10.0);
        let cover = whitney_cover(&e, 40.0, 0.05).unwrap();
        let x = [0.005, 0.0];
        let a = cone(&x, 1.0, &cover, &e);
        let b = cone(&x, 2.0, &cover, &e);
        assert!(a.iter().all(|c| b.contains(c)));
        assert!(!a.is_empty());
        // membership inequality on explicit points
        let inside = |y: [f64; 2]| ((y[0] - x[0]).powi(2) + y[1].powi(2)).sqrt() < 2.0 * e.delta(&y);
        assert!(inside([0.5, 0.4]));
        assert!(!inside([3.0, 0.4]));
        let idx = ConeIndex::build(&e, &cover, 1.0).unwrap();
        let i = e.nearest(&x).1;
        assert_eq!(idx.lists[i], cone(e.point(i), 1.0, &cover, &e));
    }
}
