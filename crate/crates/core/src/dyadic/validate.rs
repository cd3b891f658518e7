use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::lattice::DyadicLattice;
use crate::dyadic::whitney::{all_tents, tent, WhitneyCover, WHITNEY_RATIO};
use crate::error::Result;
use crate::qm::AdrSet;

/// Outcome of an exhaustive structural check; `violations` is empty on success.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct StructureCheck {
    pub checked: usize,
    pub violations: Vec<String>,
}

impl StructureCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn fail(&mut self, msg: String) {
        // keep reports readable on badly broken inputs
        if self.violations.len() < 64 {
            self.violations.push(msg);
        }
    }
}

/// Partition, nesting, mass and containment for every cube.
pub fn validate_lattice(e: &AdrSet, lattice: &DyadicLattice) -> StructureCheck {
    let mut out = StructureCheck::default();
    let space = e.space();
    let w = e.weights();
    let cubes = lattice.cubes();
    let tol = 1e-12;
    for k in lattice.kappa_e()..=lattice.finest_generation() {
        let mut seen = vec![0u32; e.len()];
        for &q in lattice.generation(k) {
            for &i in &cubes[q].members {
                seen[i] += 1;
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            out.fail(format!("generation {k}: point {i} lies in {} cubes", seen[i]));
        }
    }
    for q in cubes {
        out.checked += 1;
        if q.members.is_empty() {
            out.fail(format!("cube {} is empty", q.id));
            continue;
        }
        if (q.side - 2f64.powi(-q.generation)).abs() > tol * q.side {
            out.fail(format!("cube {}: side {} is not 2^-{}", q.id, q.side, q.generation));
        }
        let mass: f64 = q.members.iter().map(|&i| w[i]).sum();
        if !(q.mass > 0.0) || (mass - q.mass).abs() > tol * mass.max(1.0) {
            out.fail(format!("cube {}: mass {} vs member sum {mass}", q.id, q.mass));
        }
        match q.parent {
            None if q.generation != lattice.kappa_e() => {
                out.fail(format!("cube {} below the root has no parent", q.id));
            }
            Some(p) => {
                let parent = &cubes[p];
                if parent.generation != q.generation - 1 || !parent.children.contains(&q.id) {
                    out.fail(format!("cube {}: inconsistent parent {p}", q.id));
                }
                let own: HashSet<usize> = parent.members.iter().copied().collect();
                if q.members.iter().any(|i| !own.contains(i)) {
                    out.fail(format!("cube {} is not contained in its parent {p}", q.id));
                }
            }
            None => {}
        }
        if !q.children.is_empty() {
            let mut union: Vec<usize> = q.children.iter().flat_map(|&c| cubes[c].members.iter().copied()).collect();
            union.sort_unstable();
            let mut mine = q.members.clone();
            mine.sort_unstable();
            if union != mine {
                out.fail(format!("children of cube {} do not partition it", q.id));
            }
        }
        let c = e.point(q.center_index);
        let outer = lattice.c_out() * q.side * (1.0 + tol);
        if q.members.iter().any(|&y| space.rho_sharp(c, e.point(y)) > outer) {
            out.fail(format!("cube {}: member outside B(center, C_out l(Q))", q.id));
        }
        let inner = lattice.c_in() * q.side * (1.0 - tol);
        let own = q.members.iter().copied().collect::<HashSet<_>>();
        if e.ball(c, inner).iter().any(|i| !own.contains(i)) {
            out.fail(format!("cube {}: B(center, C_in l(Q)) leaves the cube", q.id));
        }
    }
    if !(lattice.c_in() > 0.0) {
        out.fail(format!("C_in = {} is not positive", lattice.c_in()));
    }
    out
}

/// Dyadic key `(log2 side, integer corner)` of a cell.
fn cell_key(center: &[f64], side: f64) -> (i32, Vec<i64>) {
    let j = side.log2().round() as i32;
    let s = 2f64.powi(j);
    (j, center.iter().map(|c| ((c - s / 2.0) / s).round() as i64).collect())
}

/// Whitney window, pairwise disjointness, completeness on `samples` random
/// ambient points, and (when assigned to `lattice`) assignment distance and
/// tent monotonicity for every parent/child pair.
pub fn validate_cover(
    e: &AdrSet,
    cover: &WhitneyCover,
    lattice: Option<&DyadicLattice>,
    samples: usize,
    seed: u64,
) -> Result<StructureCheck> {
    let mut out = StructureCheck::default();
    let cells = cover.cells();
    let m = cover.ambient_dim();
    let hd = (m as f64).sqrt() / 2.0;
    let mut keys = HashSet::with_capacity(cells.len());
    let mut exps = HashSet::new();
    for (i, c) in cells.iter().enumerate() {
        out.checked += 1;
        let (de, _) = e.nearest(&c.center);
        if (de - c.dist_to_e).abs() > 1e-12 * de.max(1.0) {
            out.fail(format!("cell {i}: stored distance {} vs {de}", c.dist_to_e));
        }
        if !(c.side <= c.dist_to_e - c.side * hd * (1.0 - 1e-12)) || c.dist_to_e > WHITNEY_RATIO * c.side {
            out.fail(format!("cell {i}: side {} and distance {} break the window", c.side, c.dist_to_e));
        }
        let key = cell_key(&c.center, c.side);
        exps.insert(key.0);
        if !keys.insert(key) {
            out.fail(format!("cell {i} is duplicated"));
        }
    }
    // two dyadic boxes overlap only if one is an ancestor of the other
    let mut exps: Vec<i32> = exps.into_iter().collect();
    exps.sort_unstable();
    for (i, c) in cells.iter().enumerate() {
        let (j, corner) = cell_key(&c.center, c.side);
        for &jj in exps.iter().filter(|&&jj| jj > j) {
            let f = 1i64 << (jj - j);
            let anc: Vec<i64> = corner.iter().map(|v| v.div_euclid(f)).collect();
            if keys.contains(&(jj, anc)) {
                out.fail(format!("cell {i} overlaps a coarser cell"));
            }
        }
    }
    if samples > 0 {
        let r = cover.truncation_radius();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for i in 0..e.len() {
            for (k, &v) in e.point(i).iter().enumerate() {
                lo[k] = lo[k].min(v - r);
                hi[k] = hi[k].max(v + r);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // half the samples near E, where the cells are small
        for s in 0..samples {
            let x: Vec<f64> = if s % 2 == 0 {
                (0..m).map(|k| rng.gen_range(lo[k]..hi[k])).collect()
            } else {
                let p = e.point(rng.gen_range(0..e.len()));
                let h = 10f64.powf(rng.gen_range(-1.0..1.0)) * cover.eps_min();
                p.iter().map(|v| v + rng.gen_range(-h..h)).collect()
            };
            let d = e.delta(&x);
            if d < cover.eps_min() || d > r {
                continue;
            }
            let hits = cells.iter().filter(|c| c.contains(&x)).count();
            if hits != 1 {
                out.fail(format!("point {x:?} at distance {d} lies in {hits} cells"));
            }
        }
    }
    if let Some(lattice) = lattice {
        let root = lattice.root();
        for (i, (c, a)) in cells.iter().zip(cover.assignment()).enumerate() {
            match a {
                Some(q) => {
                    let q = lattice.cube(*q);
                    if !q.members.contains(&c.nearest) || c.dist_to_e > cover.c_assign() * q.side {
                        out.fail(format!("cell {i}: assignment to cube {} is too far", q.id));
                    }
                }
                None if c.dist_to_e <= cover.c_assign() * root.side => {
                    out.fail(format!("cell {i} within reach of the root is unassigned"));
                }
                None => {}
            }
        }
        let tents = all_tents(cover, lattice)?;
        for q in lattice.cubes() {
            let direct = tent(q, cover, lattice)?;
            if direct.cells != tents[q.id] {
                out.fail(format!("cube {}: tent disagrees with the sweep", q.id));
            }
            if let Some(p) = q.parent {
                let parent: HashSet<usize> = tents[p].iter().copied().collect();
                if tents[q.id].iter().any(|c| !parent.contains(c)) {
                    out.fail(format!("tent of cube {} is not inside its parent's", q.id));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{build_lattice, whitney_cover};
    use crate::qm::QuasiMetricSpace;

    fn segment(n: usize) -> AdrSet {
        let coords = (0..n).flat_map(|i| [(i as f64 + 0.5) / n as f64, 0.0]).collect();
        AdrSet::new(QuasiMetricSpace::euclidean(2), coords, vec![1.0 / n as f64; n], 1.0).unwrap()
    }

    #[test]
    fn clean_structures_pass() {
        let e = segment(128);
        let lat = build_lattice(&e, 4).unwrap();
        assert!(validate_lattice(&e, &lat).ok());
        let mut cover = whitney_cover(&e, 4.0 * e.diam(), 0.02).unwrap();
        cover.assign(&lat, 8.0).unwrap();
        let r = validate_cover(&e, &cover, Some(&lat), 500, 1).unwrap();
        assert!(r.ok(), "{:?}", r.violations);
        assert_eq!(r.checked, cover.len());
    }

    #[test]
    fn cover_of_another_cloud_is_flagged() {
        let e = segment(64);
        let shifted = e.dilate(1.5).unwrap();
        let cover = whitney_cover(&e, 4.0 * shifted.diam(), 0.05).unwrap();
        let r = validate_cover(&shifted, &cover, None, 0, 1).unwrap();
        assert!(!r.ok());
    }
}
