use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::qm::AdrSet;

static NEXT_LATTICE_ID: AtomicU64 = AtomicU64::new(1);

/// One Christ-type cube: the cloud points whose generation-`k` ancestor is
/// the net point `center_index`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DyadicCube {
    pub id: usize,
    pub generation: i32,
    pub center_index: usize,
    pub members: Vec<usize>,
    pub side: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub mass: f64,
    #[serde(skip)]
    pub(crate) lattice_id: u64,
}

impl DyadicCube {
    pub fn lattice_id(&self) -> u64 {
        self.lattice_id
    }
}

/// Nested partitions of the cloud, one per generation `kappa_E ..= kappa_E + depth`.
#[derive(Debug, Clone)]
pub struct DyadicLattice {
    id: u64,
    cubes: Vec<DyadicCube>,
    /// cube ids per generation, coarsest first
    generations: Vec<Vec<usize>>,
    /// per generation: cloud index -> cube id
    owner: Vec<Vec<usize>>,
    kappa_e: i32,
    c_in: f64,
    c_out: f64,
    truncated: bool,
}

/// `kappa_E` with `2^{-kappa_E - 1} < diam <= 2^{-kappa_E}`.
pub fn kappa_for_diam(diam: f64) -> i32 {
    let mut k = (-diam.log2()).floor() as i32;
    // repair rounding at exact powers of two
    while 2f64.powi(-k) < diam {
        k -= 1;
    }
    while 2f64.powi(-k - 1) >= diam {
        k += 1;
    }
    k
}

/// Builds the lattice from greedy nested nets.
///
/// Generation `kappa_E` is the whole cloud centered at index 0. Each finer net
/// extends the coarser one greedily in cloud order with separation `2^{-k}`;
/// every net point's parent is its nearest coarser net point (lowest index on
/// ties); cloud points join the nearest finest-level net point and inherit
/// that point's ancestry, so nesting and partition hold by construction.
///
/// Generations are truncated (with the flag raised) once every cube is a
/// singleton.
pub fn build_lattice(e: &AdrSet, depth: u32) -> Result<DyadicLattice> {
    let n = e.len();
    if n == 0 {
        return Err(invalid("cannot build a lattice on an empty cloud"));
    }
    let space = e.space();
    let kappa = kappa_for_diam(e.diam());
    let dist = |i: usize, j: usize| space.rho_sharp(e.point(i), e.point(j));

    // nets[g] = net point indices for generation kappa + g, in insertion order
    let mut nets: Vec<Vec<usize>> = vec![vec![0]];
    // parent_net[g][t] = position in nets[g-1] of the parent of nets[g][t]
    let mut parent_pos: Vec<Vec<usize>> = vec![vec![]];
    let mut truncated = false;
    for g in 1..=depth as usize {
        let prev = &nets[g - 1];
        if prev.len() == n {
            truncated = true;
            break;
        }
        let r = 2f64.powi(-(kappa + g as i32));
        let mut net = prev.clone();
        let mut in_net = vec![false; n];
        for &i in prev {
            in_net[i] = true;
        }
        for i in 0..n {
            if in_net[i] {
                continue;
            }
            if net.iter().all(|&j| dist(i, j) >= r) {
                net.push(i);
                in_net[i] = true;
            }
        }
        let parents: Vec<usize> = net
            .par_iter()
            .map(|&i| nearest_in(prev, i, &dist).0)
            .collect();
        nets.push(net);
        parent_pos.push(parents);
    }
    let gens = nets.len();

    // leaf assignment: nearest finest net point
    let finest = &nets[gens - 1];
    let leaf_of: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|i| nearest_in(finest, i, &dist).0)
        .collect();

    // ancestry of every net position at every coarser generation
    // anc[g][t] for t in nets[gens-1] positions: position in nets[g]
    let mut anc: Vec<Vec<usize>> = vec![Vec::new(); gens];
    anc[gens - 1] = (0..finest.len()).collect();
    for g in (1..gens).rev() {
        anc[g - 1] = anc[g].iter().map(|&t| parent_pos[g][t]).collect();
    }

    let id = NEXT_LATTICE_ID.fetch_add(1, Ordering::Relaxed);
    let mut cubes = Vec::new();
    let mut generations = Vec::with_capacity(gens);
    let mut owner = Vec::with_capacity(gens);
    // cube id of each net position, per generation
    let mut cube_of_pos: Vec<Vec<Option<usize>>> = Vec::with_capacity(gens);
    for g in 0..gens {
        let k = kappa + g as i32;
        let side = 2f64.powi(-k);
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nets[g].len()];
        for i in 0..n {
            members[anc[g][leaf_of[i]]].push(i);
        }
        let mut ids = Vec::new();
        let mut pos_ids = vec![None; nets[g].len()];
        let mut own = vec![usize::MAX; n];
        for (t, mem) in members.into_iter().enumerate() {
            if mem.is_empty() {
                continue;
            }
            let cid = cubes.len();
            let parent = if g == 0 {
                None
            } else {
                cube_of_pos[g - 1][parent_pos[g][t]]
            };
            let mass = mem.iter().map(|&i| e.weights()[i]).sum();
            for &i in &mem {
                own[i] = cid;
            }
            cubes.push(DyadicCube {
                id: cid,
                generation: k,
                center_index: nets[g][t],
                members: mem,
                side,
                parent,
                children: Vec::new(),
                mass,
                lattice_id: id,
            });
            if let Some(p) = parent {
                cubes[p].children.push(cid);
            }
            ids.push(cid);
            pos_ids[t] = Some(cid);
        }
        generations.push(ids);
        owner.push(own);
        cube_of_pos.push(pos_ids);
    }

    let (c_in, c_out) = containment_constants(e, &cubes, &owner, kappa);
    if truncated {
        log::warn!("lattice truncated at generation {}: all cubes are singletons", kappa + gens as i32 - 1);
    }
    Ok(DyadicLattice {
        id,
        cubes,
        generations,
        owner,
        kappa_e: kappa,
        c_in,
        c_out,
        truncated,
    })
}

fn nearest_in(set: &[usize], i: usize, dist: &impl Fn(usize, usize) -> f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (t, &j) in set.iter().enumerate() {
        let d = dist(i, j);
        if d < best.1 {
            best = (t, d);
        }
    }
    best
}

/// `C_out`: max over cubes of `rho#(center, y) / l(Q)` for members `y`.
/// `C_in`: min over cubes of `rho#(center, z) / l(Q)` for non-members `z`.
fn containment_constants(e: &AdrSet, cubes: &[DyadicCube], owner: &[Vec<usize>], kappa: i32) -> (f64, f64) {
    let space = e.space();
    cubes
        .par_iter()
        .map(|q| {
            let c = e.point(q.center_index);
            let out = q
                .members
                .iter()
                .map(|&y| space.rho_sharp(c, e.point(y)))
                .fold(0.0, f64::max)
                / q.side;
            let g = (q.generation - kappa) as usize;
            let own = &owner[g];
            // nearest non-member; search the ball of radius 2 * C_out-ish first
            let ball = e.ball(c, 4.0 * q.side);
            let mut inner = ball
                .iter()
                .filter(|&&z| own[z] != q.id)
                .map(|&z| space.rho_sharp(c, e.point(z)))
                .fold(f64::INFINITY, f64::min);
            if !inner.is_finite() && ball.len() < e.len() {
                inner = 4.0 * q.side;
            }
            (inner / q.side, out)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

impl DyadicLattice {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn kappa_e(&self) -> i32 {
        self.kappa_e
    }

    /// Finest generation present.
    pub fn finest_generation(&self) -> i32 {
        self.kappa_e + self.generations.len() as i32 - 1
    }

    /// Number of cloud points the lattice partitions.
    pub fn cloud_len(&self) -> usize {
        self.owner[0].len()
    }

    pub fn depth(&self) -> u32 {
        self.generations.len() as u32 - 1
    }

    pub fn c_in(&self) -> f64 {
        self.c_in
    }

    pub fn c_out(&self) -> f64 {
        self.c_out
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn cube(&self, id: usize) -> &DyadicCube {
        &self.cubes[id]
    }

    pub fn root(&self) -> &DyadicCube {
        &self.cubes[self.generations[0][0]]
    }

    /// Cube ids at generation `k` (empty outside the lattice range).
    pub fn generation(&self, k: i32) -> &[usize] {
        let g = k - self.kappa_e;
        if g < 0 || g as usize >= self.generations.len() {
            return &[];
        }
        &self.generations[g as usize]
    }

    /// Cube of generation `k` containing cloud point `i`.
    pub fn owner(&self, k: i32, i: usize) -> Option<usize> {
        let g = k - self.kappa_e;
        if g < 0 {
            return None;
        }
        self.owner.get(g as usize).map(|o| o[i])
    }

    pub fn contains_cube(&self, q: &DyadicCube) -> bool {
        q.lattice_id == self.id && self.cubes.get(q.id).is_some_and(|c| c.generation == q.generation)
    }

    /// Whether `a` is `q` or one of its descendants.
    pub fn is_descendant(&self, a: usize, q: usize) -> bool {
        let (ca, cq) = (&self.cubes[a], &self.cubes[q]);
        ca.generation >= cq.generation && self.owner(cq.generation, ca.members[0]) == Some(q)
    }

    /// All descendants of `q` (including `q`) down to generation `q.gen + levels`.
    pub fn descendants(&self, q: usize, levels: u32) -> Vec<usize> {
        let mut out = vec![q];
        let mut frontier = vec![q];
        for _ in 0..levels {
            let next: Vec<usize> = frontier
                .iter()
                .flat_map(|&c| self.cubes[c].children.iter().copied())
                .collect();
            if next.is_empty() {
                break;
            }
            out.extend_from_slice(&next);
            frontier = next;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qm::QuasiMetricSpace;

    fn cloud(points: &[[f64; 2]]) -> AdrSet {
        let coords = points.iter().flat_map(|p| p.iter().copied()).collect();
        AdrSet::new(QuasiMetricSpace::euclidean(2), coords, vec![1.0; points.len()], 1.0).unwrap()
    }

    #[test]
    fn kappa_brackets_diam() {
        for &d in &[0.3, 0.5, 0.9375, 1.0, 1.5, 2.0, 3.7, 1e-3] {
            let k = kappa_for_diam(d);
            assert!(2f64.powi(-k - 1) < d && d <= 2f64.powi(-k), "{d} {k}");
        }
    }

    #[test]
    fn sixteen_points_single_root() {
        let pts: Vec<[f64; 2]> = (0..16).map(|i| [i as f64 / 16.0, 0.0]).collect();
        let lat = build_lattice(&cloud(&pts), 3).unwrap();
        assert_eq!(lat.kappa_e(), 0);
        assert_eq!(lat.generation(0).len(), 1);
        assert_eq!(lat.root().members.len(), 16);
    }

    #[test]
    fn two_points_split_at_generation_one() {
        let lat = build_lattice(&cloud(&[[0.0, 0.0], [1.0, 0.0]]), 2).unwrap();
        assert_eq!(lat.kappa_e(), 0);
        assert_eq!(lat.generation(0).len(), 1);
        assert_eq!(lat.generation(1).len(), 2);
        assert!(lat.truncated());
    }

    #[test]
    fn partition_nesting_and_mass() {
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|i| {
                let t = i as f64 / 200.0 * std::f64::consts::TAU;
                [t.cos(), (2.0 * t).sin() * 0.5]
            })
            .collect();
        let e = cloud(&pts);
        let lat = build_lattice(&e, 6).unwrap();
        for k in lat.kappa_e()..=lat.finest_generation() {
            let mut seen = vec![0; e.len()];
            let mut mass = 0.0;
            for &c in lat.generation(k) {
                let q = lat.cube(c);
                mass += q.mass;
                for &i in &q.members {
                    seen[i] += 1;
                }
                if let Some(p) = q.parent {
                    let parent = lat.cube(p);
                    assert_eq!(parent.generation, k - 1);
                    assert!(q.members.iter().all(|i| parent.members.contains(i)));
                }
                let child_total: usize = q.children.iter().map(|&ch| lat.cube(ch).members.len()).sum();
                if !q.children.is_empty() {
                    assert_eq!(child_total, q.members.len());
                }
            }
            assert!(seen.iter().all(|&s| s == 1));
            assert!((mass - e.total_mass()).abs() < 1e-9);
        }
        assert!(lat.c_out() <= 2.0 + 1e-12);
        assert!(lat.c_in() > 0.0);
    }
}
