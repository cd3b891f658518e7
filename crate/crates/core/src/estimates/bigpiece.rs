use serde::{Deserialize, Serialize};

use crate::dyadic::{all_tents, build_lattice, whitney_cover, DyadicCube, DyadicLattice, DEFAULT_C_ASSIGN};
use crate::error::{invalid, Error, Result};
use crate::estimates::family::FamilySpec;
use crate::estimates::sfe::{estimate_sfe_constant, SfeReport};
use crate::estimates::tb::{check_local_tb, TbFamily, TbReport};
use crate::geom::BpsfeWitness;
use crate::operators::{EnergyEvaluator, SurfaceFunction};
use crate::qm::{check_adr, default_centers, default_radii, AdrSet};

/// A subset `E_Q` of the cloud that keeps its indices into `E`.
#[derive(Debug, Clone)]
pub struct AlignedSubset {
    pub indices: Vec<usize>,
    pub set: AdrSet,
    parent_len: usize,
}

impl AlignedSubset {
    pub fn new(e: &AdrSet, indices: &[usize]) -> Result<Self> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if idx.last().is_some_and(|&i| i >= e.len()) {
            return Err(Error::NotAligned);
        }
        Ok(Self {
            set: e.subset(&idx)?,
            indices: idx,
            parent_len: e.len(),
        })
    }

    /// Matches every point of `sub` to an identical cloud point of `e`.
    pub fn align(e: &AdrSet, sub: &AdrSet) -> Result<Self> {
        let mut idx = Vec::with_capacity(sub.len());
        let tol = 1e-12 * (1.0 + e.diam());
        for i in 0..sub.len() {
            let (d, j) = e.nearest(sub.point(i));
            if d > tol {
                return Err(Error::NotAligned);
            }
            idx.push(j);
        }
        Self::new(e, &idx)
    }

    pub fn parent_len(&self) -> usize {
        self.parent_len
    }
}

/// `b_Q = 1_{Q ∩ E_Q}` on `E`.
pub fn bq_from_bigpiece(q: &DyadicCube, piece: &AlignedSubset, e: &AdrSet) -> Result<SurfaceFunction> {
    if piece.parent_len != e.len() || q.members.iter().any(|&i| i >= e.len()) {
        return Err(Error::NotAligned);
    }
    let shared: Vec<usize> = q
        .members
        .iter()
        .copied()
        .filter(|i| piece.indices.binary_search(i).is_ok())
        .collect();
    Ok(SurfaceFunction::indicator(e, &shared))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitReport {
    pub cube: usize,
    pub c_a: f64,
    /// energy over tent cells where `delta_{E_Q}` and `delta_E` are comparable
    pub i_a: f64,
    pub i_not_a: f64,
    pub tent_energy: f64,
    /// `int delta_{E_Q}^{-2 upsilon} delta_E^{2 upsilon-(m-d)}` over `{delta_{E_Q} > C_A delta_E}`
    pub carleson_lhs: f64,
    /// mirrored integrand `delta_E^{-2 upsilon} delta_{E_Q}^{2 upsilon-(m-d)}` over `{delta_{E_Q} < delta_E / C_A}`
    pub companion_lhs: f64,
    pub cells_a: usize,
    pub cells_far: usize,
    pub cells_near: usize,
}

/// Splits the tent energy of `b_Q` by comparability of `delta_E` and
/// `delta_{E_Q}` at cell centers and evaluates the geometric Carleson
/// integrals on the two non-comparable pieces.
pub fn comparability_split(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    q: &DyadicCube,
    piece: &AlignedSubset,
    c_a: f64,
    b_q: &SurfaceFunction,
) -> Result<SplitReport> {
    if !(c_a > 1.0) {
        return Err(invalid(format!("C_A = {c_a} must exceed 1")));
    }
    let e = ev.set();
    if piece.parent_len != e.len() {
        return Err(Error::NotAligned);
    }
    let cover = ev.cover();
    let tent = crate::dyadic::tent(q, cover, lattice)?;
    let quad = ev.quadrature();
    // 0 = comparable, 1 = delta_EQ far above, 2 = delta_EQ far below
    let class: Vec<u8> = tent
        .cells
        .iter()
        .map(|&c| {
            let cell = &cover.cells()[c];
            let de = cell.dist_to_e;
            let dq = piece.set.delta(&cell.center);
            if dq > c_a * de {
                1
            } else if dq * c_a < de {
                2
            } else {
                0
            }
        })
        .collect();
    let nodes = quad.nodes_of_cells(&tent.cells);
    let field = ev.field(&[b_q], Some(&nodes))?;
    let ups = ev.kernel().decay_exp;
    let w = ev.weight_exponent();
    let all = quad.nodes();
    let mut cell_class = std::collections::HashMap::with_capacity(tent.cells.len());
    for (k, &c) in tent.cells.iter().enumerate() {
        cell_class.insert(c, class[k]);
    }
    let mut out = SplitReport {
        cube: q.id,
        c_a,
        i_a: 0.0,
        i_not_a: 0.0,
        tent_energy: 0.0,
        carleson_lhs: 0.0,
        companion_lhs: 0.0,
        cells_a: class.iter().filter(|&&c| c == 0).count(),
        cells_far: class.iter().filter(|&&c| c == 1).count(),
        cells_near: class.iter().filter(|&&c| c == 2).count(),
    };
    for (row, &n) in field.nodes.iter().enumerate() {
        let node = &all[n];
        let v = field.norm(row, 0);
        let energy = v * v * node.delta.powf(w) * node.measure;
        out.tent_energy += energy;
        match cell_class[&node.cell] {
            0 => out.i_a += energy,
            c => {
                out.i_not_a += energy;
                let dq = piece.set.delta(&node.point);
                if c == 1 {
                    out.carleson_lhs += dq.powf(-2.0 * ups) * node.delta.powf(w) * node.measure;
                } else {
                    out.companion_lhs += node.delta.powf(-2.0 * ups) * dq.powf(w) * node.measure;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PieceReport {
    pub label: u32,
    pub points: usize,
    /// ADR constant of the piece
    pub c1: f64,
    /// SFE ratio measured on the piece
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BpsfeReport {
    pub eta_required: f64,
    pub eta_min: f64,
    /// cubes whose witness misses the required mass fraction
    pub flagged: Vec<usize>,
    pub pieces: Vec<PieceReport>,
    pub c1: f64,
    pub c2: f64,
    pub tb: TbReport,
    pub sfe: SfeReport,
}

#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub eta_required: f64,
    pub big_c0: f64,
    pub small_c0: f64,
    pub family: FamilySpec,
    pub seed: u64,
}

/// Witness -> `b_Q = 1_{Q ∩ E_Q}` -> local `T(b)` -> SFE on `E`, recording the
/// constants measured at every step. `E_Q` is the whole labelled piece the
/// witness picked for `Q`.
pub fn bpsfe_pipeline(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    witness: &BpsfeWitness,
    params: &PipelineParams,
) -> Result<BpsfeReport> {
    let e = ev.set();
    if witness.per_cube.len() != lattice.cubes().len() {
        return Err(invalid("witness does not cover every cube"));
    }
    let mut labels: Vec<u32> = witness.per_cube.iter().filter_map(|c| c.label).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut pieces = Vec::new();
    let mut subsets = Vec::new();
    for &label in &labels {
        let idx: Vec<usize> = match e.labels() {
            Some(l) => (0..e.len()).filter(|&i| l[i] == Some(label)).collect(),
            None => Vec::new(),
        };
        let piece = AlignedSubset::new(e, &idx)?;
        let set = &piece.set;
        let c1 = check_adr(set, &default_radii(set, 10), &default_centers(set, 64))?.best_const;
        let piece_lat = build_lattice(set, lattice.depth())?;
        let mut cover = whitney_cover(set, 4.0 * set.diam(), ev.cover().eps_min())?;
        cover.assign(&piece_lat, DEFAULT_C_ASSIGN)?;
        let piece_ev = EnergyEvaluator::new(set, ev.kernel(), &cover)?;
        let c2 = estimate_sfe_constant(&piece_ev, &piece_lat, &params.family, params.seed)?.best_ratio;
        pieces.push(PieceReport {
            label,
            points: idx.len(),
            c1,
            c2,
        });
        subsets.push(piece);
    }
    let mut flagged = Vec::new();
    let mut b = Vec::with_capacity(lattice.cubes().len());
    for (q, wit) in lattice.cubes().iter().zip(&witness.per_cube) {
        if wit.eta < params.eta_required {
            flagged.push(q.id);
        }
        let bq = match wit.label {
            Some(l) => {
                let k = labels.binary_search(&l).expect("label collected above");
                bq_from_bigpiece(q, &subsets[k], e)?
            }
            None => SurfaceFunction::zeros(e),
        };
        b.push(Some(bq));
    }
    let fam = TbFamily {
        b,
        big_c0: params.big_c0,
        small_c0: params.small_c0,
    };
    // make sure the tents exist before the heavy work
    all_tents(ev.cover(), lattice)?;
    let tb = check_local_tb(ev, lattice, &fam)?;
    let sfe = estimate_sfe_constant(ev, lattice, &params.family, params.seed)?;
    Ok(BpsfeReport {
        eta_required: params.eta_required,
        eta_min: witness.min_eta,
        flagged,
        c1: pieces.iter().map(|p| p.c1).fold(0.0, f64::max),
        c2: pieces.iter().map(|p| p.c2).fold(0.0, f64::max),
        pieces,
        tb,
        sfe,
    })
}
