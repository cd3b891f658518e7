use serde::{Deserialize, Serialize};

use crate::dyadic::{all_tents, DyadicLattice};
use crate::error::{invalid, Result};
use crate::operators::{EnergyEvaluator, SurfaceFunction};
use crate::qm::AdrSet;

/// Testing functions `b_Q`, indexed by cube id, with the claimed constants.
#[derive(Debug, Clone)]
pub struct TbFamily {
    pub b: Vec<Option<SurfaceFunction>>,
    /// claimed `C_0`
    pub big_c0: f64,
    /// claimed `c_0`
    pub small_c0: f64,
}

impl TbFamily {
    /// `b_Q = 1_Q` for every cube.
    pub fn indicators(e: &AdrSet, lattice: &DyadicLattice, big_c0: f64, small_c0: f64) -> Self {
        Self {
            b: lattice
                .cubes()
                .iter()
                .map(|q| Some(SurfaceFunction::indicator(e, &q.members)))
                .collect(),
            big_c0,
            small_c0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TbCube {
    pub cube: usize,
    pub generation: i32,
    /// `||b_Q||_2^2 / sigma(Q)`
    pub norm_ratio: f64,
    /// best `|int_{Q~} b_Q| / sigma(Q~)` at the selected depth
    pub nondegeneracy: f64,
    pub tilde_cube: Option<usize>,
    /// tent energy over `sigma(Q)`
    pub tent_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TbReport {
    /// smallest `C_0` validating all three conditions (with `c_0` below)
    pub big_c0_measured: f64,
    /// largest `c_0 = 2^{-L}` for which the non-degeneracy condition holds with the claimed `C_0`
    pub small_c0_measured: f64,
    pub cond1: f64,
    pub cond2: f64,
    pub cond3: f64,
    pub per_cube: Vec<TbCube>,
    pub missing: Vec<usize>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// Checks the three local `T(b)` conditions on every cube.
///
/// (1) `||b_Q||^2 <= C_0 sigma(Q)`; (2) some descendant `Q~` with
/// `l(Q~) >= c_0 l(Q)` has `|int_{Q~} b_Q| >= sigma(Q~)/C_0`; (3) the tent
/// energy of `Theta b_Q` is at most `C_0 sigma(Q)`.
pub fn check_local_tb(ev: &EnergyEvaluator, lattice: &DyadicLattice, fam: &TbFamily) -> Result<TbReport> {
    let e = ev.set();
    if fam.b.len() > lattice.cubes().len() {
        return Err(invalid("testing family has more entries than the lattice has cubes"));
    }
    if !(fam.big_c0 > 0.0 && fam.small_c0 > 0.0 && fam.small_c0 <= 1.0) {
        return Err(invalid("claimed constants need C_0 > 0 and c_0 in (0, 1]"));
    }
    let tents = all_tents(ev.cover(), lattice)?;
    let cubes = lattice.cubes();
    let missing: Vec<usize> = (0..cubes.len())
        .filter(|&i| fam.b.get(i).map_or(true, |b| b.is_none()))
        .collect();
    let mut failures: Vec<String> = missing.iter().map(|i| format!("cube {i} has no b_Q")).collect();
    let w = e.weights();
    let levels = lattice.depth();

    // nondeg[q][L]: best |int b_Q| / sigma over descendants within L levels
    let mut nondeg: Vec<Vec<(f64, Option<usize>)>> = Vec::with_capacity(cubes.len());
    let mut rows = Vec::with_capacity(cubes.len());
    for q in cubes {
        let Some(b) = fam.b.get(q.id).and_then(|b| b.as_ref()) else {
            nondeg.push(vec![(0.0, None); levels as usize + 1]);
            rows.push(None);
            continue;
        };
        if b.len() != e.len() {
            return Err(invalid(format!("b_Q for cube {} does not match the cloud", q.id)));
        }
        let norm_ratio = b.p_norm(e, 2.0)?.powi(2) / q.mass;
        let mut best = vec![(0.0, None); levels as usize + 1];
        for d in lattice.descendants(q.id, levels) {
            let t = &cubes[d];
            let lvl = (t.generation - q.generation) as usize;
            let integral: f64 = t.members.iter().map(|&j| b.values()[j] * w[j]).sum();
            let r = integral.abs() / t.mass;
            for slot in best.iter_mut().skip(lvl) {
                if r > slot.0 {
                    *slot = (r, Some(d));
                }
            }
        }
        nondeg.push(best);
        let tent_energy = ev.energy_on_cells(&tents[q.id], b)?;
        rows.push(Some((norm_ratio, tent_energy / q.mass)));
    }

    let present: Vec<usize> = (0..cubes.len()).filter(|&i| rows[i].is_some()).collect();
    let cond1 = present.iter().map(|&i| rows[i].unwrap().0).fold(0.0, f64::max);
    let cond3 = present.iter().map(|&i| rows[i].unwrap().1).fold(0.0, f64::max);
    let cond2_at = |l: usize| {
        present
            .iter()
            .map(|&i| 1.0 / nondeg[i][l].0)
            .fold(0.0, f64::max)
    };
    let level = (0..=levels as usize)
        .find(|&l| cond2_at(l) <= fam.big_c0)
        .unwrap_or(levels as usize);
    let cond2 = cond2_at(level);
    let small_c0_measured = 2f64.powi(-(level as i32));
    let big_c0_measured = cond1.max(cond2).max(cond3);

    for &i in &present {
        let (n, t) = rows[i].unwrap();
        if n > fam.big_c0 {
            failures.push(format!("cube {i}: ||b_Q||^2/sigma(Q) = {n:.4} exceeds C_0"));
        }
        if 1.0 / nondeg[i][level].0 > fam.big_c0 {
            failures.push(format!("cube {i}: no descendant validates non-degeneracy"));
        }
        if t > fam.big_c0 {
            failures.push(format!("cube {i}: tent energy ratio {t:.4} exceeds C_0"));
        }
    }
    if small_c0_measured < fam.small_c0 {
        failures.push(format!(
            "non-degeneracy needs c_0 = {small_c0_measured}, below the claimed {}",
            fam.small_c0
        ));
    }
    let per_cube = present
        .iter()
        .map(|&i| {
            let (norm_ratio, tent_ratio) = rows[i].unwrap();
            TbCube {
                cube: i,
                generation: cubes[i].generation,
                norm_ratio,
                nondegeneracy: nondeg[i][level].0,
                tilde_cube: nondeg[i][level].1,
                tent_ratio,
            }
        })
        .collect();
    Ok(TbReport {
        big_c0_measured,
        small_c0_measured,
        cond1,
        cond2,
        cond3,
        per_cube,
        pass: failures.is_empty(),
        missing,
        failures,
    })
}
