use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dyadic::{tent, ConeIndex, DyadicCube, DyadicLattice, WhitneyCover};
use crate::error::{invalid, Result};
use crate::kernels::KernelSpec;
use crate::operators::{Quadrature, SurfaceFunction, ThetaField};
use crate::qm::AdrSet;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnergyBreakdown {
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_cell: Option<Vec<f64>>,
    pub truncation_tail_bound: f64,
    pub weight_exponent: f64,
    pub cell_count: usize,
    pub node_count: usize,
    pub wall_time_s: f64,
}

/// Value of the cone functional; `empty` flags a cone without cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeValue {
    pub value: f64,
    pub empty: bool,
}

/// Surface area of the unit sphere in `R^m`.
fn sphere_area(m: usize) -> f64 {
    match m {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (m as f64 - 2.0) * sphere_area(m - 2),
    }
}

/// Quadrature over a Whitney cover for one kernel; reusable across functions.
pub struct EnergyEvaluator<'a> {
    e: &'a AdrSet,
    theta: &'a KernelSpec,
    cover: &'a WhitneyCover,
    quad: Quadrature,
}

impl<'a> EnergyEvaluator<'a> {
    pub fn new(e: &'a AdrSet, theta: &'a KernelSpec, cover: &'a WhitneyCover) -> Result<Self> {
        let quad = Quadrature::new(e, cover)?;
        Self::with_quadrature(e, theta, cover, quad)
    }

    pub fn with_quadrature(
        e: &'a AdrSet,
        theta: &'a KernelSpec,
        cover: &'a WhitneyCover,
        quad: Quadrature,
    ) -> Result<Self> {
        theta.validate()?;
        if theta.ambient_dim() != e.ambient_dim() {
            return Err(invalid("kernel and cloud live in different dimensions"));
        }
        if (theta.target_dim - e.dim()).abs() > 1e-12 {
            return Err(invalid(format!(
                "kernel is declared for d = {} but the set has d = {}",
                theta.target_dim,
                e.dim()
            )));
        }
        Ok(Self { e, theta, cover, quad })
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn cover(&self) -> &WhitneyCover {
        self.cover
    }

    pub fn set(&self) -> &AdrSet {
        self.e
    }

    pub fn kernel(&self) -> &KernelSpec {
        self.theta
    }

    /// `2 upsilon - (m - d)`.
    pub fn weight_exponent(&self) -> f64 {
        self.theta.weight_exponent()
    }

    pub fn field(&self, fs: &[&SurfaceFunction], subset: Option<&[usize]>) -> Result<ThetaField> {
        self.quad.theta(self.e, self.theta, fs, subset)
    }

    /// Per-cell sums `sum_nodes |Theta f|^q delta^exponent mu` for function
    /// `func` of a field evaluated on all nodes.
    pub fn cell_sums(&self, field: &ThetaField, func: usize, q: f64, exponent: f64) -> Vec<f64> {
        let nodes = self.quad.nodes();
        let mut out = vec![0.0; self.quad.cell_count()];
        for (row, &n) in field.nodes.iter().enumerate() {
            let node = &nodes[n];
            let v = field.norm(row, func);
            let t = if q == 2.0 { v * v } else { v.powf(q) };
            out[node.cell] += t * node.delta.powf(exponent) * node.measure;
        }
        out
    }

    /// Analytic bound for the part of the integral beyond the truncation
    /// radius `R`: with `|Theta f(x)| <= C ||f||_1 delta^{-(d+upsilon)}` the
    /// integrand is at most `C^2 ||f||_1^2 delta^{-(m+d)}`, and the level set
    /// `{delta = t}` has area at most `omega_m (t + diam)^{m-1}`. The factor
    /// `(1 + sqrt(m)/2)^{m+d}` absorbs the gap between cell centers and cells.
    pub fn tail_bound(&self, f: &SurfaceFunction) -> Result<f64> {
        let m = self.e.ambient_dim();
        let d = self.e.dim();
        let r = self.cover.truncation_radius();
        let l1 = f.p_norm(self.e, 1.0)?;
        let c = self.theta.decay_const;
        let geom = sphere_area(m) * (1.0 + self.e.diam() / r).powi(m as i32 - 1) * r.powf(-d) / d;
        let safety = (1.0 + (m as f64).sqrt() / 2.0).powf(m as f64 + d);
        Ok(c * c * l1 * l1 * geom * safety)
    }

    pub fn square_energy(&self, f: &SurfaceFunction) -> Result<EnergyBreakdown> {
        self.square_energy_impl(f, false)
    }

    /// Same as [`square_energy`](Self::square_energy) with the per-cell table.
    pub fn square_energy_detailed(&self, f: &SurfaceFunction) -> Result<EnergyBreakdown> {
        self.square_energy_impl(f, true)
    }

    fn square_energy_impl(&self, f: &SurfaceFunction, detailed: bool) -> Result<EnergyBreakdown> {
        let t0 = Instant::now();
        let field = self.field(&[f], None)?;
        let per_cell = self.cell_sums(&field, 0, 2.0, self.weight_exponent());
        let total: f64 = per_cell.iter().sum();
        Ok(EnergyBreakdown {
            total,
            truncation_tail_bound: self.tail_bound(f)?,
            weight_exponent: self.weight_exponent(),
            cell_count: self.quad.cell_count(),
            node_count: self.quad.len(),
            per_cell: detailed.then_some(per_cell),
            wall_time_s: t0.elapsed().as_secs_f64(),
        })
    }

    /// Totals for several functions with one pass over the kernel.
    pub fn energies(&self, fs: &[&SurfaceFunction]) -> Result<Vec<f64>> {
        let field = self.field(fs, None)?;
        let w = self.weight_exponent();
        Ok((0..fs.len())
            .map(|i| self.cell_sums(&field, i, 2.0, w).iter().sum())
            .collect())
    }

    /// Square-function integral restricted to the given cells.
    pub fn energy_on_cells(&self, cells: &[usize], b: &SurfaceFunction) -> Result<f64> {
        if cells.is_empty() {
            return Ok(0.0);
        }
        let nodes = self.quad.nodes_of_cells(cells);
        let field = self.field(&[b], Some(&nodes))?;
        let w = self.weight_exponent();
        let all = self.quad.nodes();
        Ok(field
            .nodes
            .iter()
            .enumerate()
            .map(|(row, &n)| {
                let v = field.norm(row, 0);
                v * v * all[n].delta.powf(w) * all[n].measure
            })
            .sum())
    }

    pub fn tent_energy(&self, q: &DyadicCube, lattice: &DyadicLattice, b: &SurfaceFunction) -> Result<f64> {
        let t = tent(q, self.cover, lattice)?;
        self.energy_on_cells(&t.cells, b)
    }

    /// Cone functional at every cloud point:
    /// `(sum_{cells in Gamma_kappa(x)} |Theta f|^q delta^{q upsilon - m} mu)^{1/q}`.
    pub fn cone_values(&self, f: &SurfaceFunction, cones: &ConeIndex, q: f64) -> Result<Vec<ConeValue>> {
        Ok(self
            .cone_powers(&[f], cones, q)?
            .pop()
            .expect("one function")
            .into_iter()
            .map(|(s, empty)| ConeValue {
                value: s.powf(1.0 / q),
                empty,
            })
            .collect())
    }

    /// `q`-th powers of the cone functional for several functions, with
    /// empty-cone flags; outer index is the function.
    pub fn cone_powers(
        &self,
        fs: &[&SurfaceFunction],
        cones: &ConeIndex,
        q: f64,
    ) -> Result<Vec<Vec<(f64, bool)>>> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(invalid(format!("cone exponent q = {q} must lie in (0, inf)")));
        }
        if cones.lists.len() != self.e.len() {
            return Err(invalid("cone index was built for another cloud"));
        }
        let field = self.field(fs, None)?;
        let exponent = q * self.theta.decay_exp - self.e.ambient_dim() as f64;
        Ok((0..fs.len())
            .map(|i| {
                let cells = self.cell_sums(&field, i, q, exponent);
                cones
                    .lists
                    .iter()
                    .map(|list| (list.iter().map(|&c| cells[c]).sum(), list.is_empty()))
                    .collect()
            })
            .collect())
    }
}

/// One-shot square-function energy of `f` over the cover.
pub fn square_energy(
    e: &AdrSet,
    theta: &KernelSpec,
    f: &SurfaceFunction,
    cover: &WhitneyCover,
) -> Result<EnergyBreakdown> {
    EnergyEvaluator::new(e, theta, cover)?.square_energy(f)
}

/// Energy of `Theta b` over the tent of `q`.
pub fn tent_energy(
    e: &AdrSet,
    theta: &KernelSpec,
    cover: &WhitneyCover,
    lattice: &DyadicLattice,
    q: &DyadicCube,
    b: &SurfaceFunction,
) -> Result<f64> {
    EnergyEvaluator::new(e, theta, cover)?.tent_energy(q, lattice, b)
}

/// Cone functional at the cloud point `x_index`.
#[allow(clippy::too_many_arguments)]
pub fn cone_functional(
    e: &AdrSet,
    theta: &KernelSpec,
    cover: &WhitneyCover,
    f: &SurfaceFunction,
    x_index: usize,
    kappa: f64,
    q: f64,
) -> Result<ConeValue> {
    if x_index >= e.len() {
        return Err(invalid("cloud index out of range"));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid(format!("cone exponent q = {q} must lie in (0, inf)")));
    }
    let cells = crate::dyadic::cone(e.point(x_index), kappa, cover, e);
    if cells.is_empty() {
        return Ok(ConeValue {
            value: 0.0,
            empty: true,
        });
    }
    let ev = EnergyEvaluator::new(e, theta, cover)?;
    let nodes = ev.quad.nodes_of_cells(&cells);
    let field = ev.field(&[f], Some(&nodes))?;
    let exponent = q * theta.decay_exp - e.ambient_dim() as f64;
    let all = ev.quad.nodes();
    let s: f64 = field
        .nodes
        .iter()
        .enumerate()
        .map(|(row, &n)| field.norm(row, 0).powf(q) * all[n].delta.powf(exponent) * all[n].measure)
        .sum();
    Ok(ConeValue {
        value: s.powf(1.0 / q),
        empty: false,
    })
}
