use std::ops::Range;

use rayon::prelude::*;

use crate::dyadic::WhitneyCover;
use crate::error::{invalid, Error, Result};
use crate::kernels::{KernelSpec, MIN_SEPARATION};
use crate::operators::SurfaceFunction;
use crate::qm::AdrSet;

/// Cells with `side > DEFAULT_SPLIT_RATIO * delta_E(center)` are split once.
pub const DEFAULT_SPLIT_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode {
    pub point: Vec<f64>,
    pub measure: f64,
    pub delta: f64,
    pub cell: usize,
}

/// Midpoint nodes over a Whitney cover; nodes of one cell are contiguous.
#[derive(Debug, Clone)]
pub struct Quadrature {
    nodes: Vec<QuadNode>,
    cell_nodes: Vec<Range<usize>>,
}

impl Quadrature {
    pub fn new(e: &AdrSet, cover: &WhitneyCover) -> Result<Self> {
        Self::with_split_ratio(e, cover, DEFAULT_SPLIT_RATIO)
    }

    pub fn with_split_ratio(e: &AdrSet, cover: &WhitneyCover, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0) {
            return Err(invalid("split ratio must be positive"));
        }
        if cover.is_empty() {
            return Err(invalid("Whitney cover has no cells"));
        }
        if cover.ambient_dim() != e.ambient_dim() {
            return Err(invalid("cover and cloud live in different dimensions"));
        }
        let m = e.ambient_dim();
        let per_cell: Vec<Vec<QuadNode>> = cover
            .cells()
            .par_iter()
            .enumerate()
            .map(|(ci, cell)| {
                if cell.side <= ratio * cell.dist_to_e {
                    return vec![QuadNode {
                        point: cell.center.clone(),
                        measure: cell.measure,
                        delta: cell.dist_to_e,
                        cell: ci,
                    }];
                }
                let q = cell.side / 4.0;
                let measure = cell.measure / (1usize << m) as f64;
                (0..(1usize << m))
                    .map(|bits| {
                        let point: Vec<f64> = cell
                            .center
                            .iter()
                            .enumerate()
                            .map(|(k, c)| if bits >> k & 1 == 1 { c + q } else { c - q })
                            .collect();
                        let delta = e.delta(&point);
                        QuadNode {
                            point,
                            measure,
                            delta,
                            cell: ci,
                        }
                    })
                    .collect()
            })
            .collect();
        let mut nodes = Vec::new();
        let mut cell_nodes = Vec::with_capacity(per_cell.len());
        for group in per_cell {
            let start = nodes.len();
            nodes.extend(group);
            cell_nodes.push(start..nodes.len());
        }
        if nodes.iter().any(|n| n.delta < MIN_SEPARATION) {
            return Err(Error::Singularity);
        }
        Ok(Self { nodes, cell_nodes })
    }

    pub fn nodes(&self) -> &[QuadNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_nodes.len()
    }

    pub fn nodes_of_cell(&self, cell: usize) -> Range<usize> {
        self.cell_nodes[cell].clone()
    }

    /// Node indices belonging to the given cells, in cell order.
    pub fn nodes_of_cells(&self, cells: &[usize]) -> Vec<usize> {
        cells.iter().flat_map(|&c| self.cell_nodes[c].clone()).collect()
    }

    /// Evaluates `Theta_E f` for several functions at once on the selected
    /// nodes (all nodes when `subset` is `None`). Each kernel value is
    /// computed once per (node, cloud point) pair and only on the union of
    /// the supports.
    pub fn theta(
        &self,
        e: &AdrSet,
        theta: &KernelSpec,
        fs: &[&SurfaceFunction],
        subset: Option<&[usize]>,
    ) -> Result<ThetaField> {
        if fs.iter().any(|f| f.len() != e.len()) {
            return Err(invalid("function does not match the cloud"));
        }
        if theta.ambient_dim() != e.ambient_dim() {
            return Err(invalid("kernel and cloud live in different dimensions"));
        }
        let comps = theta.components();
        let nf = fs.len();
        let w = e.weights();
        let support: Vec<usize> = (0..e.len())
            .filter(|&j| w[j] != 0.0 && fs.iter().any(|f| f.values()[j] != 0.0))
            .collect();
        // weighted values laid out [support point][function]
        let fw: Vec<f64> = support
            .iter()
            .flat_map(|&j| fs.iter().map(move |f| f.values()[j] * w[j]))
            .collect();
        let node_ids: Vec<usize> = match subset {
            Some(s) => s.to_vec(),
            None => (0..self.nodes.len()).collect(),
        };
        let stride = nf * comps;
        let mut values = vec![0.0; node_ids.len() * stride];
        values
            .par_chunks_mut(stride.max(1))
            .zip(node_ids.par_iter())
            .for_each(|(out, &n)| {
                let x = &self.nodes[n].point;
                let mut buf = [0.0f64; 16];
                let mut heap = Vec::new();
                let k: &mut [f64] = if comps <= 16 {
                    &mut buf[..comps]
                } else {
                    heap.resize(comps, 0.0);
                    &mut heap
                };
                for (s, &j) in support.iter().enumerate() {
                    theta.eval_unchecked(x, e.point(j), k);
                    let coeffs = &fw[s * nf..(s + 1) * nf];
                    for (fi, &c) in coeffs.iter().enumerate() {
                        if c != 0.0 {
                            let o = &mut out[fi * comps..(fi + 1) * comps];
                            for (a, b) in o.iter_mut().zip(k.iter()) {
                                *a += b * c;
                            }
                        }
                    }
                }
            });
        Ok(ThetaField {
            comps,
            nfuncs: nf,
            nodes: node_ids,
            values,
        })
    }
}

/// `Theta_E f_i` sampled at quadrature nodes.
#[derive(Debug, Clone)]
pub struct ThetaField {
    pub comps: usize,
    pub nfuncs: usize,
    /// node index for each row
    pub nodes: Vec<usize>,
    values: Vec<f64>,
}

impl ThetaField {
    pub fn value(&self, row: usize, func: usize) -> &[f64] {
        let s = (row * self.nfuncs + func) * self.comps;
        &self.values[s..s + self.comps]
    }

    /// Euclidean norm of the (vector) value.
    pub fn norm(&self, row: usize, func: usize) -> f64 {
        self.value(row, func).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::whitney_cover;
    use crate::kernels::{gradient_kernel, riesz_kernel};
    use crate::operators::apply_theta;
    use crate::qm::QuasiMetricSpace;

    fn segment(n: usize) -> AdrSet {
        let coords = (0..n).flat_map(|i| [(i as f64 + 0.5) / n as f64, 0.0]).collect();
        AdrSet::new(QuasiMetricSpace::euclidean(2), coords, vec![1.0 / n as f64; n], 1.0).unwrap()
    }

    #[test]
    fn nodes_preserve_measure_and_respect_ratio() {
        let e = segment(200);
        let cover = whitney_cover(&e, 4.0, 0.02).unwrap();
        let q = Quadrature::new(&e, &cover).unwrap();
        let total: f64 = cover.cells().iter().map(|c| c.measure).sum();
        let nodes: f64 = q.nodes().iter().map(|n| n.measure).sum();
        assert!((total - nodes).abs() < 1e-9 * total);
        for c in 0..q.cell_count() {
            let r = q.nodes_of_cell(c);
            assert!(r.len() == 1 || r.len() == 4);
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let e = segment(100);
        let cover = whitney_cover(&e, 4.0, 0.05).unwrap();
        let q = Quadrature::new(&e, &cover).unwrap();
        let theta = gradient_kernel(&riesz_kernel(1, 1).unwrap());
        let f = SurfaceFunction::from_fn(&e, |p| (3.0 * p[0]).sin()).unwrap();
        let g = SurfaceFunction::indicator(&e, &[3, 4, 50]);
        let sub: Vec<usize> = (0..q.len()).step_by(11).collect();
        let field = q.theta(&e, &theta, &[&f, &g], Some(&sub)).unwrap();
        for (row, &n) in sub.iter().enumerate() {
            let x = &q.nodes()[n].point;
            for (fi, h) in [&f, &g].into_iter().enumerate() {
                let direct = apply_theta(&e, &theta, h, x).unwrap();
                for (a, b) in field.value(row, fi).iter().zip(&direct) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }
}
