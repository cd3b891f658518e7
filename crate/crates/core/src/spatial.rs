//! Nearest-neighbour and ball queries over a point cloud.
//!
//! Euclidean clouds go through a kd-tree; any other quasi-distance falls back
//! to a linear scan with the space's regularized distance.

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;

use crate::qm::QuasiMetricSpace;

pub struct SpatialIndex {
    space: QuasiMetricSpace,
    dim: usize,
    coords: Vec<f64>,
    tree: Option<KdTree<f64, usize, Vec<f64>>>,
}

impl SpatialIndex {
    /// `coords` is a flat row-major buffer of `dim`-dimensional points.
    pub fn new(space: &QuasiMetricSpace, dim: usize, coords: &[f64]) -> Self {
        let tree = if space.is_euclidean() {
            let n = coords.len() / dim;
            let mut tree = KdTree::with_capacity(dim, n.max(1));
            for (i, p) in coords.chunks_exact(dim).enumerate() {
                tree.add(p.to_vec(), i).expect("finite coordinates");
            }
            Some(tree)
        } else {
            None
        };
        Self {
            space: space.clone(),
            dim,
            coords: coords.to_vec(),
            tree,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Distance to and index of the nearest indexed point (lowest index on ties
    /// for the linear scan).
    pub fn nearest(&self, x: &[f64]) -> Option<(f64, usize)> {
        if self.is_empty() {
            return None;
        }
        if let Some(tree) = &self.tree {
            let hit = tree.nearest(x, 1, &squared_euclidean).ok()?;
            let (d2, &i) = hit.first()?;
            return Some((d2.sqrt(), i));
        }
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let d = self.space.rho_sharp(x, self.point(i));
            if d < best.0 {
                best = (d, i);
            }
        }
        Some(best)
    }

    /// Nearest indexed point other than `i` itself.
    pub fn nearest_other(&self, i: usize) -> Option<(f64, usize)> {
        let x = self.point(i);
        if let Some(tree) = &self.tree {
            let hits = tree.nearest(x, 2, &squared_euclidean).ok()?;
            return hits
                .into_iter()
                .find(|(_, &j)| j != i)
                .map(|(d2, &j)| (d2.sqrt(), j));
        }
        (0..self.len())
            .filter(|&j| j != i)
            .map(|j| (self.space.rho_sharp(x, self.point(j)), j))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Indices of points with `rho_sharp(x, y) < r` (open ball), sorted.
    pub fn within(&self, x: &[f64], r: f64) -> Vec<usize> {
        if r <= 0.0 || self.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<usize> = if let Some(tree) = &self.tree {
            tree.within(x, r * r, &squared_euclidean)
                .map(|hits| {
                    hits.into_iter()
                        .filter(|(d2, _)| *d2 < r * r)
                        .map(|(_, &i)| i)
                        .collect()
                })
                .unwrap_or_default()
        } else {
            (0..self.len())
                .filter(|&i| self.space.rho_sharp(x, self.point(i)) < r)
                .collect()
        };
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_and_within_agree_with_brute_force() {
        let space = QuasiMetricSpace::euclidean(2);
        let coords: Vec<f64> = (0..50)
            .flat_map(|i| {
                let t = i as f64 * 0.37;
                [t.cos() * (1.0 + 0.1 * i as f64), t.sin()]
            })
            .collect();
        let idx = SpatialIndex::new(&space, 2, &coords);
        let q = [0.3, -0.2];
        let brute: Vec<f64> = coords
            .chunks(2)
            .map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .collect();
        let (d, i) = idx.nearest(&q).unwrap();
        let min = brute.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((d - min).abs() < 1e-12);
        assert!((brute[i] - min).abs() < 1e-12);
        let w = idx.within(&q, 1.5);
        let expect: Vec<usize> = (0..50).filter(|&j| brute[j] < 1.5).collect();
        assert_eq!(w, expect);
    }
}
