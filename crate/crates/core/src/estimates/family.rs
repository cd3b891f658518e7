use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicLattice;
use crate::error::{invalid, Result};
use crate::operators::{EnergyEvaluator, SurfaceFunction};
use crate::qm::AdrSet;

/// Which test functions to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    /// indicators `1_Q` of every lattice cube
    pub indicators: bool,
    /// restrict indicators to these generations (all when empty)
    #[serde(default)]
    pub generations: Vec<i32>,
    /// random `±1` per cube of a random generation
    pub rademacher: usize,
    /// Gaussian bumps centred at random cloud points
    pub bumps: usize,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            indicators: true,
            generations: Vec::new(),
            rademacher: 64,
            bumps: 16,
        }
    }
}

impl FamilySpec {
    pub fn indicators_only() -> Self {
        Self {
            indicators: true,
            generations: Vec::new(),
            rademacher: 0,
            bumps: 0,
        }
    }

    pub fn describe(&self) -> String {
        let gens = if self.generations.is_empty() {
            "all".to_string()
        } else {
            format!("{:?}", self.generations)
        };
        format!(
            "indicators={} (generations {gens}), rademacher={}, bumps={}",
            self.indicators, self.rademacher, self.bumps
        )
    }
}

/// A test function either as a combination of cube indicators or as explicit
/// values.
#[derive(Debug, Clone)]
pub enum TestFunction {
    Cubes(Vec<(usize, f64)>),
    Dense(SurfaceFunction),
}

#[derive(Debug, Clone)]
pub struct TestFamily {
    pub labels: Vec<String>,
    pub items: Vec<TestFunction>,
}

impl TestFamily {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, label: impl Into<String>, f: TestFunction) {
        self.labels.push(label.into());
        self.items.push(f);
    }

    /// Explicit functions only.
    pub fn from_functions(fs: Vec<SurfaceFunction>) -> Self {
        let labels = (0..fs.len()).map(|i| format!("f{i}")).collect();
        Self {
            labels,
            items: fs.into_iter().map(TestFunction::Dense).collect(),
        }
    }

    pub fn generate(e: &AdrSet, lattice: &DyadicLattice, spec: &FamilySpec, seed: u64) -> Self {
        let mut fam = TestFamily {
            labels: Vec::new(),
            items: Vec::new(),
        };
        if spec.indicators {
            for q in lattice.cubes() {
                if spec.generations.is_empty() || spec.generations.contains(&q.generation) {
                    fam.push(format!("1_Q[{}]@{}", q.id, q.generation), TestFunction::Cubes(vec![(q.id, 1.0)]));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k0, k1) = (lattice.kappa_e(), lattice.finest_generation());
        for r in 0..spec.rademacher {
            let k = rng.gen_range(k0..=k1);
            let terms = lattice
                .generation(k)
                .iter()
                .map(|&q| (q, if rng.gen::<bool>() { 1.0 } else { -1.0 }))
                .collect();
            fam.push(format!("rademacher[{r}]@{k}"), TestFunction::Cubes(terms));
        }
        let diam = e.diam();
        for b in 0..spec.bumps {
            let c = e.point(rng.gen_range(0..e.len())).to_vec();
            let width = diam * 2f64.powf(-rng.gen_range(1.0..5.0));
            let f = SurfaceFunction::from_fn(e, |p| {
                let r2: f64 = p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 / (2.0 * width * width)).exp()
            })
            .expect("finite bump");
            fam.push(format!("bump[{b}]"), TestFunction::Dense(f));
        }
        fam
    }

    pub fn materialize(&self, i: usize, e: &AdrSet, lattice: &DyadicLattice) -> SurfaceFunction {
        match &self.items[i] {
            TestFunction::Dense(f) => f.clone(),
            TestFunction::Cubes(terms) => {
                let mut v = vec![0.0; e.len()];
                for &(q, c) in terms {
                    for &j in &lattice.cube(q).members {
                        v[j] += c;
                    }
                }
                SurfaceFunction::new(v, e).expect("finite combination")
            }
        }
    }
}

/// Per-cell sums `sum_nodes |Theta f|^q delta^exponent mu` for every family
/// member, indexed `[function][cell]`.
///
/// Each node accumulates the kernel against every finest cube once; coarser
/// cube sums follow by summing children, so indicator and sign functions cost
/// one pass over the cloud per node regardless of their number.
pub fn family_cell_sums(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    family: &TestFamily,
    q: f64,
    exponent: f64,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;

    let e = ev.set();
    let theta = ev.kernel();
    let quad = ev.quadrature();
    if lattice.cloud_len() != e.len() {
        return Err(invalid("lattice was built for another cloud"));
    }
    for f in &family.items {
        match f {
            TestFunction::Dense(f) if f.len() != e.len() => {
                return Err(invalid("family function does not match the cloud"))
            }
            TestFunction::Cubes(t) if t.iter().any(|(id, _)| *id >= lattice.cubes().len()) => {
                return Err(invalid("family refers to a cube outside the lattice"))
            }
            _ => {}
        }
    }
    let comps = theta.components();
    let ncubes = lattice.cubes().len();
    let finest = lattice.finest_generation();
    let leaf: Vec<usize> = (0..e.len())
        .map(|j| lattice.owner(finest, j).expect("partition"))
        .collect();
    let parents: Vec<Option<usize>> = lattice.cubes().iter().map(|c| c.parent).collect();
    let dense: Vec<&SurfaceFunction> = family
        .items
        .iter()
        .filter_map(|f| match f {
            TestFunction::Dense(f) => Some(f),
            _ => None,
        })
        .collect();
    let nd = dense.len();
    let w = e.weights();
    let dense_w: Vec<f64> = (0..e.len())
        .flat_map(|j| dense.iter().map(move |f| f.values()[j] * w[j]))
        .collect();
    let nodes = quad.nodes();
    let nf = family.len();

    let per_cell: Vec<Vec<f64>> = (0..quad.cell_count())
        .into_par_iter()
        .map(|cell| {
            let mut sums = vec![0.0; nf];
            let mut cube = vec![0.0; ncubes * comps];
            let mut dsum = vec![0.0; nd * comps];
            let mut k = vec![0.0; comps];
            let mut val = vec![0.0; comps];
            for n in quad.nodes_of_cell(cell) {
                let node = &nodes[n];
                cube.iter_mut().for_each(|v| *v = 0.0);
                dsum.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..e.len() {
                    if w[j] == 0.0 {
                        continue;
                    }
                    theta.eval_unchecked(&node.point, e.point(j), &mut k);
                    let o = &mut cube[leaf[j] * comps..(leaf[j] + 1) * comps];
                    for (a, b) in o.iter_mut().zip(&k) {
                        *a += b * w[j];
                    }
                    let dw = &dense_w[j * nd..(j + 1) * nd];
                    for (di, &c) in dw.iter().enumerate() {
                        if c != 0.0 {
                            let o = &mut dsum[di * comps..(di + 1) * comps];
                            for (a, b) in o.iter_mut().zip(&k) {
                                *a += b * c;
                            }
                        }
                    }
                }
                // children are stored after their parents
                for id in (0..ncubes).rev() {
                    if let Some(p) = parents[id] {
                        for c in 0..comps {
                            cube[p * comps + c] += cube[id * comps + c];
                        }
                    }
                }
                let weight = node.delta.powf(exponent) * node.measure;
                let mut di = 0;
                for (fi, f) in family.items.iter().enumerate() {
                    val.iter_mut().for_each(|v| *v = 0.0);
                    match f {
                        TestFunction::Cubes(terms) => {
                            for &(qid, c) in terms {
                                for (a, b) in val.iter_mut().zip(&cube[qid * comps..(qid + 1) * comps]) {
                                    *a += c * b;
                                }
                            }
                        }
                        TestFunction::Dense(_) => {
                            val.copy_from_slice(&dsum[di * comps..(di + 1) * comps]);
                            di += 1;
                        }
                    }
                    let norm2: f64 = val.iter().map(|v| v * v).sum();
                    let t = if q == 2.0 { norm2 } else { norm2.sqrt().powf(q) };
                    sums[fi] += t * weight;
                }
            }
            sums
        })
        .collect();
    let mut out = vec![vec![0.0; quad.cell_count()]; nf];
    for (cell, sums) in per_cell.into_iter().enumerate() {
        for (fi, s) in sums.into_iter().enumerate() {
            out[fi][cell] = s;
        }
    }
    Ok(out)
}
