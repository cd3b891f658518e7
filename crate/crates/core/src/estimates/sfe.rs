use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dyadic::DyadicLattice;
use crate::error::{Error, Result};
use crate::estimates::family::{family_cell_sums, FamilySpec, TestFamily};
use crate::operators::EnergyEvaluator;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionRatio {
    pub label: String,
    pub energy: f64,
    pub norm_sq: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SfeReport {
    pub best_ratio: f64,
    pub argmax: String,
    pub family_spec: String,
    pub per_function: Vec<FunctionRatio>,
    pub skipped: usize,
    pub config_hash: String,
}

impl SfeReport {
    /// Largest ratio among functions whose label starts with `prefix`.
    pub fn best_with_prefix(&self, prefix: &str) -> Option<f64> {
        self.per_function
            .iter()
            .filter(|r| r.label.starts_with(prefix))
            .map(|r| r.ratio)
            .reduce(f64::max)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of everything the measured constant depends on.
pub fn config_hash(ev: &EnergyEvaluator, family: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    let e = ev.set();
    for c in e.coords() {
        h.update(c.to_le_bytes());
    }
    for w in e.weights() {
        h.update(w.to_le_bytes());
    }
    let k = ev.kernel();
    h.update(k.name().as_bytes());
    for v in [k.decay_const, k.hoelder_exp, k.decay_exp, k.target_dim] {
        h.update(v.to_le_bytes());
    }
    let cover = ev.cover();
    for v in [cover.truncation_radius(), cover.eps_min(), cover.len() as f64] {
        h.update(v.to_le_bytes());
    }
    h.update(family.as_bytes());
    h.update(seed.to_le_bytes());
    hex(&h.finalize())
}

/// `sup_f square_energy(f) / ||f||_2^2` over a test family.
pub fn estimate_sfe_constant(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    spec: &FamilySpec,
    seed: u64,
) -> Result<SfeReport> {
    let family = TestFamily::generate(ev.set(), lattice, spec, seed);
    estimate_sfe_with_family(ev, lattice, &family, &spec.describe(), seed)
}

/// As [`estimate_sfe_constant`] with an explicit family; zero-norm members are
/// skipped with a warning and an empty remainder is an error.
pub fn estimate_sfe_with_family(
    ev: &EnergyEvaluator,
    lattice: &DyadicLattice,
    family: &TestFamily,
    description: &str,
    seed: u64,
) -> Result<SfeReport> {
    let e = ev.set();
    let norms: Vec<f64> = (0..family.len())
        .map(|i| family.materialize(i, e, lattice).p_norm(e, 2.0).map(|v| v * v))
        .collect::<Result<_>>()?;
    let mut kept = TestFamily {
        labels: Vec::new(),
        items: Vec::new(),
    };
    let mut kept_norms = Vec::new();
    for (i, &n2) in norms.iter().enumerate() {
        if n2 > 0.0 {
            kept.push(family.labels[i].clone(), family.items[i].clone());
            kept_norms.push(n2);
        } else {
            log::warn!("skipping zero-norm test function {}", family.labels[i]);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let sums = family_cell_sums(ev, lattice, &kept, 2.0, ev.weight_exponent())?;
    let per_function: Vec<FunctionRatio> = sums
        .iter()
        .zip(&kept_norms)
        .zip(&kept.labels)
        .map(|((cells, &n2), label)| {
            let energy: f64 = cells.iter().sum();
            FunctionRatio {
                label: label.clone(),
                energy,
                norm_sq: n2,
                ratio: energy / n2,
            }
        })
        .collect();
    let (best_ratio, argmax) = per_function
        .iter()
        .fold((f64::NEG_INFINITY, String::new()), |acc, r| {
            if r.ratio > acc.0 {
                (r.ratio, r.label.clone())
            } else {
                acc
            }
        });
    Ok(SfeReport {
        best_ratio,
        argmax,
        family_spec: description.to_string(),
        skipped: family.len() - kept.len(),
        per_function,
        config_hash: config_hash(ev, description, seed),
    })
}
