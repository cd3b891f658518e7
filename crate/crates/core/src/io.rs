//! Plain-text artifacts: clouds and covers as CSV, lattices as a JSON tree.
//!
//! Every CSV starts with a `# config_digest: <hex>` comment line so that
//! artifacts of one run can be matched against each other.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicLattice, WhitneyCover};
use crate::error::{invalid, Result};
use crate::qm::{AdrSet, QuasiMetricSpace};

const DIGEST_PREFIX: &str = "# config_digest: ";

fn digest_line(w: &mut impl Write, digest: &str) -> Result<()> {
    writeln!(w, "{DIGEST_PREFIX}{digest}")?;
    Ok(())
}

/// Digest recorded in the first line of an artifact, if any.
pub fn read_digest(path: &Path) -> Result<Option<String>> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(first.trim_end().strip_prefix(DIGEST_PREFIX).map(str::to_string))
}

pub fn write_cloud(w: impl Write, e: &AdrSet, digest: &str) -> Result<()> {
    let mut w = BufWriter::new(w);
    digest_line(&mut w, digest)?;
    let mut csv = csv::Writer::from_writer(w);
    let m = e.ambient_dim();
    let mut header: Vec<String> = (0..m).map(|k| format!("x{k}")).collect();
    header.push("weight".into());
    csv.write_record(&header)?;
    for i in 0..e.len() {
        let mut row: Vec<String> = e.point(i).iter().map(|v| v.to_string()).collect();
        row.push(e.weights()[i].to_string());
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a Euclidean cloud of dimension `d`; returns it with the recorded digest.
pub fn read_cloud(r: impl Read, d: f64) -> Result<(AdrSet, Option<String>)> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let (digest, header_line) = match first.trim_end().strip_prefix(DIGEST_PREFIX) {
        Some(h) => (Some(h.to_string()), None),
        None => (None, Some(first)),
    };
    let rest: Box<dyn Read> = match header_line {
        Some(h) => Box::new(std::io::Cursor::new(h.into_bytes()).chain(r)),
        None => Box::new(r),
    };
    let mut csv = csv::Reader::from_reader(rest);
    let header = csv.headers()?.clone();
    let m = header.len().checked_sub(1).filter(|&m| m > 0).ok_or_else(|| invalid("cloud CSV needs coordinate columns"))?;
    let expected: Vec<String> = (0..m).map(|k| format!("x{k}")).chain(["weight".to_string()]).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(invalid(format!("cloud CSV header must be {}", expected.join(","))));
    }
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("not a number: {s:?}"))))
            .collect::<Result<_>>()?;
        coords.extend_from_slice(&vals[..m]);
        weights.push(vals[m]);
    }
    Ok((AdrSet::new(QuasiMetricSpace::euclidean(m), coords, weights, d)?, digest))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatticeNode {
    pub id: usize,
    pub generation: i32,
    pub center_index: usize,
    pub members: Vec<usize>,
    pub mass: f64,
    pub children: Vec<LatticeNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatticeTree {
    pub config_digest: String,
    pub kappa_e: i32,
    pub depth: u32,
    pub c_in: f64,
    pub c_out: f64,
    pub truncated: bool,
    pub root: LatticeNode,
}

pub fn lattice_tree(lattice: &DyadicLattice, digest: &str) -> LatticeTree {
    fn node(l: &DyadicLattice, id: usize) -> LatticeNode {
        let q = l.cube(id);
        LatticeNode {
            id,
            generation: q.generation,
            center_index: q.center_index,
            members: q.members.clone(),
            mass: q.mass,
            children: q.children.iter().map(|&c| node(l, c)).collect(),
        }
    }
    LatticeTree {
        config_digest: digest.to_string(),
        kappa_e: lattice.kappa_e(),
        depth: lattice.depth(),
        c_in: lattice.c_in(),
        c_out: lattice.c_out(),
        truncated: lattice.truncated(),
        root: node(lattice, lattice.root().id),
    }
}

/// One row per cell: center coordinates, side, distance, assigned cube (empty when unassigned).
pub fn write_cover(w: impl Write, cover: &WhitneyCover, digest: &str) -> Result<()> {
    let mut w = BufWriter::new(w);
    digest_line(&mut w, digest)?;
    let mut csv = csv::Writer::from_writer(w);
    let m = cover.ambient_dim();
    let mut header: Vec<String> = (0..m).map(|k| format!("c{k}")).collect();
    header.extend(["side", "dist", "cube"].map(String::from));
    csv.write_record(&header)?;
    for (cell, a) in cover.cells().iter().zip(cover.assignment()) {
        let mut row: Vec<String> = cell.center.iter().map(|v| v.to_string()).collect();
        row.push(cell.side.to_string());
        row.push(cell.dist_to_e.to_string());
        row.push(a.map(|q| q.to_string()).unwrap_or_default());
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// Two-column CSV for plotting.
pub fn write_curve(w: impl Write, columns: [&str; 2], xs: &[f64], ys: &[f64], digest: &str) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(invalid("curve columns differ in length"));
    }
    let mut w = BufWriter::new(w);
    digest_line(&mut w, digest)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(columns)?;
    for (x, y) in xs.iter().zip(ys) {
        csv.write_record([x.to_string(), y.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}
