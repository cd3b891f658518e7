//! Shared fixtures for the benchmarks.

use sqfn_core::dyadic::{build_lattice, whitney_cover, DyadicLattice, WhitneyCover, DEFAULT_C_ASSIGN};
use sqfn_core::geom::{generate, GeometryKind, GeometrySpec, GraphProfile};
use sqfn_core::AdrSet;

/// Sawtooth graph with slope 1 and period 1/4 on `[0, 1]`.
pub fn sawtooth(n: usize) -> AdrSet {
    generate(&GeometrySpec::new(
        GeometryKind::LipschitzGraph {
            lip: 1.0,
            length: 1.0,
            profile: GraphProfile::Sawtooth { period: 0.25 },
            split_slopes: false,
        },
        n,
    ))
    .expect("valid geometry")
}

/// Lattice of the given depth and the default assigned cover at `eps_min = 4h`.
pub fn structures(e: &AdrSet, depth: u32) -> (DyadicLattice, WhitneyCover) {
    let lattice = build_lattice(e, depth).expect("lattice");
    let mut cover = whitney_cover(e, 4.0 * e.diam(), 4.0 * e.resolution()).expect("cover");
    cover.assign(&lattice, DEFAULT_C_ASSIGN).expect("assignment");
    (lattice, cover)
}
