//! Dyadic cubes on `E`, Whitney cells of the complement, tents and cones.

pub mod lattice;
pub mod validate;
pub mod whitney;

pub use lattice::{build_lattice, kappa_for_diam, DyadicCube, DyadicLattice};
pub use validate::{validate_cover, validate_lattice, StructureCheck};
pub use whitney::{
    all_tents, cone, default_truncation, tent, whitney_cover, ConeIndex, Tent, WhitneyCell, WhitneyCover,
    DEFAULT_C_ASSIGN, WHITNEY_RATIO,
};
