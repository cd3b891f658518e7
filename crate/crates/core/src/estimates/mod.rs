//! Experiment harnesses: square-function constants, local `T(b)` checks,
//! big-pieces decompositions and the cone-functional extrapolation tests.

pub mod bigpiece;
pub mod extrapolation;
pub mod family;
pub mod sfe;
pub mod tb;

pub use bigpiece::{
    bpsfe_pipeline, bq_from_bigpiece, comparability_split, AlignedSubset, BpsfeReport, PieceReport, PipelineParams,
    SplitReport,
};
pub use extrapolation::{
    atomic_hp_test, fit_decay_exponent, hp_range, lp_sweep, random_atoms, weak_lp_indicator_test, AtomResult,
    DistributionCurve, HpReport, LambdaGrid, LpRow, SurfaceBall,
};
pub use family::{family_cell_sums, FamilySpec, TestFamily, TestFunction};
pub use sfe::{config_hash, estimate_sfe_constant, estimate_sfe_with_family, FunctionRatio, SfeReport};
pub use tb::{check_local_tb, TbCube, TbFamily, TbReport};
