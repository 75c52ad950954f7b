//! Checks and measurements on compiled programs: a source-level reference
//! interpreter, step-by-step comparison of physical and nominal runs,
//! structural diffing, seed ensembles with chi-square tests on their trace
//! values, and rekeying of object code.

mod diff;
pub mod ensemble;
mod lockstep;
mod reference;
mod rekey;
pub mod stats;

use crate::codegen::CodegenError;
use crate::isa::{RunError, Word};

pub use diff::{structural_diff, ConstDiff, ConstField, DiffReport};
pub use ensemble::{
    ensemble, ensemble_with, linkage, slot_of, Ensemble, Exec, Field, Linkage, Member, TestKind,
    TestOutcome, TestPlan, TracePosition, Verdict,
};
pub use lockstep::{lockstep_check, Divergence, LockstepReport};
pub use reference::{reference_eval, relop_holds};
pub use rekey::rekey;
pub use stats::{chi2_indep, chi2_sf, chi2_uniform, StatReport};

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalysisError {
    #[error("E_POS: position {0} does not occur in the run")]
    Pos(TracePosition),
    #[error("E_SMALL: {n} samples, need at least {need}")]
    Small { n: usize, need: usize },
    #[error("E_IODELTA: {0}")]
    IoDelta(String),
    #[error("E_BOUNDS: index {index} out of range for `{array}`")]
    Bounds { array: String, index: Word },
    #[error("fuel exhausted after {0} steps")]
    FuelExhausted(u64),
    #[error("missing value for input `{0}`")]
    MissingInput(String),
    #[error("unknown variable `{0}`")]
    UnknownInput(String),
    #[error("duplicate seed {0:#x}")]
    DuplicateSeed(u64),
    #[error("seed {0:#x}: object code structure differs from the first member")]
    Structure(u64),
    #[error("seed {seed:#x}: pc sequence diverges at step {step}")]
    Branch { seed: u64, step: u64 },
    #[error("unsupported bucket count {0}")]
    Buckets(usize),
    #[error("sample lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Run(#[from] RunError),
}
