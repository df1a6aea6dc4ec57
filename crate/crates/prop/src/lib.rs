//! Exact checks, by enumeration over finite joint distributions, of how the
//! direct, cross-task-consistent and aligned predictors of `Y` compare.

mod gaps;
mod lvm;
mod sweep;

pub use gaps::{
    cond_exp, predictor_gaps, sigma_algebra_groups, verify_proof_steps, GapTriple, PredictorReport, ProofSteps,
    StepTriple, DEFAULT_GROUP_TOL,
};
pub use lvm::{DiscreteLVM, LvmError, NORMALIZATION_TOL};
pub use sweep::{check_report, check_steps, run_sweep, SweepConfig, SweepSummary, TrialRecord, Violation};
