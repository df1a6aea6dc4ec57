use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gaps::{predictor_gaps, verify_proof_steps, GapTriple, PredictorReport, ProofSteps, StepTriple};
use crate::lvm::DiscreteLVM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub trials: usize,
    pub max_support: usize,
    pub seed: u64,
    /// Slack allowed in every inequality and identity.
    pub tol: f64,
    /// Tolerance for grouping equal conditional expectations.
    pub group_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { trials: 1000, max_support: 5, seed: 0, tol: 1e-12, group_tol: crate::DEFAULT_GROUP_TOL }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub check: String,
    /// Amount by which the check is exceeded.
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub sizes: [usize; 3],
    pub report: PredictorReport,
    pub steps: ProofSteps,
}

/// Extremes over a sweep. `xi_*` describe the distribution of the direct
/// predictor's error over sampled models.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub trials: usize,
    pub max_xtc_gap: f64,
    pub max_align_gap: f64,
    pub max_tower_residual: f64,
    pub max_rewrite_residual: f64,
    pub max_variance_identity_residual: f64,
    pub min_jensen_slack: f64,
    pub xi_min: f64,
    pub xi_mean: f64,
    pub xi_max: f64,
    pub violations: Vec<Violation>,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_triple(t: &GapTriple, tag: &str, tol: f64, trial: usize, out: &mut Vec<Violation>) {
    let mut push = |check: &str, excess: f64| {
        if excess > tol {
            out.push(Violation { trial, check: format!("{tag}: {check}"), excess });
        }
    };
    push("xtc_gap >= 0", -t.xtc_gap);
    push("xtc_gap == 0", t.xtc_gap);
    push("xtc_gap <= align_gap", t.xtc_gap - t.align_gap);
    push("align_gap <= xi", t.align_gap - t.xi);
}

/// Violations of `0 = xtc_gap <= align_gap <= xi` beyond `tol`, in both roles.
pub fn check_report(r: &PredictorReport, tol: f64, trial: usize) -> Vec<Violation> {
    let mut v = Vec::new();
    check_triple(&r.forward, "Y|Z", tol, trial, &mut v);
    check_triple(&r.swapped, "Z|Y", tol, trial, &mut v);
    v
}

fn check_step(s: &StepTriple, tag: &str, tol: f64, trial: usize, out: &mut Vec<Violation>) {
    let mut push = |check: &str, excess: f64| {
        if excess > tol {
            out.push(Violation { trial, check: format!("{tag}: {check}"), excess });
        }
    };
    push("tower property", s.tower_residual);
    push("rewrite identity", s.rewrite_residual);
    push("jensen slack >= 0", -s.jensen_slack);
    push("total variance identity", s.variance_identity_residual);
}

/// Violations of the derivation's identities and inequalities beyond `tol`.
pub fn check_steps(s: &ProofSteps, tol: f64, trial: usize) -> Vec<Violation> {
    let mut v = Vec::new();
    check_step(&s.forward, "Y|Z", tol, trial, &mut v);
    check_step(&s.swapped, "Z|Y", tol, trial, &mut v);
    v
}

/// Samples `cfg.trials` random models, checks each, and hands every trial
/// to `on_trial`.
pub fn run_sweep(cfg: &SweepConfig, mut on_trial: impl FnMut(&TrialRecord)) -> SweepSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = SweepSummary {
        trials: cfg.trials,
        min_jensen_slack: f64::INFINITY,
        xi_min: f64::INFINITY,
        ..SweepSummary::default()
    };
    let mut xi_sum = 0.0;
    for trial in 0..cfg.trials {
        let lvm = DiscreteLVM::random(&mut rng, cfg.max_support);
        let report = predictor_gaps(&lvm, cfg.group_tol);
        let steps = verify_proof_steps(&lvm, cfg.group_tol);
        s.violations.extend(check_report(&report, cfg.tol, trial));
        s.violations.extend(check_steps(&steps, cfg.tol, trial));
        for (t, st) in [(&report.forward, &steps.forward), (&report.swapped, &steps.swapped)] {
            s.max_xtc_gap = s.max_xtc_gap.max(t.xtc_gap);
            s.max_align_gap = s.max_align_gap.max(t.align_gap);
            s.max_tower_residual = s.max_tower_residual.max(st.tower_residual);
            s.max_rewrite_residual = s.max_rewrite_residual.max(st.rewrite_residual);
            s.max_variance_identity_residual = s.max_variance_identity_residual.max(st.variance_identity_residual);
            s.min_jensen_slack = s.min_jensen_slack.min(st.jensen_slack);
        }
        s.xi_min = s.xi_min.min(report.forward.xi);
        s.xi_max = s.xi_max.max(report.forward.xi);
        xi_sum += report.forward.xi;
        on_trial(&TrialRecord { trial, sizes: lvm.sizes(), report, steps });
    }
    if cfg.trials > 0 {
        s.xi_mean = xi_sum / cfg.trials as f64;
    } else {
        s.min_jensen_slack = 0.0;
        s.xi_min = 0.0;
    }
    s
}
