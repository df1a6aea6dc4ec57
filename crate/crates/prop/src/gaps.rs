use serde::{Deserialize, Serialize};

use crate::lvm::DiscreteLVM;

/// Conditional expectation values closer than this are treated as equal
/// when forming the sigma-algebra they generate.
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;

/// Which variable plays the target role.
#[derive(Clone, Copy)]
enum Target {
    Y,
    Z,
}

/// `E[Y | X = x]` for every `x` in the support (or `E[Z | X = x]` when
/// `of_z`).
pub fn cond_exp(lvm: &DiscreteLVM, of_z: bool) -> Vec<f64> {
    let [nx, ny, nz] = lvm.sizes();
    (0..nx)
        .map(|i| {
            let (mut mass, mut acc) = (0.0, 0.0);
            for j in 0..ny {
                for k in 0..nz {
                    let p = lvm.p(i, j, k);
                    mass += p;
                    acc += p * if of_z { lvm.zs()[k] } else { lvm.ys()[j] };
                }
            }
            acc / mass
        })
        .collect()
}

/// Partition of indices into maximal chains of values whose consecutive
/// sorted gaps are at most `tol`. Groups are ordered by value, members by
/// index.
pub fn sigma_algebra_groups(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        let joins = pos > 0 && values[i] - values[order[pos - 1]] <= tol;
        match groups.last_mut() {
            Some(g) if joins => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups.iter_mut().for_each(|g| g.sort_unstable());
    groups
}

/// Squared-error gaps for one target variable given an auxiliary one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapTriple {
    /// `E[(T - E[T|X])^2]`.
    pub xi: f64,
    /// `E[(E[E[T|X] | E[A|X]] - E[T|X])^2]`.
    pub xtc_gap: f64,
    /// `E[(E[T | E[A|X]] - E[T|X])^2]`.
    pub align_gap: f64,
}

/// Gaps with `Y` as target and `Z` as auxiliary, and with roles swapped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub forward: GapTriple,
    pub swapped: GapTriple,
}

/// Intermediate quantities of the bound's derivation, with `R = T - E[T|X]`
/// and `G` the sigma-algebra of `E[A|X]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTriple {
    /// `|E[E[T|X]] - E[T]|`.
    pub tower_residual: f64,
    /// `E[(E[R | G])^2]`, the rewritten form of the aligned gap.
    pub rewrite_rhs: f64,
    /// `|align_gap - rewrite_rhs|`.
    pub rewrite_residual: f64,
    /// `xi - align_gap`.
    pub jensen_slack: f64,
    /// `E[Var(R | G)]`.
    pub residual_variance: f64,
    /// `|xi - rewrite_rhs - residual_variance|`; zero by the law of total
    /// variance.
    pub variance_identity_residual: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProofSteps {
    pub forward: StepTriple,
    pub swapped: StepTriple,
}

/// Everything both reports need for one target role.
struct Enumeration {
    px: Vec<f64>,
    target_mean: Vec<f64>,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    xi: f64,
    /// `E[E[T|X] | G]` per group: mass-weighted mean of `E[T|X]`.
    xtc: Vec<f64>,
    /// `E[T | G]` per group, summed directly over the joint table.
    align: Vec<f64>,
}

/// Target values and, per `x`, the joint mass of each target value.
fn target_rows(lvm: &DiscreteLVM, target: Target) -> (Vec<f64>, Vec<Vec<f64>>) {
    let [nx, ny, nz] = lvm.sizes();
    match target {
        Target::Y => (
            lvm.ys().to_vec(),
            (0..nx).map(|i| (0..ny).map(|j| (0..nz).map(|k| lvm.p(i, j, k)).sum()).collect()).collect(),
        ),
        Target::Z => (
            lvm.zs().to_vec(),
            (0..nx).map(|i| (0..nz).map(|k| (0..ny).map(|j| lvm.p(i, j, k)).sum()).collect()).collect(),
        ),
    }
}

fn enumerate(lvm: &DiscreteLVM, target: Target, tol: f64) -> Enumeration {
    let px = lvm.marginal_x();
    let (values, rows) = target_rows(lvm, target);
    let target_mean = cond_exp(lvm, matches!(target, Target::Z));
    let aux_mean = cond_exp(lvm, matches!(target, Target::Y));
    let groups = sigma_algebra_groups(&aux_mean, tol);
    let mut group_of = vec![0; px.len()];
    for (g, members) in groups.iter().enumerate() {
        members.iter().for_each(|&i| group_of[i] = g);
    }
    let mut xi = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (&v, &p) in values.iter().zip(row) {
            xi += p * (v - target_mean[i]).powi(2);
        }
    }
    let mut xtc = Vec::with_capacity(groups.len());
    let mut align = Vec::with_capacity(groups.len());
    for members in &groups {
        let mass: f64 = members.iter().map(|&i| px[i]).sum();
        xtc.push(members.iter().map(|&i| px[i] * target_mean[i]).sum::<f64>() / mass);
        let direct: f64 = members
            .iter()
            .map(|&i| values.iter().zip(&rows[i]).map(|(v, p)| v * p).sum::<f64>())
            .sum();
        align.push(direct / mass);
    }
    Enumeration { px, target_mean, groups, group_of, xi, xtc, align }
}

fn gap(e: &Enumeration, predictor: &[f64]) -> f64 {
    e.px
        .iter()
        .enumerate()
        .map(|(i, p)| p * (predictor[e.group_of[i]] - e.target_mean[i]).powi(2))
        .sum()
}

fn triple(lvm: &DiscreteLVM, target: Target, tol: f64) -> GapTriple {
    let e = enumerate(lvm, target, tol);
    GapTriple { xi: e.xi, xtc_gap: gap(&e, &e.xtc), align_gap: gap(&e, &e.align) }
}

/// Exact gaps of the cross-task and aligned predictors, in both target roles.
/// `tol` groups conditional expectations as in [`sigma_algebra_groups`].
pub fn predictor_gaps(lvm: &DiscreteLVM, tol: f64) -> PredictorReport {
    PredictorReport { forward: triple(lvm, Target::Y, tol), swapped: triple(lvm, Target::Z, tol) }
}

fn steps(lvm: &DiscreteLVM, target: Target, tol: f64) -> StepTriple {
    let e = enumerate(lvm, target, tol);
    let (values, rows) = target_rows(lvm, target);
    let overall: f64 = rows.iter().map(|r| values.iter().zip(r).map(|(v, p)| v * p).sum::<f64>()).sum();
    let tower: f64 = e.px.iter().zip(&e.target_mean).map(|(p, m)| p * m).sum();

    let mut rewrite_rhs = 0.0;
    let mut residual_variance = 0.0;
    for members in &e.groups {
        let mass: f64 = members.iter().map(|&i| e.px[i]).sum();
        let resid = |i: usize, v: f64| v - e.target_mean[i];
        let mean_r = members
            .iter()
            .map(|&i| values.iter().zip(&rows[i]).map(|(&v, p)| p * resid(i, v)).sum::<f64>())
            .sum::<f64>()
            / mass;
        rewrite_rhs += mass * mean_r * mean_r;
        residual_variance += members
            .iter()
            .map(|&i| values.iter().zip(&rows[i]).map(|(&v, p)| p * (resid(i, v) - mean_r).powi(2)).sum::<f64>())
            .sum::<f64>();
    }
    let align_gap = gap(&e, &e.align);
    StepTriple {
        tower_residual: (tower - overall).abs(),
        rewrite_rhs,
        rewrite_residual: (align_gap - rewrite_rhs).abs(),
        jensen_slack: e.xi - align_gap,
        residual_variance,
        variance_identity_residual: (e.xi - rewrite_rhs - residual_variance).abs(),
    }
}

/// Numerically evaluates each step of the bound's derivation.
pub fn verify_proof_steps(lvm: &DiscreteLVM, tol: f64) -> ProofSteps {
    ProofSteps { forward: steps(lvm, Target::Y, tol), swapped: steps(lvm, Target::Z, tol) }
}
