use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xtasc_prop::*;

/// Brute-force reference: conditional means by double sums, groups by
/// union-find over all pairs within `tol`.
struct Oracle {
    xi: f64,
    xtc_gap: f64,
    align_gap: f64,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    r
}

fn oracle(lvm: &DiscreteLVM, tol: f64) -> Oracle {
    let [nx, ny, nz] = lvm.sizes();
    let mut px = vec![0.0; nx];
    let mut my = vec![0.0; nx];
    let mut mz = vec![0.0; nx];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = lvm.p(i, j, k);
                px[i] += p;
                my[i] += p * lvm.ys()[j];
                mz[i] += p * lvm.zs()[k];
            }
        }
        my[i] /= px[i];
        mz[i] /= px[i];
    }
    let mut parent: Vec<usize> = (0..nx).collect();
    for a in 0..nx {
        for b in 0..nx {
            if (mz[a] - mz[b]).abs() <= tol {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let root: Vec<usize> = (0..nx).map(|i| find(&mut parent, i)).collect();
    let mut xi = 0.0;
    let mut xtc_gap = 0.0;
    let mut align_gap = 0.0;
    for i in 0..nx {
        let (mut mass, mut avg_my, mut y_sum) = (0.0, 0.0, 0.0);
        for i2 in (0..nx).filter(|&i2| root[i2] == root[i]) {
            mass += px[i2];
            avg_my += px[i2] * my[i2];
            for j in 0..ny {
                for k in 0..nz {
                    y_sum += lvm.p(i2, j, k) * lvm.ys()[j];
                }
            }
        }
        xtc_gap += px[i] * (avg_my / mass - my[i]).powi(2);
        align_gap += px[i] * (y_sum / mass - my[i]).powi(2);
        for j in 0..ny {
            for k in 0..nz {
                xi += lvm.p(i, j, k) * (lvm.ys()[j] - my[i]).powi(2);
            }
        }
    }
    Oracle { xi, xtc_gap, align_gap }
}

fn uniform_table(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn random_tables_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let lvm = DiscreteLVM::random(&mut rng, 5);
        let r = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
        let o = oracle(&lvm, DEFAULT_GROUP_TOL);
        assert!(close(r.forward.xi, o.xi, 1e-12));
        assert!(close(r.forward.xtc_gap, o.xtc_gap, 1e-12));
        assert!(close(r.forward.align_gap, o.align_gap, 1e-12));
        let s = oracle(&lvm.swapped(), DEFAULT_GROUP_TOL);
        assert!(close(r.swapped.xi, s.xi, 1e-12));
        assert!(close(r.swapped.align_gap, s.align_gap, 1e-12));
    }
}

#[test]
fn three_by_three_conditional_means_match_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lvm = loop {
        let l = DiscreteLVM::random(&mut rng, 3);
        if l.sizes() == [3, 3, 3] {
            break l;
        }
    };
    let ey = cond_exp(&lvm, false);
    for (i, &m) in ey.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                num += lvm.ys()[j] * lvm.p(i, j, k);
                den += lvm.p(i, j, k);
            }
        }
        assert!((m - num / den).abs() <= 1e-12);
    }
}

#[test]
fn deterministic_y_recovers_its_function() {
    // Y = 2X, Z uniform noise.
    let xs = vec![-1.0, 0.5, 1.0];
    let ys = vec![-2.0, 1.0, 2.0];
    let zs = vec![0.0, 1.0];
    let mut joint = vec![0.0; 18];
    for i in 0..3 {
        for k in 0..2 {
            joint[(i * 3 + i) * 2 + k] = 1.0 / 6.0;
        }
    }
    let lvm = DiscreteLVM::new(xs, ys, zs, joint).unwrap();
    let ey = cond_exp(&lvm, false);
    assert_eq!(ey, vec![-2.0, 1.0, 2.0]);
}

#[test]
fn independent_y_has_constant_conditional_mean() {
    let lvm = DiscreteLVM::new(vec![0.0, 1.0], vec![1.0, 3.0], vec![5.0], uniform_table(4)).unwrap();
    let ey = cond_exp(&lvm, false);
    assert!(ey.iter().all(|&m| (m - 2.0).abs() < 1e-15));
    let r = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
    assert_eq!(r.forward.xtc_gap, 0.0);
    assert_eq!(r.forward.align_gap, 0.0);
    assert!((r.forward.xi - 1.0).abs() < 1e-15);
}

#[test]
fn perfect_information_gives_zero_gaps() {
    // Y = Z = X on three points.
    let v = vec![0.0, 1.0, 2.0];
    let mut joint = vec![0.0; 27];
    for i in 0..3 {
        joint[(i * 3 + i) * 3 + i] = 1.0 / 3.0;
    }
    let lvm = DiscreteLVM::new(v.clone(), v.clone(), v, joint).unwrap();
    let r = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
    for t in [r.forward, r.swapped] {
        assert_eq!((t.xi, t.xtc_gap, t.align_gap), (0.0, 0.0, 0.0));
    }
    let s = verify_proof_steps(&lvm, DEFAULT_GROUP_TOL);
    for st in [s.forward, s.swapped] {
        assert_eq!(st.jensen_slack, 0.0);
        assert_eq!(st.residual_variance, 0.0);
        assert_eq!(st.rewrite_residual, 0.0);
    }
}

#[test]
fn constant_auxiliary_pools_all_x_and_breaks_the_zero_gap() {
    // X uniform on {0, 1}, Y = X, Z constant: E[Z|X] has one group, so both
    // grouped predictors fall back to E[Y] = 0.5.
    let mut joint = vec![0.0; 4];
    joint[0] = 0.5;
    joint[3] = 0.5;
    let lvm = DiscreteLVM::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![7.0], joint).unwrap();
    let r = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
    assert_eq!(r.forward.xi, 0.0);
    assert!((r.forward.xtc_gap - 0.25).abs() < 1e-15);
    assert!((r.forward.align_gap - 0.25).abs() < 1e-15);
    assert!(!check_report(&r, 1e-12, 0).is_empty());
    let s = verify_proof_steps(&lvm, DEFAULT_GROUP_TOL);
    assert!(s.forward.tower_residual < 1e-15);
    assert_eq!(s.forward.rewrite_rhs, 0.0);
    assert!((s.forward.rewrite_residual - 0.25).abs() < 1e-15);
}

#[test]
fn grouping_examples() {
    assert_eq!(sigma_algebra_groups(&[0.3, -1.0, 2.0], 1e-9), vec![vec![1], vec![0], vec![2]]);
    assert_eq!(sigma_algebra_groups(&[4.0; 4], 1e-9), vec![vec![0, 1, 2, 3]]);
    assert_eq!(sigma_algebra_groups(&[0.0, 1e-12, 1.0], 1e-9), vec![vec![0, 1], vec![2]]);
    // Chained closeness is transitive.
    assert_eq!(sigma_algebra_groups(&[0.0, 0.8e-9, 1.6e-9], 1e-9), vec![vec![0, 1, 2]]);
}

#[test]
fn zero_marginal_x_is_dropped() {
    let joint = vec![0.5, 0.5, 0.0, 0.0];
    let lvm = DiscreteLVM::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0], joint).unwrap();
    assert_eq!(lvm.xs(), &[0.0]);
    assert_eq!(lvm.sizes(), [1, 2, 1]);
}

#[test]
fn invalid_tables_are_rejected() {
    let bad = |j: Vec<f64>| DiscreteLVM::new(vec![0.0, 1.0], vec![0.0], vec![0.0], j);
    assert!(matches!(bad(vec![0.5]), Err(LvmError::Shape { .. })));
    assert!(matches!(bad(vec![1.5, -0.5]), Err(LvmError::InvalidProbability { .. })));
    assert!(matches!(bad(vec![0.5, 0.4]), Err(LvmError::NotNormalized(_))));
    assert!(matches!(DiscreteLVM::new(vec![], vec![0.0], vec![0.0], vec![]), Err(LvmError::EmptySupport("X"))));
}

#[test]
fn sweep_of_thousand_models_has_no_violations() {
    let cfg = SweepConfig::default();
    let mut seen = 0;
    let s = run_sweep(&cfg, |_| seen += 1);
    assert_eq!(seen, 1000);
    assert!(s.passed(), "{:?}", &s.violations[..s.violations.len().min(5)]);
    assert!(s.max_xtc_gap <= 1e-12);
    assert!(s.xi_min > 0.0 && s.xi_min <= s.xi_mean && s.xi_mean <= s.xi_max);
}

#[test]
fn sweep_is_seed_deterministic() {
    let cfg = SweepConfig { trials: 50, ..SweepConfig::default() };
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_sweep(&cfg, |t| a.push(t.clone()));
    run_sweep(&cfg, |t| b.push(t.clone()));
    assert_eq!(a, b);
}

fn lvm_strategy() -> impl Strategy<Value = DiscreteLVM> {
    (any::<u64>(), 2usize..=5).prop_map(|(seed, k)| DiscreteLVM::random(&mut ChaCha8Rng::seed_from_u64(seed), k))
}

proptest! {
    #[test]
    fn gap_chain_holds_in_both_roles(lvm in lvm_strategy()) {
        let r = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
        prop_assert!(check_report(&r, 1e-12, 0).is_empty());
        let s = verify_proof_steps(&lvm, DEFAULT_GROUP_TOL);
        prop_assert!(check_steps(&s, 1e-12, 0).is_empty());
    }

    #[test]
    fn total_variance_splits_xi(lvm in lvm_strategy()) {
        let s = verify_proof_steps(&lvm, DEFAULT_GROUP_TOL);
        for st in [s.forward, s.swapped] {
            prop_assert!(st.variance_identity_residual <= 1e-12);
        }
    }

    #[test]
    fn scaling_y_scales_gaps_quadratically(lvm in lvm_strategy(), c in 0.1f64..10.0) {
        let a = predictor_gaps(&lvm, DEFAULT_GROUP_TOL).forward;
        let b = predictor_gaps(&lvm.with_scaled_y(c), DEFAULT_GROUP_TOL).forward;
        let c2 = c * c;
        prop_assert!(close(b.xi, c2 * a.xi, 1e-10));
        prop_assert!((b.xtc_gap - c2 * a.xtc_gap).abs() <= 1e-10 * c2);
        prop_assert!((b.align_gap - c2 * a.align_gap).abs() <= 1e-10 * c2);
    }

    #[test]
    fn support_order_is_irrelevant(lvm in lvm_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [nx, ny, nz] = lvm.sizes();
        let mut perm = |n: usize| { let mut p: Vec<usize> = (0..n).collect(); p.shuffle(&mut rng); p };
        let (px, py, pz) = (perm(nx), perm(ny), perm(nz));
        let a = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
        let b = predictor_gaps(&lvm.permuted(&px, &py, &pz), DEFAULT_GROUP_TOL);
        for (s, t) in [(a.forward, b.forward), (a.swapped, b.swapped)] {
            prop_assert!(close(s.xi, t.xi, 1e-12));
            prop_assert!((s.xtc_gap - t.xtc_gap).abs() <= 1e-12);
            prop_assert!((s.align_gap - t.align_gap).abs() <= 1e-12);
        }
    }

    #[test]
    fn swapping_twice_is_identity(lvm in lvm_strategy()) {
        prop_assert_eq!(lvm.swapped().swapped(), lvm.clone());
        let a = predictor_gaps(&lvm, DEFAULT_GROUP_TOL);
        let b = predictor_gaps(&lvm.swapped(), DEFAULT_GROUP_TOL);
        for (s, t) in [(a.forward, b.swapped), (a.swapped, b.forward)] {
            prop_assert!(close(s.xi, t.xi, 1e-12));
            prop_assert!((s.xtc_gap - t.xtc_gap).abs() <= 1e-12);
            prop_assert!((s.align_gap - t.align_gap).abs() <= 1e-12);
        }
    }
}
