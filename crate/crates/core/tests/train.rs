mod common;

use std::fs;
use std::path::Path;

use common::*;
use xtasc_core::data::{write_dataset, Dataset, GenConfig, Layout};
use xtasc_core::loss::{LossReport, VOID};
use xtasc_core::model::{load_checkpoint, ModelConfig, Variant, XTaskNet};
use xtasc_core::train::*;
use xtasc_core::weighting::WeightingKind;
use xtasc_core::CoreError;
use xtasc_tensor::Tensor;

fn tiny_cfg(variant: Variant, epochs: usize) -> TrainConfig {
    TrainConfig {
        variant,
        epochs,
        batch_size: 4,
        lr_halve_every: 3,
        architecture: Architecture::tiny(),
        eval_count: 8,
        eval_every: 2,
        ..TrainConfig::default()
    }
}

fn data(count: usize, seed: u64) -> (Dataset, Dataset) {
    let g = gen(16, 16, 3, seed);
    (Dataset::from_generator(&g, 0, count).unwrap(), Dataset::from_generator(&g, EVAL_SPLIT, 8).unwrap())
}

fn scalar_param(v: f64) -> Tensor<f64> {
    Tensor::parameter(&[1], vec![v]).unwrap()
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let p = Tensor::<f64>::parameter(&[3], vec![1.0, -2.0, 0.5]).unwrap();
    let mut st = AdamState::new(std::slice::from_ref(&p), AdamConfig::default());
    p.mul_scalar(0.0).sum_all().backward().unwrap();
    for _ in 0..5 {
        adam_step(std::slice::from_ref(&p), &mut st, 0.1).unwrap();
    }
    assert_eq!(p.to_vec(), vec![1.0, -2.0, 0.5]);
}

#[test]
fn adam_moves_against_constant_gradient() {
    let p = scalar_param(0.0);
    let q = scalar_param(0.0);
    let params = [p.clone(), q.clone()];
    let mut st = AdamState::new(&params, AdamConfig::default());
    for _ in 0..20 {
        params.iter().for_each(|t| t.zero_grad());
        p.mul_scalar(3.0).add(&q.mul_scalar(-0.2)).unwrap().sum_all().backward().unwrap();
        adam_step(&params, &mut st, 0.01).unwrap();
    }
    assert!(p.item() < 0.0 && q.item() > 0.0);
}

#[test]
fn adam_quadratic_matches_scalar_simulation() {
    let w = scalar_param(1.0);
    let mut st = AdamState::new(std::slice::from_ref(&w), AdamConfig::default());
    // Independent scalar reference.
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.1f64);
    let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut reached = None;
    for t in 1..=500 {
        w.zero_grad();
        w.mul(&w).unwrap().sum_all().backward().unwrap();
        adam_step(std::slice::from_ref(&w), &mut st, lr).unwrap();
        let g = 2.0 * x;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        x -= lr * m_hat / (v_hat.sqrt() + eps);
        assert!((w.item() - x).abs() < 1e-9, "step {t}: {} vs {x}", w.item());
        if reached.is_none() && w.item().abs() < 0.01 {
            reached = Some(t);
        }
    }
    assert!(reached.is_some());
}

#[test]
fn adam_rejects_nan_without_touching_parameters() {
    let a = scalar_param(1.0);
    let b = scalar_param(2.0);
    let params = [a.clone(), b.clone()];
    let mut st = AdamState::new(&params, AdamConfig::default());
    a.sum_all().backward().unwrap();
    b.log().mul_scalar(f64::NAN).sum_all().backward().unwrap();
    let err = adam_step(&params, &mut st, 0.1).unwrap_err();
    assert!(matches!(err, CoreError::Divergence(_)));
    assert_eq!((a.item(), b.item(), st.step), (1.0, 2.0, 0));
}

#[test]
fn schedule_halves_on_boundaries() {
    let lr0 = 1e-4;
    for k in [1usize, 3, 25, 80] {
        for e in 0..=5 * k {
            assert_eq!(lr_schedule(e, lr0, k), lr0 * 0.5f64.powi((e / k) as i32));
        }
        assert_eq!(lr_schedule(0, lr0, k), lr0);
        assert_eq!(lr_schedule(k, lr0, k), lr0 / 2.0);
        if k > 1 {
            assert_eq!(lr_schedule(2 * k + 1, lr0, k), lr0 / 4.0);
        }
    }
}

#[test]
fn config_validation() {
    let mut c = tiny_cfg(Variant::SingleTask, 1);
    c.loss.weighting = WeightingKind::GradNorm;
    assert!(matches!(c.validate(), Err(CoreError::Config(_))));
    let c = TrainConfig { batch_size: 1, ..tiny_cfg(Variant::CrossTask, 1) };
    assert!(c.validate().is_err());
    let c = TrainConfig { lr: 0.0, ..tiny_cfg(Variant::CrossTask, 1) };
    assert!(c.validate().is_err());
    let c = TrainConfig { epochs: 0, ..tiny_cfg(Variant::CrossTask, 1) };
    assert!(c.validate().is_err());
}

#[test]
fn short_xtc_run_lowers_smoothed_loss() {
    let (train, eval) = data(64, 1);
    let cfg = TrainConfig { lr: 1e-3, lr_halve_every: 25, eval_every: 20, ..tiny_cfg(Variant::CrossTask, 20) };
    let out = train_on::<f32>(&cfg, &train, &eval).unwrap();
    let totals: Vec<f64> = out.epochs.iter().map(|e| e.mean.total).collect();
    let first = totals[..5].iter().sum::<f64>() / 5.0;
    let last = totals[15..].iter().sum::<f64>() / 5.0;
    assert!(last < first, "{totals:?}");
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn logs_account_for_totals_and_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let (train, eval) = data(12, 2);
    for kind in [WeightingKind::Uncertainty, WeightingKind::GradNorm] {
        let mut cfg = TrainConfig { out_dir: Some(dir.path().to_path_buf()), ..tiny_cfg(Variant::Align, 7) };
        cfg.loss.weighting = kind;
        cfg.loss.lambda_seg = 0.2;
        let out = train_on::<f64>(&cfg, &train, &eval).unwrap();
        let steps: Vec<StepRecord> = read_lines(&dir.path().join("losses.ndjson"));
        assert_eq!(steps.len() as u64, out.steps);
        for s in &steps {
            let LossReport { l1, l2, omega1, omega2, reg, total, .. } = s.losses;
            assert!(rel_close(total, omega1 * l1 + omega2 * l2 + reg, 1e-6));
            assert_eq!(s.lr, lr_schedule(s.epoch, cfg.lr, cfg.lr_halve_every));
            if kind == WeightingKind::GradNorm {
                assert_eq!(omega1 + omega2, 2.0);
                assert!(omega1 > 0.0 && omega2 > 0.0);
            }
        }
        let evals: Vec<EvalRecord> = read_lines(&dir.path().join("metrics.ndjson"));
        assert_eq!(evals.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 3, 5, 6]);
        assert!(dir.path().join("run.json").exists());
        assert!(dir.path().join("checkpoints/epoch_0007/manifest.json").exists());
    }
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn f64_runs_are_bit_reproducible() {
    let (train, eval) = data(10, 3);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut cfg = TrainConfig { out_dir: Some(dir.path().to_path_buf()), ..tiny_cfg(Variant::CrossTask, 3) };
        cfg.precision = Precision::F64;
        cfg.loss.weighting = WeightingKind::GradNorm;
        train_on::<f64>(&cfg, &train, &eval).unwrap();
    }
    let ck = "checkpoints/epoch_0003";
    let fa = file_bytes(&a.path().join(ck));
    assert!(fa.len() > 10);
    assert_eq!(fa, file_bytes(&b.path().join(ck)));
    assert_eq!(fs::read(a.path().join("losses.ndjson")).unwrap(), fs::read(b.path().join("losses.ndjson")).unwrap());
}

#[test]
fn checkpoint_round_trip_evaluates_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("eval");
    let (train, eval) = data(10, 4);
    write_dataset(&data_dir, &eval).unwrap();
    let cfg = TrainConfig { out_dir: Some(dir.path().join("run")), ..tiny_cfg(Variant::CrossTask, 2) };
    let out = train_on::<f64>(&cfg, &train, &eval).unwrap();
    let before = evaluate(&out.net, &eval, &train.manifest.stats, 4, VOID).unwrap();
    let ck = out.final_checkpoint.clone().unwrap();
    let after = evaluate_checkpoint(&ck, &data_dir, None, 4).unwrap();
    assert_eq!(before, after);
    assert_eq!(&before, out.final_eval());
    let again = evaluate_checkpoint(&ck, &data_dir, Some(&after), 4).unwrap();
    assert_eq!(again.delta_m, Some(0.0));

    let (net, manifest) = load_checkpoint::<f64>(&ck).unwrap();
    assert_eq!(manifest.epoch, 2);
    for ((n1, a), (n2, b)) in net.parameters().iter().zip(out.net.parameters().iter()) {
        assert_eq!(n1, n2);
        assert_eq!(a.to_vec(), b.to_vec());
    }
}

#[test]
fn eval_rejects_mismatched_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (train, eval) = data(4, 5);
    let cfg = TrainConfig { out_dir: Some(dir.path().join("run")), ..tiny_cfg(Variant::MultiTask, 1) };
    let out = train_on::<f32>(&cfg, &train, &eval).unwrap();
    let wide = Dataset::from_generator(&gen(16, 16, 6, 0), 0, 2).unwrap();
    write_dataset(dir.path().join("wide"), &wide).unwrap();
    let err = evaluate_checkpoint(out.final_checkpoint.unwrap(), dir.path().join("wide"), None, 2).unwrap_err();
    assert!(matches!(err, CoreError::Mismatch(_)));
}

#[test]
fn random_model_is_at_chance_on_balanced_scenes() {
    let g = GenConfig { layout: Layout::Balanced, ..GenConfig::default() };
    let ds = Dataset::from_generator(&g, 0, 16).unwrap();
    for seed in 0..3 {
        let net = XTaskNet::<f32>::new(ModelConfig::desk(7, Variant::MultiTask), seed).unwrap();
        let r = evaluate(&net, &ds, &ds.manifest.stats, 8, VOID).unwrap();
        assert!((r.metrics.pix_acc - 1.0 / 7.0).abs() <= 0.1, "seed {seed}: {}", r.metrics.pix_acc);
    }
}

#[test]
fn gradcheck_passes_for_align_and_mt() {
    for variant in [Variant::Align, Variant::MultiTask] {
        let r = gradcheck(&GradcheckConfig { variant, ..GradcheckConfig::default() }).unwrap();
        assert!(r.passed, "{variant}: {}", r.max_rel_err);
        assert!(r.groups.iter().all(|g| g.comparison.max_abs_analytic > 0.0));
    }
}
