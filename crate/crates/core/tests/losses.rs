mod common;

use common::*;
use rand::Rng;
use xtasc_core::loss::*;
use xtasc_core::model::{ModelConfig, Variant, XTaskNet, GROUP_DEPTH_DECODER, GROUP_DEPTH_TRANSFER,
    GROUP_ENCODER, GROUP_SEG_DECODER, GROUP_SEG_TRANSFER};
use xtasc_core::nn::Mode;
use xtasc_core::weighting::{gradnorm_update, UncertaintyState, Weighting, WeightingKind};

const N: usize = 2;
const C: usize = 4;
const H: usize = 3;
const W: usize = 5;
const HW: usize = H * W;

fn logit(z: &[f64], s: usize, c: usize, p: usize) -> f64 {
    z[(s * C + c) * HW + p]
}

fn log_softmax_at(z: &[f64], s: usize, c: usize, p: usize) -> f64 {
    let m = (0..C).map(|k| logit(z, s, k, p)).fold(f64::NEG_INFINITY, f64::max);
    let lse = m + (0..C).map(|k| (logit(z, s, k, p) - m).exp()).sum::<f64>().ln();
    logit(z, s, c, p) - lse
}

fn ce_oracle(z: &[f64], labels: &[u8]) -> f64 {
    let (mut sum, mut count) = (0.0, 0);
    for s in 0..N {
        for p in 0..HW {
            let t = labels[s * HW + p];
            if t != VOID {
                sum -= log_softmax_at(z, s, t as usize, p);
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn soft_ce_oracle(transferred: &[f64], direct: &[f64]) -> f64 {
    let mut sum = 0.0;
    for s in 0..N {
        for p in 0..HW {
            for c in 0..C {
                sum -= log_softmax_at(direct, s, c, p).exp() * log_softmax_at(transferred, s, c, p);
            }
        }
    }
    sum / (N * HW) as f64
}

fn l1_oracle(pred: &[f64], target: &[f64], valid: &[bool]) -> f64 {
    let (mut sum, mut count) = (0.0, 0);
    for i in 0..pred.len() {
        if valid[i] {
            sum += (pred[i] - target[i]).abs();
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn losses_match_per_pixel_enumeration_on_fifty_instances() {
    let mut r = rng(21);
    for _ in 0..50 {
        let z = uniform(&mut r, N * C * HW, -4.0, 4.0);
        let z2 = uniform(&mut r, N * C * HW, -4.0, 4.0);
        let lab = labels(&mut r, N * HW, C, 0.3);
        let gt = depths(&mut r, N * HW, 0.3);
        let valid: Vec<bool> = gt.iter().map(|&d| d > 0.0).collect();
        let pred = uniform(&mut r, N * HW, 0.0, 5.0);
        let pred2 = uniform(&mut r, N * HW, 0.0, 5.0);

        let logits = tensor(&[N, C, H, W], z.clone());
        let transferred = tensor(&[N, C, H, W], z2.clone());
        let dp = tensor(&[N, 1, H, W], pred.clone());
        let dt = tensor(&[N, 1, H, W], gt.clone());
        let dp2 = tensor(&[N, 1, H, W], pred2.clone());

        assert!(rel_close(seg_ce(&logits, &lab, VOID).unwrap().item(), ce_oracle(&z, &lab), 1e-6));
        assert!(rel_close(seg_xtc(&transferred, &logits).unwrap().item(), soft_ce_oracle(&z2, &z), 1e-6));
        assert!(rel_close(depth_l1(&dp, &dt, &valid).unwrap().item(), l1_oracle(&pred, &gt, &valid), 1e-6));
        assert!(rel_close(depth_xtc(&dp2, &dp, &valid).unwrap().item(), l1_oracle(&pred2, &pred, &valid), 1e-6));
        let (a_seg, a_depth) = align_losses(&transferred, &lab, &dp2, &dt, &valid, VOID).unwrap();
        assert!(rel_close(a_seg.item(), ce_oracle(&z2, &lab), 1e-6));
        assert!(rel_close(a_depth.item(), l1_oracle(&pred2, &gt, &valid), 1e-6));
    }
}

#[test]
fn masked_pixels_never_change_masked_losses() {
    let mut r = rng(4);
    for _ in 0..20 {
        let z = uniform(&mut r, N * C * HW, -3.0, 3.0);
        let lab = labels(&mut r, N * HW, C, 0.4);
        let gt = depths(&mut r, N * HW, 0.4);
        let valid: Vec<bool> = gt.iter().map(|&d| d > 0.0).collect();
        let pred = uniform(&mut r, N * HW, 0.0, 5.0);

        let mut z_p = z.clone();
        for s in 0..N {
            for p in 0..HW {
                if lab[s * HW + p] == VOID {
                    for c in 0..C {
                        z_p[(s * C + c) * HW + p] = r.gen_range(-1e3..1e3);
                    }
                }
            }
        }
        let mut pred_p = pred.clone();
        let mut gt_p = gt.clone();
        for i in 0..pred.len() {
            if !valid[i] {
                pred_p[i] = r.gen_range(-1e3..1e3);
                gt_p[i] = r.gen_range(-1e3..1e3);
            }
        }
        let ce = |z: &[f64]| seg_ce(&tensor(&[N, C, H, W], z.to_vec()), &lab, VOID).unwrap().item();
        assert_eq!(ce(&z), ce(&z_p));
        let l1 = |p: &[f64], g: &[f64]| {
            depth_l1(&tensor(&[N, 1, H, W], p.to_vec()), &tensor(&[N, 1, H, W], g.to_vec()), &valid).unwrap().item()
        };
        assert_eq!(l1(&pred, &gt), l1(&pred_p, &gt_p));
        let xtc = |a: &[f64], b: &[f64]| {
            depth_xtc(&tensor(&[N, 1, H, W], a.to_vec()), &tensor(&[N, 1, H, W], b.to_vec()), &valid).unwrap().item()
        };
        assert_eq!(xtc(&pred, &gt), xtc(&pred_p, &gt_p));
    }
}

#[test]
fn uniform_logits_cost_log_classes() {
    let logits = xtasc_tensor::Tensor::<f64>::zeros(&[2, 7, 4, 4]);
    let mut r = rng(1);
    let lab = labels(&mut r, 32, 7, 0.1);
    let l = seg_ce(&logits, &lab, VOID).unwrap().item();
    assert!((l - 1.945910).abs() < 1e-6);
}

#[test]
fn mixing_endpoints_are_bit_exact() {
    let direct = xtasc_tensor::Tensor::<f64>::scalar(1.2345678901);
    let cross = xtasc_tensor::Tensor::<f64>::scalar(0.987654321);
    assert_eq!(task_loss(&direct, Some(&cross), 0.0).unwrap().item(), direct.item());
    assert_eq!(task_loss(&direct, Some(&cross), 1.0).unwrap().item(), cross.item());
    let mid = task_loss(&xtasc_tensor::Tensor::<f64>::scalar(2.0), Some(&xtasc_tensor::Tensor::scalar(1.0)), 0.01).unwrap();
    assert!((mid.item() - 1.99).abs() < 1e-12);
}

fn tiny_net(variant: Variant, seed: u64) -> XTaskNet<f64> {
    XTaskNet::new(ModelConfig::tiny(3, variant), seed).unwrap()
}

#[test]
fn mt_total_equals_xtc_total_at_zero_lambda() {
    let b = batch(&gen(8, 16, 3, 2), 2);
    for kind in [WeightingKind::Equal, WeightingKind::Uncertainty, WeightingKind::GradNorm] {
        let cfg = LossConfig { lambda_seg: 0.0, lambda_depth: 0.0, weighting: kind, ..LossConfig::default() };
        let mt = tiny_net(Variant::MultiTask, 9);
        let xtc = tiny_net(Variant::CrossTask, 9);
        for ((na, a), (nb, bb)) in mt.parameters().iter().zip(xtc.parameters().iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.to_vec(), bb.to_vec());
        }
        let w = Weighting::from_config(&cfg);
        let out_mt = mt.forward(&b.images, Mode::Train).unwrap();
        let out_xtc = xtc.forward(&b.images, Mode::Train).unwrap();
        let t_mt = compute_losses(Variant::MultiTask, &out_mt, &b, &cfg, &w).unwrap();
        let t_xtc = compute_losses(Variant::CrossTask, &out_xtc, &b, &cfg, &w).unwrap();
        assert_eq!(t_mt.total.item().to_bits(), t_xtc.total.item().to_bits());
        assert!(t_xtc.report.ell_2to1 > 0.0);
    }
}

#[test]
fn uncertainty_at_zero_log_variance_equals_equal_weighting() {
    let b = batch(&gen(8, 16, 3, 5), 2);
    let net = tiny_net(Variant::CrossTask, 1);
    let out = net.forward(&b.images, Mode::Train).unwrap();
    let cfg = LossConfig::default();
    let eq = compute_losses(Variant::CrossTask, &out, &b, &cfg, &Weighting::Equal).unwrap();
    let un = compute_losses(
        Variant::CrossTask,
        &out,
        &b,
        &cfg,
        &Weighting::Uncertainty(UncertaintyState::new(0.0, 0.0)),
    )
    .unwrap();
    assert_eq!(eq.total.item(), un.total.item());
    assert_eq!(un.report.omega1, 1.0);
    assert_eq!(un.report.reg, 0.0);
}

#[test]
fn report_total_matches_weighted_components() {
    let b = batch(&gen(8, 16, 3, 6), 3);
    let net = tiny_net(Variant::Align, 2);
    let out = net.forward(&b.images, Mode::Train).unwrap();
    let cfg = LossConfig { lambda_seg: 0.3, lambda_depth: 0.6, ..LossConfig::default() };
    let w = Weighting::Uncertainty(UncertaintyState::new(0.4, -0.7));
    let r = compute_losses(Variant::Align, &out, &b, &cfg, &w).unwrap().report;
    let recomputed = r.omega1 * r.l1 + r.omega2 * r.l2 + r.reg;
    assert!(rel_close(r.total, recomputed, 1e-12));
    assert!(rel_close(r.l1, 0.7 * r.ell1 + 0.3 * r.ell_2to1, 1e-12));
    assert!(rel_close(r.l2, 0.4 * r.ell2 + 0.6 * r.ell_1to2, 1e-12));
}

#[test]
fn gradnorm_weights_stay_positive_and_sum_to_two() {
    let mut r = rng(8);
    for _ in 0..500 {
        let n = r.gen_range(1..20);
        let g1 = uniform(&mut r, n, -10.0, 10.0);
        let g2 = uniform(&mut r, n, -1e-3, 1e-3);
        let init = [r.gen_range(0.1..3.0), r.gen_range(0.1..3.0)];
        let cur = [r.gen_range(0.0..3.0), r.gen_range(0.0..3.0)];
        let mut w = [r.gen_range(0.01..1.99), 0.0];
        w[1] = 2.0 - w[0];
        for _ in 0..10 {
            w = gradnorm_update([&g1, &g2], init, cur, w, 1.5, r.gen_range(0.001..5.0)).unwrap();
            assert!(w[0] > 0.0 && w[1] > 0.0, "{w:?}");
            assert_eq!(w[0] + w[1], 2.0);
        }
    }
}

#[test]
fn larger_gradient_task_loses_weight() {
    let big = [3.0, 4.0];
    let small = [0.3, 0.4];
    let w = gradnorm_update([&big, &small], [1.0, 1.0], [0.5, 0.5], [1.0, 1.0], 1.5, 0.01).unwrap();
    assert!(w[0] < 1.0 && w[1] > 1.0);
}

/// Loss terms rebuilt from a single forward pass so that individual terms
/// can be differentiated alone.
fn consistency_terms(net: &XTaskNet<f64>, b: &xtasc_core::data::Batch<f64>) -> (xtasc_tensor::Tensor<f64>, xtasc_tensor::Tensor<f64>) {
    let out = net.forward(&b.images, Mode::Train).unwrap();
    let seg = seg_xtc(out.transferred_seg.as_ref().unwrap(), &out.direct_seg).unwrap();
    let depth = depth_xtc(out.transferred_depth.as_ref().unwrap(), &out.direct_depth, &b.valid_depth).unwrap();
    (seg, depth)
}

#[test]
fn consistency_terms_do_not_reach_their_targets() {
    let b = batch(&gen(8, 16, 3, 11), 2);
    for seed in 0..5 {
        let net = tiny_net(Variant::CrossTask, seed);
        let (seg, depth) = consistency_terms(&net, &b);
        // Seg term: only the depth branch (through the transfer input) and
        // the seg transfer network can move it.
        let g = group_grad_max(&net, &seg);
        assert_eq!(g[GROUP_SEG_DECODER], 0.0);
        assert_eq!(g[GROUP_DEPTH_TRANSFER], 0.0);
        assert!(g[GROUP_SEG_TRANSFER] > 0.0);
        assert!(g[GROUP_DEPTH_DECODER] > 0.0);
        let g = group_grad_max(&net, &depth);
        assert_eq!(g[GROUP_DEPTH_DECODER], 0.0);
        assert_eq!(g[GROUP_SEG_TRANSFER], 0.0);
        assert!(g[GROUP_DEPTH_TRANSFER] > 0.0);
        assert!(g[GROUP_SEG_DECODER] > 0.0);
        let g = group_grad_max(&net, &seg.add(&depth).unwrap());
        assert!(g[GROUP_SEG_TRANSFER] > 0.0 && g[GROUP_DEPTH_TRANSFER] > 0.0);
        assert!(g[GROUP_ENCODER] > 0.0);
    }
}

#[test]
fn detached_transfer_inputs_leave_only_transfer_gradients() {
    let b = batch(&gen(8, 16, 3, 12), 2);
    for seed in 0..5 {
        let net = tiny_net(Variant::CrossTask, seed);
        let out = net.forward(&b.images, Mode::Train).unwrap();
        let ts = net.seg_transfer.as_ref().unwrap().forward(&out.direct_depth.detach()).unwrap();
        let td = net.depth_transfer.as_ref().unwrap().forward(&out.direct_seg.detach().softmax(1).unwrap()).unwrap();
        let loss = seg_xtc(&ts, &out.direct_seg).unwrap()
            .add(&depth_xtc(&td, &out.direct_depth, &b.valid_depth).unwrap())
            .unwrap();
        let g = group_grad_max(&net, &loss);
        for (group, m) in &g {
            if group == GROUP_SEG_TRANSFER || group == GROUP_DEPTH_TRANSFER {
                assert!(*m > 0.0, "{group}");
            } else {
                assert_eq!(*m, 0.0, "{group}");
            }
        }
    }
}

#[test]
fn align_gradients_reach_both_decoders_through_transfer_inputs() {
    let b = batch(&gen(8, 16, 3, 13), 2);
    let net = tiny_net(Variant::Align, 3);
    let out = net.forward(&b.images, Mode::Train).unwrap();
    let (seg, depth) = align_losses(
        out.transferred_seg.as_ref().unwrap(),
        &b.seg,
        out.transferred_depth.as_ref().unwrap(),
        &b.depth,
        &b.valid_depth,
        VOID,
    )
    .unwrap();
    // The seg alignment term reaches the depth decoder only via the
    // transfer input, and vice versa.
    assert!(group_grad_max(&net, &seg)[GROUP_DEPTH_DECODER] > 0.0);
    assert!(group_grad_max(&net, &depth)[GROUP_SEG_DECODER] > 0.0);
}

#[test]
fn losses_are_nonnegative_and_depth_zero_iff_equal() {
    let mut r = rng(14);
    for _ in 0..20 {
        let z = uniform(&mut r, N * C * HW, -3.0, 3.0);
        let lab = labels(&mut r, N * HW, C, 0.2);
        let gt = depths(&mut r, N * HW, 0.2);
        let valid: Vec<bool> = gt.iter().map(|&d| d > 0.0).collect();
        let logits = tensor(&[N, C, H, W], z);
        assert!(seg_ce(&logits, &lab, VOID).unwrap().item() >= 0.0);
        assert!(seg_xtc(&logits, &logits).unwrap().item() >= 0.0);
        let d = tensor(&[N, 1, H, W], gt.clone());
        assert_eq!(depth_l1(&d, &d, &valid).unwrap().item(), 0.0);
        let mut shifted = gt.clone();
        let i = valid.iter().position(|&v| v).unwrap();
        shifted[i] += 0.25;
        assert!(depth_l1(&tensor(&[N, 1, H, W], shifted), &d, &valid).unwrap().item() > 0.0);
    }
}
