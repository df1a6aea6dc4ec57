use proptest::prelude::*;
use xtasc_tensor::{grad, TapeGraph, Tensor};

#[test]
fn tape_parents_precede_children() {
    let a = Tensor::<f64>::parameter(&[2], vec![1.0, 2.0]).unwrap();
    let b = Tensor::parameter(&[2], vec![3.0, 4.0]).unwrap();
    let c = a.mul(&b).unwrap().exp();
    let loss = c.add(&a).unwrap().sum_all();
    let tape = TapeGraph::from_root(&loss);
    let order: Vec<u64> = tape.iter().map(|t| t.id()).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
    assert_eq!(tape.leaves().count(), 2);
    loss.backward().unwrap();
    for leaf in tape.leaves() {
        assert!(leaf.grad().is_some());
    }
}

#[test]
fn grad_does_not_touch_stored_grads() {
    let a = Tensor::<f64>::parameter(&[2], vec![1.0, 2.0]).unwrap();
    let b = Tensor::parameter(&[2], vec![3.0, 4.0]).unwrap();
    let loss = a.mul(&b).unwrap().sum_all();
    let g = grad(&loss, &[&a]).unwrap();
    assert_eq!(g[0], vec![3.0, 4.0]);
    assert!(a.grad().is_none() && b.grad().is_none());
    let unrelated = Tensor::<f64>::parameter(&[1], vec![0.0]).unwrap();
    assert_eq!(grad(&loss, &[&unrelated]).unwrap()[0], vec![0.0]);
}

#[test]
fn repeated_backward_accumulates() {
    let x = Tensor::<f64>::parameter(&[1], vec![2.0]).unwrap();
    let y = x.mul(&x).unwrap();
    y.backward().unwrap();
    y.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![8.0]);
}

proptest! {
    #[test]
    fn fan_in_accumulation_is_order_independent(vals in prop::collection::vec(-3.0f64..3.0, 1..6), k in 1usize..5) {
        let x = Tensor::<f64>::parameter(&[vals.len()], vals.clone()).unwrap();
        // sum of k copies in forward and reverse order must agree
        let terms: Vec<Tensor<f64>> = (0..k).map(|i| x.mul_scalar(i as f64 + 1.0)).collect();
        let mut fwd = terms[0].clone();
        for t in &terms[1..] { fwd = fwd.add(t).unwrap(); }
        let mut rev = terms[k - 1].clone();
        for t in terms[..k - 1].iter().rev() { rev = rev.add(t).unwrap(); }
        let g1 = grad(&fwd.sum_all(), &[&x]).unwrap();
        let g2 = grad(&rev.sum_all(), &[&x]).unwrap();
        let expect = (k * (k + 1) / 2) as f64;
        prop_assert_eq!(&g1, &g2);
        prop_assert!(g1[0].iter().all(|&v| v == expect));
    }

    #[test]
    fn broadcast_grad_has_operand_shape(
        dims in prop::collection::vec(1usize..4, 1..4),
        mask in prop::collection::vec(any::<bool>(), 4),
        drop in 0usize..3,
    ) {
        let full = dims.clone();
        let mut small: Vec<usize> = full.iter().zip(&mask).map(|(&d, &m)| if m { 1 } else { d }).collect();
        let drop = drop.min(small.len() - 1);
        small.drain(..drop);
        let a = Tensor::<f64>::parameter(&full, vec![1.0; full.iter().product()]).unwrap();
        let b = Tensor::<f64>::parameter(&small, vec![2.0; small.iter().product()]).unwrap();
        let y = a.mul(&b).unwrap();
        prop_assert_eq!(y.shape(), full.as_slice());
        y.sum_all().backward().unwrap();
        let gb = b.grad().unwrap();
        prop_assert_eq!(gb.len(), b.numel());
        let reps = (a.numel() / b.numel()) as f64;
        prop_assert!(gb.iter().all(|&v| v == reps));
        prop_assert!(a.grad().unwrap().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn detach_is_absorbing(vals in prop::collection::vec(-2.0f64..2.0, 2..5)) {
        let x = Tensor::<f64>::parameter(&[vals.len()], vals).unwrap();
        let d = x.exp().detach();
        let y = d.relu().mul(&d).unwrap().softmax(0).unwrap().log().abs().sum_all();
        prop_assert!(!y.requires_grad());
        y.backward().unwrap();
        prop_assert!(x.grad().is_none());
    }
}
