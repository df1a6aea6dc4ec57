#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xtasc_core::data::{Batch, Dataset, GenConfig};
use xtasc_core::loss::VOID;
use xtasc_core::model::{param_group, XTaskNet};
use xtasc_tensor::{grad, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gen(height: usize, width: usize, classes: usize, seed: u64) -> GenConfig {
    GenConfig { height, width, num_classes: classes, seed, ..GenConfig::default() }
}

pub fn batch(cfg: &GenConfig, n: usize) -> Batch<f64> {
    let ds = Dataset::from_generator(cfg, 0, n).unwrap();
    Batch::from_samples(&ds.samples).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

/// Labels in `0..classes`, void with probability `void_p`, at least one
/// labeled pixel.
pub fn labels(rng: &mut ChaCha8Rng, n: usize, classes: usize, void_p: f64) -> Vec<u8> {
    let mut l: Vec<u8> =
        (0..n).map(|_| if rng.gen_bool(void_p) { VOID } else { rng.gen_range(0..classes) as u8 }).collect();
    l[0] = 0;
    l
}

/// Positive depths, zero with probability `invalid_p`, at least one valid.
pub fn depths(rng: &mut ChaCha8Rng, n: usize, invalid_p: f64) -> Vec<f64> {
    let mut d: Vec<f64> =
        (0..n).map(|_| if rng.gen_bool(invalid_p) { 0.0 } else { rng.gen_range(0.1..5.0) }).collect();
    d[0] = 1.0;
    d
}

/// Largest absolute gradient per parameter group.
pub fn group_grad_max(net: &XTaskNet<f64>, loss: &Tensor<f64>) -> BTreeMap<String, f64> {
    let params = net.parameters();
    let refs: Vec<&Tensor<f64>> = params.iter().map(|(_, t)| t).collect();
    let grads = grad(loss, &refs).unwrap();
    let mut out = BTreeMap::new();
    for ((name, _), g) in params.iter().zip(grads) {
        let m = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let e = out.entry(param_group(name).to_string()).or_insert(0.0f64);
        *e = e.max(m);
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
