//! Reverse sweep over the recorded graph.

use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::Tensor;

/// Ordered record of every grad-requiring tensor reachable from a root.
///
/// Entries are sorted by creation id, so every node's parents precede it.
pub struct TapeGraph<T: Float> {
    entries: Vec<Tensor<T>>,
}

impl<T: Float> TapeGraph<T> {
    pub fn from_root(root: &Tensor<T>) -> Self {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        let mut stack = vec![root.clone()];
        while let Some(t) = stack.pop() {
            if !t.requires_grad() || !seen.insert(t.id()) {
                continue;
            }
            if let Some(node) = t.node() {
                stack.extend(node.parents.iter().filter(|p| !seen.contains(&p.id())).cloned());
            }
            entries.push(t);
        }
        entries.sort_by_key(|t| t.id());
        TapeGraph { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter()
    }

    /// Leaves on the tape (parameters reached by the root).
    pub fn leaves(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.entries.iter().filter(|t| t.is_leaf())
    }

    /// Runs the reverse sweep. `relevant(id)` limits propagation to a subset
    /// of the tape; `sink` receives the final gradient of every leaf reached.
    fn sweep(
        &self,
        root: &Tensor<T>,
        relevant: impl Fn(u64) -> bool,
        mut sink: impl FnMut(&Tensor<T>, Vec<T>),
    ) {
        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(root.id(), vec![T::one()]);
        for t in self.entries.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else { continue };
            match t.node() {
                None => sink(t, g),
                Some(node) => {
                    let needs: Vec<bool> = node
                        .parents
                        .iter()
                        .map(|p| p.requires_grad() && relevant(p.id()))
                        .collect();
                    if !needs.iter().any(|&n| n) {
                        continue;
                    }
                    let parent_grads = (node.backward)(&g, &needs);
                    debug_assert_eq!(parent_grads.len(), node.parents.len(), "{}", node.op);
                    for ((p, pg), need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                        let (Some(pg), true) = (pg, *need) else { continue };
                        debug_assert_eq!(pg.len(), p.numel(), "grad size from {}", node.op);
                        match grads.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_scalar<T: Float>(loss: &Tensor<T>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss(loss.shape().to_vec()));
    }
    Ok(())
}

impl<T: Float> Tensor<T> {
    /// Accumulates d(self)/d(leaf) into every reachable leaf that requires a
    /// gradient. Repeated calls add up.
    pub fn backward(&self) -> Result<()> {
        check_scalar(self)?;
        if !self.requires_grad() {
            return Ok(());
        }
        let tape = TapeGraph::from_root(self);
        tape.sweep(self, |_| true, |leaf, g| leaf.accumulate_grad(&g));
        Ok(())
    }
}

/// Gradients of a scalar `loss` with respect to `wrt`, without touching any
/// stored `.grad`. Only the part of the graph between `wrt` and `loss` is
/// swept. Leaves not reached get a zero gradient.
pub fn grad<T: Float>(loss: &Tensor<T>, wrt: &[&Tensor<T>]) -> Result<Vec<Vec<T>>> {
    check_scalar(loss)?;
    let mut out: Vec<Vec<T>> = wrt.iter().map(|t| vec![T::zero(); t.numel()]).collect();
    if !loss.requires_grad() {
        return Ok(out);
    }
    let tape = TapeGraph::from_root(loss);
    let targets: HashMap<u64, usize> = wrt.iter().enumerate().map(|(i, t)| (t.id(), i)).collect();
    // A tensor is relevant when some target is among its ancestors.
    let mut relevant: HashSet<u64> = HashSet::new();
    for t in tape.iter() {
        let hit = targets.contains_key(&t.id())
            || t.node().is_some_and(|n| n.parents.iter().any(|p| relevant.contains(&p.id())));
        if hit {
            relevant.insert(t.id());
        }
    }
    tape.sweep(
        loss,
        |id| relevant.contains(&id),
        |leaf, g| {
            if let Some(&i) = targets.get(&leaf.id()) {
                out[i] = g;
            }
        },
    );
    Ok(out)
}
