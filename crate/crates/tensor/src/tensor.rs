use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::float::Float;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Gradient callback of a recorded op: receives the upstream gradient and a
/// per-parent "needs gradient" mask, returns one optional gradient per parent.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>>>;

pub(crate) struct Node<T: Float> {
    pub op: &'static str,
    pub parents: Vec<Tensor<T>>,
    pub backward: BackwardFn<T>,
}

pub(crate) struct Inner<T: Float> {
    pub id: u64,
    pub shape: Vec<usize>,
    pub data: RefCell<Vec<T>>,
    pub grad: RefCell<Option<Vec<T>>>,
    pub requires_grad: bool,
    pub node: Option<Node<T>>,
}

/// Dense row-major tensor that records the ops applied to it for reverse-mode
/// differentiation.
///
/// Cloning is cheap (shared handle). Ids are drawn from a thread-local counter,
/// so every tensor is created after the tensors it was computed from; the tape
/// relies on this for its topological order.
pub struct Tensor<T: Float = f32>(pub(crate) Rc<Inner<T>>);

impl<T: Float> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Float> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.0.data.borrow();
        let mut d = f.debug_struct("Tensor");
        d.field("shape", &self.0.shape).field("requires_grad", &self.0.requires_grad);
        if let Some(node) = &self.0.node {
            d.field("op", &node.op);
        }
        if data.len() <= 16 {
            d.field("data", &*data);
        }
        d.finish()
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Float> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::DataLength { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    /// A leaf that accumulates gradients.
    pub fn parameter(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(TensorError::DataLength { shape: shape.to_vec(), len: data.len() });
        }
        Ok(Self::leaf(shape.to_vec(), data, true))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::from_f(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::leaf(shape.to_vec(), vec![value; numel(shape)], false)
    }

    pub fn scalar(value: T) -> Self {
        Self::leaf(vec![1], vec![value], false)
    }

    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            node: None,
        }))
    }

    /// Builds the result of an op. A node is recorded only when some parent
    /// requires a gradient; otherwise the result is a constant leaf.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len(), "{op}");
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let node = requires_grad.then(|| Node { op, parents, backward });
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            node,
        }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.borrow().len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Name of the op that produced this tensor, if it is part of a graph.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values, for optimizers and finite differences.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.borrow().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.borrow().iter().map(|v| v.as_f64()).collect()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> T {
        let d = self.0.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.0.shape);
        d[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub(crate) fn node(&self) -> Option<&Node<T>> {
        self.0.node.as_ref()
    }

    /// Same values, no history: gradients never flow through the result.
    pub fn detach(&self) -> Tensor<T> {
        Self::leaf(self.0.shape.clone(), self.to_vec(), false)
    }

    /// Copy with a different element type; the result is a fresh leaf.
    pub fn cast<U: Float>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|v| U::from_f(v.as_f64())).collect();
        Tensor::leaf(self.0.shape.clone(), data, self.requires_grad() && self.is_leaf())
    }

    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}
