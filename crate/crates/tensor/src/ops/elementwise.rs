use crate::error::{Result, TensorError};
use crate::float::Float;
use crate::tensor::{numel, Tensor};

/// Index maps from each output element to the operand elements it reads.
struct Broadcast {
    out_shape: Vec<usize>,
    /// `None` when the operand has the output's shape.
    lhs: Option<Vec<usize>>,
    rhs: Option<Vec<usize>>,
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() });
            }
        };
    }
    Ok(out)
}

fn index_map(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    // Operand strides aligned to the output rank, zero on broadcast axes.
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + offset] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    let total = numel(out_shape);
    let mut map = Vec::with_capacity(total);
    let mut counter = vec![0usize; rank];
    let mut pos = 0usize;
    for _ in 0..total {
        map.push(pos);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            pos += strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            pos -= strides[ax] * counter[ax];
            counter[ax] = 0;
        }
    }
    map
}

impl Broadcast {
    fn new(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        let out_shape = broadcast_shape(op, a, b)?;
        let lhs = (a != out_shape.as_slice()).then(|| index_map(a, &out_shape));
        let rhs = (b != out_shape.as_slice()).then(|| index_map(b, &out_shape));
        Ok(Broadcast { out_shape, lhs, rhs })
    }
}

#[inline]
fn at(map: &Option<Vec<usize>>, i: usize) -> usize {
    match map {
        Some(m) => m[i],
        None => i,
    }
}

/// Sums a full-size gradient back onto an operand through its index map.
fn reduce<T: Float>(g: &[T], map: &Option<Vec<usize>>, len: usize) -> Vec<T> {
    match map {
        None => g.to_vec(),
        Some(m) => {
            let mut out = vec![T::zero(); len];
            for (&gi, &j) in g.iter().zip(m) {
                out[j] += gi;
            }
            out
        }
    }
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Float>(self, x: T, y: T) -> T {
        match self {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        }
    }
}

fn binary<T: Float>(a: &Tensor<T>, b: &Tensor<T>, op: BinOp) -> Result<Tensor<T>> {
    let plan = Broadcast::new(op.name(), a.shape(), b.shape())?;
    let n = numel(&plan.out_shape);
    let data: Vec<T> = {
        let (ad, bd) = (a.data(), b.data());
        (0..n).map(|i| op.apply(ad[at(&plan.lhs, i)], bd[at(&plan.rhs, i)])).collect()
    };
    let (a2, b2) = (a.clone(), b.clone());
    let out_shape = plan.out_shape.clone();
    let Broadcast { lhs, rhs, .. } = plan;
    Ok(Tensor::from_op(
        op.name(),
        out_shape,
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, needs| {
            let (ad, bd) = (a2.data(), b2.data());
            let mut ga = None;
            let mut gb = None;
            if needs[0] {
                let full: Vec<T> = match op {
                    BinOp::Add | BinOp::Sub => g.to_vec(),
                    BinOp::Mul => g.iter().enumerate().map(|(i, &gi)| gi * bd[at(&rhs, i)]).collect(),
                    BinOp::Div => g.iter().enumerate().map(|(i, &gi)| gi / bd[at(&rhs, i)]).collect(),
                };
                ga = Some(reduce(&full, &lhs, ad.len()));
            }
            if needs[1] {
                let full: Vec<T> = match op {
                    BinOp::Add => g.to_vec(),
                    BinOp::Sub => g.iter().map(|&gi| -gi).collect(),
                    BinOp::Mul => g.iter().enumerate().map(|(i, &gi)| gi * ad[at(&lhs, i)]).collect(),
                    BinOp::Div => g
                        .iter()
                        .enumerate()
                        .map(|(i, &gi)| {
                            let y = bd[at(&rhs, i)];
                            -gi * ad[at(&lhs, i)] / (y * y)
                        })
                        .collect(),
                };
                gb = Some(reduce(&full, &rhs, bd.len()));
            }
            vec![ga, gb]
        }),
    ))
}

/// Elementwise map whose derivative is a function of the input and output.
pub(crate) fn unary<T: Float>(
    x: &Tensor<T>,
    name: &'static str,
    f: impl Fn(T) -> T,
    df: impl Fn(T, T) -> T + 'static,
) -> Tensor<T> {
    let data: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
    let saved_out = if x.requires_grad() { data.clone() } else { Vec::new() };
    let x2 = x.clone();
    Tensor::from_op(
        name,
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |g, _| {
            let xd = x2.data();
            let gx = g
                .iter()
                .zip(xd.iter().zip(&saved_out))
                .map(|(&gi, (&xi, &yi))| gi * df(xi, yi))
                .collect();
            vec![Some(gx)]
        }),
    )
}

impl<T: Float> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinOp::Div)
    }

    pub fn neg(&self) -> Tensor<T> {
        unary(self, "neg", |v| -v, |_, _| -T::one())
    }

    pub fn add_scalar(&self, s: T) -> Tensor<T> {
        unary(self, "add_scalar", move |v| v + s, |_, _| T::one())
    }

    pub fn mul_scalar(&self, s: T) -> Tensor<T> {
        unary(self, "mul_scalar", move |v| v * s, move |_, _| s)
    }

    pub fn relu(&self) -> Tensor<T> {
        unary(
            self,
            "relu",
            |v| if v > T::zero() { v } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// Natural log of `max(x, 1e-12)`; zero gradient below the floor.
    pub fn log(&self) -> Tensor<T> {
        let floor = T::log_floor();
        unary(
            self,
            "log",
            move |v| v.max(floor).ln(),
            move |x, _| if x >= floor { x.recip() } else { T::zero() },
        )
    }

    /// |x| with subgradient 0 at the origin.
    pub fn abs(&self) -> Tensor<T> {
        unary(
            self,
            "abs",
            |v| v.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn exp(&self) -> Tensor<T> {
        unary(self, "exp", |v| v.exp(), |_, y| y)
    }
}
