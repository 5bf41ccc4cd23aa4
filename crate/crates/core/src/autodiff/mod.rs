//! Define-by-run reverse-mode automatic differentiation over complex tensors.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a real scalar walks the record in reverse and returns
//! [`Gradients`] for every leaf created with `requires_grad`.
//!
//! # Gradient convention
//!
//! A complex leaf `z = a + jb` is treated as the pair of real leaves `(a, b)`.
//! The gradient stored for it is the complex number `∂L/∂a + j ∂L/∂b`, which is
//! twice the conjugate Wirtinger derivative of the real loss `L`. Finite
//! differences on the real and imaginary parts can be compared to it directly.
//!
//! Some operations act on the real part of their input only (`exp_j`, `log`,
//! `sqrt`, `powf`, `sigmoid`, `leaky_relu`, `softmax`); their gradients are real.
//!
//! Shape mismatches are programming errors and panic. Numerical domain errors
//! (log of a non-positive number, reciprocal of zero, singular inverse) poison
//! the tape, and the next [`Tape::backward`] reports them.
//!
//! ```
//! use ris_pass::autodiff::Tape;
//! use num_complex::Complex64;
//!
//! let tape = Tape::new();
//! let z = tape.var(&[1], vec![Complex64::new(3.0, 4.0)]);
//! let loss = z.abs2().sum_all();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(loss.scalar(), 25.0);
//! assert_eq!(grads.wrt(z).unwrap()[0], Complex64::new(6.0, 8.0));
//! ```

mod kernels;

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::rc::Rc;

use num_complex::Complex64 as C64;
use thiserror::Error;

use kernels::{axis_split, broadcast_offsets, broadcast_shape, numel};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdError {
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("backward requires a real-valued loss")]
    NonReal,
    #[error("domain error in `{op}`: {detail}")]
    Domain { op: &'static str, detail: String },
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Conj(usize),
    Scale(usize, C64),
    Shift(usize),
    Abs2(usize),
    Abs(usize),
    ExpJ(usize),
    Recip(usize),
    Log(usize),
    Sqrt(usize),
    Powf(usize, f64),
    Sigmoid(usize),
    ReluC(usize),
    LeakyRelu(usize, f64),
    ClampMin(usize, f64),
    Re(usize),
    Im(usize),
    UnitPhase(usize),
    Sum(usize, usize),
    Reshape(usize),
    TransposeLast2(usize),
    Concat(Vec<usize>, usize),
    Narrow(usize, usize, usize),
    Matmul(usize, usize),
    Softmax(usize),
    Inverse(usize),
    Norm(usize, usize),
}

struct Node {
    shape: Vec<usize>,
    value: Rc<[C64]>,
    op: Op,
    requires_grad: bool,
    real: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    poison: Option<AdError>,
}

/// Operation record. Build a fresh tape per forward pass.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First numerical domain error recorded, if any.
    pub fn poisoned(&self) -> Option<AdError> {
        self.inner.borrow().poison.clone()
    }

    fn push(&self, shape: Vec<usize>, value: Vec<C64>, op: Op, requires_grad: bool, real: bool) -> Var<'_> {
        assert_eq!(numel(&shape), value.len(), "value length does not match shape {shape:?}");
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { shape, value: Rc::from(value), op, requires_grad, real });
        Var { tape: self, id: inner.nodes.len() - 1 }
    }

    fn poison(&self, op: &'static str, detail: impl Into<String>) {
        let mut inner = self.inner.borrow_mut();
        if inner.poison.is_none() {
            inner.poison = Some(AdError::Domain { op, detail: detail.into() });
        }
    }

    /// Trainable complex leaf.
    pub fn var(&self, shape: &[usize], value: Vec<C64>) -> Var<'_> {
        self.push(shape.to_vec(), value, Op::Leaf, true, false)
    }

    /// Trainable real leaf.
    pub fn var_real(&self, shape: &[usize], value: &[f64]) -> Var<'_> {
        let v = value.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.push(shape.to_vec(), v, Op::Leaf, true, true)
    }

    /// Detached complex tensor.
    pub fn constant(&self, shape: &[usize], value: Vec<C64>) -> Var<'_> {
        let real = value.iter().all(|z| z.im == 0.0);
        self.push(shape.to_vec(), value, Op::Leaf, false, real)
    }

    /// Detached real tensor.
    pub fn constant_real(&self, shape: &[usize], value: &[f64]) -> Var<'_> {
        let v = value.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.push(shape.to_vec(), v, Op::Leaf, false, true)
    }

    pub fn scalar(&self, x: f64) -> Var<'_> {
        self.constant_real(&[], &[x])
    }

    fn node_shape(&self, id: usize) -> Vec<usize> {
        self.inner.borrow().nodes[id].shape.clone()
    }

    fn node_value(&self, id: usize) -> Rc<[C64]> {
        self.inner.borrow().nodes[id].value.clone()
    }

    fn node_meta(&self, id: usize) -> (bool, bool) {
        let inner = self.inner.borrow();
        (inner.nodes[id].requires_grad, inner.nodes[id].real)
    }

    /// Reverse pass from a real scalar.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients, AdError> {
        if let Some(e) = self.poisoned() {
            return Err(e);
        }
        let inner = self.inner.borrow();
        let root = &inner.nodes[loss.id];
        if root.value.len() != 1 {
            return Err(AdError::NonScalar(root.shape.clone()));
        }
        if !root.real {
            return Err(AdError::NonReal);
        }
        let n = loss.id + 1;
        let mut grads: Vec<Option<Vec<C64>>> = vec![None; n];
        grads[loss.id] = Some(vec![ONE]);
        let mut leaves: Vec<Option<Vec<C64>>> = vec![None; inner.nodes.len()];
        for id in (0..n).rev() {
            let node = &inner.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if let Op::Leaf = node.op {
                leaves[id] = Some(g);
                continue;
            }
            backprop(&inner.nodes, id, &g, &mut grads);
        }
        Ok(Gradients { grads: leaves })
    }
}

/// Leaf gradients from one reverse pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<C64>>>,
}

impl Gradients {
    /// `∂L/∂Re + j ∂L/∂Im` for each entry of the leaf, or `None` when the loss
    /// does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Option<&[C64]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Like [`wrt`](Self::wrt) but zero-filled when the leaf is unreachable.
    pub fn wrt_or_zero(&self, v: Var<'_>) -> Vec<C64> {
        match self.wrt(v) {
            Some(g) => g.to_vec(),
            None => vec![ZERO; v.numel()],
        }
    }

    /// Gradient split into the real pair `(∂L/∂Re, ∂L/∂Im)`.
    pub fn wrt_parts(&self, v: Var<'_>) -> (Vec<f64>, Vec<f64>) {
        let g = self.wrt_or_zero(v);
        (g.iter().map(|z| z.re).collect(), g.iter().map(|z| z.im).collect())
    }
}

fn accumulate(grads: &mut [Option<Vec<C64>>], id: usize, len: usize, f: impl FnOnce(&mut [C64])) {
    let slot = grads[id].get_or_insert_with(|| vec![ZERO; len]);
    f(slot);
}

fn add_bcast(grads: &mut [Option<Vec<C64>>], nodes: &[Node], id: usize, out_shape: &[usize], g: impl Fn(usize) -> C64) {
    if !nodes[id].requires_grad {
        return;
    }
    let len = nodes[id].value.len();
    let offs = broadcast_offsets(out_shape, &nodes[id].shape);
    let total = numel(out_shape);
    accumulate(grads, id, len, |slot| match offs {
        None => {
            for (i, s) in slot.iter_mut().enumerate() {
                *s += g(i);
            }
        }
        Some(o) => {
            for i in 0..total {
                slot[o[i]] += g(i);
            }
        }
    });
}

fn add_direct(grads: &mut [Option<Vec<C64>>], nodes: &[Node], id: usize, f: impl Fn(usize) -> C64) {
    if !nodes[id].requires_grad {
        return;
    }
    let len = nodes[id].value.len();
    accumulate(grads, id, len, |slot| {
        for (i, s) in slot.iter_mut().enumerate() {
            *s += f(i);
        }
    });
}

fn bcast_value(nodes: &[Node], id: usize, out_shape: &[usize]) -> Vec<C64> {
    let v = &nodes[id].value;
    match broadcast_offsets(out_shape, &nodes[id].shape) {
        None => v.to_vec(),
        Some(o) => o.iter().map(|&k| v[k]).collect(),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &[C64], grads: &mut [Option<Vec<C64>>]) {
    let node = &nodes[id];
    let out = &node.value;
    let shape = &node.shape;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            add_bcast(grads, nodes, *a, shape, |i| g[i]);
            add_bcast(grads, nodes, *b, shape, |i| g[i]);
        }
        Op::Sub(a, b) => {
            add_bcast(grads, nodes, *a, shape, |i| g[i]);
            add_bcast(grads, nodes, *b, shape, |i| -g[i]);
        }
        Op::Mul(a, b) => {
            let av = bcast_value(nodes, *a, shape);
            let bv = bcast_value(nodes, *b, shape);
            add_bcast(grads, nodes, *a, shape, |i| g[i] * bv[i].conj());
            add_bcast(grads, nodes, *b, shape, |i| g[i] * av[i].conj());
        }
        Op::Div(a, b) => {
            let bv = bcast_value(nodes, *b, shape);
            add_bcast(grads, nodes, *a, shape, |i| g[i] * (ONE / bv[i]).conj());
            add_bcast(grads, nodes, *b, shape, |i| -g[i] * (out[i] / bv[i]).conj());
        }
        Op::Neg(a) => add_direct(grads, nodes, *a, |i| -g[i]),
        Op::Conj(a) => add_direct(grads, nodes, *a, |i| g[i].conj()),
        Op::Scale(a, c) => add_direct(grads, nodes, *a, |i| g[i] * c.conj()),
        Op::Shift(a) => add_direct(grads, nodes, *a, |i| g[i]),
        Op::Abs2(a) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| x[i] * (2.0 * g[i].re));
        }
        Op::Abs(a) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| if out[i].re > 0.0 { x[i] * (g[i].re / out[i].re) } else { ZERO });
        }
        Op::ExpJ(a) => add_direct(grads, nodes, *a, |i| C64::new(-(out[i] * g[i].conj()).im, 0.0)),
        Op::Recip(a) => add_direct(grads, nodes, *a, |i| -g[i] * (out[i] * out[i]).conj()),
        Op::Log(a) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| C64::new(g[i].re / x[i].re, 0.0));
        }
        Op::Sqrt(a) => add_direct(grads, nodes, *a, |i| {
            if out[i].re > 0.0 {
                C64::new(g[i].re / (2.0 * out[i].re), 0.0)
            } else {
                ZERO
            }
        }),
        Op::Powf(a, p) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| C64::new(g[i].re * p * x[i].re.powf(p - 1.0), 0.0));
        }
        Op::Sigmoid(a) => add_direct(grads, nodes, *a, |i| {
            let s = out[i].re;
            C64::new(g[i].re * s * (1.0 - s), 0.0)
        }),
        Op::ReluC(a) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| {
                C64::new(
                    if x[i].re > 0.0 { g[i].re } else { 0.0 },
                    if x[i].im > 0.0 { g[i].im } else { 0.0 },
                )
            });
        }
        Op::LeakyRelu(a, slope) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| C64::new(if x[i].re > 0.0 { g[i].re } else { slope * g[i].re }, 0.0));
        }
        Op::ClampMin(a, floor) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| C64::new(if x[i].re > *floor { g[i].re } else { 0.0 }, 0.0));
        }
        Op::Re(a) => add_direct(grads, nodes, *a, |i| C64::new(g[i].re, 0.0)),
        Op::Im(a) => add_direct(grads, nodes, *a, |i| C64::new(0.0, g[i].re)),
        Op::UnitPhase(a) => {
            let x = &nodes[*a].value;
            add_direct(grads, nodes, *a, |i| {
                let r = x[i].norm();
                if r > 0.0 {
                    g[i] / r - x[i] * ((g[i].conj() * x[i]).re / (r * r * r))
                } else {
                    ZERO
                }
            });
        }
        Op::Sum(a, axis) => {
            let (_, len, inner) = axis_split(&nodes[*a].shape, *axis);
            add_direct(grads, nodes, *a, |i| {
                let o = i / (len * inner);
                let r = i % inner;
                g[o * inner + r]
            });
        }
        Op::Reshape(a) => add_direct(grads, nodes, *a, |i| g[i]),
        Op::TransposeLast2(a) => {
            let gt = kernels::transpose_last2(g, shape);
            add_direct(grads, nodes, *a, |i| gt[i]);
        }
        Op::Concat(srcs, axis) => {
            let (_, _, inner) = axis_split(shape, *axis);
            let total_len = shape[*axis];
            let mut start = 0;
            for &s in srcs {
                let len = nodes[s].shape[*axis];
                add_direct(grads, nodes, s, |i| {
                    let o = i / (len * inner);
                    let rem = i % (len * inner);
                    g[o * total_len * inner + start * inner + rem]
                });
                start += len;
            }
        }
        Op::Narrow(a, axis, start) => {
            let src_shape = &nodes[*a].shape;
            let (_, src_len, inner) = axis_split(src_shape, *axis);
            let len = shape[*axis];
            add_direct(grads, nodes, *a, |i| {
                let o = i / (src_len * inner);
                let rem = i % (src_len * inner);
                let pos = rem / inner;
                if pos >= *start && pos < start + len {
                    g[o * len * inner + (pos - start) * inner + rem % inner]
                } else {
                    ZERO
                }
            });
        }
        Op::Matmul(a, b) => matmul_backward(nodes, *a, *b, g, grads),
        Op::Softmax(a) => {
            let cols = *shape.last().unwrap();
            let rows = out.len() / cols;
            let mut gx = vec![ZERO; out.len()];
            for r in 0..rows {
                let base = r * cols;
                let dot: f64 = (0..cols).map(|c| out[base + c].re * g[base + c].re).sum();
                for c in 0..cols {
                    gx[base + c] = C64::new(out[base + c].re * (g[base + c].re - dot), 0.0);
                }
            }
            add_direct(grads, nodes, *a, |i| gx[i]);
        }
        Op::Inverse(a) => {
            // gA = −Y^H G Y^H
            let r = shape.len();
            let n = shape[r - 1];
            let batch = out.len() / (n * n);
            let mut ga = vec![ZERO; out.len()];
            for bi in 0..batch {
                let y = &out[bi * n * n..(bi + 1) * n * n];
                let gb = &g[bi * n * n..(bi + 1) * n * n];
                let mut tmp = vec![ZERO; n * n];
                kernels::gemm_hn(y, gb, &mut tmp, n, n, n);
                let mut res = vec![ZERO; n * n];
                kernels::gemm_nh(&tmp, y, &mut res, n, n, n);
                for (d, v) in ga[bi * n * n..(bi + 1) * n * n].iter_mut().zip(res) {
                    *d = -v;
                }
            }
            add_direct(grads, nodes, *a, |i| ga[i]);
        }
        Op::Norm(a, axis) => {
            let x = &nodes[*a].value;
            let (_, len, inner) = axis_split(&nodes[*a].shape, *axis);
            add_direct(grads, nodes, *a, |i| {
                let o = i / (len * inner);
                let j = o * inner + i % inner;
                let nv = out[j].re;
                if nv > 0.0 {
                    x[i] * (g[j].re / nv)
                } else {
                    ZERO
                }
            });
        }
    }
}

struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_shared: bool,
    b_shared: bool,
    out_shape: Vec<usize>,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> MatmulDims {
    assert!(a.len() >= 2 && b.len() >= 2, "matmul needs rank ≥ 2, got {a:?} × {b:?}");
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    assert_eq!(k, k2, "matmul inner dimensions differ: {a:?} × {b:?}");
    let pa = &a[..a.len() - 2];
    let pb = &b[..b.len() - 2];
    if b.len() == 2 {
        // Fold the batch into rows of A.
        let rows = numel(pa) * m;
        let mut out_shape = a.to_vec();
        *out_shape.last_mut().unwrap() = n;
        return MatmulDims { batch: 1, m: rows, k, n, a_shared: false, b_shared: true, out_shape };
    }
    if a.len() == 2 {
        let mut out_shape = pb.to_vec();
        out_shape.extend([m, n]);
        return MatmulDims { batch: numel(pb), m, k, n, a_shared: true, b_shared: false, out_shape };
    }
    assert_eq!(pa, pb, "matmul batch dimensions differ: {a:?} × {b:?}");
    let mut out_shape = pa.to_vec();
    out_shape.extend([m, n]);
    MatmulDims { batch: numel(pa), m, k, n, a_shared: false, b_shared: false, out_shape }
}

fn matmul_backward(nodes: &[Node], a: usize, b: usize, g: &[C64], grads: &mut [Option<Vec<C64>>]) {
    let d = matmul_dims(&nodes[a].shape, &nodes[b].shape);
    let av = &nodes[a].value;
    let bv = &nodes[b].value;
    let (m, k, n) = (d.m, d.k, d.n);
    if nodes[a].requires_grad {
        let len = av.len();
        accumulate(grads, a, len, |slot| {
            for bi in 0..d.batch {
                let gs = &g[bi * m * n..(bi + 1) * m * n];
                let bs = if d.b_shared { &bv[..] } else { &bv[bi * k * n..(bi + 1) * k * n] };
                let dst = if d.a_shared { &mut slot[..] } else { &mut slot[bi * m * k..(bi + 1) * m * k] };
                kernels::gemm_nh(gs, bs, dst, m, k, n);
            }
        });
    }
    if nodes[b].requires_grad {
        let len = bv.len();
        accumulate(grads, b, len, |slot| {
            for bi in 0..d.batch {
                let gs = &g[bi * m * n..(bi + 1) * m * n];
                let as_ = if d.a_shared { &av[..] } else { &av[bi * m * k..(bi + 1) * m * k] };
                let dst = if d.b_shared { &mut slot[..] } else { &mut slot[bi * k * n..(bi + 1) * k * n] };
                kernels::gemm_hn(as_, gs, dst, m, k, n);
            }
        });
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.node_shape(self.id)
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().nodes[self.id].value.len()
    }

    pub fn value(&self) -> Rc<[C64]> {
        self.tape.node_value(self.id)
    }

    /// Real parts of the value.
    pub fn real_values(&self) -> Vec<f64> {
        self.value().iter().map(|z| z.re).collect()
    }

    /// Value of a one-element tensor (real part).
    pub fn scalar(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.len(), 1, "scalar() on a tensor with {} entries", v.len());
        v[0].re
    }

    pub fn is_real(&self) -> bool {
        self.tape.node_meta(self.id).1
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.node_meta(self.id).0
    }

    fn unary(self, op: Op, value: Vec<C64>, real: bool) -> Var<'t> {
        let (rg, _) = self.tape.node_meta(self.id);
        self.tape.push(self.shape(), value, op, rg, real)
    }

    fn map(self, f: impl Fn(C64) -> C64) -> Vec<C64> {
        self.value().iter().map(|&z| f(z)).collect()
    }

    fn binary(self, other: Var<'t>, op_name: &str, f: impl Fn(C64, C64) -> C64, make: fn(usize, usize) -> Op) -> Var<'t> {
        let sa = self.shape();
        let sb = other.shape();
        let out_shape = broadcast_shape(&sa, &sb)
            .unwrap_or_else(|| panic!("{op_name}: cannot broadcast {sa:?} with {sb:?}"));
        let av = self.value();
        let bv = other.value();
        let oa = broadcast_offsets(&out_shape, &sa);
        let ob = broadcast_offsets(&out_shape, &sb);
        let total = numel(&out_shape);
        let value: Vec<C64> = (0..total)
            .map(|i| {
                let x = av[oa.as_ref().map_or(i, |o| o[i])];
                let y = bv[ob.as_ref().map_or(i, |o| o[i])];
                f(x, y)
            })
            .collect();
        let (ra, ra_real) = self.tape.node_meta(self.id);
        let (rb, rb_real) = self.tape.node_meta(other.id);
        self.tape.push(out_shape, value, make(self.id, other.id), ra || rb, ra_real && rb_real)
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        if other.value().iter().any(|z| z.re == 0.0 && z.im == 0.0) {
            self.tape.poison("div", "division by zero");
        }
        self.binary(other, "div", |x, y| x / y, Op::Div)
    }

    pub fn neg(self) -> Var<'t> {
        let real = self.is_real();
        let v = self.map(|z| -z);
        self.unary(Op::Neg(self.id), v, real)
    }

    pub fn conj(self) -> Var<'t> {
        let real = self.is_real();
        let v = self.map(|z| z.conj());
        self.unary(Op::Conj(self.id), v, real)
    }

    pub fn scale(self, c: C64) -> Var<'t> {
        let real = self.is_real() && c.im == 0.0;
        let v = self.map(|z| z * c);
        self.unary(Op::Scale(self.id, c), v, real)
    }

    pub fn scale_re(self, c: f64) -> Var<'t> {
        self.scale(C64::new(c, 0.0))
    }

    /// Adds a constant to every entry.
    pub fn shift(self, c: C64) -> Var<'t> {
        let real = self.is_real() && c.im == 0.0;
        let v = self.map(|z| z + c);
        self.unary(Op::Shift(self.id), v, real)
    }

    pub fn shift_re(self, c: f64) -> Var<'t> {
        self.shift(C64::new(c, 0.0))
    }

    /// `|z|²`, real.
    pub fn abs2(self) -> Var<'t> {
        let v = self.map(|z| C64::new(z.norm_sqr(), 0.0));
        self.unary(Op::Abs2(self.id), v, true)
    }

    /// `|z|`, real.
    pub fn abs(self) -> Var<'t> {
        let v = self.map(|z| C64::new(z.norm(), 0.0));
        self.unary(Op::Abs(self.id), v, true)
    }

    /// `e^{jθ}` of the real part.
    pub fn exp_j(self) -> Var<'t> {
        let v = self.map(|z| C64::from_polar(1.0, z.re));
        self.unary(Op::ExpJ(self.id), v, false)
    }

    pub fn recip(self) -> Var<'t> {
        let real = self.is_real();
        if self.value().iter().any(|z| z.re == 0.0 && z.im == 0.0) {
            self.tape.poison("recip", "reciprocal of zero");
        }
        let v = self.map(|z| ONE / z);
        self.unary(Op::Recip(self.id), v, real)
    }

    /// Natural log of the real part.
    pub fn log(self) -> Var<'t> {
        if let Some(z) = self.value().iter().find(|z| !(z.re > 0.0)) {
            self.tape.poison("log", format!("non-positive argument {}", z.re));
        }
        let v = self.map(|z| C64::new(z.re.ln(), 0.0));
        self.unary(Op::Log(self.id), v, true)
    }

    /// Square root of the real part; the gradient at 0 is taken as 0.
    pub fn sqrt(self) -> Var<'t> {
        if let Some(z) = self.value().iter().find(|z| z.re < 0.0) {
            self.tape.poison("sqrt", format!("negative argument {}", z.re));
        }
        let v = self.map(|z| C64::new(z.re.max(0.0).sqrt(), 0.0));
        self.unary(Op::Sqrt(self.id), v, true)
    }

    /// `x^p` of the real part, for positive `x`.
    pub fn powf(self, p: f64) -> Var<'t> {
        if let Some(z) = self.value().iter().find(|z| !(z.re > 0.0)) {
            self.tape.poison("powf", format!("non-positive base {}", z.re));
        }
        let v = self.map(|z| C64::new(z.re.powf(p), 0.0));
        self.unary(Op::Powf(self.id, p), v, true)
    }

    /// Logistic sigmoid of the real part.
    pub fn sigmoid(self) -> Var<'t> {
        let v = self.map(|z| C64::new(sigmoid(z.re), 0.0));
        self.unary(Op::Sigmoid(self.id), v, true)
    }

    /// Complex ReLU: ReLU applied to real and imaginary parts independently.
    pub fn relu_c(self) -> Var<'t> {
        let real = self.is_real();
        let v = self.map(|z| C64::new(z.re.max(0.0), z.im.max(0.0)));
        self.unary(Op::ReluC(self.id), v, real)
    }

    /// LeakyReLU of the real part.
    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let v = self.map(|z| C64::new(if z.re > 0.0 { z.re } else { slope * z.re }, 0.0));
        self.unary(Op::LeakyRelu(self.id, slope), v, true)
    }

    /// `max(Re z, floor)`; no gradient where the floor is active.
    pub fn clamp_min(self, floor: f64) -> Var<'t> {
        let v = self.map(|z| C64::new(z.re.max(floor), 0.0));
        self.unary(Op::ClampMin(self.id, floor), v, true)
    }

    pub fn re(self) -> Var<'t> {
        let v = self.map(|z| C64::new(z.re, 0.0));
        self.unary(Op::Re(self.id), v, true)
    }

    pub fn im(self) -> Var<'t> {
        let v = self.map(|z| C64::new(z.im, 0.0));
        self.unary(Op::Im(self.id), v, true)
    }

    /// `z/|z|` elementwise, with `0 ↦ 1`.
    pub fn unit_phase(self) -> Var<'t> {
        let v = self.map(|z| {
            let r = z.norm();
            if r > 0.0 {
                z / r
            } else {
                ONE
            }
        });
        self.unary(Op::UnitPhase(self.id), v, false)
    }

    /// Sum over `axis`; the axis is kept with length 1 when `keepdim`.
    pub fn sum(self, axis: usize, keepdim: bool) -> Var<'t> {
        let shape = self.shape();
        assert!(axis < shape.len(), "sum: axis {axis} out of range for {shape:?}");
        let (outer, len, inner) = axis_split(&shape, axis);
        let x = self.value();
        let mut v = vec![ZERO; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for r in 0..inner {
                    v[o * inner + r] += x[base + r];
                }
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        let (rg, real) = self.tape.node_meta(self.id);
        self.tape.push(out_shape, v, Op::Sum(self.id, axis), rg, real)
    }

    pub fn mean(self, axis: usize, keepdim: bool) -> Var<'t> {
        let len = self.shape()[axis];
        self.sum(axis, keepdim).scale_re(1.0 / len as f64)
    }

    pub fn sum_all(self) -> Var<'t> {
        let n = self.numel();
        self.reshape(&[n]).sum(0, false)
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = self.numel();
        self.sum_all().scale_re(1.0 / n as f64)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        assert_eq!(numel(shape), self.numel(), "reshape: {:?} -> {shape:?}", self.shape());
        let (rg, real) = self.tape.node_meta(self.id);
        let v = self.value().to_vec();
        self.tape.push(shape.to_vec(), v, Op::Reshape(self.id), rg, real)
    }

    /// Swaps the last two axes.
    pub fn transpose(self) -> Var<'t> {
        let shape = self.shape();
        assert!(shape.len() >= 2, "transpose needs rank ≥ 2");
        let v = kernels::transpose_last2(&self.value(), &shape);
        let mut out_shape = shape;
        let r = out_shape.len();
        out_shape.swap(r - 1, r - 2);
        let (rg, real) = self.tape.node_meta(self.id);
        self.tape.push(out_shape, v, Op::TransposeLast2(self.id), rg, real)
    }

    /// Conjugate transpose of the last two axes.
    pub fn h(self) -> Var<'t> {
        self.transpose().conj()
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'t> {
        let shape = self.shape();
        assert!(start + len <= shape[axis], "narrow: {start}+{len} exceeds axis {axis} of {shape:?}");
        let (outer, src_len, inner) = axis_split(&shape, axis);
        let x = self.value();
        let mut v = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * src_len + start) * inner;
            v.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let (rg, real) = self.tape.node_meta(self.id);
        self.tape.push(out_shape, v, Op::Narrow(self.id, axis, start), rg, real)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let d = matmul_dims(&self.shape(), &other.shape());
        let av = self.value();
        let bv = other.value();
        let (m, k, n) = (d.m, d.k, d.n);
        let mut v = vec![ZERO; d.batch * m * n];
        for bi in 0..d.batch {
            let as_ = if d.a_shared { &av[..] } else { &av[bi * m * k..(bi + 1) * m * k] };
            let bs = if d.b_shared { &bv[..] } else { &bv[bi * k * n..(bi + 1) * k * n] };
            kernels::gemm_nn(as_, bs, &mut v[bi * m * n..(bi + 1) * m * n], m, k, n);
        }
        let (ra, ra_real) = self.tape.node_meta(self.id);
        let (rb, rb_real) = self.tape.node_meta(other.id);
        self.tape.push(d.out_shape, v, Op::Matmul(self.id, other.id), ra || rb, ra_real && rb_real)
    }

    /// Softmax of the real part along the last axis.
    pub fn softmax(self) -> Var<'t> {
        let shape = self.shape();
        let cols = *shape.last().expect("softmax on a scalar");
        let x = self.value();
        let mut v = vec![ZERO; x.len()];
        for r in 0..x.len() / cols {
            let row = &x[r * cols..(r + 1) * cols];
            let mx = row.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|z| (z.re - mx).exp()).collect();
            let s: f64 = exps.iter().sum();
            for c in 0..cols {
                v[r * cols + c] = C64::new(exps[c] / s, 0.0);
            }
        }
        self.unary(Op::Softmax(self.id), v, true)
    }

    /// Batched inverse over the last two (square) axes.
    pub fn inverse(self) -> Var<'t> {
        let shape = self.shape();
        let r = shape.len();
        assert!(r >= 2 && shape[r - 1] == shape[r - 2], "inverse needs square matrices, got {shape:?}");
        let n = shape[r - 1];
        let x = self.value();
        let mut v = Vec::with_capacity(x.len());
        for bi in 0..x.len() / (n * n).max(1) {
            match kernels::invert(&x[bi * n * n..(bi + 1) * n * n], n) {
                Some(inv) => v.extend(inv),
                None => {
                    self.tape.poison("inverse", "singular matrix");
                    v.extend(std::iter::repeat(ZERO).take(n * n));
                }
            }
        }
        let real = self.is_real();
        self.unary(Op::Inverse(self.id), v, real)
    }

    /// Euclidean norm along `axis`, real. The gradient at a zero vector is 0.
    pub fn norm(self, axis: usize, keepdim: bool) -> Var<'t> {
        let shape = self.shape();
        let (outer, len, inner) = axis_split(&shape, axis);
        let x = self.value();
        let mut v = vec![ZERO; outer * inner];
        for o in 0..outer {
            for r in 0..inner {
                let s: f64 = (0..len).map(|l| x[(o * len + l) * inner + r].norm_sqr()).sum();
                v[o * inner + r] = C64::new(s.sqrt(), 0.0);
            }
        }
        let mut out_shape = shape.clone();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        let (rg, _) = self.tape.node_meta(self.id);
        self.tape.push(out_shape, v, Op::Norm(self.id, axis), rg, true)
    }

    /// Builds `re + j·im` from two real tensors of equal shape.
    pub fn complex(re: Var<'t>, im: Var<'t>) -> Var<'t> {
        re.add(im.scale(C64::new(0.0, 1.0)))
    }
}

/// Concatenates tensors along `axis`.
pub fn concat<'t>(vars: &[Var<'t>], axis: usize) -> Var<'t> {
    assert!(!vars.is_empty(), "concat of nothing");
    let tape = vars[0].tape;
    let first = vars[0].shape();
    let mut total = 0;
    for v in vars {
        let s = v.shape();
        assert_eq!(s.len(), first.len(), "concat: rank mismatch");
        for (i, (&x, &y)) in s.iter().zip(&first).enumerate() {
            assert!(i == axis || x == y, "concat: {s:?} vs {first:?} along axis {axis}");
        }
        total += s[axis];
    }
    let (outer, _, inner) = axis_split(&first, axis);
    let values: Vec<Rc<[C64]>> = vars.iter().map(|v| v.value()).collect();
    let lens: Vec<usize> = vars.iter().map(|v| v.shape()[axis]).collect();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (val, &len) in values.iter().zip(&lens) {
            out.extend_from_slice(&val[o * len * inner..(o + 1) * len * inner]);
        }
    }
    let mut shape = first;
    shape[axis] = total;
    let rg = vars.iter().any(|v| v.requires_grad());
    let real = vars.iter().all(|v| v.is_real());
    tape.push(shape, out, Op::Concat(vars.iter().map(|v| v.id).collect(), axis), rg, real)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

macro_rules! impl_binop {
    ($tr:ident, $method:ident) => {
        impl<'t> $tr for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                Var::$method(self, rhs)
            }
        }
    };
}

impl_binop!(Add, add);
impl_binop!(Sub, sub);
impl_binop!(Mul, mul);
impl_binop!(Div, div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        Var::neg(self)
    }
}
