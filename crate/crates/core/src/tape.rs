//! Reverse-mode automatic differentiation over dynamic-dimension `f64` arrays.
//!
//! A [`Tape`] records every operation of a forward pass as a node in an
//! arena; [`Tape::backward`] walks the arena in reverse and accumulates
//! gradients. One tape is built per training iteration and dropped
//! afterwards. All stored values are standard-layout owned arrays, so
//! zero-copy 2-D views are always available for the matmul kernels.
//!
//! Binary operations broadcast NumPy-style (shapes aligned from the
//! trailing axis); the corresponding gradients are summed back over the
//! broadcast axes.

use ndarray::{ArrayD, ArrayView2, Axis, Ix2, IxDyn, Slice};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Abs(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    Silu(Var),
    MatMul(Var, Var),
    Transpose(Var, usize, usize),
    Reshape(Var),
    SumAll(Var),
    MeanAll(Var),
    SumAxis(Var),
    MeanAxis(Var, usize),
    Softmax(Var),
    Narrow(Var, usize, usize, usize),
    Rows(Var, Vec<usize>),
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
    needs_grad: bool,
}

/// Arena of recorded operations plus the values produced by them.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<ArrayD<f64>>>,
    grad_enabled: bool,
}

impl Tape {
    /// Tape that tracks gradients for leaves created with [`Tape::leaf_grad`].
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), grad_enabled: true }
    }

    /// Tape that records values only; `backward` must not be called on it.
    pub fn no_grad() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new(), grad_enabled: false }
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> Var {
        let needs = needs_grad && self.grad_enabled;
        self.nodes.push(Node { value, op, needs_grad: needs });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; no gradient flows into it.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable input (a parameter or an optimized activation).
    pub fn leaf_grad(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a 0-d or single-element node as a plain scalar.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        debug_assert_eq!(a.len(), 1, "scalar() on node with {} elements", a.len());
        *a.iter().next().expect("empty node value")
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    // ---- elementwise binary ops (broadcasting) ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = bin_broadcast(self.value(a), self.value(b), |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = bin_broadcast(self.value(a), self.value(b), |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = bin_broadcast(self.value(a), self.value(b), |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = bin_broadcast(self.value(a), self.value(b), |x, y| x / y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Div(a, b), ng)
    }

    // ---- elementwise unary ops ----

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x * c);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x + c);
        let ng = self.needs(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        let ng = self.needs(a);
        self.push(v, Op::Exp(a), ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        let ng = self.needs(a);
        self.push(v, Op::Ln(a), ng)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::sqrt);
        let ng = self.needs(a);
        self.push(v, Op::Sqrt(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::abs);
        let ng = self.needs(a);
        self.push(v, Op::Abs(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        let ng = self.needs(a);
        self.push(v, Op::Gelu(a), ng)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        let ng = self.needs(a);
        self.push(v, Op::Silu(a), ng)
    }

    // ---- structure ops ----

    /// Matrix product. `b` is either a 2-D weight (shared across the
    /// leading axes of `a`) or a batched operand with identical leading
    /// dimensions.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = batched_matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var, ax1: usize, ax2: usize) -> Var {
        let mut view = self.value(a).view();
        view.swap_axes(ax1, ax2);
        let v = view.as_standard_layout().to_owned();
        let ng = self.needs(a);
        self.push(v, Op::Transpose(a, ax1, ax2), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let v = self
            .value(a)
            .view()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: incompatible size")
            .to_owned();
        let ng = self.needs(a);
        self.push(v, Op::Reshape(a), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = ndarray::arr0(self.value(a).sum()).into_dyn();
        let ng = self.needs(a);
        self.push(v, Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = ndarray::arr0(self.value(a).mean().expect("mean of empty array")).into_dyn();
        let ng = self.needs(a);
        self.push(v, Op::MeanAll(a), ng)
    }

    /// Sum over one axis, keeping it as size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let v = self.value(a).sum_axis(Axis(axis)).insert_axis(Axis(axis));
        let ng = self.needs(a);
        self.push(v, Op::SumAxis(a), ng)
    }

    /// Mean over one axis, keeping it as size 1.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Var {
        let v = self
            .value(a)
            .mean_axis(Axis(axis))
            .expect("mean over empty axis")
            .insert_axis(Axis(axis));
        let ng = self.needs(a);
        self.push(v, Op::MeanAxis(a, axis), ng)
    }

    /// Numerically stable softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let last = x.ndim() - 1;
        let mut v = x.to_owned();
        for mut lane in v.lanes_mut(Axis(last)) {
            let m = lane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            lane.mapv_inplace(|e| (e - m).exp());
            let s = lane.sum();
            lane.mapv_inplace(|e| e / s);
        }
        let ng = self.needs(a);
        self.push(v, Op::Softmax(a), ng)
    }

    /// Contiguous slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Var {
        let v = self
            .value(a)
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .to_owned();
        let ng = self.needs(a);
        self.push(v, Op::Narrow(a, axis, start, len), ng)
    }

    /// Select rows (axis 0) by index; indices may repeat.
    pub fn rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), indices);
        let ng = self.needs(a);
        self.push(v, Op::Rows(a, indices.to_vec()), ng)
    }

    // ---- backward ----

    /// Accumulate gradients of a scalar `loss` into every `needs_grad` node.
    pub fn backward(&mut self, loss: Var) {
        assert!(self.grad_enabled, "backward on a no-grad tape");
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward target must be scalar");
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        let seed = ArrayD::ones(self.nodes[loss.0].value.raw_dim());
        self.grads[loss.0] = Some(seed);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match self.grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
    }

    fn accumulate(&mut self, v: Var, contrib: ArrayD<f64>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => *g += &contrib,
            // stored row-major so later reshaping views never fail
            slot @ None => *slot = Some(standardize(contrib)),
        }
    }

    fn propagate(&mut self, i: usize, g: &ArrayD<f64>) {
        // Taking op apart by value is avoided; clone cheap metadata only.
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                let ga = reduce_to_shape(g.clone(), self.shape(a));
                self.accumulate(a, ga);
                let gb = reduce_to_shape(g.clone(), self.shape(b));
                self.accumulate(b, gb);
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                let ga = reduce_to_shape(g.clone(), self.shape(a));
                self.accumulate(a, ga);
                let gb = reduce_to_shape(g.mapv(|x| -x), self.shape(b));
                self.accumulate(b, gb);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let ga = bin_broadcast(g, self.value(b), |x, y| x * y);
                self.accumulate(a, reduce_to_shape(ga, self.shape(a)));
                let gb = bin_broadcast(g, self.value(a), |x, y| x * y);
                self.accumulate(b, reduce_to_shape(gb, self.shape(b)));
            }
            Op::Div(a, b) => {
                let (a, b) = (*a, *b);
                let ga = bin_broadcast(g, self.value(b), |x, y| x / y);
                self.accumulate(a, reduce_to_shape(ga, self.shape(a)));
                let num = bin_broadcast(self.value(a), self.value(b), |x, y| -x / (y * y));
                let gb = bin_broadcast(g, &num, |x, y| x * y);
                self.accumulate(b, reduce_to_shape(gb, self.shape(b)));
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                self.accumulate(a, g.mapv(|x| x * c));
            }
            Op::AddScalar(a) => {
                let a = *a;
                self.accumulate(a, g.clone());
            }
            Op::Exp(a) => {
                let a = *a;
                let ga = g * &self.nodes[i].value;
                self.accumulate(a, ga);
            }
            Op::Ln(a) => {
                let a = *a;
                let ga = bin_broadcast(g, self.value(a), |x, y| x / y);
                self.accumulate(a, ga);
            }
            Op::Sqrt(a) => {
                let a = *a;
                let ga = bin_broadcast(g, &self.nodes[i].value, |x, y| 0.5 * x / y);
                self.accumulate(a, ga);
            }
            Op::Abs(a) => {
                let a = *a;
                let ga = bin_broadcast(g, self.value(a), |x, y| x * sign(y));
                self.accumulate(a, ga);
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let ga = bin_broadcast(g, &self.nodes[i].value, |x, s| x * s * (1.0 - s));
                self.accumulate(a, ga);
            }
            Op::Tanh(a) => {
                let a = *a;
                let ga = bin_broadcast(g, &self.nodes[i].value, |x, y| x * (1.0 - y * y));
                self.accumulate(a, ga);
            }
            Op::Gelu(a) => {
                let a = *a;
                let ga = bin_broadcast(g, self.value(a), |x, y| x * gelu_deriv(y));
                self.accumulate(a, ga);
            }
            Op::Silu(a) => {
                let a = *a;
                let ga = bin_broadcast(g, self.value(a), |x, y| {
                    let s = sigmoid(y);
                    x * (s + y * s * (1.0 - s))
                });
                self.accumulate(a, ga);
            }
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let (ga, gb) = matmul_backward(self.value(a), self.value(b), g);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::Transpose(a, ax1, ax2) => {
                let (a, ax1, ax2) = (*a, *ax1, *ax2);
                let mut view = g.view();
                view.swap_axes(ax1, ax2);
                self.accumulate(a, view.as_standard_layout().to_owned());
            }
            Op::Reshape(a) => {
                let a = *a;
                let shape = self.shape(a).to_vec();
                let ga = g
                    .view()
                    .into_shape_with_order(IxDyn(&shape))
                    .expect("reshape backward")
                    .to_owned();
                self.accumulate(a, ga);
            }
            Op::SumAll(a) => {
                let a = *a;
                let c = g.iter().next().copied().unwrap_or(0.0);
                let shape = self.shape(a).to_vec();
                self.accumulate(a, ArrayD::from_elem(IxDyn(&shape), c));
            }
            Op::MeanAll(a) => {
                let a = *a;
                let n = self.value(a).len() as f64;
                let c = g.iter().next().copied().unwrap_or(0.0) / n;
                let shape = self.shape(a).to_vec();
                self.accumulate(a, ArrayD::from_elem(IxDyn(&shape), c));
            }
            Op::SumAxis(a) => {
                let a = *a;
                let shape = self.shape(a).to_vec();
                let ga = g
                    .broadcast(IxDyn(&shape))
                    .expect("sum_axis backward broadcast")
                    .to_owned();
                self.accumulate(a, ga);
            }
            Op::MeanAxis(a, axis) => {
                let (a, axis) = (*a, *axis);
                let shape = self.shape(a).to_vec();
                let n = shape[axis] as f64;
                let ga = g
                    .broadcast(IxDyn(&shape))
                    .expect("mean_axis backward broadcast")
                    .mapv(|x| x / n);
                self.accumulate(a, ga);
            }
            Op::Softmax(a) => {
                let a = *a;
                let y = &self.nodes[i].value;
                let last = y.ndim() - 1;
                let gy = g * y;
                let dot = gy.sum_axis(Axis(last)).insert_axis(Axis(last));
                let ga = (g - &dot.broadcast(y.raw_dim()).expect("softmax backward").to_owned()) * y;
                self.accumulate(a, ga);
            }
            Op::Narrow(a, axis, start, len) => {
                let (a, axis, start, len) = (*a, *axis, *start, *len);
                let shape = self.shape(a).to_vec();
                let mut ga = ArrayD::zeros(IxDyn(&shape));
                ga.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                    .assign(g);
                self.accumulate(a, ga);
            }
            Op::Rows(a, idx) => {
                let (a, idx) = (*a, idx.clone());
                let shape = self.shape(a).to_vec();
                let mut ga = ArrayD::zeros(IxDyn(&shape));
                for (k, &row) in idx.iter().enumerate() {
                    let mut dst = ga.index_axis_mut(Axis(0), row);
                    dst += &g.index_axis(Axis(0), k);
                }
                self.accumulate(a, ga);
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// NumPy-style broadcast shape of two operands.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let db = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "incompatible broadcast: {:?} vs {:?}",
            a,
            b
        );
        out[i] = da.max(db);
    }
    out
}

fn bin_broadcast(a: &ArrayD<f64>, b: &ArrayD<f64>, f: impl Fn(f64, f64) -> f64) -> ArrayD<f64> {
    if a.shape() == b.shape() {
        let mut out = a.clone();
        out.zip_mut_with(b, |x, &y| *x = f(*x, y));
        return out;
    }
    let shape = broadcast_shape(a.shape(), b.shape());
    let av = a.broadcast(IxDyn(&shape)).expect("broadcast lhs");
    let bv = b.broadcast(IxDyn(&shape)).expect("broadcast rhs");
    let mut out = av.to_owned();
    out.zip_mut_with(&bv, |x, &y| *x = f(*x, y));
    out
}

/// Sum `g` over the axes that were expanded when broadcasting to its shape
/// so that the result has exactly `shape`.
fn reduce_to_shape(g: ArrayD<f64>, shape: &[usize]) -> ArrayD<f64> {
    if g.shape() == shape {
        return g;
    }
    let mut out = g;
    // Collapse extra leading axes.
    while out.ndim() > shape.len() {
        out = out.sum_axis(Axis(0));
    }
    // Sum axes that were size 1 in the target.
    for ax in 0..shape.len() {
        if shape[ax] == 1 && out.shape()[ax] != 1 {
            out = out.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    debug_assert_eq!(out.shape(), shape);
    out
}

fn view2(a: &ArrayD<f64>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    a.view()
        .into_shape_with_order((rows, cols))
        .expect("non-contiguous operand for matmul view")
}

/// Repack into row-major order when any op produced another layout.
fn standardize(a: ArrayD<f64>) -> ArrayD<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn batched_matmul(a: &ArrayD<f64>, b: &ArrayD<f64>) -> ArrayD<f64> {
    let an = a.ndim();
    assert!(an >= 2, "matmul lhs must have >= 2 dims");
    let (m, k) = (a.shape()[an - 2], a.shape()[an - 1]);
    if b.ndim() == 2 {
        assert_eq!(b.shape()[0], k, "matmul inner dim mismatch");
        let n = b.shape()[1];
        let rows = a.len() / k;
        let a2 = view2(a, rows, k);
        let b2 = b.view().into_dimensionality::<Ix2>().expect("2-d rhs");
        let c = a2.dot(&b2);
        let mut shape = a.shape().to_vec();
        shape[an - 1] = n;
        c.into_shape_with_order(IxDyn(&shape)).expect("matmul reshape")
    } else {
        assert_eq!(a.ndim(), b.ndim(), "matmul rank mismatch");
        assert_eq!(
            &a.shape()[..an - 2],
            &b.shape()[..an - 2],
            "matmul leading dims mismatch"
        );
        assert_eq!(b.shape()[an - 2], k, "matmul inner dim mismatch");
        let n = b.shape()[an - 1];
        let lead: usize = a.shape()[..an - 2].iter().product();
        let a3 = a
            .view()
            .into_shape_with_order((lead, m, k))
            .expect("batched lhs view");
        let b3 = b
            .view()
            .into_shape_with_order((lead, k, n))
            .expect("batched rhs view");
        let mut out = ndarray::Array3::<f64>::zeros((lead, m, n));
        for i in 0..lead {
            out.index_axis_mut(Axis(0), i)
                .assign(&a3.index_axis(Axis(0), i).dot(&b3.index_axis(Axis(0), i)));
        }
        let mut shape = a.shape().to_vec();
        shape[an - 1] = n;
        out.into_shape_with_order(IxDyn(&shape)).expect("matmul reshape")
    }
}

fn matmul_backward(
    a: &ArrayD<f64>,
    b: &ArrayD<f64>,
    g: &ArrayD<f64>,
) -> (ArrayD<f64>, ArrayD<f64>) {
    let an = a.ndim();
    let (m, k) = (a.shape()[an - 2], a.shape()[an - 1]);
    if b.ndim() == 2 {
        let n = b.shape()[1];
        let rows = a.len() / k;
        let a2 = view2(a, rows, k);
        let g2 = view2(g, rows, n);
        let b2 = b.view().into_dimensionality::<Ix2>().expect("2-d rhs");
        // `dot` may hand back a column-major result for outer-product
        // shapes; reshaping to the lhs shape needs row-major data
        let ga = standardize(g2.dot(&b2.t()).into_dyn());
        let gb = a2.t().dot(&g2);
        (
            ga.into_shape_with_order(IxDyn(a.shape())).expect("ga reshape"),
            gb.into_dyn(),
        )
    } else {
        let n = b.shape()[an - 1];
        let lead: usize = a.shape()[..an - 2].iter().product();
        let a3 = a.view().into_shape_with_order((lead, m, k)).expect("lhs view");
        let b3 = b.view().into_shape_with_order((lead, k, n)).expect("rhs view");
        let g3 = g.view().into_shape_with_order((lead, m, n)).expect("grad view");
        let mut ga = ndarray::Array3::<f64>::zeros((lead, m, k));
        let mut gb = ndarray::Array3::<f64>::zeros((lead, k, n));
        for i in 0..lead {
            let gi = g3.index_axis(Axis(0), i);
            ga.index_axis_mut(Axis(0), i)
                .assign(&gi.dot(&b3.index_axis(Axis(0), i).t()));
            gb.index_axis_mut(Axis(0), i)
                .assign(&a3.index_axis(Axis(0), i).t().dot(&gi));
        }
        (
            ga.into_shape_with_order(IxDyn(a.shape())).expect("ga reshape"),
            gb.into_shape_with_order(IxDyn(b.shape())).expect("gb reshape"),
        )
    }
}

/// Layer normalization over the last axis, composed from primitive ops.
/// `gain`/`bias` are optional learned affine terms applied afterwards.
pub fn layer_norm(tape: &mut Tape, x: Var, gain: Option<Var>, bias: Option<Var>) -> Var {
    let last = tape.shape(x).len() - 1;
    let mu = tape.mean_axis(x, last);
    let centered = tape.sub(x, mu);
    let sq = tape.mul(centered, centered);
    let var = tape.mean_axis(sq, last);
    let var_eps = tape.add_scalar(var, 1e-6);
    let std = tape.sqrt(var_eps);
    let mut out = tape.div(centered, std);
    if let Some(g) = gain {
        out = tape.mul(out, g);
    }
    if let Some(b) = bias {
        out = tape.add(out, b);
    }
    out
}
