//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] is rebuilt for every batch: parameters and inputs are pushed as
//! leaves, each operation appends a node that remembers its operands, and
//! [`Tape::backward`] walks the nodes in reverse to accumulate gradients.
//! Rows are batch samples throughout.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn row(values: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn column(values: Vec<T>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatVec(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Cos(Var),
    Sin(Var),
    Clamp(Var, T, T),
    Sum(Var),
    Concat(Var, Var),
    SliceCols(Var, usize),
    Atan2(Var, Var),
    IrrepRotate { theta: Var, content: Var, k: usize },
    BceLogits { logits: Var, target: Var },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Dynamic computation graph.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

fn shape_err(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Shape {
        op,
        detail: format!("incompatible shapes {}x{} and {}x{}", a[0], a[1], b[0], b[1]),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward root with respect to `v` (zeros if `v`
    /// did not influence it).
    pub fn grad(&self, v: Var) -> Tensor<T> {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => {
                let [r, c] = self.shape(v);
                Tensor::zeros(r, c)
            }
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    /// Batched matrix-vector product: `[B×n]·[n×m] → [B×m]`.
    pub fn matvec(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs[1] != ws[0] {
            return Err(shape_err("matvec", xs, ws));
        }
        let (b, n, m) = (xs[0], xs[1], ws[1]);
        let xv = &self.nodes[x.0].value.data;
        let wv = &self.nodes[w.0].value.data;
        let mut out = vec![T::zero(); b * m];
        for r in 0..b {
            let orow = &mut out[r * m..(r + 1) * m];
            for i in 0..n {
                let a = xv[r * n + i];
                if a == T::zero() {
                    continue;
                }
                let wrow = &wv[i * m..(i + 1) * m];
                for (o, &wij) in orow.iter_mut().zip(wrow) {
                    *o = *o + a * wij;
                }
            }
        }
        let value = Tensor::new(b, m, out)?;
        Ok(self.push(value, Op::MatVec(x, w)))
    }

    /// Add a `[1×m]` row to every row of a `[B×m]` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs[0] != 1 || bs[1] != xs[1] {
            return Err(shape_err("add_row", xs, bs));
        }
        let bv = self.value(bias).data.clone();
        let mut value = self.value(x).clone();
        for r in 0..xs[0] {
            for (o, &b) in value.data[r * xs[1]..(r + 1) * xs[1]].iter_mut().zip(&bv) {
                *o = *o + b;
            }
        }
        Ok(self.push(value, Op::AddRow(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a))
    }

    /// Rectifier `max(x, 0)`.
    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(T::zero()));
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(T::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(T::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(T::ln);
        self.push(value, Op::Log(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let value = self.value(a).map(T::cos);
        self.push(value, Op::Cos(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let value = self.value(a).map(T::sin);
        self.push(value, Op::Sin(a))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        let value = self.value(a).map(|x| x.max(lo).min(hi));
        self.push(value, Op::Clamp(a, lo, hi))
    }

    /// Sum of all entries, as a `1×1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Column-wise concatenation `[B×n] ++ [B×m] → [B×(n+m)]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[0] != sb[0] {
            return Err(shape_err("concat", sa, sb));
        }
        let cols = sa[1] + sb[1];
        let mut data = Vec::with_capacity(sa[0] * cols);
        for r in 0..sa[0] {
            data.extend_from_slice(self.value(a).row_slice(r));
            data.extend_from_slice(self.value(b).row_slice(r));
        }
        let value = Tensor::new(sa[0], cols, data)?;
        Ok(self.push(value, Op::Concat(a, b)))
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let sa = self.shape(a);
        if start + len > sa[1] || len == 0 {
            return Err(Error::Shape {
                op: "slice_cols",
                detail: format!("columns {start}..{} of a {}x{} tensor", start + len, sa[0], sa[1]),
            });
        }
        let mut data = Vec::with_capacity(sa[0] * len);
        for r in 0..sa[0] {
            data.extend_from_slice(&self.value(a).row_slice(r)[start..start + len]);
        }
        let value = Tensor::new(sa[0], len, data)?;
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Elementwise `atan2(y, x)`.
    pub fn atan2(&mut self, y: Var, x: Var) -> Result<Var> {
        self.same_shape("atan2", y, x)?;
        let value = self.value(y).zip(self.value(x), T::atan2);
        Ok(self.push(value, Op::Atan2(y, x)))
    }

    /// Rotate a `[1×2K]` content vector by the block-diagonal representation
    /// whose `k`-th block turns by `k·θ`, once per row of `theta` (`[B×1]`).
    pub fn irrep_rotate(&mut self, theta: Var, content: Var, k: usize) -> Result<Var> {
        let (st, sc) = (self.shape(theta), self.shape(content));
        if st[1] != 1 || sc != [1, 2 * k] || k == 0 {
            return Err(shape_err("irrep_rotate", st, sc));
        }
        let c = self.value(content).data.clone();
        let mut data = Vec::with_capacity(st[0] * 2 * k);
        for r in 0..st[0] {
            let t = self.value(theta).data[r];
            for f in 1..=k {
                let (s, co) = (T::from_usize(f).unwrap() * t).sin_cos();
                let (a, b) = (c[2 * f - 2], c[2 * f - 1]);
                data.push(co * a - s * b);
                data.push(s * a + co * b);
            }
        }
        let value = Tensor::new(st[0], 2 * k, data)?;
        Ok(self.push(value, Op::IrrepRotate { theta, content, k }))
    }

    /// Elementwise binary cross-entropy between `sigmoid(logits)` and
    /// `target`, computed stably from the logits. `target` receives no
    /// gradient.
    pub fn bce_with_logits(&mut self, logits: Var, target: Var) -> Result<Var> {
        self.same_shape("bce_with_logits", logits, target)?;
        let value = self.value(logits).zip(self.value(target), |z, x| {
            z.max(T::zero()) - z * x + (-z.abs()).exp().ln_1p()
        });
        Ok(self.push(value, Op::BceLogits { logits, target }))
    }

    /// Accumulate gradients of the scalar `root` into every node.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.shape(root) != [1, 1] {
            let [r, c] = self.shape(root);
            return Err(Error::invalid(format!("backward needs a scalar root, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let contributions = self.local_grads(node, &g);
            for (var, contrib) in contributions {
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn local_grads(&self, node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        match node.op {
            Op::Leaf => Vec::new(),
            Op::MatVec(x, w) => {
                let (xv, wv) = (val(x), val(w));
                let (b, n, m) = (xv.rows, xv.cols, wv.cols);
                let mut dx = vec![T::zero(); b * n];
                let mut dw = vec![T::zero(); n * m];
                for r in 0..b {
                    let grow = &g.data[r * m..(r + 1) * m];
                    for i in 0..n {
                        let wrow = &wv.data[i * m..(i + 1) * m];
                        dx[r * n + i] = grow.iter().zip(wrow).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                        let a = xv.data[r * n + i];
                        if a != T::zero() {
                            for (d, &gv) in dw[i * m..(i + 1) * m].iter_mut().zip(grow) {
                                *d = *d + a * gv;
                            }
                        }
                    }
                }
                vec![
                    (x, Tensor { rows: b, cols: n, data: dx }),
                    (w, Tensor { rows: n, cols: m, data: dw }),
                ]
            }
            Op::AddRow(x, bias) => {
                let cols = g.cols;
                let mut db = vec![T::zero(); cols];
                for r in 0..g.rows {
                    for (d, &gv) in db.iter_mut().zip(g.row_slice(r)) {
                        *d = *d + gv;
                    }
                }
                vec![(x, g.clone()), (bias, Tensor::row(db))]
            }
            Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            Op::Sub(a, b) => vec![(a, g.clone()), (b, g.map(|x| -x))],
            Op::Mul(a, b) => vec![
                (a, g.zip(val(b), |gv, y| gv * y)),
                (b, g.zip(val(a), |gv, x| gv * x)),
            ],
            Op::Scale(a, f) => vec![(a, g.map(|x| x * f))],
            Op::AddScalar(a) => vec![(a, g.clone())],
            Op::Relu(a) => vec![(a, g.zip(val(a), |gv, x| if x > T::zero() { gv } else { T::zero() }))],
            Op::Sigmoid(a) => vec![(a, g.zip(out, |gv, s| gv * s * (T::one() - s)))],
            Op::Tanh(a) => vec![(a, g.zip(out, |gv, t| gv * (T::one() - t * t)))],
            Op::Exp(a) => vec![(a, g.zip(out, |gv, e| gv * e))],
            Op::Log(a) => vec![(a, g.zip(val(a), |gv, x| gv / x))],
            Op::Cos(a) => vec![(a, g.zip(val(a), |gv, x| -gv * x.sin()))],
            Op::Sin(a) => vec![(a, g.zip(val(a), |gv, x| gv * x.cos()))],
            Op::Clamp(a, lo, hi) => vec![(
                a,
                g.zip(val(a), |gv, x| if x > lo && x < hi { gv } else { T::zero() }),
            )],
            Op::Sum(a) => {
                let [r, c] = val(a).shape();
                vec![(a, Tensor::filled(r, c, g.data[0]))]
            }
            Op::Concat(a, b) => {
                let (na, nb) = (val(a).cols, val(b).cols);
                let mut ga = Vec::with_capacity(g.rows * na);
                let mut gb = Vec::with_capacity(g.rows * nb);
                for r in 0..g.rows {
                    let row = g.row_slice(r);
                    ga.extend_from_slice(&row[..na]);
                    gb.extend_from_slice(&row[na..]);
                }
                vec![
                    (a, Tensor { rows: g.rows, cols: na, data: ga }),
                    (b, Tensor { rows: g.rows, cols: nb, data: gb }),
                ]
            }
            Op::SliceCols(a, start) => {
                let src = val(a);
                let mut ga = Tensor::zeros(src.rows, src.cols);
                for r in 0..g.rows {
                    ga.data[r * src.cols + start..r * src.cols + start + g.cols].copy_from_slice(g.row_slice(r));
                }
                vec![(a, ga)]
            }
            Op::Atan2(y, x) => {
                let (yv, xv) = (val(y), val(x));
                let mut gy = Vec::with_capacity(g.len());
                let mut gx = Vec::with_capacity(g.len());
                for i in 0..g.len() {
                    let (yy, xx) = (yv.data[i], xv.data[i]);
                    let r2 = xx * xx + yy * yy;
                    gy.push(g.data[i] * xx / r2);
                    gx.push(-g.data[i] * yy / r2);
                }
                vec![
                    (y, Tensor { rows: g.rows, cols: g.cols, data: gy }),
                    (x, Tensor { rows: g.rows, cols: g.cols, data: gx }),
                ]
            }
            Op::IrrepRotate { theta, content, k } => {
                let tv = &val(theta).data;
                let mut dtheta = Vec::with_capacity(g.rows);
                let mut dc = vec![T::zero(); 2 * k];
                for r in 0..g.rows {
                    let grow = g.row_slice(r);
                    let orow = out.row_slice(r);
                    let mut dt = T::zero();
                    for f in 1..=k {
                        let kf = T::from_usize(f).unwrap();
                        let (s, co) = (kf * tv[r]).sin_cos();
                        let (ga, gb) = (grow[2 * f - 2], grow[2 * f - 1]);
                        let (oa, ob) = (orow[2 * f - 2], orow[2 * f - 1]);
                        dt = dt + kf * (gb * oa - ga * ob);
                        dc[2 * f - 2] = dc[2 * f - 2] + co * ga + s * gb;
                        dc[2 * f - 1] = dc[2 * f - 1] - s * ga + co * gb;
                    }
                    dtheta.push(dt);
                }
                vec![(theta, Tensor::column(dtheta)), (content, Tensor::row(dc))]
            }
            Op::BceLogits { logits, target } => {
                vec![(
                    logits,
                    Tensor {
                        rows: g.rows,
                        cols: g.cols,
                        data: (0..g.len())
                            .map(|i| g.data[i] * (sigmoid(val(logits).data[i]) - val(target).data[i]))
                            .collect(),
                    },
                )]
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
