use super::tensor::{matmul_nt_kernel, matmul_tn_kernel, softmax_slice, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    HStack(Vec<Var>),
    VStack(Vec<Var>),
    Softmax(Var),
    L2Norm(Var),
    Dot(Var, Var),
    RowSum(Var),
    Reshape(Var),
    AddBias(Var, Var),
    Gather(Var, Vec<usize>),
    Clamp(Var, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Wengert list for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
/// Gradients persist across calls to [`Tape::backward`] and accumulate until
/// [`Tape::zero_grad`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    // -- linear algebra ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Matmul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape.to_vec())?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    // -- elementwise ------------------------------------------------------

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn map_op(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_op("add", a, b, |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_op("sub", a, b, |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_op("mul", a, b, |x, y| x * y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().iter().any(|v| *v == 0.0) {
            return Err(Error::Domain("division by zero".into()));
        }
        let value = self.zip_op("div", a, b, |x, y| x / y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Div(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.map_op(a, |x| c * x);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.map_op(a, |x| x + c);
        let rg = self.needs(&[a]);
        self.push(value, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.map_op(a, |x| x.max(0.0));
        let rg = self.needs(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.map_op(a, sigmoid);
        let rg = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let value = self.map_op(a, f64::ln);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Log(a), rg))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.map_op(a, f64::exp);
        let rg = self.needs(&[a]);
        self.push(value, Op::Exp(a), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient passes only inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.map_op(a, |x| x.clamp(lo, hi));
        let rg = self.needs(&[a]);
        self.push(value, Op::Clamp(a, lo, hi), rg)
    }

    // -- reductions -------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::Domain("mean of empty tensor".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), rg))
    }

    /// Euclidean norm over all entries.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let n = self.value(a).data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(n), Op::L2Norm(a), rg)
    }

    /// Inner product of two same-shaped tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("dot", ta.shape(), tb.shape()));
        }
        let d = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::scalar(d), Op::Dot(a, b), rg))
    }

    /// Sums each row of a matrix into a vector.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::shape("row_sum", t.shape(), &[]));
        }
        let sums = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::vector(sums), Op::RowSum(a), rg))
    }

    // -- structure --------------------------------------------------------

    /// Concatenates scalars and vectors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.rank() > 1 {
                return Err(Error::shape("concat", t.shape(), &[]));
            }
            data.extend_from_slice(t.data());
        }
        let rg = self.needs(parts);
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg))
    }

    /// Joins matrices with equal row counts side by side.
    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("hstack of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut total_cols = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rank() != 2 || t.rows() != rows {
                return Err(Error::shape("hstack", self.value(*first).shape(), t.shape()));
            }
            total_cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(i));
            }
        }
        let rg = self.needs(parts);
        let value = Tensor::new(vec![rows, total_cols], data)?;
        Ok(self.push(value, Op::HStack(parts.to_vec()), rg))
    }

    /// Stacks vectors (as single rows) and matrices with equal column counts.
    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("vstack of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rank() == 0 || t.rank() > 2 || t.cols() != cols {
                return Err(Error::shape("vstack", self.value(*first).shape(), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = self.needs(parts);
        let value = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(value, Op::VStack(parts.to_vec()), rg))
    }

    /// Selects elements of a vector, or rows of a matrix, by index.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (bound, width) = match t.rank() {
            1 => (t.len(), 1),
            2 => (t.rows(), t.cols()),
            _ => return Err(Error::shape("gather", t.shape(), &[])),
        };
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= bound {
                return Err(Error::Index {
                    what: "gather",
                    index: i,
                    bound,
                });
            }
            data.extend_from_slice(&t.data()[i * width..(i + 1) * width]);
        }
        let shape = if t.rank() == 1 {
            vec![indices.len()]
        } else {
            vec![indices.len(), width]
        };
        let rg = self.needs(&[a]);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Gather(a, indices.to_vec()), rg))
    }

    /// Adds a bias vector to every row of a matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.rank() != 2 || tb.rank() != 1 || tx.cols() != tb.len() {
            return Err(Error::shape("add_bias", tx.shape(), tb.shape()));
        }
        let cols = tx.cols();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (o, bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.needs(&[x, b]);
        Ok(self.push(Tensor::new(shape, data)?, Op::AddBias(x, b), rg))
    }

    /// Softmax over the last axis (each row of a matrix independently).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() == 0 || t.is_empty() {
            return Err(Error::Domain("softmax of empty input".into()));
        }
        let cols = t.cols();
        let mut data = Vec::with_capacity(t.len());
        for row in t.data().chunks(cols) {
            data.extend(softmax_slice(row));
        }
        let shape = t.shape().to_vec();
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Softmax(a), rg))
    }

    /// Value-identical copy through which no gradient flows.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.push(value, Op::Leaf, false)
    }

    // -- reverse pass -----------------------------------------------------

    /// Accumulates `∂loss/∂v` into the gradient slot of every node that
    /// requires a gradient and is reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut adj);
            match &mut self.grads[i] {
                Some(acc) => acc
                    .data_mut()
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(a, b)| *a += b),
                slot => {
                    *slot = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;

        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (sa, sb) = (self.value(*a).shape(), self.value(*b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if wants(*a) {
                    send(*a, matmul_nt_kernel(g, val(*b), m, n, k));
                }
                if wants(*b) {
                    send(*b, matmul_tn_kernel(val(*a), g, m, k, n));
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let gt = Tensor::new(s.to_vec(), g.to_vec())
                    .and_then(|t| t.transpose())
                    .expect("rank-2 transpose");
                send(*a, gt.into_data());
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    send(*a, g.iter().zip(val(*b)).map(|(x, y)| x * y).collect());
                }
                if wants(*b) {
                    send(*b, g.iter().zip(val(*a)).map(|(x, y)| x * y).collect());
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if wants(*a) {
                    send(*a, g.iter().zip(vb).map(|(x, y)| x / y).collect());
                }
                if wants(*b) {
                    let c = g
                        .iter()
                        .zip(va.iter().zip(vb))
                        .map(|(x, (p, q))| -x * p / (q * q))
                        .collect();
                    send(*b, c);
                }
            }
            Op::Scale(a, c) => send(*a, g.iter().map(|x| c * x).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => send(*a, g.to_vec()),
            Op::Relu(a) => send(
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                    .collect(),
            ),
            Op::Sigmoid(_) | Op::Exp(_) => {
                let y = node.value.data();
                let a = match node.op {
                    Op::Sigmoid(a) | Op::Exp(a) => a,
                    _ => unreachable!(),
                };
                let c = if matches!(node.op, Op::Sigmoid(_)) {
                    g.iter().zip(y).map(|(x, s)| x * s * (1.0 - s)).collect()
                } else {
                    g.iter().zip(y).map(|(x, e)| x * e).collect()
                };
                send(a, c);
            }
            Op::Log(a) => send(*a, g.iter().zip(val(*a)).map(|(x, v)| x / v).collect()),
            Op::Clamp(a, lo, hi) => send(
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(x, v)| if *v >= *lo && *v <= *hi { *x } else { 0.0 })
                    .collect(),
            ),
            Op::Sum(a) => send(*a, vec![g[0]; self.value(*a).len()]),
            Op::Mean(a) => {
                let n = self.value(*a).len();
                send(*a, vec![g[0] / n as f64; n]);
            }
            Op::L2Norm(a) => {
                let norm = node.value.data()[0];
                let c = if norm > 0.0 {
                    val(*a).iter().map(|x| g[0] * x / norm).collect()
                } else {
                    vec![0.0; self.value(*a).len()]
                };
                send(*a, c);
            }
            Op::Dot(a, b) => {
                if wants(*a) {
                    send(*a, val(*b).iter().map(|x| g[0] * x).collect());
                }
                if wants(*b) {
                    send(*b, val(*a).iter().map(|x| g[0] * x).collect());
                }
            }
            Op::RowSum(a) => {
                let cols = self.value(*a).cols();
                let c = g.iter().flat_map(|x| std::iter::repeat(*x).take(cols)).collect();
                send(*a, c);
            }
            Op::Concat(parts) | Op::VStack(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    send(*p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::HStack(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    if wants(*p) {
                        let part = g
                            .chunks(total)
                            .flat_map(|row| row[offset..offset + c].iter().copied())
                            .collect();
                        send(*p, part);
                    }
                    offset += c;
                }
            }
            Op::Gather(a, indices) => {
                if !wants(*a) {
                    return;
                }
                let src = self.value(*a);
                let width = if src.rank() == 1 { 1 } else { src.cols() };
                // scatter straight into the accumulator; rows not gathered stay untouched
                let c = adj[a.0].get_or_insert_with(|| vec![0.0; src.len()]);
                for (r, &i) in indices.iter().enumerate() {
                    for (o, x) in c[i * width..(i + 1) * width]
                        .iter_mut()
                        .zip(&g[r * width..(r + 1) * width])
                    {
                        *o += x;
                    }
                }
            }
            Op::AddBias(x, b) => {
                send(*x, g.to_vec());
                if wants(*b) {
                    let cols = self.value(*b).len();
                    let mut c = vec![0.0; cols];
                    for row in g.chunks(cols) {
                        c.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                    send(*b, c);
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut c = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(cols).zip(g.chunks(cols)) {
                    let inner: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    c.extend(yr.iter().zip(gr).map(|(p, q)| p * (q - inner)));
                }
                send(*a, c);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
