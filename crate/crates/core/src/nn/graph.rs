//! Tape-based reverse-mode differentiation over batched matrices.
//!
//! Every op appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse from a scalar node and returns gradients for
//! every node that (transitively) depends on a leaf created with
//! `requires_grad = true`. Constants never receive gradients, which is how
//! frozen components are made cheap to differentiate through.

use crate::error::{Error, Result};
use crate::nn::kernels::{self, LOG_FLOOR};
use crate::nn::tensor::{row_dims, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mse(Var, Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64>, clamped: Vec<bool> },
    PickMean { x: Var, labels: Vec<usize> },
    PowerNormalize { x: Var, target: f64, norms: Vec<f64> },
    PowerHinge { x: Var, epsilon: f64 },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.leaf(t, false)
    }

    /// Leaf that takes ownership of `data` instead of copying.
    pub fn leaf_owned(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        let shape = t.shape().to_vec();
        Ok(self.push(shape, t.into_data(), Op::Leaf, requires_grad))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("graph nodes hold consistent shapes")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        row_dims(&self.nodes[v.0].shape)
    }

    fn same_shape(&self, a: Var, b: Var, context: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                context,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn nonempty_rows(&self, v: Var) -> Result<usize> {
        match self.dims(v).0 {
            0 => Err(Error::InvalidTensor("empty batch".into())),
            r => Ok(r),
        }
    }

    /// Affine map `x · wᵀ + b` with `w` of shape `out × in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, in_dim) = self.dims(x);
        let wshape = self.shape(w).to_vec();
        if wshape.len() != 2 {
            return Err(Error::InvalidTensor(format!("weight shape {wshape:?} is not a matrix")));
        }
        let (out_dim, w_in) = (wshape[0], wshape[1]);
        if w_in != in_dim {
            return Err(Error::DimensionMismatch {
                context: "linear input",
                expected: w_in,
                actual: in_dim,
            });
        }
        if self.value(b).len() != out_dim {
            return Err(Error::DimensionMismatch {
                context: "linear bias",
                expected: out_dim,
                actual: self.value(b).len(),
            });
        }
        let y = kernels::linear(self.value(x), self.value(w), self.value(b), batch, in_dim, out_dim);
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(vec![batch, out_dim], y, Op::Linear { x, w, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = kernels::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), y, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = kernels::sigmoid(self.value(x));
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), y, Op::Sigmoid(x), rg)
    }

    /// Softmax over the last dimension of every row.
    pub fn softmax(&mut self, x: Var) -> Var {
        let (_, cols) = self.dims(x);
        let y = kernels::softmax_rows(self.value(x), cols);
        let rg = self.rg(&[x]);
        self.push(self.shape(x).to_vec(), y, Op::Softmax(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let y = self.value(a).iter().zip(self.value(b)).map(|(p, q)| p + q).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), y, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let y = self.value(a).iter().zip(self.value(b)).map(|(p, q)| p - q).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), y, Op::Sub(a, b), rg))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let y = self.value(a).iter().zip(self.value(b)).map(|(p, q)| p * q).collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), y, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = self.value(a).iter().map(|p| p * c).collect();
        let rg = self.rg(&[a]);
        self.push(self.shape(a).to_vec(), y, Op::Scale(a, c), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let y = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(vec![1], vec![y], Op::Sum(a), rg)
    }

    /// Mean squared error over every element.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse")?;
        let n = self.value(pred).len();
        if n == 0 {
            return Err(Error::InvalidTensor("mse of empty tensors".into()));
        }
        let sq: f64 = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let rg = self.rg(&[pred, target]);
        Ok(self.push(vec![1], vec![sq / n as f64], Op::Mse(pred, target), rg))
    }

    fn check_labels(&self, x: Var, labels: &[usize]) -> Result<()> {
        let (rows, classes) = self.dims(x);
        if labels.len() != rows {
            return Err(Error::DimensionMismatch {
                context: "labels",
                expected: rows,
                actual: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(())
    }

    /// Mean negative log-likelihood of the true labels under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_labels(logits, labels)?;
        let rows = self.nonempty_rows(logits)?;
        let (_, k) = self.dims(logits);
        let cap = -LOG_FLOOR.ln();
        let z = self.value(logits);
        let probs = kernels::softmax_rows(z, k);
        let mut total = 0.0;
        let mut clamped = Vec::with_capacity(rows);
        for (row, &label) in z.chunks(k).zip(labels) {
            let nll = kernels::log_sum_exp(row) - row[label];
            clamped.push(nll > cap);
            total += nll.min(cap);
        }
        let rg = self.rg(&[logits]);
        let op = Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
            clamped,
        };
        Ok(self.push(vec![1], vec![total / rows as f64], op, rg))
    }

    /// Mean over rows of `x[row, labels[row]]`.
    pub fn pick_mean(&mut self, x: Var, labels: &[usize]) -> Result<Var> {
        self.check_labels(x, labels)?;
        let rows = self.nonempty_rows(x)?;
        let (_, k) = self.dims(x);
        let v = self.value(x);
        let total: f64 = labels.iter().enumerate().map(|(r, &l)| v[r * k + l]).sum();
        let rg = self.rg(&[x]);
        let op = Op::PickMean {
            x,
            labels: labels.to_vec(),
        };
        Ok(self.push(vec![1], vec![total / rows as f64], op, rg))
    }

    /// Rescales each row to squared norm `target`.
    pub fn power_normalize(&mut self, x: Var, target: f64) -> Result<Var> {
        let (_, cols) = self.dims(x);
        let v = self.value(x);
        let mut norms = Vec::new();
        let mut y = Vec::with_capacity(v.len());
        for (row_idx, row) in v.chunks(cols.max(1)).enumerate() {
            let norm_sq: f64 = row.iter().map(|a| a * a).sum();
            if norm_sq < 1e-12 {
                return Err(Error::DegenerateRow { row: row_idx, norm_sq });
            }
            let norm = norm_sq.sqrt();
            let c = target.sqrt() / norm;
            y.extend(row.iter().map(|a| a * c));
            norms.push(norm);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(self.shape(x).to_vec(), y, Op::PowerNormalize { x, target, norms }, rg))
    }

    /// Batch mean of `max(0, ‖row‖²/cols − epsilon)`.
    pub fn power_hinge(&mut self, x: Var, epsilon: f64) -> Result<Var> {
        let rows = self.nonempty_rows(x)?;
        let (_, cols) = self.dims(x);
        let total: f64 = self
            .value(x)
            .chunks(cols)
            .map(|row| (row.iter().map(|a| a * a).sum::<f64>() / cols as f64 - epsilon).max(0.0))
            .sum();
        let rg = self.rg(&[x]);
        Ok(self.push(vec![1], vec![total / rows as f64], Op::PowerHinge { x, epsilon }, rg))
    }

    /// Reverse pass from a scalar node. Gradients are fresh for each call;
    /// accumulation across calls happens in [`Tensor::accumulate_grad`].
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::NonScalarLoss(node.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (batch, in_dim) = self.dims(*x);
                let out_dim = self.nodes[b.0].value.len();
                let wv = self.value(*w);
                let xv = self.value(*x);
                acc(*x, &mut |dx| kernels::linear_grad_input(gy, wv, dx, batch, in_dim, out_dim));
                acc(*w, &mut |dw| kernels::linear_grad_weight(gy, xv, dw, batch, in_dim, out_dim));
                acc(*b, &mut |db| {
                    for row in gy.chunks(out_dim) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |dx| {
                    for ((d, &g), &v) in dx.iter_mut().zip(gy).zip(xv) {
                        if v > 0.0 {
                            *d += g;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let yv = &node.value;
                acc(*x, &mut |dx| {
                    for ((d, &g), &y) in dx.iter_mut().zip(gy).zip(yv) {
                        *d += g * y * (1.0 - y);
                    }
                });
            }
            Op::Softmax(x) => {
                let (_, cols) = self.dims(*x);
                let yv = &node.value;
                acc(*x, &mut |dx| {
                    for ((d, g), y) in dx.chunks_mut(cols).zip(gy.chunks(cols)).zip(yv.chunks(cols)) {
                        let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                        for i in 0..cols {
                            d[i] += y[i] * (g[i] - dot);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |da| da.iter_mut().zip(gy).for_each(|(d, g)| *d += g));
                acc(*b, &mut |db| db.iter_mut().zip(gy).for_each(|(d, g)| *d += g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |da| da.iter_mut().zip(gy).for_each(|(d, g)| *d += g));
                acc(*b, &mut |db| db.iter_mut().zip(gy).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |da| {
                    for ((d, g), q) in da.iter_mut().zip(gy).zip(bv) {
                        *d += g * q;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, g), p) in db.iter_mut().zip(gy).zip(av) {
                        *d += g * p;
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |da| da.iter_mut().zip(gy).for_each(|(d, g)| *d += g * c));
            }
            Op::Sum(a) => {
                acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += gy[0]));
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (self.value(*p), self.value(*t));
                let k = 2.0 * gy[0] / pv.len() as f64;
                acc(*p, &mut |dp| {
                    for ((d, a), b) in dp.iter_mut().zip(pv).zip(tv) {
                        *d += k * (a - b);
                    }
                });
                acc(*t, &mut |dt| {
                    for ((d, a), b) in dt.iter_mut().zip(pv).zip(tv) {
                        *d -= k * (a - b);
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
                clamped,
            } => {
                let (rows, k) = self.dims(*logits);
                let scale = gy[0] / rows as f64;
                acc(*logits, &mut |dz| {
                    for (r, &label) in labels.iter().enumerate() {
                        if clamped[r] {
                            continue;
                        }
                        let base = r * k;
                        for c in 0..k {
                            let onehot = if c == label { 1.0 } else { 0.0 };
                            dz[base + c] += scale * (probs[base + c] - onehot);
                        }
                    }
                });
            }
            Op::PickMean { x, labels } => {
                let (rows, k) = self.dims(*x);
                let scale = gy[0] / rows as f64;
                acc(*x, &mut |dx| {
                    for (r, &label) in labels.iter().enumerate() {
                        dx[r * k + label] += scale;
                    }
                });
            }
            Op::PowerNormalize { x, target, norms } => {
                let (_, cols) = self.dims(*x);
                let xv = self.value(*x);
                acc(*x, &mut |dx| {
                    for (((d, row), g), &norm) in dx.chunks_mut(cols).zip(xv.chunks(cols)).zip(gy.chunks(cols)).zip(norms) {
                        let c = target.sqrt() / norm;
                        let proj: f64 = row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / (norm * norm);
                        for i in 0..cols {
                            d[i] += c * (g[i] - row[i] * proj);
                        }
                    }
                });
            }
            Op::PowerHinge { x, epsilon } => {
                let (rows, cols) = self.dims(*x);
                let xv = self.value(*x);
                let k = gy[0] * 2.0 / (rows as f64 * cols as f64);
                acc(*x, &mut |dx| {
                    for (d, row) in dx.chunks_mut(cols).zip(xv.chunks(cols)) {
                        let power = row.iter().map(|a| a * a).sum::<f64>() / cols as f64;
                        if power > *epsilon {
                            d.iter_mut().zip(row).for_each(|(di, a)| *di += k * a);
                        }
                    }
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn softmax_closed_forms() {
        let mut g = Graph::new();
        let x = g.constant(&t(vec![10], vec![0.3; 10]));
        let y = g.softmax(x);
        assert!(g.value(y).iter().all(|&p| (p - 0.1).abs() < 1e-15));

        let x = g.constant(&t(vec![2], vec![0.0, 9f64.ln()]));
        let y = g.softmax(x);
        assert!((g.value(y)[0] - 0.1).abs() < 1e-12);
        assert!((g.value(y)[1] - 0.9).abs() < 1e-12);

        let x = g.constant(&t(vec![3], vec![1000.0, 0.0, 0.0]));
        let y = g.softmax(x);
        assert!((g.value(y)[0] - 1.0).abs() < 1e-12);
        assert!(g.value(y)[1] < 1e-12 && g.value(y)[2] < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let mut g = Graph::new();
        let p = g.constant(&t(vec![2, 3], vec![0.2, 0.4, 0.5, 0.9, 0.1, 0.0]));
        let same = g.mse(p, p).unwrap();
        assert_eq!(g.scalar(same), 0.0);
        let shifted = g.constant(&t(vec![2, 3], vec![0.3, 0.5, 0.6, 1.0, 0.2, 0.1]));
        let m = g.mse(shifted, p).unwrap();
        assert!((g.scalar(m) - 0.01).abs() < 1e-12);
        let a = g.constant(&t(vec![1, 2], vec![1.0, 0.0]));
        let b = g.constant(&t(vec![1, 2], vec![0.0, 1.0]));
        let m = g.mse(a, b).unwrap();
        assert_eq!(g.scalar(m), 1.0);
        let c = g.constant(&t(vec![1, 3], vec![0.0; 3]));
        assert!(matches!(g.mse(a, c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let z = g.constant(&t(vec![1, 2], vec![0.0, 0.0]));
        let l = g.cross_entropy(z, &[0]).unwrap();
        assert!((g.scalar(l) - 2f64.ln()).abs() < 1e-12);

        let z = g.constant(&t(vec![1, 3], vec![1.0, 1.0, 1.0]));
        for label in 0..3 {
            let l = g.cross_entropy(z, &[label]).unwrap();
            assert!((g.scalar(l) - 3f64.ln()).abs() < 1e-12);
        }

        let z = g.constant(&t(vec![1, 3], vec![60.0, 0.0, 0.0]));
        let l = g.cross_entropy(z, &[0]).unwrap();
        assert!(g.scalar(l) < 1e-20);

        assert!(matches!(
            g.cross_entropy(z, &[3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn sum_of_product_gradient_is_other_factor() {
        let mut g = Graph::new();
        let w = g.leaf(&t(vec![3], vec![0.5, -1.0, 2.0]), true);
        let x = g.constant(&t(vec![3], vec![4.0, 5.0, -6.0]));
        let p = g.mul(w, x).unwrap();
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[4.0, 5.0, -6.0]);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(&t(vec![2], vec![1.0, 2.0]), true);
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn mse_of_relu_linear_matches_finite_differences() {
        // loss = mse(relu(w·x), t) with w a 3×4 matrix.
        let xs = t(vec![2, 4], vec![0.3, -0.7, 1.1, 0.4, -0.2, 0.9, 0.5, -1.3]);
        let target = t(vec![2, 3], vec![0.1, 0.5, -0.2, 0.7, 0.0, 0.3]);
        let w0: Vec<f64> = (0..12).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect();
        let eval = |w: &[f64], want_grad: bool| {
            let mut g = Graph::new();
            let wv = g.leaf(&t(vec![3, 4], w.to_vec()), true);
            let b = g.constant(&Tensor::zeros(vec![3]));
            let x = g.constant(&xs);
            let tv = g.constant(&target);
            let h = g.linear(x, wv, b).unwrap();
            let r = g.relu(h);
            let l = g.mse(r, tv).unwrap();
            let grad = want_grad.then(|| g.backward(l).unwrap().get(wv).unwrap().to_vec());
            (g.scalar(l), grad)
        };
        let analytic = eval(&w0, true).1.unwrap();
        let err = grad_check(|w| eval(w, false).0, &w0, &analytic, 1e-5);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn power_normalize_examples() {
        let mut g = Graph::new();
        let mut row = vec![0.0; 23];
        row[0] = 1.0;
        let x = g.constant(&t(vec![1, 23], row));
        let y = g.power_normalize(x, 23.0).unwrap();
        assert!((g.value(y)[0] - 23f64.sqrt()).abs() < 1e-12);
        assert!(g.value(y)[1..].iter().all(|&v| v == 0.0));

        let fixed: Vec<f64> = (0..23).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let x = g.constant(&t(vec![1, 23], fixed.clone()));
        let y = g.power_normalize(x, 23.0).unwrap();
        for (a, b) in g.value(y).iter().zip(&fixed) {
            assert!((a - b).abs() < 1e-15);
        }

        let zero = g.constant(&t(vec![2, 23], vec![0.0; 46]));
        assert!(matches!(g.power_normalize(zero, 23.0), Err(Error::DegenerateRow { row: 0, .. })));
    }

    #[test]
    fn power_hinge_examples() {
        let row = |power: f64| vec![power.sqrt(); 23];
        let mut g = Graph::new();
        let under = g.leaf(&t(vec![1, 23], row(0.05)), true);
        let l = g.power_hinge(under, 0.1).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(under).unwrap().iter().all(|&v| v == 0.0));

        let over = g.constant(&t(vec![1, 23], row(0.15)));
        let l = g.power_hinge(over, 0.1).unwrap();
        assert!((g.scalar(l) - 0.05).abs() < 1e-12);

        let zero = g.leaf(&Tensor::zeros(vec![1, 23]), true);
        let l = g.power_hinge(zero, 0.1).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        assert!(g.backward(l).unwrap().get(zero).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_skip_constants() {
        let mut g = Graph::new();
        let a = g.constant(&t(vec![2], vec![1.0, 2.0]));
        let b = g.constant(&t(vec![2], vec![3.0, 4.0]));
        let c = g.add(a, b).unwrap();
        let s = g.sum(c);
        assert!(!g.requires_grad(s));
        let grads = g.backward(s).unwrap();
        assert!(grads.get(a).is_none());
    }
}
