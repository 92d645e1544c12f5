//! Reverse-mode differentiation over a linear tape of matrix operations.
//!
//! Every operation appends one node holding its forward value and whatever
//! it needs for the backward pass. [`Tape::backward`] walks the nodes in exact
//! reverse order and accumulates gradients additively, so reusing a value in
//! several places just sums its contributions.

use std::collections::HashMap;

use super::store::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Mean,
    Max,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        q_block: usize,
        kv_block: usize,
        scale: T,
        probs: Vec<T>,
    },
    ConcatCols(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    PoolRows {
        x: Var,
        group: usize,
        mode: PoolMode,
        argmax: Vec<usize>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<T>,
    },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<String, Var>,
    param_order: Vec<(String, Var)>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

// ---- dense kernels -------------------------------------------------------

/// `a (m x k) * b (k x n)`
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a (m x k) * b^T` with `b` stored `n x k`.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            out[i * n + j] = ar.iter().zip(br).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
        }
    }
    out
}

/// `a^T * b` with `a` stored `k x m` and `b` stored `k x n`.
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let br = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == T::zero() {
                continue;
            }
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(br) {
                *o += api * bv;
            }
        }
    }
    out
}

fn add_into<T: Scalar>(acc: &mut Option<Vec<T>>, g: &[T]) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, &y)| *x += y),
        None => *acc = Some(g.to_vec()),
    }
}

/// Numerically stable in-place softmax of one row.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// `softplus(z) - y z`, arranged so no large terms cancel.
pub(crate) fn bce_term<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - y * z + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
            param_order: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value.without_grad(), Op::Leaf, false)
    }

    /// A free leaf whose gradient is kept after [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value.without_grad(), Op::Leaf, true)
    }

    /// Records the named parameter once per tape; later calls reuse the leaf.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter `{name}`")))?
            .without_grad();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        self.param_order.push((name.to_string(), v));
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Attention probabilities (block-major, rows of `kv_block` entries) saved
    /// by an attention node.
    pub fn attention_probs(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    // ---- operations ------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::Shape(format!(
                "matmul of {:?} by {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let out = Tensor::matrix(m, n, matmul(ta.data(), tb.data(), m, k, n))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.numel() != tx.cols() {
            return Err(Error::Shape(format!(
                "bias {:?} for rows of {:?}",
                tb.shape(),
                tx.shape()
            )));
        }
        let c = tx.cols();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c) {
            row.iter_mut().zip(tb.data()).for_each(|(x, &b)| *x += b);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.needs(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    /// `x W + b` with `W` stored `in x out`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_bias(xw, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("add {:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let ta = self.value(a);
        let out = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| x * c).collect())
            .expect("same shape");
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| x.max(T::zero())).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    /// Row-wise normalization followed by the affine `gamma * x_hat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let tx = self.value(x);
        let c = tx.cols();
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(Error::Shape(format!("layer norm affine size vs {:?}", tx.shape())));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let n = T::lit(c as f64);
        let mut mean = Vec::with_capacity(tx.rows());
        let mut rstd = Vec::with_capacity(tx.rows());
        let mut data = Vec::with_capacity(tx.numel());
        for row in tx.data().chunks(c) {
            let mu = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() / n;
            let r = T::one() / (var + eps).sqrt();
            data.extend(row.iter().enumerate().map(|(j, &v)| (v - mu) * r * g[j] + b[j]));
            mean.push(mu);
            rstd.push(r);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            },
            rg,
        ))
    }

    /// Scaled dot-product attention over independent blocks: block `i` lets
    /// query rows `[i q_block, (i+1) q_block)` attend to key/value rows
    /// `[i kv_block, (i+1) kv_block)`. One block gives plain attention.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        q_block: usize,
        kv_block: usize,
    ) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let dh = tq.cols();
        if tk.cols() != dh || tv.cols() != dh || tk.rows() != tv.rows() {
            return Err(Error::Shape(format!(
                "attention q {:?}, k {:?}, v {:?}",
                tq.shape(),
                tk.shape(),
                tv.shape()
            )));
        }
        if q_block == 0 || kv_block == 0 || tq.rows() % q_block != 0 || tk.rows() % kv_block != 0 {
            return Err(Error::Shape(format!(
                "blocks of {q_block}/{kv_block} rows do not tile {} queries / {} keys",
                tq.rows(),
                tk.rows()
            )));
        }
        let blocks = tq.rows() / q_block;
        if tk.rows() / kv_block != blocks {
            return Err(Error::Shape(format!(
                "{blocks} query blocks but {} key blocks",
                tk.rows() / kv_block
            )));
        }
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut probs = Vec::with_capacity(blocks * q_block * kv_block);
        let mut out = Vec::with_capacity(tq.numel());
        for blk in 0..blocks {
            let qb = &tq.data()[blk * q_block * dh..(blk + 1) * q_block * dh];
            let kb = &tk.data()[blk * kv_block * dh..(blk + 1) * kv_block * dh];
            let vb = &tv.data()[blk * kv_block * dh..(blk + 1) * kv_block * dh];
            let mut s = matmul_nt(qb, kb, q_block, dh, kv_block);
            for row in s.chunks_mut(kv_block) {
                row.iter_mut().for_each(|x| *x *= scale);
                softmax_in_place(row);
            }
            out.extend(matmul(&s, vb, q_block, kv_block, dh));
            probs.extend(s);
        }
        let out = Tensor::matrix(tq.rows(), dh, out)?;
        let rg = self.needs(&[q, k, v]);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                q_block,
                kv_block,
                scale,
                probs,
            },
            rg,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Shape("concat of matrices with different row counts".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = self.needs(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.cols() {
            return Err(Error::Shape(format!(
                "columns {start}..{} of {:?}",
                start + len,
                tx.shape()
            )));
        }
        let data = (0..tx.rows())
            .flat_map(|r| tx.row(r)[start..start + len].iter().copied())
            .collect();
        let out = Tensor::matrix(tx.rows(), len, data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= tx.rows()) {
            return Err(Error::Shape(format!("row {bad} of {:?}", tx.shape())));
        }
        let data = index.iter().flat_map(|&i| tx.row(i).iter().copied()).collect();
        let out = Tensor::matrix(index.len(), tx.cols(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Pools each run of `group` consecutive rows into one row.
    pub fn pool_rows(&mut self, x: Var, group: usize, mode: PoolMode) -> Result<Var> {
        let tx = self.value(x);
        if group == 0 || !tx.rows().is_multiple_of(group) {
            return Err(Error::Shape(format!(
                "cannot pool {} rows in groups of {group}",
                tx.rows()
            )));
        }
        let c = tx.cols();
        let out_rows = tx.rows() / group;
        let mut data = vec![T::zero(); out_rows * c];
        let mut argmax = Vec::new();
        match mode {
            PoolMode::Mean => {
                let inv = T::one() / T::lit(group as f64);
                for (r, row) in tx.data().chunks(c).enumerate() {
                    let dst = &mut data[(r / group) * c..(r / group + 1) * c];
                    dst.iter_mut().zip(row).for_each(|(d, &v)| *d += v * inv);
                }
            }
            PoolMode::Max => {
                argmax = vec![0; out_rows * c];
                for o in 0..out_rows {
                    for j in 0..c {
                        let mut best = o * group;
                        for r in o * group + 1..(o + 1) * group {
                            if tx.at(r, j) > tx.at(best, j) {
                                best = r;
                            }
                        }
                        argmax[o * c + j] = best;
                        data[o * c + j] = tx.at(best, j);
                    }
                }
            }
        }
        let out = Tensor::matrix(out_rows, c, data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            out,
            Op::PoolRows {
                x,
                group,
                mode,
                argmax,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 targets,
    /// computed in logit space.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T]) -> Result<Var> {
        let tl = self.value(logits);
        if tl.numel() != targets.len() || targets.is_empty() {
            return Err(Error::Shape(format!(
                "{} logits for {} targets",
                tl.numel(),
                targets.len()
            )));
        }
        let n = T::lit(targets.len() as f64);
        let loss = tl
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_term(z, y))
            .sum::<T>()
            / n;
        let out = Tensor::new(vec![1], vec![loss])?;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            out,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.needs(&[a]);
        self.push(Tensor::new(vec![1], vec![s]).expect("scalar"), Op::Sum(a), rg)
    }

    // ---- backward ----------------------------------------------------------

    /// Propagates `d loss / d node` for every node that depends on a leaf
    /// requiring gradients. `loss` must hold a single value.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward from a non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn send(&mut self, to: Var, g: &[T]) {
        if self.nodes[to.0].requires_grad {
            add_into(&mut self.grads[to.0], g);
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        // Ops only read from earlier nodes, so splitting keeps borrows simple.
        let (before, rest) = self.nodes.split_at(i);
        let node = &rest[0];
        let val = |v: Var| &before[v.0].value;
        let mut sends: Vec<(Var, Vec<T>)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if before[a.0].requires_grad {
                    sends.push((*a, matmul_nt(g, tb.data(), m, n, k)));
                }
                if before[b.0].requires_grad {
                    sends.push((*b, matmul_tn(ta.data(), g, m, k, n)));
                }
            }
            Op::AddBias(x, bias) => {
                sends.push((*x, g.to_vec()));
                let c = val(*bias).numel();
                let mut gb = vec![T::zero(); c];
                for row in g.chunks(c) {
                    gb.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                }
                sends.push((*bias, gb));
            }
            Op::Add(a, b) => {
                sends.push((*a, g.to_vec()));
                sends.push((*b, g.to_vec()));
            }
            Op::Scale(a, c) => sends.push((*a, g.iter().map(|&x| x * *c).collect())),
            Op::Relu(a) => {
                let ga = val(*a)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| if x > T::zero() { gi } else { T::zero() })
                    .collect();
                sends.push((*a, ga));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let tx = val(*x);
                let c = tx.cols();
                let gam = val(*gamma).data();
                let n = T::lit(c as f64);
                let mut gx = vec![T::zero(); tx.numel()];
                let mut gg = vec![T::zero(); c];
                let mut gbeta = vec![T::zero(); c];
                for r in 0..tx.rows() {
                    let xr = tx.row(r);
                    let gr = &g[r * c..(r + 1) * c];
                    let xhat: Vec<T> = xr.iter().map(|&v| (v - mean[r]) * rstd[r]).collect();
                    let dxhat: Vec<T> = gr.iter().zip(gam).map(|(&a, &b)| a * b).collect();
                    let m1 = dxhat.iter().copied().sum::<T>() / n;
                    let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
                    for j in 0..c {
                        gx[r * c + j] = rstd[r] * (dxhat[j] - m1 - xhat[j] * m2);
                        gg[j] += gr[j] * xhat[j];
                        gbeta[j] += gr[j];
                    }
                }
                sends.push((*x, gx));
                sends.push((*gamma, gg));
                sends.push((*beta, gbeta));
            }
            Op::Attention {
                q,
                k,
                v,
                q_block,
                kv_block,
                scale,
                probs,
            } => {
                let (tq, tk, tv) = (val(*q), val(*k), val(*v));
                let dh = tq.cols();
                let (mq, mk) = (*q_block, *kv_block);
                let blocks = tq.rows() / mq;
                let mut gq = vec![T::zero(); tq.numel()];
                let mut gk = vec![T::zero(); tk.numel()];
                let mut gv = vec![T::zero(); tv.numel()];
                for blk in 0..blocks {
                    let qs = blk * mq * dh..(blk + 1) * mq * dh;
                    let ks = blk * mk * dh..(blk + 1) * mk * dh;
                    let p = &probs[blk * mq * mk..(blk + 1) * mq * mk];
                    let go = &g[qs.clone()];
                    // dV = P^T dO
                    let dv = matmul_tn(p, go, mq, mk, dh);
                    gv[ks.clone()].copy_from_slice(&dv);
                    // dP = dO V^T, dS = P (dP - rowsum(dP P))
                    let mut ds = matmul_nt(go, &tv.data()[ks.clone()], mq, dh, mk);
                    for r in 0..mq {
                        let pr = &p[r * mk..(r + 1) * mk];
                        let dr = &mut ds[r * mk..(r + 1) * mk];
                        let dot = pr.iter().zip(dr.iter()).fold(T::zero(), |a, (&x, &y)| a + x * y);
                        for (d, &pp) in dr.iter_mut().zip(pr) {
                            *d = pp * (*d - dot) * *scale;
                        }
                    }
                    gq[qs.clone()].copy_from_slice(&matmul(&ds, &tk.data()[ks.clone()], mq, mk, dh));
                    gk[ks].copy_from_slice(&matmul_tn(&ds, &tq.data()[qs], mq, mk, dh));
                }
                sends.push((*q, gq));
                sends.push((*k, gk));
                sends.push((*v, gv));
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    let mut gp = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                    }
                    sends.push((p, gp));
                    offset += c;
                }
            }
            Op::SliceCols { x, start } => {
                let tx = val(*x);
                let (c, len) = (tx.cols(), node.value.cols());
                let mut gx = vec![T::zero(); tx.numel()];
                for r in 0..tx.rows() {
                    gx[r * c + start..r * c + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                sends.push((*x, gx));
            }
            Op::GatherRows { x, index } => {
                let tx = val(*x);
                let c = tx.cols();
                let mut gx = vec![T::zero(); tx.numel()];
                for (o, &src) in index.iter().enumerate() {
                    gx[src * c..(src + 1) * c]
                        .iter_mut()
                        .zip(&g[o * c..(o + 1) * c])
                        .for_each(|(a, &b)| *a += b);
                }
                sends.push((*x, gx));
            }
            Op::PoolRows {
                x,
                group,
                mode,
                argmax,
            } => {
                let tx = val(*x);
                let c = tx.cols();
                let mut gx = vec![T::zero(); tx.numel()];
                match mode {
                    PoolMode::Mean => {
                        let inv = T::one() / T::lit(*group as f64);
                        for r in 0..tx.rows() {
                            let o = r / group;
                            for j in 0..c {
                                gx[r * c + j] = g[o * c + j] * inv;
                            }
                        }
                    }
                    PoolMode::Max => {
                        for (idx, &src) in argmax.iter().enumerate() {
                            let j = idx % c;
                            gx[src * c + j] += g[idx];
                        }
                    }
                }
                sends.push((*x, gx));
            }
            Op::BceWithLogits { logits, targets } => {
                let n = T::lit(targets.len() as f64);
                let gl = val(*logits)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| g[0] * (sigmoid(z) - y) / n)
                    .collect();
                sends.push((*logits, gl));
            }
            Op::Sum(a) => sends.push((*a, vec![g[0]; val(*a).numel()])),
        }
        for (to, grad) in sends {
            if self.wants(to) {
                self.send(to, &grad);
            }
        }
    }

    /// Adds the gradient of every parameter leaf into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParameterStore<T>) -> Result<()> {
        for (name, v) in &self.param_order {
            let tensor = store
                .get_mut(name)
                .ok_or_else(|| Error::Argument(format!("unknown parameter `{name}`")))?;
            match self.grad(*v) {
                Some(g) => tensor.accumulate_grad(g)?,
                None => tensor.accumulate_grad(&vec![T::zero(); tensor.numel()])?,
            }
        }
        Ok(())
    }

    /// Parameter leaves recorded on this tape, in first-use order.
    pub fn params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.param_order.iter().map(|(n, v)| (n.as_str(), *v))
    }
}
