use super::{sigmoid, ParamSet, Tensor, PROB_EPS};
use crate::error::{LensError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Act {
        x: NodeId,
        kind: Activation,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Gather {
        x: NodeId,
        rows: Vec<usize>,
    },
    SegmentSum {
        x: NodeId,
        segments: Vec<usize>,
    },
    SegmentMean {
        x: NodeId,
        segments: Vec<usize>,
        counts: Vec<usize>,
    },
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    Reparam {
        mu: NodeId,
        logvar: NodeId,
        eps: Tensor,
    },
    GaussianKl {
        mu: NodeId,
        logvar: NodeId,
    },
    BernoulliNll {
        p: NodeId,
        labels: Vec<f64>,
    },
    Scale {
        x: NodeId,
        factor: f64,
    },
    Mean {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only computation tape. Nodes are stored in creation order, which is
/// a topological order, so the backward pass is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    params: Vec<Tensor>,
    nodes: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for parameter `index` of the bound [`ParamSet`]; zero when the
    /// parameter did not influence the loss.
    pub fn param(&self, index: usize) -> &Tensor {
        &self.params[index]
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Gradient with respect to an arbitrary node, if it was reached.
    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].as_ref()
    }
}

fn expect_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LensError::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn expect_rank2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(LensError::dim(op, t.shape(), &[0, 0]));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input. Gradients reach it but are not reported as parameters.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Binds parameter `index` of `params` into the graph.
    pub fn param(&mut self, params: &ParamSet, index: usize) -> NodeId {
        self.push(Op::Param(index), params.value(index).clone())
    }

    /// `x·W + b`, with `b` broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.cols() != wv.rows() {
            return Err(LensError::dim("affine", xv.shape(), wv.shape()));
        }
        if bv.len() != wv.cols() {
            return Err(LensError::dim("affine bias", wv.shape(), bv.shape()));
        }
        let mut out = xv.matmul(wv)?;
        let k = wv.cols();
        for row in out.data_mut().chunks_mut(k) {
            for (o, &bias) in row.iter_mut().zip(bv.data()) {
                *o += bias;
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, out))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul { a, b }, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        expect_same("add", self.value(a), self.value(b))?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push(Op::Act { x, kind }, out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activation(x, Activation::Sigmoid)
    }

    /// Row-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        expect_rank2("concat", av)?;
        expect_rank2("concat", bv)?;
        if av.rows() != bv.rows() {
            return Err(LensError::dim("concat", av.shape(), bv.shape()));
        }
        let (n, p, q) = (av.rows(), av.cols(), bv.cols());
        let mut data = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            data.extend_from_slice(av.row_slice(r));
            data.extend_from_slice(bv.row_slice(r));
        }
        let out = Tensor::new(vec![n, p + q], data)?;
        Ok(self.push(Op::Concat { a, b }, out))
    }

    /// Selects rows of `x` (with repetition); backward scatter-adds.
    pub fn gather_rows(&mut self, x: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let xv = self.value(x);
        expect_rank2("gather_rows", xv)?;
        let n = xv.rows();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(LensError::dim("gather_rows", xv.shape(), &[bad]));
        }
        let d = xv.cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in &rows {
            data.extend_from_slice(xv.row_slice(r));
        }
        let out = Tensor::new(vec![rows.len(), d], data)?;
        Ok(self.push(Op::Gather { x, rows }, out))
    }

    /// Sums rows of `x` into `n_segments` buckets. Rows are added in the order
    /// they appear in `x`; callers that need order-independence present rows
    /// in a canonical order. Empty segments yield zero rows.
    pub fn segment_sum(
        &mut self,
        x: NodeId,
        segments: Vec<usize>,
        n_segments: usize,
    ) -> Result<NodeId> {
        let out = self.segment_reduce("segment_sum", x, &segments, n_segments)?;
        Ok(self.push(Op::SegmentSum { x, segments }, out))
    }

    /// Like [`Graph::segment_sum`] but divides by the segment size. Empty
    /// segments yield zero rows.
    pub fn segment_mean(
        &mut self,
        x: NodeId,
        segments: Vec<usize>,
        n_segments: usize,
    ) -> Result<NodeId> {
        let mut out = self.segment_reduce("segment_mean", x, &segments, n_segments)?;
        let mut counts = vec![0usize; n_segments];
        for &s in &segments {
            counts[s] += 1;
        }
        let d = out.cols();
        for (s, &c) in counts.iter().enumerate() {
            if c > 0 {
                for v in &mut out.data_mut()[s * d..(s + 1) * d] {
                    *v /= c as f64;
                }
            }
        }
        Ok(self.push(
            Op::SegmentMean {
                x,
                segments,
                counts,
            },
            out,
        ))
    }

    /// Column sums over all rows: `[n, d] -> [1, d]`.
    pub fn sum_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).rows();
        self.segment_sum(x, vec![0; n], 1)
    }

    fn segment_reduce(
        &self,
        op: &'static str,
        x: NodeId,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<Tensor> {
        let xv = self.value(x);
        expect_rank2(op, xv)?;
        if segments.len() != xv.rows() {
            return Err(LensError::dim(op, xv.shape(), &[segments.len()]));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(LensError::dim(op, &[n_segments], &[bad]));
        }
        let d = xv.cols();
        let mut out = Tensor::zeros(&[n_segments, d]);
        for (r, &s) in segments.iter().enumerate() {
            let dst = &mut out.data_mut()[s * d..(s + 1) * d];
            for (o, &v) in dst.iter_mut().zip(xv.row_slice(r)) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Elementwise clamp; the gradient passes only where the input was inside
    /// the bounds.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, out)
    }

    /// `z = mu + exp(logvar / 2) ⊙ eps`. `eps` is caller-supplied noise and
    /// receives no gradient.
    pub fn reparam(&mut self, mu: NodeId, logvar: NodeId, eps: Tensor) -> Result<NodeId> {
        let (mv, lv) = (self.value(mu), self.value(logvar));
        expect_same("reparam", mv, lv)?;
        expect_same("reparam noise", mv, &eps)?;
        let data = mv
            .data()
            .iter()
            .zip(lv.data())
            .zip(eps.data())
            .map(|((&m, &l), &e)| m + (0.5 * l).exp() * e)
            .collect();
        let out = Tensor::new(mv.shape().to_vec(), data)?;
        Ok(self.push(Op::Reparam { mu, logvar, eps }, out))
    }

    /// Row-wise KL to the unit Gaussian: `[n, k] -> [n, 1]`.
    pub fn gaussian_kl(&mut self, mu: NodeId, logvar: NodeId) -> Result<NodeId> {
        let (mv, lv) = (self.value(mu), self.value(logvar));
        expect_same("gaussian_kl", mv, lv)?;
        expect_rank2("gaussian_kl", mv)?;
        let kl: Vec<f64> = (0..mv.rows())
            .map(|r| super::gaussian_kl(mv.row_slice(r), lv.row_slice(r)))
            .collect();
        Ok(self.push(Op::GaussianKl { mu, logvar }, Tensor::column(&kl)))
    }

    /// Elementwise Bernoulli NLL of probabilities `p` against fixed labels.
    pub fn bernoulli_nll(&mut self, p: NodeId, labels: Vec<f64>) -> Result<NodeId> {
        let pv = self.value(p);
        if pv.len() != labels.len() {
            return Err(LensError::dim("bernoulli_nll", pv.shape(), &[labels.len()]));
        }
        let data = pv
            .data()
            .iter()
            .zip(&labels)
            .map(|(&p, &y)| super::bernoulli_nll(p, y))
            .collect();
        let out = Tensor::new(pv.shape().to_vec(), data)?;
        Ok(self.push(Op::BernoulliNll { p, labels }, out))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out = self.value(x).map(|v| v * factor);
        self.push(Op::Scale { x, factor }, out)
    }

    /// Mean of all entries, as a `[1, 1]` tensor. An empty input yields 0.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let m = if xv.is_empty() {
            0.0
        } else {
            xv.data().iter().sum::<f64>() / xv.len() as f64
        };
        self.push(Op::Mean { x }, Tensor::scalar(m))
    }

    /// Sum of all entries, as a `[1, 1]` tensor.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push(Op::Sum { x }, Tensor::scalar(s))
    }

    /// Reverse sweep from a scalar `loss`. `n_params` is the size of the
    /// bound [`ParamSet`]; parameters never reached get zero gradients.
    pub fn backward(&self, loss: NodeId, params: &ParamSet) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(LensError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        let mut param_grads: Vec<Tensor> = (0..params.len())
            .map(|i| Tensor::zeros(params.value(i).shape()))
            .collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads, &mut param_grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            params: param_grads,
            nodes: grads,
        })
    }

    fn propagate(
        &self,
        node: &Node,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        param_grads: &mut [Tensor],
    ) {
        let mut accumulate = |id: NodeId, delta: Tensor| match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(i) => param_grads[*i].add_assign(g),
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                accumulate(*x, g.matmul_t(wv));
                accumulate(*w, xv.t_matmul(g));
                let k = wv.cols();
                let mut gb = vec![0.0; k];
                for row in g.data().chunks(k) {
                    for (acc, &v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let shape = self.value(*b).shape().to_vec();
                accumulate(*b, Tensor::new(shape, gb).expect("bias shape"));
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(*a, g.matmul_t(bv));
                accumulate(*b, av.t_matmul(g));
            }
            Op::Add { a, b } => {
                accumulate(*a, g.clone());
                accumulate(*b, g.clone());
            }
            Op::Act { x, kind } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                    .collect();
                accumulate(
                    *x,
                    Tensor::new(xv.shape().to_vec(), data).expect("act shape"),
                );
            }
            Op::Concat { a, b } => {
                let (p, q) = (self.value(*a).cols(), self.value(*b).cols());
                let n = g.rows();
                let mut ga = Vec::with_capacity(n * p);
                let mut gb = Vec::with_capacity(n * q);
                for r in 0..n {
                    let row = g.row_slice(r);
                    ga.extend_from_slice(&row[..p]);
                    gb.extend_from_slice(&row[p..]);
                }
                accumulate(*a, Tensor::new(vec![n, p], ga).expect("concat shape"));
                accumulate(*b, Tensor::new(vec![n, q], gb).expect("concat shape"));
            }
            Op::Gather { x, rows } => {
                let xv = self.value(*x);
                let d = xv.cols();
                let mut gx = Tensor::zeros(xv.shape());
                for (i, &r) in rows.iter().enumerate() {
                    let dst = &mut gx.data_mut()[r * d..(r + 1) * d];
                    for (o, &v) in dst.iter_mut().zip(g.row_slice(i)) {
                        *o += v;
                    }
                }
                accumulate(*x, gx);
            }
            Op::SegmentSum { x, segments } => {
                accumulate(*x, broadcast_segments(g, segments, None));
            }
            Op::SegmentMean {
                x,
                segments,
                counts,
            } => {
                accumulate(*x, broadcast_segments(g, segments, Some(counts)));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gi)| if v >= *lo && v <= *hi { gi } else { 0.0 })
                    .collect();
                accumulate(
                    *x,
                    Tensor::new(xv.shape().to_vec(), data).expect("clamp shape"),
                );
            }
            Op::Reparam { mu, logvar, eps } => {
                let lv = self.value(*logvar);
                let data = lv
                    .data()
                    .iter()
                    .zip(eps.data())
                    .zip(g.data())
                    .map(|((&l, &e), &gi)| gi * 0.5 * (0.5 * l).exp() * e)
                    .collect();
                accumulate(*mu, g.clone());
                accumulate(
                    *logvar,
                    Tensor::new(lv.shape().to_vec(), data).expect("reparam shape"),
                );
            }
            Op::GaussianKl { mu, logvar } => {
                let (mv, lv) = (self.value(*mu), self.value(*logvar));
                let k = mv.cols();
                let mut gm = Tensor::zeros(mv.shape());
                let mut gl = Tensor::zeros(lv.shape());
                for r in 0..mv.rows() {
                    let gr = g.data()[r];
                    for c in 0..k {
                        let i = r * k + c;
                        gm.data_mut()[i] = gr * mv.data()[i];
                        gl.data_mut()[i] = gr * 0.5 * (lv.data()[i].exp() - 1.0);
                    }
                }
                accumulate(*mu, gm);
                accumulate(*logvar, gl);
            }
            Op::BernoulliNll { p, labels } => {
                let pv = self.value(*p);
                let data = pv
                    .data()
                    .iter()
                    .zip(labels)
                    .zip(g.data())
                    .map(|((&p, &y), &gi)| {
                        if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                            0.0
                        } else {
                            gi * (-y / p + (1.0 - y) / (1.0 - p))
                        }
                    })
                    .collect();
                accumulate(
                    *p,
                    Tensor::new(pv.shape().to_vec(), data).expect("nll shape"),
                );
            }
            Op::Scale { x, factor } => accumulate(*x, g.map(|v| v * factor)),
            Op::Mean { x } => {
                let xv = self.value(*x);
                let n = xv.len().max(1) as f64;
                accumulate(*x, Tensor::filled(xv.shape(), g.data()[0] / n));
            }
            Op::Sum { x } => {
                let xv = self.value(*x);
                accumulate(*x, Tensor::filled(xv.shape(), g.data()[0]));
            }
        }
    }
}

fn broadcast_segments(g: &Tensor, segments: &[usize], counts: Option<&Vec<usize>>) -> Tensor {
    let d = g.cols();
    let mut data = Vec::with_capacity(segments.len() * d);
    for &s in segments {
        let row = g.row_slice(s);
        match counts {
            Some(c) => data.extend(row.iter().map(|v| v / c[s] as f64)),
            None => data.extend_from_slice(row),
        }
    }
    Tensor::new(vec![segments.len(), d], data).expect("segment shape")
}
