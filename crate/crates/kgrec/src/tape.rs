//! Tape-based reverse-mode differentiation.
//!
//! A `Tape` records each primitive operation together with its forward value.
//! `backward` replays the tape in reverse, accumulating adjoints by the chain
//! rule, and returns gradients for every leaf. Tapes are built per mini-batch
//! and discarded; node inputs always reference strictly earlier nodes, so the
//! tape is topologically ordered by construction.

use std::collections::HashMap;

use crate::error::TapeError;
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Primitive differentiable operations. Input node ids are embedded.
#[derive(Debug, Clone)]
pub enum OpKind {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product of same-shape tensors.
    Mul(NodeId, NodeId),
    /// Matrix [r,c] times vector [c] -> [r].
    MatVec(NodeId, NodeId),
    /// Matrix [a,b] times matrix [b,c] -> [a,c].
    MatMul(NodeId, NodeId),
    /// Inner product of same-length vectors -> scalar.
    Dot(NodeId, NodeId),
    /// Tensor scaled by a scalar node -> same shape.
    Scale(NodeId, NodeId),
    /// Sum of all entries -> scalar.
    Sum(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// Sum of squared entries -> scalar.
    L2NormSq(NodeId),
    /// Concatenate vectors -> one vector.
    Concat(Vec<NodeId>),
    /// Elementwise product with a 0/1 mask treated as constant:
    /// no gradient flows into the mask.
    DropoutApply(NodeId, NodeId),
}

struct Node {
    op: OpKind,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every leaf on the tape.
/// Leaves unreachable from the root map to zero tensors.
pub struct GradMap {
    grads: HashMap<NodeId, Tensor>,
}

impl GradMap {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.grads.get(&leaf)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input tensor. Leaves are the only nodes that receive
    /// gradients from `backward`.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: OpKind::Leaf,
            value,
        });
        self.nodes.len() - 1
    }

    pub fn scalar_leaf(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn check_id(&self, id: NodeId) -> Result<(), TapeError> {
        if id >= self.nodes.len() {
            Err(TapeError::BadNodeId(id))
        } else {
            Ok(())
        }
    }

    /// Validate shapes, compute the forward value and append a node.
    pub fn apply(&mut self, op: OpKind) -> Result<NodeId, TapeError> {
        let value = self.forward(&op)?;
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(TapeError::NonFinite {
                op: op_name(&op),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(self.nodes.len() - 1)
    }

    fn forward(&self, op: &OpKind) -> Result<Tensor, TapeError> {
        match op {
            OpKind::Leaf => Err(TapeError::Domain {
                op: "leaf",
                detail: "use Tape::leaf to add inputs".into(),
            }),
            OpKind::Add(a, b) | OpKind::Sub(a, b) | OpKind::Mul(a, b) => {
                self.check_id(*a)?;
                self.check_id(*b)?;
                let (ta, tb) = (self.value(*a), self.value(*b));
                if ta.shape() != tb.shape() {
                    return Err(TapeError::ShapeMismatch {
                        op: op_name(op),
                        detail: format!("{:?} vs {:?}", ta.shape(), tb.shape()),
                    });
                }
                let f: fn(f64, f64) -> f64 = match op {
                    OpKind::Add(..) => |x, y| x + y,
                    OpKind::Sub(..) => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let data = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| f(*x, *y))
                    .collect();
                Tensor::new(ta.shape().to_vec(), data)
            }
            OpKind::MatVec(m, v) => {
                self.check_id(*m)?;
                self.check_id(*v)?;
                let (tm, tv) = (self.value(*m), self.value(*v));
                if !tm.is_matrix() || !tv.is_vector() || tm.cols() != tv.numel() {
                    return Err(TapeError::ShapeMismatch {
                        op: "matvec",
                        detail: format!("{:?} x {:?}", tm.shape(), tv.shape()),
                    });
                }
                let (r, c) = (tm.rows(), tm.cols());
                let mut out = vec![0.0; r];
                for i in 0..r {
                    let row = &tm.data()[i * c..(i + 1) * c];
                    out[i] = row.iter().zip(tv.data()).map(|(a, b)| a * b).sum();
                }
                Tensor::new(vec![r], out)
            }
            OpKind::MatMul(a, b) => {
                self.check_id(*a)?;
                self.check_id(*b)?;
                let (ta, tb) = (self.value(*a), self.value(*b));
                if !ta.is_matrix() || !tb.is_matrix() || ta.cols() != tb.rows() {
                    return Err(TapeError::ShapeMismatch {
                        op: "matmul",
                        detail: format!("{:?} x {:?}", ta.shape(), tb.shape()),
                    });
                }
                let (m, n, p) = (ta.rows(), ta.cols(), tb.cols());
                let mut out = vec![0.0; m * p];
                for i in 0..m {
                    for kk in 0..n {
                        let aik = ta.data()[i * n + kk];
                        let brow = &tb.data()[kk * p..(kk + 1) * p];
                        let orow = &mut out[i * p..(i + 1) * p];
                        for j in 0..p {
                            orow[j] += aik * brow[j];
                        }
                    }
                }
                Tensor::new(vec![m, p], out)
            }
            OpKind::Dot(a, b) => {
                self.check_id(*a)?;
                self.check_id(*b)?;
                let (ta, tb) = (self.value(*a), self.value(*b));
                if !ta.is_vector() || !tb.is_vector() || ta.numel() != tb.numel() {
                    return Err(TapeError::ShapeMismatch {
                        op: "dot",
                        detail: format!("{:?} . {:?}", ta.shape(), tb.shape()),
                    });
                }
                let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
                Tensor::new(vec![1], vec![s])
            }
            OpKind::Scale(t, s) => {
                self.check_id(*t)?;
                self.check_id(*s)?;
                let (tt, ts) = (self.value(*t), self.value(*s));
                if !ts.is_scalar() {
                    return Err(TapeError::ShapeMismatch {
                        op: "scale",
                        detail: format!("scale factor has shape {:?}", ts.shape()),
                    });
                }
                let f = ts.item();
                let data = tt.data().iter().map(|x| x * f).collect();
                Tensor::new(tt.shape().to_vec(), data)
            }
            OpKind::Sum(a) => {
                self.check_id(*a)?;
                let s = self.value(*a).data().iter().sum();
                Tensor::new(vec![1], vec![s])
            }
            OpKind::Exp(a) | OpKind::Sigmoid(a) | OpKind::Tanh(a) | OpKind::Relu(a) => {
                self.check_id(*a)?;
                let ta = self.value(*a);
                let f: fn(f64) -> f64 = match op {
                    OpKind::Exp(_) => f64::exp,
                    OpKind::Sigmoid(_) => |x| 1.0 / (1.0 + (-x).exp()),
                    OpKind::Tanh(_) => f64::tanh,
                    _ => |x| if x > 0.0 { x } else { 0.0 },
                };
                let data = ta.data().iter().map(|x| f(*x)).collect();
                Tensor::new(ta.shape().to_vec(), data)
            }
            OpKind::Log(a) => {
                self.check_id(*a)?;
                let ta = self.value(*a);
                if ta.data().iter().any(|&x| x <= 0.0) {
                    return Err(TapeError::Domain {
                        op: "log",
                        detail: "log of non-positive value".into(),
                    });
                }
                let data = ta.data().iter().map(|x| x.ln()).collect();
                Tensor::new(ta.shape().to_vec(), data)
            }
            OpKind::L2NormSq(a) => {
                self.check_id(*a)?;
                let s = self.value(*a).data().iter().map(|x| x * x).sum();
                Tensor::new(vec![1], vec![s])
            }
            OpKind::Concat(ids) => {
                if ids.is_empty() {
                    return Err(TapeError::ShapeMismatch {
                        op: "concat",
                        detail: "empty input list".into(),
                    });
                }
                let mut data = Vec::new();
                for id in ids {
                    self.check_id(*id)?;
                    let t = self.value(*id);
                    if !t.is_vector() {
                        return Err(TapeError::ShapeMismatch {
                            op: "concat",
                            detail: format!("non-vector input shape {:?}", t.shape()),
                        });
                    }
                    data.extend_from_slice(t.data());
                }
                let n = data.len();
                Tensor::new(vec![n], data)
            }
            OpKind::DropoutApply(x, mask) => {
                self.check_id(*x)?;
                self.check_id(*mask)?;
                let (tx, tm) = (self.value(*x), self.value(*mask));
                if tx.shape() != tm.shape() {
                    return Err(TapeError::ShapeMismatch {
                        op: "dropout-mask-apply",
                        detail: format!("{:?} vs {:?}", tx.shape(), tm.shape()),
                    });
                }
                let data = tx
                    .data()
                    .iter()
                    .zip(tm.data())
                    .map(|(a, b)| a * b)
                    .collect();
                Tensor::new(tx.shape().to_vec(), data)
            }
        }
    }

    /// Gradients of a scalar `root` with respect to every leaf.
    pub fn backward(&self, root: NodeId) -> Result<GradMap, TapeError> {
        self.check_id(root)?;
        let root_val = self.value(root);
        if !root_val.is_scalar() {
            return Err(TapeError::NonScalarRoot {
                shape: root_val.shape().to_vec(),
            });
        }

        let mut adjoint: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adjoint[root] = Some(Tensor::scalar(1.0));

        for id in (0..=root).rev() {
            let g = match adjoint[id].take() {
                Some(g) => g,
                None => continue,
            };
            // keep the adjoint available for leaves
            if matches!(self.nodes[id].op, OpKind::Leaf) {
                adjoint[id] = Some(g);
                continue;
            }
            self.propagate_node(id, &g, &mut adjoint);
        }

        let mut grads = HashMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, OpKind::Leaf) {
                let g = adjoint[id]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                grads.insert(id, g);
            }
        }
        Ok(GradMap { grads })
    }

    fn propagate_node(&self, id: NodeId, g: &Tensor, adjoint: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match &node.op {
            OpKind::Leaf => unreachable!(),
            OpKind::Add(a, b) => {
                accumulate(adjoint, *a, g.data(), self.value(*a).shape());
                accumulate(adjoint, *b, g.data(), self.value(*b).shape());
            }
            OpKind::Sub(a, b) => {
                accumulate(adjoint, *a, g.data(), self.value(*a).shape());
                let neg: Vec<f64> = g.data().iter().map(|x| -x).collect();
                accumulate(adjoint, *b, &neg, self.value(*b).shape());
            }
            OpKind::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga: Vec<f64> = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                accumulate(adjoint, *a, &ga, ta.shape());
                accumulate(adjoint, *b, &gb, tb.shape());
            }
            OpKind::MatVec(m, v) => {
                let (tm, tv) = (self.value(*m), self.value(*v));
                let (r, c) = (tm.rows(), tm.cols());
                // dL/dM = g outer v ; dL/dv = M^T g
                let mut gm = vec![0.0; r * c];
                for i in 0..r {
                    let gi = g.data()[i];
                    let row = &mut gm[i * c..(i + 1) * c];
                    for (j, vj) in tv.data().iter().enumerate() {
                        row[j] = gi * vj;
                    }
                }
                let mut gv = vec![0.0; c];
                for i in 0..r {
                    let gi = g.data()[i];
                    let row = &tm.data()[i * c..(i + 1) * c];
                    for j in 0..c {
                        gv[j] += gi * row[j];
                    }
                }
                accumulate(adjoint, *m, &gm, tm.shape());
                accumulate(adjoint, *v, &gv, tv.shape());
            }
            OpKind::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, n, p) = (ta.rows(), ta.cols(), tb.cols());
                // dL/dA = G B^T ; dL/dB = A^T G
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for kk in 0..n {
                        let mut s = 0.0;
                        for j in 0..p {
                            s += g.data()[i * p + j] * tb.data()[kk * p + j];
                        }
                        ga[i * n + kk] = s;
                    }
                }
                let mut gb = vec![0.0; n * p];
                for kk in 0..n {
                    for j in 0..p {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += ta.data()[i * n + kk] * g.data()[i * p + j];
                        }
                        gb[kk * p + j] = s;
                    }
                }
                accumulate(adjoint, *a, &ga, ta.shape());
                accumulate(adjoint, *b, &gb, tb.shape());
            }
            OpKind::Dot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let g0 = g.item();
                let ga: Vec<f64> = tb.data().iter().map(|x| x * g0).collect();
                let gb: Vec<f64> = ta.data().iter().map(|x| x * g0).collect();
                accumulate(adjoint, *a, &ga, ta.shape());
                accumulate(adjoint, *b, &gb, tb.shape());
            }
            OpKind::Scale(t, s) => {
                let (tt, ts) = (self.value(*t), self.value(*s));
                let f = ts.item();
                let gt: Vec<f64> = g.data().iter().map(|x| x * f).collect();
                let gs = [tt
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(x, y)| x * y)
                    .sum::<f64>()];
                accumulate(adjoint, *t, &gt, tt.shape());
                accumulate(adjoint, *s, &gs, ts.shape());
            }
            OpKind::Sum(a) => {
                let ta = self.value(*a);
                let g0 = g.item();
                let ga = vec![g0; ta.numel()];
                accumulate(adjoint, *a, &ga, ta.shape());
            }
            OpKind::Exp(a) => {
                let ga: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(y, gi)| y * gi)
                    .collect();
                accumulate(adjoint, *a, &ga, self.value(*a).shape());
            }
            OpKind::Log(a) => {
                let ta = self.value(*a);
                let ga: Vec<f64> = ta.data().iter().zip(g.data()).map(|(x, gi)| gi / x).collect();
                accumulate(adjoint, *a, &ga, ta.shape());
            }
            OpKind::Sigmoid(a) => {
                let ga: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(y, gi)| y * (1.0 - y) * gi)
                    .collect();
                accumulate(adjoint, *a, &ga, self.value(*a).shape());
            }
            OpKind::Tanh(a) => {
                let ga: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(y, gi)| (1.0 - y * y) * gi)
                    .collect();
                accumulate(adjoint, *a, &ga, self.value(*a).shape());
            }
            OpKind::Relu(a) => {
                // subgradient at 0 is 0
                let ta = self.value(*a);
                let ga: Vec<f64> = ta
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(x, gi)| if *x > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(adjoint, *a, &ga, ta.shape());
            }
            OpKind::L2NormSq(a) => {
                let ta = self.value(*a);
                let g0 = g.item();
                let ga: Vec<f64> = ta.data().iter().map(|x| 2.0 * x * g0).collect();
                accumulate(adjoint, *a, &ga, ta.shape());
            }
            OpKind::Concat(ids) => {
                let mut offset = 0;
                for id in ids {
                    let t = self.value(*id);
                    let n = t.numel();
                    accumulate(adjoint, *id, &g.data()[offset..offset + n], t.shape());
                    offset += n;
                }
            }
            OpKind::DropoutApply(x, mask) => {
                let (tx, tm) = (self.value(*x), self.value(*mask));
                let gx: Vec<f64> = g.data().iter().zip(tm.data()).map(|(a, b)| a * b).collect();
                accumulate(adjoint, *x, &gx, tx.shape());
                // mask is constant: no gradient
            }
        }
    }

    // ---- infallible convenience builders (shape errors are caller bugs) ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(OpKind::Add(a, b)).expect("add")
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(OpKind::Sub(a, b)).expect("sub")
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(OpKind::Mul(a, b)).expect("mul")
    }
    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        self.apply(OpKind::MatVec(m, v)).expect("matvec")
    }
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.apply(OpKind::Dot(a, b)).expect("dot")
    }
    pub fn scale(&mut self, t: NodeId, s: NodeId) -> NodeId {
        self.apply(OpKind::Scale(t, s)).expect("scale")
    }
    /// Scale by a compile-time constant: the factor becomes a fresh leaf.
    pub fn scale_const(&mut self, t: NodeId, f: f64) -> NodeId {
        let s = self.scalar_leaf(f);
        self.scale(t, s)
    }
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.apply(OpKind::Sum(a)).expect("sum")
    }
    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.apply(OpKind::Exp(a)).expect("exp")
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId, TapeError> {
        self.apply(OpKind::Log(a))
    }
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.apply(OpKind::Sigmoid(a)).expect("sigmoid")
    }
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.apply(OpKind::Tanh(a)).expect("tanh")
    }
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.apply(OpKind::Relu(a)).expect("relu")
    }
    pub fn l2_norm_sq(&mut self, a: NodeId) -> NodeId {
        self.apply(OpKind::L2NormSq(a)).expect("l2-norm-squared")
    }
    pub fn concat(&mut self, ids: Vec<NodeId>) -> NodeId {
        self.apply(OpKind::Concat(ids)).expect("concat")
    }
    pub fn dropout_apply(&mut self, x: NodeId, mask: NodeId) -> NodeId {
        self.apply(OpKind::DropoutApply(x, mask))
            .expect("dropout-mask-apply")
    }

    /// softplus(x) = ln(1 + e^x), computed in the overflow-safe split form
    /// relu(x) + ln(e^{x-relu(x)} + e^{-relu(x)}).
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let r = self.relu(x);
        let xm = self.sub(x, r);
        let nr = self.scale_const(r, -1.0);
        let e1 = self.exp(xm);
        let e2 = self.exp(nr);
        let s = self.add(e1, e2);
        let l = self.log(s).expect("softplus log of positive sum");
        self.add(r, l)
    }

    /// log(sum_i exp(x_i)) over a list of scalar nodes, shifted by the
    /// max forward value (a constant, so gradients stay exact).
    pub fn log_sum_exp(&mut self, terms: &[NodeId]) -> NodeId {
        assert!(!terms.is_empty(), "log_sum_exp of empty list");
        let max = terms
            .iter()
            .map(|&id| self.value(id).item())
            .fold(f64::NEG_INFINITY, f64::max);
        let shift = self.scalar_leaf(-max);
        let shifted: Vec<NodeId> = terms
            .iter()
            .map(|&id| {
                let s = self.add(id, shift);
                self.exp(s)
            })
            .collect();
        let stacked = self.concat(shifted);
        let total = self.sum(stacked);
        let l = self.log(total).expect("lse log of positive sum");
        let unshift = self.scalar_leaf(max);
        self.add(l, unshift)
    }
}

fn accumulate(adjoint: &mut [Option<Tensor>], id: NodeId, grad: &[f64], shape: &[usize]) {
    match &mut adjoint[id] {
        Some(t) => {
            for (a, g) in t.data_mut().iter_mut().zip(grad) {
                *a += g;
            }
        }
        None => {
            let mut t = Tensor::zeros(shape);
            t.data_mut().copy_from_slice(grad);
            adjoint[id] = Some(t);
        }
    }
}

fn op_name(op: &OpKind) -> &'static str {
    match op {
        OpKind::Leaf => "leaf",
        OpKind::Add(..) => "add",
        OpKind::Sub(..) => "sub",
        OpKind::Mul(..) => "mul",
        OpKind::MatVec(..) => "matvec",
        OpKind::MatMul(..) => "matmul",
        OpKind::Dot(..) => "dot",
        OpKind::Scale(..) => "scale",
        OpKind::Sum(..) => "sum",
        OpKind::Exp(..) => "exp",
        OpKind::Log(..) => "log",
        OpKind::Sigmoid(..) => "sigmoid",
        OpKind::Tanh(..) => "tanh",
        OpKind::Relu(..) => "relu",
        OpKind::L2NormSq(..) => "l2-norm-squared",
        OpKind::Concat(..) => "concat",
        OpKind::DropoutApply(..) => "dropout-mask-apply",
    }
}

/// Max relative error between analytic gradients and central finite
/// differences over every coordinate of every leaf.
///
/// `build` must be a deterministic function of the leaf values: it is
/// re-invoked for each perturbed evaluation.
pub fn fd_check<F>(mut build: F, leaves: &[Tensor], step: f64) -> Result<f64, TapeError>
where
    F: FnMut(&mut Tape, &[NodeId]) -> NodeId,
{
    assert!(step > 0.0, "fd step must be positive");

    let eval = |tensors: &[Tensor], build: &mut F| -> Result<(Tape, NodeId), TapeError> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &ids);
        Ok((tape, root))
    };

    let (tape, root) = eval(leaves, &mut build)?;
    let ids: Vec<NodeId> = (0..leaves.len()).collect();
    let grads = tape.backward(root)?;

    let mut max_err: f64 = 0.0;
    let mut work: Vec<Tensor> = leaves.to_vec();
    for (li, leaf) in leaves.iter().enumerate() {
        let analytic = grads.get(ids[li]).expect("leaf gradient present");
        for ci in 0..leaf.numel() {
            let orig = leaf.data()[ci];
            work[li].data_mut()[ci] = orig + step;
            let (tp, rp) = eval(&work, &mut build)?;
            let fp = tp.value(rp).item();
            work[li].data_mut()[ci] = orig - step;
            let (tm, rm) = eval(&work, &mut build)?;
            let fm = tm.value(rm).item();
            work[li].data_mut()[ci] = orig;

            let fd = (fp - fm) / (2.0 * step);
            let a = analytic.data()[ci];
            let err = (a - fd).abs() / a.abs().max(1.0);
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}
