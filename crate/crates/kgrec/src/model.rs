//! Parameter storage and scoring: CF score, relation-projected translation
//! energy, attentive neighborhood propagation, projection head, dropout
//! views and the frozen EMA similarity judge used for instance weighting.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ckg::{neighbors, CollaborativeKG};
use crate::error::{CheckpointError, TapeError};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Row-major f64 matrix used for parameter tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows, self.cols, self.data.clone())
    }

    pub fn row_tensor(&self, r: usize) -> Tensor {
        Tensor::vector(self.row(r).to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// An affine layer (weights plus bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub k: usize,
    /// num_nodes x d, indexed by CKG node id (users first, then entities).
    pub node_emb: Matrix,
    /// num_relations_total x k (forward and inverse relations).
    pub rel_emb: Matrix,
    /// Per-relation k x d projection.
    pub rel_proj: Vec<Matrix>,
    /// Projection head layers (input d, output d).
    pub head: Vec<Layer>,
    /// Per-hop aggregation layers used by propagation.
    pub agg: Vec<Layer>,
    pub activation: Activation,
}

/// Identifies one parameter block for sparse gradient application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamRef {
    NodeEmb(usize),
    RelEmb(usize),
    RelProj(usize),
    HeadW(usize),
    HeadB(usize),
    AggW(usize),
    AggB(usize),
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        num_nodes: usize,
        num_relations: usize,
        d: usize,
        k: usize,
        head_depth: usize,
        hops: usize,
        activation: Activation,
        seed: u64,
    ) -> Self {
        assert!(d > 0 && k > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Box-Muller
        fn randn(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
        fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
            let mut m = Matrix::zeros(rows, cols);
            for v in m.data.iter_mut() {
                *v = randn(rng, scale);
            }
            m
        }
        fn near_identity(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
            let mut m = rand_matrix(rng, n, n, 0.01);
            for i in 0..n {
                m.data[i * n + i] += 1.0;
            }
            m
        }

        let node_emb = rand_matrix(&mut rng, num_nodes, d, 0.1);
        let rel_emb = rand_matrix(&mut rng, num_relations, k, 0.1);
        let rel_proj: Vec<Matrix> = (0..num_relations)
            .map(|_| {
                if k == d {
                    near_identity(&mut rng, d)
                } else {
                    rand_matrix(&mut rng, k, d, 1.0 / (d as f64).sqrt())
                }
            })
            .collect();
        let head: Vec<Layer> = (0..head_depth)
            .map(|_| Layer {
                weight: near_identity(&mut rng, d),
                bias: vec![0.0; d],
            })
            .collect();
        let agg: Vec<Layer> = (0..hops)
            .map(|_| Layer {
                weight: near_identity(&mut rng, d),
                bias: vec![0.0; d],
            })
            .collect();
        ModelParams {
            d,
            k,
            node_emb,
            rel_emb,
            rel_proj,
            head,
            agg,
            activation,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_emb.rows
    }

    pub fn num_relations(&self) -> usize {
        self.rel_emb.rows
    }

    /// View/update one parameter block as a flat slice.
    pub fn block(&self, r: ParamRef) -> &[f64] {
        match r {
            ParamRef::NodeEmb(i) => self.node_emb.row(i),
            ParamRef::RelEmb(i) => self.rel_emb.row(i),
            ParamRef::RelProj(i) => &self.rel_proj[i].data,
            ParamRef::HeadW(i) => &self.head[i].weight.data,
            ParamRef::HeadB(i) => &self.head[i].bias,
            ParamRef::AggW(i) => &self.agg[i].weight.data,
            ParamRef::AggB(i) => &self.agg[i].bias,
        }
    }

    pub fn block_mut(&mut self, r: ParamRef) -> &mut [f64] {
        match r {
            ParamRef::NodeEmb(i) => self.node_emb.row_mut(i),
            ParamRef::RelEmb(i) => self.rel_emb.row_mut(i),
            ParamRef::RelProj(i) => &mut self.rel_proj[i].data,
            ParamRef::HeadW(i) => &mut self.head[i].weight.data,
            ParamRef::HeadB(i) => &mut self.head[i].bias,
            ParamRef::AggW(i) => &mut self.agg[i].weight.data,
            ParamRef::AggB(i) => &mut self.agg[i].bias,
        }
    }

    fn block_tensor(&self, r: ParamRef) -> Tensor {
        match r {
            ParamRef::NodeEmb(i) => self.node_emb.row_tensor(i),
            ParamRef::RelEmb(i) => self.rel_emb.row_tensor(i),
            ParamRef::RelProj(i) => self.rel_proj[i].to_tensor(),
            ParamRef::HeadW(i) => self.head[i].weight.to_tensor(),
            ParamRef::HeadB(i) => Tensor::vector(self.head[i].bias.clone()),
            ParamRef::AggW(i) => self.agg[i].weight.to_tensor(),
            ParamRef::AggB(i) => Tensor::vector(self.agg[i].bias.clone()),
        }
    }
}

/// Frozen copy of the node embeddings maintained by exponential moving
/// average. Scores candidate negatives; never receives gradients.
#[derive(Debug, Clone)]
pub struct ComplementaryModel {
    pub node_emb: Matrix,
}

impl ComplementaryModel {
    pub fn new(params: &ModelParams) -> Self {
        ComplementaryModel {
            node_emb: params.node_emb.clone(),
        }
    }

    pub fn ema_update(&mut self, params: &ModelParams, momentum: f64) {
        for (c, p) in self.node_emb.data.iter_mut().zip(&params.node_emb.data) {
            *c = momentum * *c + (1.0 - momentum) * *p;
        }
    }
}

/// Cosine similarity; errors on a zero vector.
pub fn sim(a: &[f64], b: &[f64]) -> Result<f64, TapeError> {
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(TapeError::Domain {
            op: "sim",
            detail: "cosine of zero vector".into(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Similarity between two nodes as judged by the frozen EMA embeddings.
pub fn complementary_sim(
    comp: &ComplementaryModel,
    node_a: usize,
    node_b: usize,
) -> Result<f64, TapeError> {
    sim(comp.node_emb.row(node_a), comp.node_emb.row(node_b))
}

fn hop_seed(seed: u64, hop: usize) -> u64 {
    seed ^ (hop as u64).wrapping_mul(0xA076_1D64_78BD_642F)
}

/// Full-graph attentive propagation without a tape (used for evaluation).
///
/// Hop update for a node with sampled neighbors: attention logits are
/// (W_r prev_t)^T tanh(W_r prev_h + e_r), softmax-normalized over the
/// neighborhood; the weighted neighbor sum plus the self representation
/// passes through the hop's affine layer and the activation. Nodes
/// without neighbors keep their previous representation.
pub fn propagate(
    params: &ModelParams,
    ckg: &CollaborativeKG,
    hops: usize,
    max_fanout: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let d = params.d;
    let mut prev: Vec<Vec<f64>> = (0..params.num_nodes())
        .map(|n| params.node_emb.row(n).to_vec())
        .collect();
    for hop in 1..=hops {
        let layer = &params.agg[hop - 1];
        let sd = hop_seed(seed, hop);
        let mut next = vec![Vec::new(); prev.len()];
        for node in 0..prev.len() {
            let nbrs = neighbors(ckg, node, max_fanout, sd).expect("node in bounds");
            if nbrs.is_empty() {
                next[node] = prev[node].clone();
                continue;
            }
            let mut logits = Vec::with_capacity(nbrs.len());
            for &(r, nb) in &nbrs {
                let w = &params.rel_proj[r];
                let er = params.rel_emb.row(r);
                let mut gate = vec![0.0; params.k];
                let mut proj_t = vec![0.0; params.k];
                for row in 0..params.k {
                    let wrow = w.row(row);
                    let mut sh = 0.0;
                    let mut st = 0.0;
                    for c in 0..d {
                        sh += wrow[c] * prev[node][c];
                        st += wrow[c] * prev[nb][c];
                    }
                    gate[row] = (sh + er[row]).tanh();
                    proj_t[row] = st;
                }
                logits.push(proj_t.iter().zip(&gate).map(|(a, b)| a * b).sum::<f64>());
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut agg = prev[node].clone();
            for (w, &(_, nb)) in exps.iter().zip(&nbrs) {
                let weight = w / z;
                for c in 0..d {
                    agg[c] += weight * prev[nb][c];
                }
            }
            let mut out = vec![0.0; d];
            for row in 0..d {
                let wrow = layer.weight.row(row);
                let s: f64 = wrow.iter().zip(&agg).map(|(a, b)| a * b).sum();
                out[row] = params.activation.apply(s + layer.bias[row]);
            }
            next[node] = out;
        }
        prev = next;
    }
    prev
}

/// CF score: inner product of the final representations of a user node
/// and an item node.
pub fn score_cf(representations: &[Vec<f64>], user_node: usize, item_node: usize) -> f64 {
    representations[user_node]
        .iter()
        .zip(&representations[item_node])
        .map(|(a, b)| a * b)
        .sum()
}

/// Translation energy ||W_r e_h + e_r - W_r e_t||^2 over raw entity
/// embeddings.
pub fn transr_energy(
    params: &ModelParams,
    ckg: &CollaborativeKG,
    head: usize,
    relation: usize,
    tail: usize,
) -> f64 {
    let eh = params.node_emb.row(ckg.entity_node(head));
    let et = params.node_emb.row(ckg.entity_node(tail));
    let er = params.rel_emb.row(relation);
    let w = &params.rel_proj[relation];
    let mut total = 0.0;
    for row in 0..params.k {
        let wrow = w.row(row);
        let mut s = er[row];
        for c in 0..params.d {
            s += wrow[c] * (eh[c] - et[c]);
        }
        total += s * s;
    }
    total
}

/// Projection head applied off-tape. Depth 0 is the identity.
pub fn project_head(params: &ModelParams, e: &[f64]) -> Vec<f64> {
    let mut z = e.to_vec();
    for layer in &params.head {
        let mut out = vec![0.0; params.d];
        for row in 0..params.d {
            let wrow = layer.weight.row(row);
            let s: f64 = wrow.iter().zip(&z).map(|(a, b)| a * b).sum();
            out[row] = params.activation.apply(s + layer.bias[row]);
        }
        z = out;
    }
    z
}

/// Two dropout masks for view generation: entries are 0 with probability
/// `rate`, otherwise 1/(1-rate). A rate of 0 yields all-ones masks.
pub fn dropout_masks(d: usize, rate: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&rate));
    let make = |s: u64| -> Vec<f64> {
        if rate == 0.0 {
            return vec![1.0; d];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let keep = 1.0 / (1.0 - rate);
        (0..d)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect()
    };
    (make(seed), make(seed ^ 0x5851_F42D_4C95_7F2D))
}

/// Two augmented views of one representation: independent dropout masks
/// followed by the projection head.
pub fn two_views(
    params: &ModelParams,
    representation: &[f64],
    rate: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let (m1, m2) = dropout_masks(representation.len(), rate, seed);
    let apply = |mask: &[f64]| -> Vec<f64> {
        let masked: Vec<f64> = representation.iter().zip(mask).map(|(a, b)| a * b).collect();
        project_head(params, &masked)
    };
    (apply(&m1), apply(&m2))
}

/// A tape plus lazily-created parameter leaves, so each touched parameter
/// block appears exactly once and gradients can be routed back sparsely.
pub struct ParamTape<'a> {
    pub tape: Tape,
    params: &'a ModelParams,
    leaves: HashMap<ParamRef, NodeId>,
}

impl<'a> ParamTape<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        ParamTape {
            tape: Tape::new(),
            params,
            leaves: HashMap::new(),
        }
    }

    pub fn param(&mut self, r: ParamRef) -> NodeId {
        if let Some(&id) = self.leaves.get(&r) {
            return id;
        }
        let id = self.tape.leaf(self.params.block_tensor(r));
        self.leaves.insert(r, id);
        id
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    /// Touched parameter blocks in a deterministic order.
    pub fn touched(&self) -> Vec<(ParamRef, NodeId)> {
        let mut v: Vec<(ParamRef, NodeId)> = self.leaves.iter().map(|(k, v)| (*k, *v)).collect();
        v.sort();
        v
    }

    /// Cosine similarity on the tape, via dot / exp(0.5 log ||a||^2 + 0.5 log ||b||^2).
    pub fn sim(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let d = self.tape.dot(a, b);
        let na = self.tape.l2_norm_sq(a);
        let nb = self.tape.l2_norm_sq(b);
        let la = self.tape.log(na)?;
        let lb = self.tape.log(nb)?;
        let lsum = self.tape.add(la, lb);
        let half = self.tape.scale_const(lsum, -0.5);
        let inv_norm = self.tape.exp(half);
        Ok(self.tape.scale(d, inv_norm))
    }

    /// Projection head on the tape.
    pub fn project_head(&mut self, e: NodeId) -> NodeId {
        let depth = self.params.head.len();
        let mut z = e;
        for i in 0..depth {
            let w = self.param(ParamRef::HeadW(i));
            let b = self.param(ParamRef::HeadB(i));
            let affine = self.tape.matvec(w, z);
            let pre = self.tape.add(affine, b);
            z = match self.params.activation {
                Activation::Tanh => self.tape.tanh(pre),
                Activation::Relu => self.tape.relu(pre),
            };
        }
        z
    }

    /// Dropout views on the tape; masks are constant leaves.
    pub fn two_views(&mut self, representation: NodeId, rate: f64, seed: u64) -> (NodeId, NodeId) {
        let d = self.tape.value(representation).numel();
        let (m1, m2) = dropout_masks(d, rate, seed);
        let m1 = self.tape.leaf(Tensor::vector(m1));
        let m2 = self.tape.leaf(Tensor::vector(m2));
        let v1 = self.tape.dropout_apply(representation, m1);
        let v2 = self.tape.dropout_apply(representation, m2);
        let z1 = self.project_head(v1);
        let z2 = self.project_head(v2);
        (z1, z2)
    }

    /// Translation energy on the tape.
    pub fn transr_energy(
        &mut self,
        ckg: &CollaborativeKG,
        head: usize,
        relation: usize,
        tail: usize,
    ) -> NodeId {
        let eh = self.param(ParamRef::NodeEmb(ckg.entity_node(head)));
        let et = self.param(ParamRef::NodeEmb(ckg.entity_node(tail)));
        let er = self.param(ParamRef::RelEmb(relation));
        let w = self.param(ParamRef::RelProj(relation));
        let ph = self.tape.matvec(w, eh);
        let pt = self.tape.matvec(w, et);
        let trans = self.tape.add(ph, er);
        let diff = self.tape.sub(trans, pt);
        self.tape.l2_norm_sq(diff)
    }
}

/// Memoized tape-based propagation for the nodes a batch needs.
pub struct TapePropagation {
    hops: usize,
    max_fanout: usize,
    seed: u64,
    memo: HashMap<(usize, usize), NodeId>,
}

impl TapePropagation {
    pub fn new(hops: usize, max_fanout: usize, seed: u64) -> Self {
        TapePropagation {
            hops,
            max_fanout,
            seed,
            memo: HashMap::new(),
        }
    }

    /// Final representation of a node (at `hops` levels).
    pub fn repr(&mut self, pt: &mut ParamTape, ckg: &CollaborativeKG, node: usize) -> NodeId {
        self.repr_at(pt, ckg, node, self.hops)
    }

    fn repr_at(
        &mut self,
        pt: &mut ParamTape,
        ckg: &CollaborativeKG,
        node: usize,
        level: usize,
    ) -> NodeId {
        if let Some(&id) = self.memo.get(&(node, level)) {
            return id;
        }
        let id = if level == 0 {
            pt.param(ParamRef::NodeEmb(node))
        } else {
            let nbrs = neighbors(ckg, node, self.max_fanout, hop_seed(self.seed, level))
                .expect("node in bounds");
            if nbrs.is_empty() {
                self.repr_at(pt, ckg, node, level - 1)
            } else {
                let self_repr = self.repr_at(pt, ckg, node, level - 1);
                let mut logits = Vec::with_capacity(nbrs.len());
                let mut nb_reprs = Vec::with_capacity(nbrs.len());
                for &(r, nb) in &nbrs {
                    let nb_repr = self.repr_at(pt, ckg, nb, level - 1);
                    let w = pt.param(ParamRef::RelProj(r));
                    let er = pt.param(ParamRef::RelEmb(r));
                    let ph = pt.tape.matvec(w, self_repr);
                    let ptail = pt.tape.matvec(w, nb_repr);
                    let shifted = pt.tape.add(ph, er);
                    let gate = pt.tape.tanh(shifted);
                    logits.push(pt.tape.dot(ptail, gate));
                    nb_reprs.push(nb_repr);
                }
                let lse = pt.tape.log_sum_exp(&logits);
                let mut agg = self_repr;
                for (logit, nb_repr) in logits.into_iter().zip(nb_reprs) {
                    let centered = pt.tape.sub(logit, lse);
                    let weight = pt.tape.exp(centered);
                    let msg = pt.tape.scale(nb_repr, weight);
                    agg = pt.tape.add(agg, msg);
                }
                let wagg = pt.param(ParamRef::AggW(level - 1));
                let bagg = pt.param(ParamRef::AggB(level - 1));
                let affine = pt.tape.matvec(wagg, agg);
                let pre = pt.tape.add(affine, bagg);
                match pt.params().activation {
                    Activation::Tanh => pt.tape.tanh(pre),
                    Activation::Relu => pt.tape.relu(pre),
                }
            }
        };
        self.memo.insert((node, level), id);
        id
    }
}

const CKPT_MAGIC: &str = "KGREC-CKPT";
const CKPT_VERSION: u32 = 1;

/// Write a checkpoint: a text header followed by little-endian f64 arrays
/// in declared order. Byte-exact round-trip.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "{CKPT_MAGIC} v{CKPT_VERSION} num_nodes={} num_relations={} d={} k={} head_depth={} hops={} activation={}",
        params.num_nodes(),
        params.num_relations(),
        params.d,
        params.k,
        params.head.len(),
        params.agg.len(),
        params.activation.name(),
    )?;
    let write_f64s = |data: &[f64], out: &mut dyn Write| -> std::io::Result<()> {
        for v in data {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    write_f64s(&params.node_emb.data, &mut out)?;
    write_f64s(&params.rel_emb.data, &mut out)?;
    for w in &params.rel_proj {
        write_f64s(&w.data, &mut out)?;
    }
    for layer in params.head.iter().chain(&params.agg) {
        write_f64s(&layer.weight.data, &mut out)?;
        write_f64s(&layer.bias, &mut out)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        file.read_exact(&mut byte)
            .map_err(|_| CheckpointError::BadHeader("missing newline".into()))?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let header = String::from_utf8(header)
        .map_err(|_| CheckpointError::BadHeader("non-utf8 header".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(CKPT_MAGIC) {
        return Err(CheckpointError::BadHeader("bad magic".into()));
    }
    let version = fields
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| CheckpointError::BadHeader("bad version field".into()))?;
    if version != CKPT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let mut kv = HashMap::new();
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| CheckpointError::BadHeader(format!("bad field {field}")))?;
        kv.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<usize, CheckpointError> {
        kv.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CheckpointError::BadHeader(format!("missing {key}")))
    };
    let num_nodes = get("num_nodes")?;
    let num_relations = get("num_relations")?;
    let d = get("d")?;
    let k = get("k")?;
    let head_depth = get("head_depth")?;
    let hops = get("hops")?;
    let activation = kv
        .get("activation")
        .and_then(|s| Activation::parse(s))
        .ok_or_else(|| CheckpointError::BadHeader("missing activation".into()))?;

    let read_f64s = |n: usize, file: &mut dyn Read| -> Result<Vec<f64>, CheckpointError> {
        let mut buf = vec![0u8; n * 8];
        file.read_exact(&mut buf)
            .map_err(|_| CheckpointError::Truncated)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let node_emb = Matrix {
        rows: num_nodes,
        cols: d,
        data: read_f64s(num_nodes * d, &mut file)?,
    };
    let rel_emb = Matrix {
        rows: num_relations,
        cols: k,
        data: read_f64s(num_relations * k, &mut file)?,
    };
    let mut rel_proj = Vec::with_capacity(num_relations);
    for _ in 0..num_relations {
        rel_proj.push(Matrix {
            rows: k,
            cols: d,
            data: read_f64s(k * d, &mut file)?,
        });
    }
    let read_layer = |file: &mut dyn Read| -> Result<Layer, CheckpointError> {
        Ok(Layer {
            weight: Matrix {
                rows: d,
                cols: d,
                data: read_f64s(d * d, file)?,
            },
            bias: read_f64s(d, file)?,
        })
    };
    let head = (0..head_depth)
        .map(|_| read_layer(&mut file))
        .collect::<Result<Vec<_>, _>>()?;
    let agg = (0..hops)
        .map(|_| read_layer(&mut file))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelParams {
        d,
        k,
        node_emb,
        rel_emb,
        rel_proj,
        head,
        agg,
        activation,
    })
}
