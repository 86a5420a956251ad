//! Alternating optimization: recommendation batches (ranking plus
//! contrastive terms) and knowledge-graph batches, with a sparse Adam
//! optimizer, gradient clipping, an EMA complementary model for instance
//! weighting, and early stopping on validation Recall@K.

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ckg::{build_ckg, CollaborativeKG};
use crate::data::{InteractionDataset, KnowledgeGraph};
use crate::error::TrainError;
use crate::eval::{evaluate, EvalConfig, Split};
use crate::losses::{
    bpr_loss, inbatch_loss, instance_weight, kg_loss, noised_loss, total_loss,
    ContrastiveBatch, Level, LossBundle, LossParts,
};
use crate::model::{
    sim, Activation, ComplementaryModel, ModelParams, ParamRef, ParamTape, TapePropagation,
};
use crate::sampler::{negatives_for_rows, noise_negatives};
use crate::tape::NodeId;

/// Which contrastive levels participate in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Ranking loss only.
    Base,
    UserItemOnly,
    UserUserOnly,
    TwoLevel,
}

impl Variant {
    pub fn ui(&self) -> bool {
        matches!(self, Variant::UserItemOnly | Variant::TwoLevel)
    }

    pub fn uu(&self) -> bool {
        matches!(self, Variant::UserUserOnly | Variant::TwoLevel)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::UserItemOnly => "ui_only",
            Variant::UserUserOnly => "uu_only",
            Variant::TwoLevel => "two_level",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base" => Some(Variant::Base),
            "ui_only" => Some(Variant::UserItemOnly),
            "uu_only" => Some(Variant::UserUserOnly),
            "two_level" => Some(Variant::TwoLevel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Embedding and representation width.
    pub embed_dim: usize,
    /// Relation-projection target width.
    pub relation_dim: usize,
    pub hops: usize,
    pub max_fanout: usize,
    pub tau: f64,
    /// Similarity threshold: in-batch negatives at or above it get weight 0.
    pub phi: f64,
    pub lambda: f64,
    /// Gaussian negatives per anchor.
    pub noise_count: usize,
    pub noise_scale: f64,
    pub dropout: f64,
    pub ema_momentum: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub top_k: usize,
    pub head_depth: usize,
    pub activation: Activation,
    pub variant: Variant,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 4096,
            embed_dim: 64,
            relation_dim: 64,
            hops: 2,
            max_fanout: 8,
            tau: 0.1,
            phi: 0.8,
            lambda: 1e-5,
            noise_count: 16,
            noise_scale: 1.0,
            dropout: 0.1,
            ema_momentum: 0.995,
            patience: 50,
            max_epochs: 200,
            top_k: 10,
            head_depth: 2,
            activation: Activation::Tanh,
            variant: Variant::TwoLevel,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::BadConfig(msg));
        if !(self.lr > 0.0) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.embed_dim == 0 || self.relation_dim == 0 {
            return bad("embed_dim and relation_dim must be >= 1".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau {} must be positive", self.tau));
        }
        if self.lambda < 0.0 {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return bad(format!("ema_momentum {} outside [0, 1]", self.ema_momentum));
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.top_k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.noise_count > 0 && !(self.noise_scale > 0.0) {
            return bad("noise_scale must be positive when noise_count > 0".into());
        }
        Ok(())
    }
}

/// One line of the training curve.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBundle,
    pub val_recall: f64,
    pub val_ndcg: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    pub stop_reason: String,
}

impl TrainHistory {
    pub fn csv_header() -> &'static str {
        "epoch,l_cf,l_ui_hat,l_uu_hat,l_ui_noise,l_uu_noise,l_reg,l,l_kg,l_final,val_recall,val_ndcg"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for r in &self.epochs {
            let b = &r.losses;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                b.l_cf,
                b.l_ui_hat,
                b.l_uu_hat,
                b.l_ui_noise,
                b.l_uu_noise,
                b.l_reg,
                b.l,
                b.l_kg,
                b.l_final,
                r.val_recall,
                r.val_ndcg
            ));
        }
        out
    }
}

/// Best-validation parameters plus the full curve.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Sparse Adam: first/second moments and a step counter per parameter
/// block, touched lazily.
#[derive(Debug, Default)]
pub struct AdamState {
    moments: HashMap<ParamRef, (Vec<f64>, Vec<f64>, u64)>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const CLIP_NORM: f64 = 5.0;

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }
}

/// One optimizer step over the given (block, gradient) pairs. Blocks
/// absent from `grads` are untouched; their moments do not decay.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[(ParamRef, Vec<f64>)],
    state: &mut AdamState,
    lr: f64,
) {
    for (r, g) in grads {
        let block = params.block_mut(*r);
        let entry = state
            .moments
            .entry(*r)
            .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()], 0));
        entry.2 += 1;
        let t = entry.2 as f64;
        let c1 = 1.0 - ADAM_BETA1.powf(t);
        let c2 = 1.0 - ADAM_BETA2.powf(t);
        for i in 0..g.len() {
            entry.0[i] = ADAM_BETA1 * entry.0[i] + (1.0 - ADAM_BETA1) * g[i];
            entry.1[i] = ADAM_BETA2 * entry.1[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = entry.0[i] / c1;
            let v_hat = entry.1[i] / c2;
            block[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Scale all gradients by clip/norm when the global L2 norm exceeds clip.
fn clip_gradients(grads: &mut [(ParamRef, Vec<f64>)], clip: f64) {
    let norm_sq: f64 = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|x| x * x)
        .sum();
    let norm = norm_sq.sqrt();
    if norm > clip {
        let s = clip / norm;
        for (_, g) in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// Stop when the best validation epoch lies more than `patience` epochs
/// in the past. Ties count as no improvement.
pub fn early_stop(best_epoch: usize, current_epoch: usize, patience: usize) -> bool {
    current_epoch - best_epoch > patience
}

fn mix(seed: u64, a: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn shuffled<T: Copy>(items: &[T], seed: u64) -> Vec<T> {
    use rand::Rng;
    let mut v = items.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..v.len()).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    v
}

/// Forward KG triples (entity, relation, entity) still present in the
/// graph; node drops already removed theirs.
fn surviving_triples(ckg: &CollaborativeKG) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for h in 0..ckg.num_entities {
        for &(r, nb) in ckg.all_edges_of(ckg.entity_node(h)) {
            if r < ckg.num_kg_relations && nb >= ckg.num_users {
                out.push((h, r, nb - ckg.num_users));
            }
        }
    }
    out
}

fn check_finite(value: f64, term: &'static str, epoch: usize, batch: usize) -> Result<(), TrainError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Diverged { term, epoch, batch })
    }
}

struct StepStats {
    cf: f64,
    ui_hat: f64,
    uu_hat: f64,
    ui_noise: f64,
    uu_noise: f64,
    reg: f64,
    l: f64,
}

/// Unit-normalize a vector on the tape: z * exp(-0.5 log ||z||^2).
fn normalize_on_tape(pt: &mut ParamTape, z: NodeId) -> Result<NodeId, TrainError> {
    let n = pt.tape.l2_norm_sq(z);
    let ln = pt.tape.log(n)?;
    let half = pt.tape.scale_const(ln, -0.5);
    let inv = pt.tape.exp(half);
    Ok(pt.tape.scale(z, inv))
}

/// Unit-normalized complementary embedding, or None for a zero vector
/// (treated downstream as similarity 0, weight 1).
fn comp_unit(comp: &ComplementaryModel, node: usize) -> Option<Vec<f64>> {
    let row = comp.node_emb.row(node);
    let norm: f64 = row.iter().map(|x| x * x).sum::<f64>();
    if norm == 0.0 {
        return None;
    }
    let inv = 1.0 / norm.sqrt();
    Some(row.iter().map(|x| x * inv).collect())
}

fn weight_between(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>, phi: f64) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) => {
            let s: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            instance_weight(s, phi)
        }
        _ => 1.0,
    }
}

#[allow(clippy::too_many_arguments)]
fn phase_a_step(
    params: &mut ModelParams,
    comp: &mut ComplementaryModel,
    adam: &mut AdamState,
    ckg: &CollaborativeKG,
    cfg: &TrainConfig,
    rows: &[(usize, usize, usize)],
    epoch: usize,
    batch_idx: usize,
    batch_seed: u64,
) -> Result<StepStats, TrainError> {
    let mut pt = ParamTape::new(&*params);
    let mut prop = TapePropagation::new(cfg.hops, cfg.max_fanout, batch_seed);

    let mut bpr_pairs = Vec::with_capacity(rows.len());
    let mut user_repr: HashMap<usize, NodeId> = HashMap::new();
    let mut item_repr: HashMap<usize, NodeId> = HashMap::new();
    for &(u, i, j) in rows {
        let ru = *user_repr
            .entry(u)
            .or_insert_with(|| prop.repr(&mut pt, ckg, ckg.user_node(u)));
        let ri = *item_repr
            .entry(i)
            .or_insert_with(|| prop.repr(&mut pt, ckg, ckg.item_node(i)));
        let rj = *item_repr
            .entry(j)
            .or_insert_with(|| prop.repr(&mut pt, ckg, ckg.item_node(j)));
        let pos = pt.tape.dot(ru, ri);
        let neg = pt.tape.dot(ru, rj);
        bpr_pairs.push((pos, neg));
    }
    let cf_sum = bpr_loss(&mut pt.tape, &bpr_pairs)?;
    let cf = pt.tape.scale_const(cf_sum, 1.0 / rows.len() as f64);

    let mut parts = LossParts {
        cf,
        ui_hat: None,
        uu_hat: None,
        ui_noise: None,
        uu_noise: None,
    };

    if cfg.variant.ui() || cfg.variant.uu() {
        // Unique users and positive items, in first-appearance order.
        let mut users: Vec<usize> = Vec::new();
        let mut pos_items: Vec<usize> = Vec::new();
        let mut user_pos: HashMap<usize, usize> = HashMap::new();
        for &(u, i, _) in rows {
            if !user_pos.contains_key(&u) {
                user_pos.insert(u, i);
                users.push(u);
            }
            if !pos_items.contains(&i) {
                pos_items.push(i);
            }
        }

        // Normalized projections of propagated representations.
        let mut user_z: HashMap<usize, NodeId> = HashMap::new();
        for &u in &users {
            let h = pt.project_head(user_repr[&u]);
            user_z.insert(u, normalize_on_tape(&mut pt, h)?);
        }
        let mut item_z: HashMap<usize, NodeId> = HashMap::new();
        for &i in &pos_items {
            let h = pt.project_head(item_repr[&i]);
            item_z.insert(i, normalize_on_tape(&mut pt, h)?);
        }

        // Frozen complementary directions for instance weighting.
        let user_cu: HashMap<usize, Option<Vec<f64>>> = users
            .iter()
            .map(|&u| (u, comp_unit(comp, ckg.user_node(u))))
            .collect();
        let item_cu: HashMap<usize, Option<Vec<f64>>> = pos_items
            .iter()
            .map(|&i| (i, comp_unit(comp, ckg.item_node(i))))
            .collect();

        if cfg.variant.ui() {
            let mut batch = ContrastiveBatch {
                assume_normalized: true,
                ..ContrastiveBatch::default()
            };
            for (idx, &u) in users.iter().enumerate() {
                let own = user_pos[&u];
                batch.anchors.push(user_z[&u]);
                batch.positives.push(item_z[&own]);
                let negs: Vec<(NodeId, f64)> = pos_items
                    .iter()
                    .filter(|&&i| i != own)
                    .map(|&i| (item_z[&i], weight_between(&user_cu[&u], &item_cu[&i], cfg.phi)))
                    .collect();
                batch.inbatch_negatives.push(negs);
                let noise = noise_negatives(
                    cfg.noise_count,
                    cfg.embed_dim,
                    cfg.noise_scale,
                    mix(batch_seed, 0x1000 + idx as u64),
                );
                batch.noised_negatives.push(
                    noise
                        .into_iter()
                        .map(|v| pt.tape.leaf(crate::tensor::Tensor::vector(v)))
                        .collect(),
                );
            }
            let hat = inbatch_loss(&mut pt.tape, &batch, Level::UserItem, cfg.tau)?;
            parts.ui_hat = Some(hat);
            if cfg.noise_count > 0 {
                parts.ui_noise = Some(noised_loss(&mut pt.tape, &batch, Level::UserItem, cfg.tau)?);
            }
        }

        if cfg.variant.uu() {
            let mut batch = ContrastiveBatch {
                assume_normalized: true,
                ..ContrastiveBatch::default()
            };
            for (idx, &u) in users.iter().enumerate() {
                let (v1, v2) =
                    pt.two_views(user_repr[&u], cfg.dropout, mix(batch_seed, 0x2000 + idx as u64));
                let z1 = normalize_on_tape(&mut pt, v1)?;
                let z2 = normalize_on_tape(&mut pt, v2)?;
                batch.anchors.push(z1);
                batch.positives.push(z2);
                let negs: Vec<(NodeId, f64)> = users
                    .iter()
                    .filter(|&&o| o != u)
                    .map(|&o| (user_z[&o], weight_between(&user_cu[&u], &user_cu[&o], cfg.phi)))
                    .collect();
                batch.inbatch_negatives.push(negs);
                let noise = noise_negatives(
                    cfg.noise_count,
                    cfg.embed_dim,
                    cfg.noise_scale,
                    mix(batch_seed, 0x3000 + idx as u64),
                );
                batch.noised_negatives.push(
                    noise
                        .into_iter()
                        .map(|v| pt.tape.leaf(crate::tensor::Tensor::vector(v)))
                        .collect(),
                );
            }
            let hat = inbatch_loss(&mut pt.tape, &batch, Level::UserUser, cfg.tau)?;
            parts.uu_hat = Some(hat);
            if cfg.noise_count > 0 {
                parts.uu_noise = Some(noised_loss(&mut pt.tape, &batch, Level::UserUser, cfg.tau)?);
            }
        }
    }

    let touched = pt.touched();
    let theta: Vec<NodeId> = touched.iter().map(|(_, id)| *id).collect();
    let (l_node, reg_node) = total_loss(&mut pt.tape, &parts, cfg.lambda, &theta)?;

    let read = |id: NodeId| pt.tape.value(id).item();
    let stats = StepStats {
        cf: read(parts.cf),
        ui_hat: parts.ui_hat.map(read).unwrap_or(0.0),
        uu_hat: parts.uu_hat.map(read).unwrap_or(0.0),
        ui_noise: parts.ui_noise.map(read).unwrap_or(0.0),
        uu_noise: parts.uu_noise.map(read).unwrap_or(0.0),
        reg: read(reg_node),
        l: read(l_node),
    };
    check_finite(stats.l, "combined", epoch, batch_idx)?;

    let gm = pt.tape.backward(l_node)?;
    let mut grads: Vec<(ParamRef, Vec<f64>)> = Vec::with_capacity(touched.len());
    for (r, leaf) in &touched {
        let g = match gm.get(*leaf) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; params.block(*r).len()],
        };
        if g.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::Diverged {
                term: "gradient",
                epoch,
                batch: batch_idx,
            });
        }
        grads.push((*r, g));
    }
    drop(pt);

    clip_gradients(&mut grads, CLIP_NORM);
    adam_step(params, &grads, adam, cfg.lr);
    comp.ema_update(params, cfg.ema_momentum);
    Ok(stats)
}

fn phase_b_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    ckg: &CollaborativeKG,
    cfg: &TrainConfig,
    quads: &[(usize, usize, usize, usize)],
    epoch: usize,
    batch_idx: usize,
) -> Result<f64, TrainError> {
    let mut pt = ParamTape::new(&*params);
    let pairs: Vec<(NodeId, NodeId)> = quads
        .iter()
        .map(|&(h, r, t, t2)| {
            let valid = pt.transr_energy(ckg, h, r, t);
            let corrupted = pt.transr_energy(ckg, h, r, t2);
            (valid, corrupted)
        })
        .collect();
    let sum = kg_loss(&mut pt.tape, &pairs)?;
    let mean = pt.tape.scale_const(sum, 1.0 / quads.len() as f64);
    let value = pt.tape.value(mean).item();
    check_finite(value, "kg", epoch, batch_idx)?;

    let touched = pt.touched();
    let gm = pt.tape.backward(mean)?;
    let mut grads: Vec<(ParamRef, Vec<f64>)> = Vec::with_capacity(touched.len());
    for (r, leaf) in &touched {
        let g = match gm.get(*leaf) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; params.block(*r).len()],
        };
        if g.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::Diverged {
                term: "kg_gradient",
                epoch,
                batch: batch_idx,
            });
        }
        grads.push((*r, g));
    }
    drop(pt);

    clip_gradients(&mut grads, CLIP_NORM);
    adam_step(params, &grads, adam, cfg.lr);
    Ok(value)
}

/// Corrupt the tail of each triple with a uniformly chosen surviving
/// entity such that the corrupted triple is absent from the graph.
fn corrupt_tails(
    triples: &[(usize, usize, usize)],
    triple_set: &HashSet<(usize, usize, usize)>,
    alive: &[usize],
    seed: u64,
) -> Result<Vec<(usize, usize, usize, usize)>, TrainError> {
    use rand::Rng;
    if alive.len() < 2 {
        return Err(TrainError::Sampler(
            "need at least two entities to corrupt triples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples
        .iter()
        .map(|&(h, r, t)| {
            for _ in 0..10_000 {
                let cand = alive[rng.gen_range(0..alive.len())];
                if cand != t && !triple_set.contains(&(h, r, cand)) {
                    return Ok((h, r, t, cand));
                }
            }
            Err(TrainError::Sampler(format!(
                "could not corrupt triple ({h}, {r}, {t})"
            )))
        })
        .collect()
}

/// Train on a prebuilt graph. Returns the parameters of the best
/// validation epoch together with the loss/metric history.
pub fn train_on_ckg(
    cfg: &TrainConfig,
    dataset: &InteractionDataset,
    ckg: &CollaborativeKG,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(TrainError::BadConfig("empty train split".into()));
    }

    let mut params = ModelParams::init(
        ckg.num_nodes(),
        ckg.num_total_relations(),
        cfg.embed_dim,
        cfg.relation_dim,
        cfg.head_depth,
        cfg.hops,
        cfg.activation,
        cfg.seed,
    );
    let mut comp = ComplementaryModel::new(&params);
    let mut adam = AdamState::new();

    let triples = surviving_triples(ckg);
    let triple_set: HashSet<(usize, usize, usize)> = triples.iter().copied().collect();
    let alive: Vec<usize> =
        (0..ckg.num_entities).filter(|e| !ckg.dropped_entities.contains(e)).collect();

    let eval_cfg = EvalConfig {
        hops: cfg.hops,
        max_fanout: cfg.max_fanout,
        seed: cfg.seed,
        k: cfg.top_k,
    };

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_recall: f64::NEG_INFINITY,
        stop_reason: String::new(),
    };
    let mut best_params = params.clone();

    for epoch in 0..cfg.max_epochs {
        let epoch_seed = mix(cfg.seed, 0xE0 + epoch as u64);

        // Recommendation phase: each train interaction exactly once.
        let order = shuffled(&dataset.train, mix(epoch_seed, 1));
        let mut a_stats: Vec<StepStats> = Vec::new();
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_seed = mix(epoch_seed, 0x10_0000 + batch_idx as u64);
            let rows = negatives_for_rows(dataset, chunk, mix(batch_seed, 2))?;
            a_stats.push(phase_a_step(
                &mut params,
                &mut comp,
                &mut adam,
                ckg,
                cfg,
                &rows,
                epoch,
                batch_idx,
                batch_seed,
            )?);
        }

        // Knowledge-graph phase.
        let mut kg_values: Vec<f64> = Vec::new();
        if !triples.is_empty() && alive.len() >= 2 {
            let kg_order = shuffled(&triples, mix(epoch_seed, 3));
            for (batch_idx, chunk) in kg_order.chunks(cfg.batch_size).enumerate() {
                let quads =
                    corrupt_tails(chunk, &triple_set, &alive, mix(epoch_seed, 0x20_0000 + batch_idx as u64))?;
                kg_values.push(phase_b_step(
                    &mut params, &mut adam, ckg, cfg, &quads, epoch, batch_idx,
                )?);
            }
        }

        let an = a_stats.len() as f64;
        let mean = |f: fn(&StepStats) -> f64| a_stats.iter().map(f).sum::<f64>() / an;
        let l = mean(|s| s.l);
        let l_kg = if kg_values.is_empty() {
            0.0
        } else {
            kg_values.iter().sum::<f64>() / kg_values.len() as f64
        };
        let losses = LossBundle {
            l_cf: mean(|s| s.cf),
            l_ui_hat: mean(|s| s.ui_hat),
            l_uu_hat: mean(|s| s.uu_hat),
            l_ui_noise: mean(|s| s.ui_noise),
            l_uu_noise: mean(|s| s.uu_noise),
            l_reg: mean(|s| s.reg),
            l,
            l_kg,
            l_final: l + l_kg,
        };

        let (val_recall, val_ndcg) = match evaluate(
            &params,
            ckg,
            dataset,
            Split::Valid,
            &eval_cfg,
            cfg.variant.label(),
            None,
        ) {
            Ok(report) => (report.recall, report.ndcg),
            Err(TrainError::NoEvaluableUsers) => (0.0, 0.0),
            Err(e) => return Err(e),
        };

        history.epochs.push(EpochRecord {
            epoch,
            losses,
            val_recall,
            val_ndcg,
        });
        if val_recall > history.best_val_recall {
            history.best_val_recall = val_recall;
            history.best_epoch = epoch;
            best_params = params.clone();
        }
        if early_stop(history.best_epoch, epoch, cfg.patience) {
            history.stop_reason = format!("early-stop at epoch {epoch}");
            break;
        }
    }
    if history.stop_reason.is_empty() {
        history.stop_reason = "max-epochs".into();
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
    })
}

/// Build the collaborative graph from the dataset and KG, then train.
pub fn train(
    cfg: &TrainConfig,
    dataset: &InteractionDataset,
    kg: &KnowledgeGraph,
) -> Result<TrainOutcome, TrainError> {
    let ckg = build_ckg(dataset, kg)?;
    train_on_ckg(cfg, dataset, &ckg)
}

/// Agreement between the live and complementary embeddings of a node
/// pair; exposed for diagnostics.
pub fn live_sim(params: &ModelParams, a: usize, b: usize) -> Result<f64, TrainError> {
    Ok(sim(params.node_emb.row(a), params.node_emb.row(b))?)
}
