//! Collaborative knowledge graph: train interactions and KG triples merged
//! into one node space (users first, then entities), with an extra
//! "Interact" relation and materialized inverse edges so propagation can
//! aggregate both directions. Also hosts the node-drop perturbation used
//! by the anti-noise experiment.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{InteractionDataset, KnowledgeGraph};
use crate::error::GraphError;

#[derive(Debug, Clone)]
pub struct CollaborativeKG {
    pub num_users: usize,
    pub num_entities: usize,
    /// KG relations; the Interact relation has id `num_kg_relations`,
    /// the inverse of relation r has id `num_kg_relations + 1 + r`.
    pub num_kg_relations: usize,
    /// Per-node (relation, neighbor) edges, forward and inverse.
    adjacency: Vec<Vec<(usize, usize)>>,
    pub forward_edges: usize,
    /// item index -> entity index, copied from the aligned KG.
    pub item_entity: Vec<usize>,
    /// Entities removed by `drop_nodes` (empty for an unperturbed graph).
    pub dropped_entities: HashSet<usize>,
}

impl CollaborativeKG {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_entities
    }

    /// Forward relations: KG relations plus Interact.
    pub fn num_forward_relations(&self) -> usize {
        self.num_kg_relations + 1
    }

    /// Forward plus inverse relations.
    pub fn num_total_relations(&self) -> usize {
        2 * (self.num_kg_relations + 1)
    }

    pub fn interact_relation(&self) -> usize {
        self.num_kg_relations
    }

    pub fn inverse_relation(&self, r: usize) -> usize {
        self.num_forward_relations() + r
    }

    pub fn user_node(&self, user: usize) -> usize {
        debug_assert!(user < self.num_users);
        user
    }

    pub fn entity_node(&self, entity: usize) -> usize {
        debug_assert!(entity < self.num_entities);
        self.num_users + entity
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.entity_node(self.item_entity[item])
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn all_edges_of(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }
}

/// Merge train interactions and KG triples into one graph.
/// Only the train split contributes Interact edges.
pub fn build_ckg(
    dataset: &InteractionDataset,
    kg: &KnowledgeGraph,
) -> Result<CollaborativeKG, GraphError> {
    let num_nodes = dataset.num_users + kg.num_entities;
    let mut ckg = CollaborativeKG {
        num_users: dataset.num_users,
        num_entities: kg.num_entities,
        num_kg_relations: kg.num_relations,
        adjacency: vec![Vec::new(); num_nodes],
        forward_edges: 0,
        item_entity: kg.item_to_entity.clone(),
        dropped_entities: HashSet::new(),
    };
    let interact = ckg.interact_relation();
    let inv_interact = ckg.inverse_relation(interact);
    for &(u, i) in &dataset.train {
        let un = ckg.user_node(u);
        let inode = ckg.item_node(i);
        ckg.adjacency[un].push((interact, inode));
        ckg.adjacency[inode].push((inv_interact, un));
        ckg.forward_edges += 1;
    }
    for &(h, r, t) in &kg.triples {
        if h >= kg.num_entities || t >= kg.num_entities {
            return Err(GraphError::NodeOutOfBounds {
                node: h.max(t),
                num_nodes,
            });
        }
        let hn = ckg.entity_node(h);
        let tn = ckg.entity_node(t);
        let inv_r = ckg.inverse_relation(r);
        ckg.adjacency[hn].push((r, tn));
        ckg.adjacency[tn].push((inv_r, hn));
        ckg.forward_edges += 1;
    }
    Ok(ckg)
}

/// Remove a uniform random subset of entity nodes (never users) of size
/// round(rate * num_entities), together with all incident edges. Node
/// indexing is preserved; dropped entities simply become isolated.
pub fn drop_nodes(
    ckg: &CollaborativeKG,
    rate: f64,
    seed: u64,
) -> Result<CollaborativeKG, GraphError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(GraphError::BadDropRate(rate));
    }
    let n_drop = (rate * ckg.num_entities as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropped: HashSet<usize> = sample(&mut rng, ckg.num_entities, n_drop)
        .into_iter()
        .collect();

    let mut out = ckg.clone();
    out.dropped_entities = dropped.iter().map(|&e| e).collect();
    let is_dropped =
        |node: usize| node >= ckg.num_users && dropped.contains(&(node - ckg.num_users));
    let mut removed_forward = 0usize;
    for node in 0..out.num_nodes() {
        if is_dropped(node) {
            removed_forward += out.adjacency[node]
                .iter()
                .filter(|(r, nb)| *r < ckg.num_forward_relations() && !is_dropped(*nb))
                .count();
            out.adjacency[node].clear();
            continue;
        }
        let before: Vec<(usize, usize)> = std::mem::take(&mut out.adjacency[node]);
        out.adjacency[node] = before
            .into_iter()
            .filter(|(r, nb)| {
                let keep = !is_dropped(*nb);
                if !keep && *r < ckg.num_forward_relations() {
                    removed_forward += 1;
                }
                keep
            })
            .collect();
    }
    out.forward_edges -= removed_forward;
    Ok(out)
}

/// Deterministic neighbor access: all edges when degree fits in
/// `max_fanout`, otherwise a uniform sample without replacement keyed by
/// (node, seed).
pub fn neighbors(
    ckg: &CollaborativeKG,
    node: usize,
    max_fanout: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>, GraphError> {
    if node >= ckg.num_nodes() {
        return Err(GraphError::NodeOutOfBounds {
            node,
            num_nodes: ckg.num_nodes(),
        });
    }
    let edges = ckg.all_edges_of(node);
    if edges.len() <= max_fanout {
        return Ok(edges.to_vec());
    }
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (node as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let mut picked: Vec<usize> = sample(&mut rng, edges.len(), max_fanout).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| edges[i]).collect())
}

/// Histogram of incident-edge counts (forward edges counted once at each
/// endpoint). Sums to num_nodes.
pub fn degree_histogram(ckg: &CollaborativeKG) -> std::collections::BTreeMap<usize, usize> {
    let mut hist = std::collections::BTreeMap::new();
    for node in 0..ckg.num_nodes() {
        *hist.entry(ckg.degree(node)).or_insert(0) += 1;
    }
    hist
}

/// Debug dump: forward edges as "head relation tail" lines.
pub fn dump(ckg: &CollaborativeKG) -> String {
    let mut out = String::new();
    for node in 0..ckg.num_nodes() {
        for &(r, nb) in ckg.all_edges_of(node) {
            if r < ckg.num_forward_relations() {
                writeln!(out, "{node} {r} {nb}").unwrap();
            }
        }
    }
    out
}
