//! Interaction-log and knowledge-graph ingestion.
//!
//! Loads delimited text files, applies iterative k-core filtering, builds
//! contiguous internal ID spaces and splits interactions per user into
//! train/validation/test. Ratings are binarized: any interaction counts as
//! an implicit-feedback positive.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::DataError;

/// User-item interactions with contiguous indices and disjoint splits.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(usize, usize)>,
    pub valid: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub train_by_user: Vec<Vec<usize>>,
    pub valid_by_user: Vec<Vec<usize>>,
    pub test_by_user: Vec<Vec<usize>>,
    pub train_set: HashSet<(usize, usize)>,
    pub user_map: HashMap<String, usize>,
    pub item_map: HashMap<String, usize>,
}

/// Knowledge-graph triples with contiguous entity/relation indices.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    pub num_entities: usize,
    pub num_relations: usize,
    pub triples: Vec<(usize, usize, usize)>,
    pub triple_set: HashSet<(usize, usize, usize)>,
    /// item index -> entity index; total after `align`.
    pub item_to_entity: Vec<usize>,
    pub entity_map: HashMap<String, usize>,
    pub relation_map: HashMap<String, usize>,
    pub duplicates_dropped: usize,
    pub dangling_alignments: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

impl DatasetStats {
    pub fn from_parts(dataset: &InteractionDataset, kg: &KnowledgeGraph) -> Self {
        DatasetStats {
            users: dataset.num_users,
            items: dataset.num_items,
            interactions: dataset.train.len() + dataset.valid.len() + dataset.test.len(),
            entities: kg.num_entities,
            relations: kg.num_relations,
            triples: kg.triples.len(),
        }
    }

    /// key,value CSV report.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "key,value").unwrap();
        writeln!(out, "users,{}", self.users).unwrap();
        writeln!(out, "items,{}", self.items).unwrap();
        writeln!(out, "interactions,{}", self.interactions).unwrap();
        writeln!(out, "entities,{}", self.entities).unwrap();
        writeln!(out, "relations,{}", self.relations).unwrap();
        writeln!(out, "triples,{}", self.triples).unwrap();
        out
    }
}

/// Parse (user, item) pairs from a delimited file, preserving file order.
/// Extra fields beyond the first two are ignored; duplicates are retained.
pub fn load_interactions(path: &Path, delimiter: &str) -> Result<Vec<(String, String)>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(delimiter);
        let user = fields.next().map(str::trim).unwrap_or("");
        let item = fields.next().map(str::trim).unwrap_or("");
        if user.is_empty() || item.is_empty() {
            return Err(DataError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                detail: format!("expected at least 2 fields split by {delimiter:?}"),
            });
        }
        pairs.push((user.to_string(), item.to_string()));
    }
    Ok(pairs)
}

/// Iteratively remove users and items with fewer than `min_count`
/// interactions until a fixpoint. Pairs are deduplicated first; output
/// preserves first-appearance order.
pub fn kcore_filter(pairs: &[(String, String)], min_count: usize) -> Vec<(String, String)> {
    assert!(min_count >= 1, "min_count must be >= 1");
    let mut kept: Vec<(String, String)> = {
        let mut seen = HashSet::new();
        pairs
            .iter()
            .filter(|p| seen.insert((p.0.clone(), p.1.clone())))
            .cloned()
            .collect()
    };
    loop {
        let mut user_count: HashMap<&str, usize> = HashMap::new();
        let mut item_count: HashMap<&str, usize> = HashMap::new();
        for (u, i) in &kept {
            *user_count.entry(u).or_default() += 1;
            *item_count.entry(i).or_default() += 1;
        }
        let before = kept.len();
        let retain: Vec<bool> = kept
            .iter()
            .map(|(u, i)| user_count[u.as_str()] >= min_count && item_count[i.as_str()] >= min_count)
            .collect();
        let mut idx = 0;
        kept.retain(|_| {
            let keep = retain[idx];
            idx += 1;
            keep
        });
        if kept.len() == before {
            return kept;
        }
    }
}

/// Per-user random partition of deduplicated pairs into train/valid/test.
/// Every user keeps at least one train interaction. Deterministic per seed.
pub fn split(
    pairs: &[(String, String)],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<InteractionDataset, DataError> {
    let (rt, rv, rs) = ratios;
    let arr = [rt, rv, rs];
    if arr.iter().any(|&r| r <= 0.0) {
        return Err(DataError::BadRatios {
            ratios: arr,
            detail: "all ratios must be positive".into(),
        });
    }
    if ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios {
            ratios: arr,
            detail: "ratios must sum to 1".into(),
        });
    }

    // contiguous ids in first-appearance order
    let mut user_map = HashMap::new();
    let mut item_map = HashMap::new();
    let mut per_user: Vec<Vec<usize>> = Vec::new();
    let mut seen = HashSet::new();
    for (u, i) in pairs {
        let uid = *user_map.entry(u.clone()).or_insert_with(|| {
            per_user.push(Vec::new());
            per_user.len() - 1
        });
        let next_item = item_map.len();
        let iid = *item_map.entry(i.clone()).or_insert(next_item);
        if seen.insert((uid, iid)) {
            per_user[uid].push(iid);
        }
    }
    let num_users = user_map.len();
    let num_items = item_map.len();

    let mut dataset = InteractionDataset {
        num_users,
        num_items,
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        train_by_user: vec![Vec::new(); num_users],
        valid_by_user: vec![Vec::new(); num_users],
        test_by_user: vec![Vec::new(); num_users],
        train_set: HashSet::new(),
        user_map,
        item_map,
    };

    for (uid, items) in per_user.iter().enumerate() {
        let mut items = items.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (uid as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        items.shuffle(&mut rng);
        let n = items.len();
        let n_valid = (n as f64 * rv).floor() as usize;
        let n_test = (n as f64 * rs).floor() as usize;
        let mut n_train = n - n_valid - n_test;
        let mut n_valid = n_valid;
        // Every user keeps at least one train interaction; the extra one
        // comes out of valid when possible, otherwise out of test (the
        // assignment below is positional, so growing train shrinks test).
        if n_train == 0 {
            if n_valid > 0 {
                n_valid -= 1;
            }
            n_train = 1;
        }
        for (pos, &iid) in items.iter().enumerate() {
            if pos < n_train {
                dataset.train.push((uid, iid));
                dataset.train_by_user[uid].push(iid);
                dataset.train_set.insert((uid, iid));
            } else if pos < n_train + n_valid {
                dataset.valid.push((uid, iid));
                dataset.valid_by_user[uid].push(iid);
            } else {
                dataset.test.push((uid, iid));
                dataset.test_by_user[uid].push(iid);
            }
        }
    }
    Ok(dataset)
}

/// Load "head<TAB>relation<TAB>tail" triples, re-indexing entities and
/// relations contiguously and dropping duplicate triples.
pub fn load_kg(path: &Path) -> Result<KnowledgeGraph, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut kg = KnowledgeGraph {
        num_entities: 0,
        num_relations: 0,
        triples: Vec::new(),
        triple_set: HashSet::new(),
        item_to_entity: Vec::new(),
        entity_map: HashMap::new(),
        relation_map: HashMap::new(),
        duplicates_dropped: 0,
        dangling_alignments: 0,
    };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 3 || fields[..3].iter().any(|f| f.is_empty()) {
            return Err(DataError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                detail: "expected head<TAB>relation<TAB>tail".into(),
            });
        }
        let next_e = kg.entity_map.len();
        let h = *kg.entity_map.entry(fields[0].to_string()).or_insert(next_e);
        let next_r = kg.relation_map.len();
        let r = *kg.relation_map.entry(fields[1].to_string()).or_insert(next_r);
        let next_e = kg.entity_map.len();
        let t = *kg.entity_map.entry(fields[2].to_string()).or_insert(next_e);
        if kg.triple_set.insert((h, r, t)) {
            kg.triples.push((h, r, t));
        } else {
            kg.duplicates_dropped += 1;
        }
    }
    kg.num_entities = kg.entity_map.len();
    kg.num_relations = kg.relation_map.len();
    Ok(kg)
}

/// Load "item<TAB>entity" alignment pairs.
pub fn load_alignment(path: &Path) -> Result<Vec<(String, String)>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields[..2].iter().any(|f| f.is_empty()) {
            return Err(DataError::MalformedLine {
                path: path.display().to_string(),
                line: idx + 1,
                detail: "expected item<TAB>entity".into(),
            });
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    Ok(pairs)
}

impl KnowledgeGraph {
    /// Resolve item-entity alignment against a dataset. Alignments whose
    /// item never appears in the interactions are skipped and counted.
    /// Items left unaligned get fresh entity ids appended after the KG
    /// entities, so afterwards every item maps to exactly one entity.
    pub fn align(
        &mut self,
        alignment: &[(String, String)],
        dataset: &InteractionDataset,
    ) -> Result<(), DataError> {
        let mut map: Vec<Option<usize>> = vec![None; dataset.num_items];
        for (item_raw, entity_raw) in alignment {
            let Some(&iid) = dataset.item_map.get(item_raw) else {
                self.dangling_alignments += 1;
                continue;
            };
            let Some(&eid) = self.entity_map.get(entity_raw) else {
                self.dangling_alignments += 1;
                continue;
            };
            if let Some(prev) = map[iid] {
                if prev != eid {
                    return Err(DataError::Inconsistent(format!(
                        "item {item_raw} aligned to multiple entities"
                    )));
                }
            } else {
                map[iid] = Some(eid);
            }
        }
        self.item_to_entity = map
            .into_iter()
            .map(|m| {
                m.unwrap_or_else(|| {
                    let fresh = self.num_entities;
                    self.num_entities += 1;
                    fresh
                })
            })
            .collect();
        Ok(())
    }

    /// An empty KG whose entities are exactly the dataset's items.
    pub fn items_only(dataset: &InteractionDataset) -> Self {
        KnowledgeGraph {
            num_entities: dataset.num_items,
            num_relations: 0,
            triples: Vec::new(),
            triple_set: HashSet::new(),
            item_to_entity: (0..dataset.num_items).collect(),
            entity_map: HashMap::new(),
            relation_map: HashMap::new(),
            duplicates_dropped: 0,
            dangling_alignments: 0,
        }
    }
}
