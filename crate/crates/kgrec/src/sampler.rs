//! Stochastic training inputs: BPR triples, in-batch negative sets,
//! Gaussian noise negatives and corrupted KG triples. Every sampler is a
//! pure function of (inputs, seed).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{InteractionDataset, KnowledgeGraph};
use crate::error::TrainError;

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub batch_size: usize,
    /// Noise negatives per anchor.
    pub noise_count: usize,
    /// Standard deviation of the Gaussian entries before normalization.
    pub noise_scale: f64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.noise_count > 0 && self.noise_scale <= 0.0 {
            return Err(TrainError::BadConfig(
                "noise_scale must be positive when noise_count > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Uniformly sample (user, positive item, unobserved item) triples: the
/// (u, i) pair comes uniformly from train interactions and j uniformly
/// from items without a train interaction with u.
pub fn sample_bpr(
    dataset: &InteractionDataset,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<(usize, usize, usize)>, TrainError> {
    if dataset.train.is_empty() {
        return Err(TrainError::Sampler("empty train split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(batch_size);
    let mut user_attempts = 0usize;
    while out.len() < batch_size {
        let (u, i) = dataset.train[rng.gen_range(0..dataset.train.len())];
        if dataset.train_by_user[u].len() >= dataset.num_items {
            user_attempts += 1;
            if user_attempts > 100 * batch_size {
                return Err(TrainError::Sampler(
                    "no user with a non-interacted item".into(),
                ));
            }
            continue;
        }
        let j = loop {
            let cand = rng.gen_range(0..dataset.num_items);
            if !dataset.train_set.contains(&(u, cand)) {
                break cand;
            }
        };
        out.push((u, i, j));
    }
    Ok(out)
}

/// Attach a uniformly sampled unobserved item to each (user, item) row.
/// Used by the trainer, whose epochs visit every train interaction once
/// via a shuffled partition rather than i.i.d. draws.
pub fn negatives_for_rows(
    dataset: &InteractionDataset,
    rows: &[(usize, usize)],
    seed: u64,
) -> Result<Vec<(usize, usize, usize)>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.iter()
        .map(|&(u, i)| {
            if dataset.train_by_user[u].len() >= dataset.num_items {
                return Err(TrainError::Sampler(format!(
                    "user {u} interacts with every item"
                )));
            }
            let j = loop {
                let cand = rng.gen_range(0..dataset.num_items);
                if !dataset.train_set.contains(&(u, cand)) {
                    break cand;
                }
            };
            Ok((u, i, j))
        })
        .collect()
}

/// Per-anchor in-batch negative sets: J holds the positive items of the
/// other batch rows, O the distinct other users.
pub fn in_batch_sets(batch: &[(usize, usize, usize)]) -> Vec<(Vec<usize>, Vec<usize>)> {
    batch
        .iter()
        .enumerate()
        .map(|(row, &(u, _, _))| {
            let mut items = Vec::with_capacity(batch.len().saturating_sub(1));
            let mut users = Vec::new();
            for (other_row, &(ou, oi, _)) in batch.iter().enumerate() {
                if other_row == row {
                    continue;
                }
                items.push(oi);
                if ou != u && !users.contains(&ou) {
                    users.push(ou);
                }
            }
            (items, users)
        })
        .collect()
}

/// `m` direction vectors with i.i.d. Normal(0, scale^2) entries,
/// L2-normalized so only the direction carries information.
pub fn noise_negatives(m: usize, d: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    assert!(m == 0 || scale > 0.0, "noise scale must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut randn = || -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    (0..m)
        .map(|_| {
            loop {
                let v: Vec<f64> = (0..d).map(|_| randn()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    return v.into_iter().map(|x| x / norm).collect();
                }
            }
        })
        .collect()
}

/// Tail-corrupt each triple: t' uniform over entities such that
/// (h, r, t') is not a true triple.
pub fn corrupt_triples(
    kg: &KnowledgeGraph,
    batch: &[(usize, usize, usize)],
    seed: u64,
) -> Result<Vec<(usize, usize, usize, usize)>, TrainError> {
    if kg.num_entities < 2 {
        return Err(TrainError::Sampler(
            "corruption needs at least 2 entities".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(batch.len());
    for &(h, r, t) in batch {
        let mut found = None;
        for _ in 0..100 * kg.num_entities {
            let cand = rng.gen_range(0..kg.num_entities);
            if !kg.triple_set.contains(&(h, r, cand)) {
                found = Some(cand);
                break;
            }
        }
        let t2 = found.ok_or_else(|| {
            TrainError::Sampler(format!("all entities complete triple ({h}, {r}, *)"))
        })?;
        out.push((h, r, t, t2));
    }
    Ok(out)
}
