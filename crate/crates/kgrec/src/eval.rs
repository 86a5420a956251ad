//! Ranking evaluation, the contrastive ablation grid and the node-drop
//! robustness experiment. Evaluation is a pure function of the model, the
//! graph and the chosen split: the same inputs always produce the same
//! metrics.

use std::collections::HashSet;

use crate::ckg::{build_ckg, drop_nodes, CollaborativeKG};
use crate::data::{InteractionDataset, KnowledgeGraph};
use crate::error::TrainError;
use crate::model::{propagate, score_cf, ModelParams};
use crate::trainer::{train_on_ckg, TrainConfig, TrainOutcome, Variant};

/// Which held-out interactions to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Valid,
    Test,
}

/// Propagation settings plus the cutoff used when evaluating.
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub hops: usize,
    pub max_fanout: usize,
    pub seed: u64,
    pub k: usize,
}

/// Aggregated metrics for one (model, split) pair.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub variant: String,
    pub drop_rate: Option<f64>,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    /// Number of users with at least one held-out interaction.
    pub users: usize,
    /// (user, recall, ndcg) for every evaluated user, ascending by user.
    pub per_user: Vec<(usize, f64, f64)>,
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "variant,drop_rate,K,recall,ndcg,users"
    }

    pub fn to_csv_row(&self) -> String {
        let rate = match self.drop_rate {
            Some(r) => format!("{r}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{}",
            self.variant, rate, self.k, self.recall, self.ndcg, self.users
        )
    }
}

/// Items ranked by descending score for one user, excluding `exclude`.
/// Ties break toward the smaller item index.
pub fn rank_items(
    representations: &[Vec<f64>],
    ckg: &CollaborativeKG,
    user: usize,
    exclude: &HashSet<usize>,
) -> Vec<usize> {
    let user_node = ckg.user_node(user);
    let num_items = ckg.item_entity.len();
    let mut scored: Vec<(usize, f64)> = (0..num_items)
        .filter(|i| !exclude.contains(i))
        .map(|i| (i, score_cf(representations, user_node, ckg.item_node(i))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(i, _)| i).collect()
}

/// |top-k of ranked intersected with relevant| / |relevant|.
pub fn recall_at_k(ranked: &[usize], relevant: &HashSet<usize>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.contains(i))
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary NDCG: DCG sums 1/log2(pos+1) over relevant items in the top k,
/// ideal DCG places min(k, |relevant|) hits at the top.
pub fn ndcg_at_k(ranked: &[usize], relevant: &HashSet<usize>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(pos, _)| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(relevant.len()))
        .map(|pos| 1.0 / ((pos + 2) as f64).log2())
        .sum();
    dcg / ideal
}

/// Full-pool ranking over every user with held-out interactions in the
/// split; training items are excluded from each user's candidate pool.
pub fn evaluate(
    params: &ModelParams,
    ckg: &CollaborativeKG,
    dataset: &InteractionDataset,
    split: Split,
    cfg: &EvalConfig,
    variant: &str,
    drop_rate: Option<f64>,
) -> Result<MetricsReport, TrainError> {
    let representations = propagate(params, ckg, cfg.hops, cfg.max_fanout, cfg.seed);
    let by_user = match split {
        Split::Valid => &dataset.valid_by_user,
        Split::Test => &dataset.test_by_user,
    };
    let mut per_user = Vec::new();
    for user in 0..dataset.num_users {
        if by_user[user].is_empty() {
            continue;
        }
        let relevant: HashSet<usize> = by_user[user].iter().copied().collect();
        let exclude: HashSet<usize> = dataset.train_by_user[user].iter().copied().collect();
        let ranked = rank_items(&representations, ckg, user, &exclude);
        per_user.push((
            user,
            recall_at_k(&ranked, &relevant, cfg.k),
            ndcg_at_k(&ranked, &relevant, cfg.k),
        ));
    }
    if per_user.is_empty() {
        return Err(TrainError::NoEvaluableUsers);
    }
    let n = per_user.len() as f64;
    Ok(MetricsReport {
        variant: variant.to_string(),
        drop_rate,
        k: cfg.k,
        recall: per_user.iter().map(|r| r.1).sum::<f64>() / n,
        ndcg: per_user.iter().map(|r| r.2).sum::<f64>() / n,
        users: per_user.len(),
        per_user,
    })
}

/// Mean over users of k / |rankable pool|: the expected recall of a
/// uniformly random ranking when each user holds out one relevant item.
pub fn random_baseline_recall(dataset: &InteractionDataset, split: Split, k: usize) -> f64 {
    let by_user = match split {
        Split::Valid => &dataset.valid_by_user,
        Split::Test => &dataset.test_by_user,
    };
    let mut total = 0.0;
    let mut users = 0usize;
    for user in 0..dataset.num_users {
        if by_user[user].is_empty() {
            continue;
        }
        let pool = dataset.num_items - dataset.train_by_user[user].len();
        total += (k as f64).min(pool as f64) / pool as f64;
        users += 1;
    }
    if users == 0 {
        0.0
    } else {
        total / users as f64
    }
}

/// Train and score each contrastive variant with shared seeds. Produces
/// one test-split row per variant, in a fixed order.
pub fn run_ablation(
    config: &TrainConfig,
    dataset: &InteractionDataset,
    kg: &KnowledgeGraph,
) -> Result<Vec<(MetricsReport, TrainOutcome)>, TrainError> {
    let variants = [
        Variant::Base,
        Variant::UserItemOnly,
        Variant::UserUserOnly,
        Variant::TwoLevel,
    ];
    let ckg = build_ckg(dataset, kg)?;
    let mut rows = Vec::new();
    for variant in variants {
        let mut cfg = config.clone();
        cfg.variant = variant;
        let outcome = train_on_ckg(&cfg, dataset, &ckg)?;
        let eval_cfg = EvalConfig {
            hops: cfg.hops,
            max_fanout: cfg.max_fanout,
            seed: cfg.seed,
            k: cfg.top_k,
        };
        let report = evaluate(
            &outcome.params,
            &ckg,
            dataset,
            Split::Test,
            &eval_cfg,
            variant.label(),
            None,
        )?;
        rows.push((report, outcome));
    }
    Ok(rows)
}

/// Retrain from scratch on a graph with a fraction of entity nodes
/// removed, then score on the untouched test interactions. Rate 0 is a
/// plain training run.
pub fn run_noise_experiment(
    config: &TrainConfig,
    dataset: &InteractionDataset,
    kg: &KnowledgeGraph,
    drop_rates: &[f64],
) -> Result<Vec<(MetricsReport, TrainOutcome)>, TrainError> {
    let base = build_ckg(dataset, kg)?;
    let mut rows = Vec::new();
    for &rate in drop_rates {
        let ckg = drop_nodes(&base, rate, config.seed)?;
        let outcome = train_on_ckg(config, dataset, &ckg)?;
        let eval_cfg = EvalConfig {
            hops: config.hops,
            max_fanout: config.max_fanout,
            seed: config.seed,
            k: config.top_k,
        };
        let report = evaluate(
            &outcome.params,
            &ckg,
            dataset,
            Split::Test,
            &eval_cfg,
            config.variant.label(),
            Some(rate),
        )?;
        rows.push((report, outcome));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckg::build_ckg;
    use crate::data::{split, KnowledgeGraph};
    use crate::model::{Activation, ModelParams};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_recall(ranked: &[usize], relevant: &HashSet<usize>, k: usize) -> f64 {
        let mut hits = 0;
        for (pos, item) in ranked.iter().enumerate() {
            if pos < k && relevant.contains(item) {
                hits += 1;
            }
        }
        hits as f64 / relevant.len() as f64
    }

    #[test]
    fn recall_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(5..40);
            let mut ranked: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                ranked.swap(i, rng.gen_range(0..=i));
            }
            let relevant: HashSet<usize> =
                (0..n).filter(|_| rng.gen::<f64>() < 0.3).collect();
            if relevant.is_empty() {
                continue;
            }
            let k = rng.gen_range(1..=n);
            assert_eq!(
                recall_at_k(&ranked, &relevant, k),
                brute_recall(&ranked, &relevant, k)
            );
        }
    }

    #[test]
    fn ndcg_perfect_ranking_is_one() {
        let relevant: HashSet<usize> = [0, 1, 2].into_iter().collect();
        let ranked = vec![0, 1, 2, 3, 4];
        assert!((ndcg_at_k(&ranked, &relevant, 5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ndcg_single_hit_at_rank_two() {
        let relevant: HashSet<usize> = [9].into_iter().collect();
        let ranked = vec![3, 9, 1, 0];
        // DCG = 1/log2(3), IDCG = 1.
        let expect = 1.0 / 3f64.log2();
        assert!((ndcg_at_k(&ranked, &relevant, 4) - expect).abs() < 1e-12);
    }

    #[test]
    fn ndcg_zero_when_no_hits() {
        let relevant: HashSet<usize> = [5].into_iter().collect();
        assert_eq!(ndcg_at_k(&[1, 2, 3], &relevant, 3), 0.0);
    }

    #[test]
    fn random_scores_give_recall_near_k_over_n() {
        // Monte Carlo over random score vectors: with one relevant item
        // in a pool of n, expected recall@k is k/n.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, k, trials) = (50usize, 10usize, 4000usize);
        let mut total = 0.0;
        for _ in 0..trials {
            let mut scored: Vec<(usize, f64)> =
                (0..n).map(|i| (i, rng.gen::<f64>())).collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let ranked: Vec<usize> = scored.into_iter().map(|(i, _)| i).collect();
            let relevant: HashSet<usize> = [rng.gen_range(0..n)].into_iter().collect();
            total += recall_at_k(&ranked, &relevant, k);
        }
        let mean = total / trials as f64;
        assert!((mean - k as f64 / n as f64).abs() < 0.02, "mean {mean}");
    }

    fn tiny_world() -> (InteractionDataset, CollaborativeKG, ModelParams) {
        let named: Vec<(String, String)> = (0..6)
            .flat_map(|u| (0..8).map(move |i| (format!("u{u}"), format!("i{i}"))))
            .collect();
        let ds = split(&named, (0.6, 0.2, 0.2), 3).unwrap();
        let kg = KnowledgeGraph::items_only(&ds);
        let ckg = build_ckg(&ds, &kg).unwrap();
        let params =
            ModelParams::init(ckg.num_nodes(), ckg.num_total_relations(), 8, 8, 1, 1, Activation::Tanh, 5);
        (ds, ckg, params)
    }

    #[test]
    fn evaluate_is_deterministic() {
        let (ds, ckg, params) = tiny_world();
        let cfg = EvalConfig { hops: 1, max_fanout: 4, seed: 9, k: 3 };
        let a = evaluate(&params, &ckg, &ds, Split::Test, &cfg, "base", None).unwrap();
        let b = evaluate(&params, &ckg, &ds, Split::Test, &cfg, "base", None).unwrap();
        assert_eq!(a.recall.to_bits(), b.recall.to_bits());
        assert_eq!(a.ndcg.to_bits(), b.ndcg.to_bits());
        assert_eq!(a.users, b.users);
    }

    #[test]
    fn exclusion_changes_ranking() {
        // Two items, one user: excluding the better-scored training item
        // must promote the other to rank one.
        let named = vec![
            ("a".to_string(), "x".to_string()),
            ("a".to_string(), "y".to_string()),
            ("a".to_string(), "z".to_string()),
        ];
        let ds = split(&named, (0.4, 0.3, 0.3), 1).unwrap();
        let kg = KnowledgeGraph::items_only(&ds);
        let ckg = build_ckg(&ds, &kg).unwrap();
        let params = ModelParams::init(
            ckg.num_nodes(),
            ckg.num_total_relations(),
            4,
            4,
            0,
            0,
            Activation::Tanh,
            2,
        );
        let reprs = propagate(&params, &ckg, 0, 4, 0);
        let empty = HashSet::new();
        let full_pool = rank_items(&reprs, &ckg, 0, &empty);
        let exclude: HashSet<usize> = [full_pool[0]].into_iter().collect();
        let reduced = rank_items(&reprs, &ckg, 0, &exclude);
        assert_eq!(reduced.len(), full_pool.len() - 1);
        assert!(!reduced.contains(&full_pool[0]));
        assert_eq!(reduced[0], full_pool[1]);
    }

    #[test]
    fn ties_break_toward_smaller_item_index() {
        let (ds, ckg, _) = tiny_world();
        // All-equal scores: zero hops with identical embeddings.
        let d = 4;
        let mut params = ModelParams::init(
            ckg.num_nodes(),
            ckg.num_total_relations(),
            d,
            d,
            0,
            0,
            Activation::Tanh,
            2,
        );
        let n = params.num_nodes();
        for node in 0..n {
            params.block_mut(crate::model::ParamRef::NodeEmb(node)).fill(0.5);
        }
        let reprs = propagate(&params, &ckg, 0, 4, 0);
        let ranked = rank_items(&reprs, &ckg, 0, &HashSet::new());
        let sorted: Vec<usize> = (0..ds.num_items).collect();
        assert_eq!(ranked, sorted);
    }

    #[test]
    fn baseline_recall_matches_hand_computation() {
        let named = vec![
            ("a".to_string(), "w".to_string()),
            ("a".to_string(), "x".to_string()),
            ("a".to_string(), "y".to_string()),
            ("a".to_string(), "z".to_string()),
        ];
        let ds = split(&named, (0.5, 0.25, 0.25), 1).unwrap();
        // 4 items, 2 in train, so the rankable pool is 2.
        let expect = 1.0f64.min(10.0 / 2.0);
        assert!((random_baseline_recall(&ds, Split::Test, 10) - expect).abs() < 1e-12);
    }
}
