//! Deterministic synthetic dataset with planted low-rank structure. Users
//! and items live in a small latent space split into two blocks; each
//! user interacts with their highest-affinity items, so a trained model
//! can recover the held-out interactions. A small attribute KG (category
//! and popularity tier) aligns one entity per item.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    /// Interactions per user (their top items by latent affinity).
    pub items_per_user: usize,
    /// Noise added to each block center coordinate.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_users: 200,
            num_items: 100,
            latent_dim: 8,
            items_per_user: 10,
            jitter: 0.25,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: Vec<(String, String)>,
    /// (head, relation, tail) with string names.
    pub kg_triples: Vec<(String, String, String)>,
    /// (item name, entity name).
    pub alignment: Vec<(String, String)>,
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.latent_dim;
    // Two opposite block centers along the first two coordinates.
    let center = |block: usize| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        c[0] = if block == 0 { 1.0 } else { -1.0 };
        c[1] = if block == 0 { 0.5 } else { -0.5 };
        c
    };
    let latent = |block: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        center(block)
            .into_iter()
            .map(|c| c + spec.jitter * randn(rng))
            .collect()
    };
    let user_lat: Vec<Vec<f64>> = (0..spec.num_users)
        .map(|u| latent(u % 2, &mut rng))
        .collect();
    let item_lat: Vec<Vec<f64>> = (0..spec.num_items)
        .map(|i| latent(i % 2, &mut rng))
        .collect();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut item_seen = vec![false; spec.num_items];
    for (u, ul) in user_lat.iter().enumerate() {
        let mut scored: Vec<(usize, f64)> = item_lat
            .iter()
            .enumerate()
            .map(|(i, il)| (i, ul.iter().zip(il).map(|(a, b)| a * b).sum::<f64>()))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(i, _) in scored.iter().take(spec.items_per_user) {
            pairs.push((u, i));
            item_seen[i] = true;
        }
    }
    // Give never-picked items one interaction each so every item exists
    // in the loaded dataset.
    for i in 0..spec.num_items {
        if item_seen[i] {
            continue;
        }
        let best = user_lat
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                let sa: f64 = a.iter().zip(&item_lat[i]).map(|(x, y)| x * y).sum();
                let sb: f64 = b.iter().zip(&item_lat[i]).map(|(x, y)| x * y).sum();
                sa.partial_cmp(&sb).unwrap()
            })
            .map(|(u, _)| u)
            .unwrap();
        pairs.push((best, i));
    }

    let interactions = pairs
        .iter()
        .map(|&(u, i)| (format!("u{u}"), format!("i{i}")))
        .collect();

    // Popularity tiers by item interaction count quartile.
    let mut counts = vec![0usize; spec.num_items];
    for &(_, i) in &pairs {
        counts[i] += 1;
    }
    let mut order: Vec<usize> = (0..spec.num_items).collect();
    order.sort_by_key(|&i| (counts[i], i));
    let mut tier = vec![0usize; spec.num_items];
    for (rank, &i) in order.iter().enumerate() {
        tier[i] = rank * 4 / spec.num_items;
    }

    let mut kg_triples = Vec::new();
    let mut alignment = Vec::new();
    for i in 0..spec.num_items {
        let e = format!("e{i}");
        kg_triples.push((e.clone(), "category".to_string(), format!("cat{}", i % 2)));
        kg_triples.push((e.clone(), "tier".to_string(), format!("tier{}", tier[i])));
        alignment.push((format!("i{i}"), e));
    }

    SyntheticData {
        interactions,
        kg_triples,
        alignment,
    }
}

/// Write interactions.tsv, kg.tsv and alignment.tsv into `dir`.
pub fn write_files(data: &SyntheticData, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("interactions.tsv"))?;
    for (u, i) in &data.interactions {
        writeln!(f, "{u}\t{i}")?;
    }
    let mut f = std::fs::File::create(dir.join("kg.tsv"))?;
    for (h, r, t) in &data.kg_triples {
        writeln!(f, "{h}\t{r}\t{t}")?;
    }
    let mut f = std::fs::File::create(dir.join("alignment.tsv"))?;
    for (i, e) in &data.alignment {
        writeln!(f, "{i}\t{e}")?;
    }
    Ok(())
}
