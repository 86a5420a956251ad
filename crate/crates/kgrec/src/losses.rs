//! Loss terms as differentiable tape programs: pairwise ranking over CF
//! scores, in-batch and noise-negative contrastive terms at the User-Item
//! and User-User levels with instance weighting, translation-energy
//! ranking over corrupted triples, and the combined objective.

use crate::error::TapeError;
use crate::tape::{NodeId, Tape};

/// Which contrastive granularity a batch belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    UserItem,
    UserUser,
}

/// Anchors, positives and negative sets for one contrastive term.
/// All node ids point at representation vectors already pushed through
/// the projection head. Weights pair with in-batch negatives and are 0/1.
#[derive(Debug, Default)]
pub struct ContrastiveBatch {
    pub anchors: Vec<NodeId>,
    pub positives: Vec<NodeId>,
    /// Per anchor: (negative representation, alpha).
    pub inbatch_negatives: Vec<Vec<(NodeId, f64)>>,
    /// Per anchor: noised negative representations.
    pub noised_negatives: Vec<Vec<NodeId>>,
    /// When the caller has already L2-normalized every vector on the
    /// tape, similarities reduce to plain dots (same value and, through
    /// the normalization nodes, the same gradient).
    pub assume_normalized: bool,
}

/// All scalar loss values of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBundle {
    pub l_cf: f64,
    pub l_ui_hat: f64,
    pub l_uu_hat: f64,
    pub l_ui_noise: f64,
    pub l_uu_noise: f64,
    pub l_reg: f64,
    pub l: f64,
    pub l_kg: f64,
    pub l_final: f64,
}

/// Cosine similarity on the tape: dot(a,b) scaled by
/// exp(-(log ||a||^2 + log ||b||^2)/2), which stays inside the primitive
/// op set and is exactly differentiable for non-zero vectors.
pub fn sim_node(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
    let d = tape.dot(a, b);
    let na = tape.l2_norm_sq(a);
    let nb = tape.l2_norm_sq(b);
    let la = tape.log(na)?;
    let lb = tape.log(nb)?;
    let lsum = tape.add(la, lb);
    let half = tape.scale_const(lsum, -0.5);
    let inv_norm = tape.exp(half);
    Ok(tape.scale(d, inv_norm))
}

/// Sum over pairs of -ln sigma(pos - neg), in the softplus(neg - pos)
/// form so extreme score gaps stay finite.
pub fn bpr_loss(tape: &mut Tape, score_pairs: &[(NodeId, NodeId)]) -> Result<NodeId, TapeError> {
    if score_pairs.is_empty() {
        return Err(TapeError::Domain {
            op: "bpr_loss",
            detail: "empty batch".into(),
        });
    }
    let terms: Vec<NodeId> = score_pairs
        .iter()
        .map(|&(pos, neg)| {
            let margin = tape.sub(neg, pos);
            tape.softplus(margin)
        })
        .collect();
    let stacked = tape.concat(terms);
    Ok(tape.sum(stacked))
}

/// Instance weighting: a candidate negative judged too similar by the
/// complementary model (sim_C >= phi, boundary inclusive) is dropped.
pub fn instance_weight(sim_c: f64, phi: f64) -> f64 {
    if sim_c >= phi {
        0.0
    } else {
        1.0
    }
}

fn contrastive_term(
    tape: &mut Tape,
    anchor: NodeId,
    positive: NodeId,
    negatives: &[NodeId],
    tau: f64,
    assume_normalized: bool,
) -> Result<NodeId, TapeError> {
    let sim_of = |tape: &mut Tape, a: NodeId, b: NodeId| -> Result<NodeId, TapeError> {
        if assume_normalized {
            Ok(tape.dot(a, b))
        } else {
            sim_node(tape, a, b)
        }
    };
    let pos_sim = sim_of(tape, anchor, positive)?;
    let pos_scaled = tape.scale_const(pos_sim, 1.0 / tau);
    if negatives.is_empty() {
        // denominator equals the numerator: exactly zero, zero gradient
        return Ok(tape.scalar_leaf(0.0));
    }
    let mut sims = Vec::with_capacity(negatives.len() + 1);
    sims.push(pos_sim);
    for &neg in negatives {
        sims.push(sim_of(tape, anchor, neg)?);
    }
    // vectorized log-sum-exp over sims / tau, shifted by the (constant)
    // forward max for overflow safety
    let stacked = tape.concat(sims);
    let scaled = tape.scale_const(stacked, 1.0 / tau);
    let max = tape
        .value(scaled)
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = tape.leaf(crate::tensor::Tensor::vector(vec![
        -max;
        negatives.len() + 1
    ]));
    let shifted = tape.add(scaled, shift);
    let exps = tape.exp(shifted);
    let total = tape.sum(exps);
    let log = tape.log(total)?;
    let unshift = tape.scalar_leaf(max);
    let lse = tape.add(log, unshift);
    Ok(tape.sub(lse, pos_scaled))
}

fn check_batch(batch: &ContrastiveBatch, tau: f64, op: &'static str) -> Result<(), TapeError> {
    if tau <= 0.0 {
        return Err(TapeError::Domain {
            op: "inbatch_loss",
            detail: format!("temperature {tau} must be positive"),
        });
    }
    if batch.anchors.len() != batch.positives.len() {
        return Err(TapeError::ShapeMismatch {
            op,
            detail: "anchors and positives differ in length".into(),
        });
    }
    Ok(())
}

/// Per-anchor -log( e^{sim(pos)/tau} / (e^{sim(pos)/tau} +
/// sum_neg alpha e^{sim(neg)/tau}) ), averaged over anchors. Negatives
/// with alpha = 0 drop out; if every alpha is 0 the term is exactly 0.
pub fn inbatch_loss(
    tape: &mut Tape,
    batch: &ContrastiveBatch,
    _level: Level,
    tau: f64,
) -> Result<NodeId, TapeError> {
    check_batch(batch, tau, "inbatch_loss")?;
    if batch.anchors.is_empty() {
        return Ok(tape.scalar_leaf(0.0));
    }
    let mut per_anchor = Vec::with_capacity(batch.anchors.len());
    for (i, (&anchor, &positive)) in batch.anchors.iter().zip(&batch.positives).enumerate() {
        let kept: Vec<NodeId> = batch.inbatch_negatives[i]
            .iter()
            .filter(|(_, alpha)| *alpha != 0.0)
            .map(|(id, _)| *id)
            .collect();
        per_anchor.push(contrastive_term(
            tape,
            anchor,
            positive,
            &kept,
            tau,
            batch.assume_normalized,
        )?);
    }
    let n = per_anchor.len() as f64;
    let stacked = tape.concat(per_anchor);
    let total = tape.sum(stacked);
    Ok(tape.scale_const(total, 1.0 / n))
}

/// Same shape as `inbatch_loss` but against the noised negative sets and
/// without instance weighting. With no noised negatives the term is 0.
pub fn noised_loss(
    tape: &mut Tape,
    batch: &ContrastiveBatch,
    _level: Level,
    tau: f64,
) -> Result<NodeId, TapeError> {
    check_batch(batch, tau, "noised_loss")?;
    if batch.anchors.is_empty() || batch.noised_negatives.iter().all(|n| n.is_empty()) {
        return Ok(tape.scalar_leaf(0.0));
    }
    let mut per_anchor = Vec::with_capacity(batch.anchors.len());
    for (i, (&anchor, &positive)) in batch.anchors.iter().zip(&batch.positives).enumerate() {
        per_anchor.push(contrastive_term(
            tape,
            anchor,
            positive,
            &batch.noised_negatives[i],
            tau,
            batch.assume_normalized,
        )?);
    }
    let n = per_anchor.len() as f64;
    let stacked = tape.concat(per_anchor);
    let total = tape.sum(stacked);
    Ok(tape.scale_const(total, 1.0 / n))
}

/// Sum over quadruples of -ln sigma(g(h,r,t') - g(h,r,t)): corrupted
/// triples should carry higher energy than valid ones.
pub fn kg_loss(
    tape: &mut Tape,
    energy_pairs: &[(NodeId, NodeId)],
) -> Result<NodeId, TapeError> {
    if energy_pairs.is_empty() {
        return Err(TapeError::Domain {
            op: "kg_loss",
            detail: "empty batch".into(),
        });
    }
    let terms: Vec<NodeId> = energy_pairs
        .iter()
        .map(|&(valid, corrupted)| {
            let margin = tape.sub(valid, corrupted);
            tape.softplus(margin)
        })
        .collect();
    let stacked = tape.concat(terms);
    Ok(tape.sum(stacked))
}

/// Component nodes fed into the combined objective.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub cf: NodeId,
    pub ui_hat: Option<NodeId>,
    pub uu_hat: Option<NodeId>,
    pub ui_noise: Option<NodeId>,
    pub uu_noise: Option<NodeId>,
}

/// L = L_CF + contrastive terms + lambda * sum of squared touched
/// parameters. Returns (L, regularizer) nodes.
pub fn total_loss(
    tape: &mut Tape,
    parts: &LossParts,
    lambda: f64,
    theta: &[NodeId],
) -> Result<(NodeId, NodeId), TapeError> {
    if lambda < 0.0 {
        return Err(TapeError::Domain {
            op: "total_loss",
            detail: format!("lambda {lambda} must be non-negative"),
        });
    }
    let reg = if lambda == 0.0 || theta.is_empty() {
        tape.scalar_leaf(0.0)
    } else {
        let sq: Vec<NodeId> = theta.iter().map(|&id| tape.l2_norm_sq(id)).collect();
        let stacked = tape.concat(sq);
        let total = tape.sum(stacked);
        tape.scale_const(total, lambda)
    };
    let mut l = tape.add(parts.cf, reg);
    for term in [parts.ui_hat, parts.uu_hat, parts.ui_noise, parts.uu_noise]
        .into_iter()
        .flatten()
    {
        l = tape.add(l, term);
    }
    Ok((l, reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::fd_check;
    use crate::tensor::Tensor;

    const LN2: f64 = std::f64::consts::LN_2;

    fn vec_leaf(tape: &mut Tape, v: &[f64]) -> NodeId {
        tape.leaf(Tensor::vector(v.to_vec()))
    }

    /// Independent InfoNCE oracle over raw similarity values.
    fn infonce_oracle(pos_sim: f64, neg_sims: &[f64], tau: f64) -> f64 {
        let denom: f64 = std::iter::once(pos_sim)
            .chain(neg_sims.iter().copied())
            .map(|s| (s / tau).exp())
            .sum();
        -((pos_sim / tau).exp() / denom).ln()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
    }

    #[test]
    fn bpr_equal_scores_is_ln2_per_pair() {
        let mut tape = Tape::new();
        let mut pairs = Vec::new();
        for _ in 0..5 {
            let a = tape.scalar_leaf(1.3);
            let b = tape.scalar_leaf(1.3);
            pairs.push((a, b));
        }
        let loss = bpr_loss(&mut tape, &pairs).unwrap();
        assert!((tape.value(loss).item() - 5.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn bpr_large_margin_goes_to_zero() {
        let mut tape = Tape::new();
        let pos = tape.scalar_leaf(500.0);
        let neg = tape.scalar_leaf(-500.0);
        let loss = bpr_loss(&mut tape, &[(pos, neg)]).unwrap();
        assert!(tape.value(loss).item().abs() < 1e-12);
    }

    #[test]
    fn bpr_matches_scalar_oracle() {
        let mut tape = Tape::new();
        let cases = [(0.7, -0.2), (-1.3, 2.0), (0.0, 0.0)];
        let pairs: Vec<(NodeId, NodeId)> = cases
            .iter()
            .map(|&(p, n)| (tape.scalar_leaf(p), tape.scalar_leaf(n)))
            .collect();
        let loss = bpr_loss(&mut tape, &pairs).unwrap();
        let oracle: f64 = cases
            .iter()
            .map(|&(p, n)| -(1.0 / (1.0 + (-(p - n) as f64).exp())).ln())
            .sum();
        assert!((tape.value(loss).item() - oracle).abs() < 1e-12);
    }

    #[test]
    fn bpr_empty_batch_errors() {
        let mut tape = Tape::new();
        assert!(bpr_loss(&mut tape, &[]).is_err());
    }

    #[test]
    fn instance_weight_threshold_rule() {
        assert_eq!(instance_weight(0.9, 0.8), 0.0);
        assert_eq!(instance_weight(0.8, 0.8), 0.0); // boundary in >= branch
        assert_eq!(instance_weight(0.79, 0.8), 1.0);
        assert_eq!(instance_weight(1.0, 1.1), 1.0); // phi above cosine range
    }

    #[test]
    fn inbatch_two_equal_terms_is_ln2() {
        // sim(pos) = 0 and one negative with sim = 0 at tau = 1
        let mut tape = Tape::new();
        let anchor = vec_leaf(&mut tape, &[1.0, 0.0]);
        let positive = vec_leaf(&mut tape, &[0.0, 1.0]);
        let negative = vec_leaf(&mut tape, &[0.0, -1.0]);
        let batch = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![vec![(negative, 1.0)]],
            noised_negatives: vec![vec![]],
            assume_normalized: false,
        };
        let loss = inbatch_loss(&mut tape, &batch, Level::UserItem, 1.0).unwrap();
        assert!((tape.value(loss).item() - LN2).abs() < 1e-12);
    }

    #[test]
    fn inbatch_all_alpha_zero_is_zero() {
        let mut tape = Tape::new();
        let anchor = vec_leaf(&mut tape, &[1.0, 0.3]);
        let positive = vec_leaf(&mut tape, &[0.4, 1.0]);
        let negative = vec_leaf(&mut tape, &[0.9, 0.2]);
        let batch = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![vec![(negative, 0.0)]],
            noised_negatives: vec![vec![]],
            assume_normalized: false,
        };
        let loss = inbatch_loss(&mut tape, &batch, Level::UserItem, 0.5).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn inbatch_matches_direct_summation_oracle() {
        let mut tape = Tape::new();
        let anchor_v = [0.3, -0.8, 0.5];
        let pos_v = [1.0, 0.2, -0.1];
        let negs_v = [[0.4, 0.4, 0.4], [-0.9, 0.1, 0.3], [0.2, -0.5, 0.8]];
        let tau = 0.7;
        let anchor = vec_leaf(&mut tape, &anchor_v);
        let positive = vec_leaf(&mut tape, &pos_v);
        let negs: Vec<(NodeId, f64)> = negs_v.iter().map(|n| (vec_leaf(&mut tape, n), 1.0)).collect();
        let batch = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![negs],
            noised_negatives: vec![vec![]],
            assume_normalized: false,
        };
        let loss = inbatch_loss(&mut tape, &batch, Level::UserUser, tau).unwrap();
        let neg_sims: Vec<f64> = negs_v.iter().map(|n| cosine(&anchor_v, n)).collect();
        let oracle = infonce_oracle(cosine(&anchor_v, &pos_v), &neg_sims, tau);
        assert!((tape.value(loss).item() - oracle).abs() < 1e-12);
    }

    #[test]
    fn inbatch_rejects_non_positive_tau() {
        let mut tape = Tape::new();
        let batch = ContrastiveBatch::default();
        assert!(inbatch_loss(&mut tape, &batch, Level::UserItem, 0.0).is_err());
        assert!(noised_loss(&mut tape, &batch, Level::UserItem, -1.0).is_err());
    }

    #[test]
    fn noised_loss_no_negatives_is_zero() {
        let mut tape = Tape::new();
        let anchor = vec_leaf(&mut tape, &[1.0, 0.0]);
        let positive = vec_leaf(&mut tape, &[0.3, 1.0]);
        let batch = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![vec![]],
            noised_negatives: vec![vec![]],
            assume_normalized: false,
        };
        let loss = noised_loss(&mut tape, &batch, Level::UserItem, 0.2).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
    }

    #[test]
    fn noised_three_equal_terms_is_ln3() {
        // pos sim 0 and two noise negatives with sim 0 at tau = 1
        let mut tape = Tape::new();
        let anchor = vec_leaf(&mut tape, &[1.0, 0.0, 0.0]);
        let positive = vec_leaf(&mut tape, &[0.0, 1.0, 0.0]);
        let n1 = vec_leaf(&mut tape, &[0.0, 0.0, 1.0]);
        let n2 = vec_leaf(&mut tape, &[0.0, -1.0, 0.0]);
        let batch = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![vec![]],
            noised_negatives: vec![vec![n1, n2]],
            assume_normalized: false,
        };
        let loss = noised_loss(&mut tape, &batch, Level::UserUser, 1.0).unwrap();
        assert!((tape.value(loss).item() - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noised_matches_oracle_random_instance() {
        let mut tape = Tape::new();
        let anchor_v = [0.9, 0.1, -0.4];
        let pos_v = [0.5, 0.5, 0.5];
        let noise_v = [[0.1, -0.2, 0.7], [-0.3, 0.9, 0.2]];
        let tau = 0.15;
        let anchor = vec_leaf(&mut tape, &anchor_v);
        let positive = vec_leaf(&mut tape, &pos_v);
        let noised: Vec<NodeId> = noise_v.iter().map(|n| vec_leaf(&mut tape, n)).collect();
        let batch = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![vec![]],
            noised_negatives: vec![noised],
            assume_normalized: false,
        };
        let loss = noised_loss(&mut tape, &batch, Level::UserItem, tau).unwrap();
        let sims: Vec<f64> = noise_v.iter().map(|n| cosine(&anchor_v, n)).collect();
        let oracle = infonce_oracle(cosine(&anchor_v, &pos_v), &sims, tau);
        assert!((tape.value(loss).item() - oracle).abs() < 1e-12);
    }

    #[test]
    fn kg_equal_energies_is_ln2() {
        let mut tape = Tape::new();
        let a = tape.scalar_leaf(3.0);
        let b = tape.scalar_leaf(3.0);
        let loss = kg_loss(&mut tape, &[(a, b)]).unwrap();
        assert!((tape.value(loss).item() - LN2).abs() < 1e-12);
    }

    #[test]
    fn kg_well_separated_goes_to_zero() {
        let mut tape = Tape::new();
        let valid = tape.scalar_leaf(0.0);
        let corrupted = tape.scalar_leaf(1000.0);
        let loss = kg_loss(&mut tape, &[(valid, corrupted)]).unwrap();
        assert!(tape.value(loss).item().abs() < 1e-12);
    }

    #[test]
    fn kg_matches_scalar_oracle() {
        let mut tape = Tape::new();
        let cases = [(0.3, 1.9), (2.0, 0.5), (1.0, 1.0)];
        let pairs: Vec<(NodeId, NodeId)> = cases
            .iter()
            .map(|&(v, c)| (tape.scalar_leaf(v), tape.scalar_leaf(c)))
            .collect();
        let loss = kg_loss(&mut tape, &pairs).unwrap();
        let oracle: f64 = cases
            .iter()
            .map(|&(v, c)| -(1.0 / (1.0 + (-(c - v) as f64).exp())).ln())
            .sum();
        assert!((tape.value(loss).item() - oracle).abs() < 1e-12);
    }

    #[test]
    fn total_loss_reductions() {
        // all contrastive terms disabled and lambda 0 -> L = L_CF
        let mut tape = Tape::new();
        let cf = tape.scalar_leaf(1.25);
        let parts = LossParts {
            cf,
            ui_hat: None,
            uu_hat: None,
            ui_noise: None,
            uu_noise: None,
        };
        let (l, reg) = total_loss(&mut tape, &parts, 0.0, &[]).unwrap();
        assert_eq!(tape.value(l).item(), 1.25);
        assert_eq!(tape.value(reg).item(), 0.0);
    }

    #[test]
    fn total_loss_additivity() {
        let mut tape = Tape::new();
        let cf = tape.scalar_leaf(0.0);
        let theta = vec_leaf(&mut tape, &[0.5, 0.5]); // lambda 1 -> reg 0.5
        let parts = LossParts {
            cf,
            ui_hat: None,
            uu_hat: None,
            ui_noise: None,
            uu_noise: None,
        };
        let (l, reg) = total_loss(&mut tape, &parts, 1.0, &[theta]).unwrap();
        assert!((tape.value(reg).item() - 0.5).abs() < 1e-15);
        assert!((tape.value(l).item() - 0.5).abs() < 1e-15);
        let l_kg = 0.75;
        let bundle_final = tape.value(l).item() + l_kg;
        assert!((bundle_final - 1.25).abs() < 1e-15);
    }

    #[test]
    fn total_loss_random_parts_resum() {
        let mut tape = Tape::new();
        let vals = [0.4, 0.7, 0.1, 0.9, 0.2];
        let cf = tape.scalar_leaf(vals[0]);
        let ui = tape.scalar_leaf(vals[1]);
        let uu = tape.scalar_leaf(vals[2]);
        let uin = tape.scalar_leaf(vals[3]);
        let uun = tape.scalar_leaf(vals[4]);
        let parts = LossParts {
            cf,
            ui_hat: Some(ui),
            uu_hat: Some(uu),
            ui_noise: Some(uin),
            uu_noise: Some(uun),
        };
        let (l, _) = total_loss(&mut tape, &parts, 0.0, &[]).unwrap();
        let oracle: f64 = vals.iter().sum();
        assert!((tape.value(l).item() - oracle).abs() < 1e-12);
    }

    #[test]
    fn gradient_parity_inbatch_loss() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let d = rng.gen_range(2..=6);
            let n_negs = rng.gen_range(1..=3);
            let mut vecs: Vec<Tensor> = Vec::new();
            for _ in 0..(2 + n_negs) {
                vecs.push(Tensor::vector(
                    (0..d).map(|_| rng.gen_range(-1.0..1.0) + 0.1).collect(),
                ));
            }
            let err = fd_check(
                |tape, ids| {
                    let batch = ContrastiveBatch {
                        anchors: vec![ids[0]],
                        positives: vec![ids[1]],
                        inbatch_negatives: vec![ids[2..].iter().map(|&id| (id, 1.0)).collect()],
                        noised_negatives: vec![vec![]],
                        assume_normalized: false,
                    };
                    inbatch_loss(tape, &batch, Level::UserItem, 0.3).unwrap()
                },
                &vecs,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "err = {err}");
        }
    }

    #[test]
    fn removing_a_negative_never_increases_loss() {
        let mut tape = Tape::new();
        let anchor_v = [0.6, -0.2, 0.9];
        let pos_v = [0.5, 0.5, 0.1];
        let negs_v = [[0.7, -0.1, 0.8], [0.1, 0.9, -0.3]];
        let anchor = vec_leaf(&mut tape, &anchor_v);
        let positive = vec_leaf(&mut tape, &pos_v);
        let negs: Vec<NodeId> = negs_v.iter().map(|n| vec_leaf(&mut tape, n)).collect();
        let with_both = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![negs.iter().map(|&n| (n, 1.0)).collect()],
            noised_negatives: vec![vec![]],
            assume_normalized: false,
        };
        let dropped = ContrastiveBatch {
            anchors: vec![anchor],
            positives: vec![positive],
            inbatch_negatives: vec![vec![(negs[0], 1.0), (negs[1], 0.0)]],
            noised_negatives: vec![vec![]],
            assume_normalized: false,
        };
        let l_full = inbatch_loss(&mut tape, &with_both, Level::UserItem, 0.4).unwrap();
        let l_drop = inbatch_loss(&mut tape, &dropped, Level::UserItem, 0.4).unwrap();
        assert!(tape.value(l_drop).item() <= tape.value(l_full).item() + 1e-15);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn small_vec() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.0f64..1.0, 3)
                .prop_filter("non-degenerate", |v| {
                    v.iter().map(|x| x * x).sum::<f64>() > 1e-4
                })
        }

        proptest! {
            #[test]
            fn bpr_invariant_to_constant_shift(p in -3.0f64..3.0, n in -3.0f64..3.0, c in -5.0f64..5.0) {
                let mut t1 = Tape::new();
                let a = t1.scalar_leaf(p);
                let b = t1.scalar_leaf(n);
                let l1 = bpr_loss(&mut t1, &[(a, b)]).unwrap();
                let mut t2 = Tape::new();
                let a2 = t2.scalar_leaf(p + c);
                let b2 = t2.scalar_leaf(n + c);
                let l2 = bpr_loss(&mut t2, &[(a2, b2)]).unwrap();
                prop_assert!((t1.value(l1).item() - t2.value(l2).item()).abs() < 1e-9);
            }

            #[test]
            fn kg_invariant_to_constant_shift(v in 0.0f64..4.0, cpt in 0.0f64..4.0, c in 0.0f64..5.0) {
                let mut t1 = Tape::new();
                let a = t1.scalar_leaf(v);
                let b = t1.scalar_leaf(cpt);
                let l1 = kg_loss(&mut t1, &[(a, b)]).unwrap();
                let mut t2 = Tape::new();
                let a2 = t2.scalar_leaf(v + c);
                let b2 = t2.scalar_leaf(cpt + c);
                let l2 = kg_loss(&mut t2, &[(a2, b2)]).unwrap();
                prop_assert!((t1.value(l1).item() - t2.value(l2).item()).abs() < 1e-9);
            }

            #[test]
            fn losses_non_negative_and_finite(
                anchor in small_vec(),
                pos in small_vec(),
                neg in small_vec(),
                tau in 0.05f64..2.0,
            ) {
                let mut tape = Tape::new();
                let a = tape.leaf(Tensor::vector(anchor));
                let p = tape.leaf(Tensor::vector(pos));
                let n = tape.leaf(Tensor::vector(neg));
                let batch = ContrastiveBatch {
                    anchors: vec![a],
                    positives: vec![p],
                    inbatch_negatives: vec![vec![(n, 1.0)]],
                    noised_negatives: vec![vec![n]],
                    assume_normalized: false,
                };
                let li = inbatch_loss(&mut tape, &batch, Level::UserItem, tau).unwrap();
                let ln = noised_loss(&mut tape, &batch, Level::UserItem, tau).unwrap();
                for id in [li, ln] {
                    let v = tape.value(id).item();
                    prop_assert!(v.is_finite());
                    prop_assert!(v >= -1e-12);
                }
            }

            #[test]
            fn monotone_in_negative_similarity(delta in 0.01f64..0.5) {
                // raising one negative's similarity never lowers the loss
                let base = [0.4f64, 0.1];
                let eval = |neg: [f64; 2]| -> f64 {
                    let mut tape = Tape::new();
                    let a = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
                    let p = tape.leaf(Tensor::vector(vec![0.6, 0.8]));
                    let n = tape.leaf(Tensor::vector(neg.to_vec()));
                    let batch = ContrastiveBatch {
                        anchors: vec![a],
                        positives: vec![p],
                        inbatch_negatives: vec![vec![(n, 1.0)]],
                        noised_negatives: vec![vec![]],
                        assume_normalized: false,
                    };
                    let l = inbatch_loss(&mut tape, &batch, Level::UserItem, 0.5).unwrap();
                    tape.value(l).item()
                };
                // rotate the negative toward the anchor (1,0): higher cosine
                let low = eval(base);
                let high = eval([base[0] + delta, base[1] * 0.5]);
                prop_assert!(high >= low - 1e-12);
            }
        }
    }
}
