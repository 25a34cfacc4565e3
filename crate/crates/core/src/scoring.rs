//! Scalar scores: balance-aware affinity, stage score, diversity term,
//! family utility and panel utility.

use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::error::Result;
use crate::evaluators::{chemistry_score, evaluate_stage, feasibility, tanimoto_distance};
use crate::generator::decode_family;
use crate::order::{lex_compare, RankKey};
use crate::par;
use crate::rng::{self, Purpose};
use crate::task::TaskContext;
use crate::types::{Candidate, Id, LatentPoint};

/// Weighted dual-target affinity minus a penalty on the gap between targets.
pub fn balance_affinity(a: f64, b: f64, ctx: &TaskContext) -> f64 {
    ctx.w_a * a + ctx.w_b * b - ctx.lambda_bal * (a - b).abs()
}

/// Balance-aware affinity from a candidate's stage estimates, or negative
/// infinity when either is missing.
pub fn stage_affinity(m: &Candidate, stage_index: usize, ctx: &TaskContext) -> f64 {
    match m.affinity.pair(stage_index) {
        Some((a, b)) if a.is_finite() && b.is_finite() => balance_affinity(a, b, ctx),
        _ => f64::NEG_INFINITY,
    }
}

/// Distance from `m` to its nearest other member of `pool`; zero for a
/// singleton pool. `m` is matched by id.
pub fn diversity_term(m: &Candidate, pool: &[Candidate]) -> f64 {
    pool.iter()
        .filter(|o| o.id != m.id)
        .map(|o| tanimoto_distance(m, o))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate_id: Id,
    pub feasible: bool,
    pub h: f64,
    pub f_aff: f64,
    pub q_chem: f64,
    pub q_div: f64,
    pub beta_chem: f64,
    pub beta_div: f64,
}

impl ScoredCandidate {
    pub fn rank_key(&self) -> RankKey {
        RankKey::new(self.feasible, self.h, self.candidate_id)
    }

    pub fn chem_term(&self) -> f64 {
        self.beta_chem * self.q_chem
    }

    pub fn div_term(&self) -> f64 {
        self.beta_div * self.q_div
    }
}

fn compose(f_aff: f64, beta_chem: f64, q_chem: f64, beta_div: f64, q_div: f64) -> f64 {
    f_aff + beta_chem * q_chem + beta_div * q_div
}

/// Stage score of `m` relative to the incoming `pool`.
pub fn stage_score(
    m: &Candidate,
    pool: &[Candidate],
    stage_index: usize,
    cfg: &SearchConfig,
    ctx: &TaskContext,
) -> ScoredCandidate {
    let f_aff = stage_affinity(m, stage_index, ctx);
    let q_chem = chemistry_score(m);
    let q_div = diversity_term(m, pool);
    let beta_chem = cfg.beta_chem_at(stage_index);
    let beta_div = cfg.beta_div_subset;
    let feasible = f_aff.is_finite() && feasibility(m, cfg, stage_index, None).feasible;
    ScoredCandidate {
        candidate_id: m.id,
        feasible,
        h: compose(f_aff, beta_chem, q_chem, beta_div, q_div),
        f_aff,
        q_chem,
        q_div,
        beta_chem,
        beta_div,
    }
}

/// Scores every member of `pool` against the whole pool.
pub fn score_pool(
    pool: &[Candidate],
    stage_index: usize,
    cfg: &SearchConfig,
    ctx: &TaskContext,
) -> Vec<ScoredCandidate> {
    par::map(pool, |m| stage_score(m, pool, stage_index, cfg, ctx))
}

/// Mean of the `top_l` best stage-1 scores under the feasibility-first order.
pub fn top_l_mean(scores: &[ScoredCandidate], top_l: usize) -> f64 {
    if scores.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut keys: Vec<RankKey> = scores.iter().map(ScoredCandidate::rank_key).collect();
    keys.sort_by(lex_compare);
    let l = top_l.clamp(1, keys.len());
    keys[..l].iter().map(|k| k.score).sum::<f64>() / l as f64
}

/// Family-level utility of a latent point: decode `eval_samples` candidates,
/// score them at stage 1 with diversity measured inside the family, and
/// average the top-L scores.
pub fn family_utility(
    z: &LatentPoint,
    ctx: &TaskContext,
    cfg: &SearchConfig,
    rng_seed: u64,
    first_id: Id,
) -> Result<f64> {
    let mut family = decode_family(z, ctx, cfg.eval_samples, rng_seed, first_id)?;
    let stage = *cfg.stage(1)?;
    let noise_seed = rng::derive(rng_seed, Purpose::Fitness, &[]);
    for m in family.iter_mut() {
        evaluate_stage(m, &stage, noise_seed);
    }
    let scores: Vec<ScoredCandidate> = family.iter().map(|m| stage_score(m, &family, 1, cfg, ctx)).collect();
    Ok(top_l_mean(&scores, cfg.top_l))
}

/// Average pairwise distance over distinct members.
pub fn mean_pairwise_distance(members: &[&Candidate]) -> f64 {
    let n = members.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += tanimoto_distance(members[i], members[j]);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Set-level panel utility, evaluated with final-stage affinities.
///
/// `J = mean(eta_aff * f_aff + eta_chem * q_chem) + eta_div * D(S)
///      - beta_bal_subset * mean |A_a - A_b|`, and `J(empty) = -inf`.
/// Members are summed in id order so the value does not depend on input order.
pub fn panel_utility(members: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> f64 {
    let mut refs: Vec<&Candidate> = members.iter().collect();
    panel_utility_refs(&mut refs, cfg, ctx)
}

pub(crate) fn panel_utility_refs(members: &mut [&Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> f64 {
    if members.is_empty() {
        return f64::NEG_INFINITY;
    }
    members.sort_by_key(|m| m.id);
    let stage = cfg.num_stages();
    let n = members.len() as f64;
    let mut individual = 0.0;
    let mut gap = 0.0;
    for m in members.iter() {
        let Some((a, b)) = m.affinity.pair(stage) else {
            return f64::NEG_INFINITY;
        };
        individual += cfg.eta_aff * balance_affinity(a, b, ctx) + cfg.eta_chem * chemistry_score(m);
        gap += (a - b).abs();
    }
    individual / n + cfg.eta_div * mean_pairwise_distance(members) - cfg.beta_bal_subset * gap / n
}
