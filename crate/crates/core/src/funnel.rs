//! Stage-wise environmental selection.

use serde::{Deserialize, Serialize};

use crate::config::{EvaluatorStage, SearchConfig};
use crate::error::{Result, ReuseError};
use crate::evaluators::evaluate_stage;
use crate::order::{lex_compare, RankKey};
use crate::par;
use crate::scoring::{score_pool, ScoredCandidate};
use crate::task::TaskContext;
use crate::types::{Candidate, Id};

/// Candidates surviving stage `stage_index`, kept in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePool {
    pub stage_index: usize,
    pub members: Vec<Candidate>,
    pub budget: Option<usize>,
}

impl StagePool {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<Id> {
        self.members.iter().map(|m| m.id).collect()
    }
}

/// Unions decoded families into the stage-0 pool.
pub fn pool_offspring(families: Vec<Vec<Candidate>>) -> StagePool {
    let mut members: Vec<Candidate> = families.into_iter().flatten().collect();
    members.sort_by_key(|m| m.id);
    StagePool {
        stage_index: 0,
        members,
        budget: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub survivors: StagePool,
    /// Scores of every incoming candidate, in incoming (id) order.
    pub scored: Vec<ScoredCandidate>,
    /// Incoming candidates with this stage's affinities attached.
    pub evaluated: Vec<Candidate>,
    pub cost: f64,
}

/// Keeps the top `budget` candidates of `scored` under the stage preference.
/// Returns indices into `scored`.
pub fn top_b(scored: &[ScoredCandidate], budget: usize) -> Vec<usize> {
    let mut order: Vec<(RankKey, usize)> = scored.iter().enumerate().map(|(i, s)| (s.rank_key(), i)).collect();
    order.sort_by(|a, b| lex_compare(&a.0, &b.0));
    order.truncate(budget.min(scored.len()));
    order.into_iter().map(|(_, i)| i).collect()
}

/// Runs one stage: evaluate, score against the incoming pool, truncate.
pub fn run_stage(
    pool: &StagePool,
    stage: &EvaluatorStage,
    cfg: &SearchConfig,
    ctx: &TaskContext,
    rng_seed: u64,
) -> Result<StageOutcome> {
    if pool.stage_index + 1 != stage.stage_index {
        return Err(ReuseError::Precondition(format!(
            "stage {} expects an incoming pool from stage {}, got {}",
            stage.stage_index,
            stage.stage_index.saturating_sub(1),
            pool.stage_index
        )));
    }
    let budget = *cfg
        .stage_budgets
        .get(stage.stage_index - 1)
        .ok_or_else(|| ReuseError::Config(format!("no budget for stage {}", stage.stage_index)))?;

    let evaluated: Vec<Candidate> = par::map(&pool.members, |m| {
        let mut m = m.clone();
        evaluate_stage(&mut m, stage, rng_seed);
        m
    });
    let scored = score_pool(&evaluated, stage.stage_index, cfg, ctx);
    let mut keep = top_b(&scored, budget);
    keep.sort_unstable();
    let members = keep.iter().map(|&i| evaluated[i].clone()).collect();
    Ok(StageOutcome {
        survivors: StagePool {
            stage_index: stage.stage_index,
            members,
            budget: Some(budget),
        },
        cost: pool.len() as f64 * stage.cost_units,
        scored,
        evaluated,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunnelOutcome {
    /// Pools for stages 0..=S.
    pub pools: Vec<StagePool>,
    /// Per-stage scores of the incoming pool, for stages 1..=S.
    pub scored: Vec<Vec<ScoredCandidate>>,
    /// Incoming pool of each stage 1..=S with that stage's affinities attached.
    pub evaluated: Vec<Vec<Candidate>>,
    pub cost: f64,
}

impl FunnelOutcome {
    pub fn terminal(&self) -> &StagePool {
        self.pools.last().expect("funnel always holds the stage-0 pool")
    }

    /// Final-stage scores of the terminal survivors, in id order.
    pub fn terminal_scores(&self) -> Vec<ScoredCandidate> {
        let Some(last) = self.scored.last() else {
            return Vec::new();
        };
        let ids = self.terminal().ids();
        last.iter()
            .filter(|s| ids.binary_search(&s.candidate_id).is_ok())
            .cloned()
            .collect()
    }
}

/// Applies every configured stage in turn.
pub fn run_funnel(pool0: StagePool, cfg: &SearchConfig, ctx: &TaskContext, rng_seed: u64) -> Result<FunnelOutcome> {
    let mut pools = vec![pool0];
    let mut scored = Vec::with_capacity(cfg.num_stages());
    let mut evaluated = Vec::with_capacity(cfg.num_stages());
    let mut cost = 0.0;
    for stage in &cfg.funnel {
        let out = run_stage(pools.last().expect("non-empty"), stage, cfg, ctx, rng_seed)?;
        cost += out.cost;
        scored.push(out.scored);
        evaluated.push(out.evaluated);
        pools.push(out.survivors);
    }
    Ok(FunnelOutcome {
        pools,
        scored,
        evaluated,
        cost,
    })
}
