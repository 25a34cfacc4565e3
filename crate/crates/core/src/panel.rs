//! Final panel construction: the size-N, feasible, pairwise tau-diverse
//! subset of the terminal pool with the largest panel utility.

use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::evaluators::{chemistry_score, feasibility, tanimoto_distance};
use crate::par;
use crate::scoring::{balance_affinity, panel_utility, panel_utility_refs, stage_affinity};
use crate::task::TaskContext;
use crate::types::{Candidate, Id};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub members: Vec<Candidate>,
    #[serde(with = "crate::trace::neg_inf_as_null")]
    pub utility: f64,
    pub source_iteration: Option<usize>,
}

impl Panel {
    pub fn empty() -> Self {
        Self {
            members: Vec::new(),
            utility: f64::NEG_INFINITY,
            source_iteration: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn ids(&self) -> Vec<Id> {
        self.members.iter().map(|m| m.id).collect()
    }

    fn from_members(mut members: Vec<Candidate>, cfg: &SearchConfig, ctx: &TaskContext) -> Self {
        members.sort_by_key(|m| m.id);
        let utility = panel_utility(&members, cfg, ctx);
        Self {
            members,
            utility,
            source_iteration: None,
        }
    }

    /// Checks the hard panel constraints. Returns a description of the first
    /// violation found.
    pub fn check_constraints(&self, cfg: &SearchConfig, ctx: &TaskContext) -> std::result::Result<(), String> {
        if self.is_empty() {
            return if self.utility == f64::NEG_INFINITY {
                Ok(())
            } else {
                Err(format!("empty panel has utility {}", self.utility))
            };
        }
        if self.members.len() != cfg.panel_size {
            return Err(format!(
                "panel has {} members, expected {}",
                self.members.len(),
                cfg.panel_size
            ));
        }
        if let Some(m) = self.members.iter().find(|m| !panel_feasible(m, cfg, ctx)) {
            return Err(format!("member {} is infeasible", m.id));
        }
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                let d = tanimoto_distance(a, b);
                if d < cfg.tau {
                    return Err(format!(
                        "members {} and {} are {d:.4} apart, below tau {}",
                        a.id, b.id, cfg.tau
                    ));
                }
            }
        }
        let j = panel_utility(&self.members, cfg, ctx);
        if (j - self.utility).abs() > 1e-9 {
            return Err(format!("stored utility {} differs from recomputed {j}", self.utility));
        }
        Ok(())
    }
}

/// Hard feasibility at the final stage.
pub fn panel_feasible(m: &Candidate, cfg: &SearchConfig, ctx: &TaskContext) -> bool {
    let s = cfg.num_stages();
    feasibility(m, cfg, s, None).feasible && stage_affinity(m, s, ctx).is_finite()
}

/// Feasible members sorted by id.
fn feasible_members<'a>(pool: &'a [Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> Vec<&'a Candidate> {
    let mut v: Vec<&Candidate> = pool.iter().filter(|m| panel_feasible(m, cfg, ctx)).collect();
    v.sort_by_key(|m| m.id);
    v
}

fn compatibility(members: &[&Candidate], tau: f64) -> Vec<Vec<bool>> {
    let n = members.len();
    let mut ok = vec![vec![false; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = tanimoto_distance(members[i], members[j]) >= tau;
            ok[i][j] = c;
            ok[j][i] = c;
        }
    }
    ok
}

fn clique_exists(ok: &[Vec<bool>], chosen: &mut Vec<usize>, start: usize, need: usize) -> bool {
    if chosen.len() == need {
        return true;
    }
    let n = ok.len();
    for i in start..n {
        if n - i < need - chosen.len() {
            return false;
        }
        if chosen.iter().all(|&c| ok[c][i]) {
            chosen.push(i);
            if clique_exists(ok, chosen, i + 1, need) {
                return true;
            }
            chosen.pop();
        }
    }
    false
}

/// Whether some size-N, feasible, pairwise tau-diverse subset exists. Exact
/// up to `exact_cap` feasible members; beyond that a greedy witness is sought.
pub fn feasible_family_nonempty(pool: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> bool {
    let feas = feasible_members(pool, cfg, ctx);
    if feas.len() < cfg.panel_size {
        return false;
    }
    if feas.len() <= cfg.exact_cap {
        let ok = compatibility(&feas, cfg.tau);
        clique_exists(&ok, &mut Vec::with_capacity(cfg.panel_size), 0, cfg.panel_size)
    } else {
        !build_panel_greedy(pool, cfg, ctx).is_empty()
    }
}

/// Per-member contribution to the panel utility, excluding the diversity term.
fn individual_value(m: &Candidate, cfg: &SearchConfig, ctx: &TaskContext) -> f64 {
    let (a, b) = m
        .affinity
        .pair(cfg.num_stages())
        .expect("feasible members carry final affinities");
    cfg.eta_aff * balance_affinity(a, b, ctx) + cfg.eta_chem * chemistry_score(m) - cfg.beta_bal_subset * (a - b).abs()
}

struct Search<'a> {
    members: &'a [&'a Candidate],
    ok: Vec<Vec<bool>>,
    dist: Vec<Vec<f64>>,
    value: Vec<f64>,
    /// `suffix_best[i]` holds values of members `i..` sorted descending.
    suffix_best: Vec<Vec<f64>>,
    n_pick: usize,
    eta_div: f64,
    cfg: &'a SearchConfig,
    ctx: &'a TaskContext,
}

#[derive(Debug, Clone)]
struct Best {
    utility: f64,
    picks: Vec<usize>,
}

const BOUND_SLACK: f64 = 1e-9;

impl Search<'_> {
    fn upper_bound(&self, chosen: &[usize], next: usize, value_sum: f64, dist_sum: f64) -> f64 {
        let k = chosen.len();
        let need = self.n_pick - k;
        let rest: f64 = self.suffix_best[next].iter().take(need).sum();
        let pairs_total = (self.n_pick * (self.n_pick - 1) / 2) as f64;
        let pairs_open = pairs_total - (k * k.saturating_sub(1) / 2) as f64;
        let div_bound = if self.eta_div >= 0.0 {
            self.eta_div * (dist_sum + pairs_open) / pairs_total
        } else {
            self.eta_div * dist_sum / pairs_total
        };
        (value_sum + rest) / self.n_pick as f64 + div_bound
    }

    fn dfs(&self, chosen: &mut Vec<usize>, next: usize, value_sum: f64, dist_sum: f64, best: &mut Option<Best>) {
        if chosen.len() == self.n_pick {
            let mut refs: Vec<&Candidate> = chosen.iter().map(|&i| self.members[i]).collect();
            let j = panel_utility_refs(&mut refs, self.cfg, self.ctx);
            if best.as_ref().is_none_or(|b| j > b.utility) {
                *best = Some(Best {
                    utility: j,
                    picks: chosen.clone(),
                });
            }
            return;
        }
        let n = self.members.len();
        for i in next..n {
            if n - i < self.n_pick - chosen.len() {
                return;
            }
            if !chosen.iter().all(|&c| self.ok[c][i]) {
                continue;
            }
            let v = value_sum + self.value[i];
            let d = dist_sum + chosen.iter().map(|&c| self.dist[c][i]).sum::<f64>();
            chosen.push(i);
            let prune = best.as_ref().is_some_and(|b| {
                chosen.len() < self.n_pick && self.upper_bound(chosen, i + 1, v, d) < b.utility - BOUND_SLACK
            });
            if !prune {
                self.dfs(chosen, i + 1, v, d, best);
            }
            chosen.pop();
        }
    }
}

/// Picks the better of two results: larger utility, then the smaller index
/// tuple (indices follow id order, so this is the smaller id tuple).
fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.utility > a.utility || (b.utility == a.utility && b.picks < a.picks) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// Exhaustive subset search over the feasible members of `pool`.
///
/// Branches are cut when the tau constraint fails, when too few members
/// remain, or when an upper bound on the completion's utility falls below the
/// best panel found so far. Work is split by first member; each branch keeps
/// its own incumbent so the result does not depend on scheduling.
pub fn build_panel_exact(pool: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> Panel {
    let feas = feasible_members(pool, cfg, ctx);
    let n_pick = cfg.panel_size;
    if feas.len() < n_pick {
        return Panel::empty();
    }
    let n = feas.len();
    let ok = compatibility(&feas, cfg.tau);
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| tanimoto_distance(feas[i], feas[j])).collect())
        .collect();
    let value: Vec<f64> = feas.iter().map(|m| individual_value(m, cfg, ctx)).collect();
    let suffix_best = (0..=n)
        .map(|i| {
            let mut v = value[i.min(n)..].to_vec();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
        .collect();
    let search = Search {
        members: &feas,
        ok,
        dist,
        value,
        suffix_best,
        n_pick,
        eta_div: cfg.eta_div,
        cfg,
        ctx,
    };
    let branches = n - n_pick + 1;
    let results = par::map_range(branches, |first| {
        let mut best = None;
        let mut chosen = vec![first];
        search.dfs(&mut chosen, first + 1, search.value[first], 0.0, &mut best);
        best
    });
    match results.into_iter().fold(None, better) {
        Some(best) => {
            let members: Vec<Candidate> = best.picks.iter().map(|&i| feas[i].clone()).collect();
            Panel::from_members(members, cfg, ctx)
        }
        None => Panel::empty(),
    }
}

/// Greedy construction: seed with the best individual score, then add the
/// compatible member with the largest resulting panel utility.
pub fn build_panel_greedy(pool: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> Panel {
    let feas = feasible_members(pool, cfg, ctx);
    if feas.len() < cfg.panel_size {
        return Panel::empty();
    }
    let s = cfg.num_stages();
    let seed_score = |m: &Candidate| cfg.eta_aff * stage_affinity(m, s, ctx) + cfg.eta_chem * chemistry_score(m);
    let mut chosen: Vec<&Candidate> = Vec::with_capacity(cfg.panel_size);
    let mut seed = feas[0];
    for &m in &feas[1..] {
        if seed_score(m) > seed_score(seed) {
            seed = m;
        }
    }
    chosen.push(seed);
    while chosen.len() < cfg.panel_size {
        let mut pick: Option<(&Candidate, f64)> = None;
        for &m in &feas {
            if chosen.iter().any(|c| c.id == m.id) {
                continue;
            }
            if chosen.iter().any(|c| tanimoto_distance(c, m) < cfg.tau) {
                continue;
            }
            let mut trial: Vec<&Candidate> = chosen.clone();
            trial.push(m);
            let j = panel_utility_refs(&mut trial, cfg, ctx);
            if pick.is_none_or(|(_, best)| j > best) {
                pick = Some((m, j));
            }
        }
        match pick {
            Some((m, _)) => chosen.push(m),
            None => return Panel::empty(),
        }
    }
    Panel::from_members(chosen.into_iter().cloned().collect(), cfg, ctx)
}

/// Exact search when the feasible pool is within `exact_cap`, greedy otherwise.
pub fn build_panel(pool: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> Panel {
    let feasible = pool.iter().filter(|m| panel_feasible(m, cfg, ctx)).count();
    if feasible <= cfg.exact_cap {
        build_panel_exact(pool, cfg, ctx)
    } else {
        build_panel_greedy(pool, cfg, ctx)
    }
}

/// Keeps `current` unless `challenger` is strictly better.
pub fn update_incumbent(current: Panel, challenger: Panel) -> Panel {
    if challenger.utility > current.utility {
        challenger
    } else {
        current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::types::{Fingerprint, Target};

    fn cand(id: Id, fp: u64, a: f64, qed: f64) -> Candidate {
        let mut c = Candidate::synthetic(id, Fingerprint(fp), [a, a], qed, 0.8);
        c.affinity.set(1, Target::A, a);
        c.affinity.set(1, Target::B, a);
        c.affinity.set(2, Target::A, a);
        c.affinity.set(2, Target::B, a);
        c
    }

    fn small_cfg(n: usize) -> SearchConfig {
        let mut cfg = default_config();
        cfg.panel_size = n;
        cfg
    }

    #[test]
    fn feasible_family_examples() {
        let ctx = TaskContext::default_dual_bowl(10);
        let cfg = small_cfg(2);
        // {0,1} vs {0,2,3}: 1 - 1/4 = 0.75
        let two = vec![cand(1, 0b0011, 1.0, 0.8), cand(2, 0b1101, 1.0, 0.8)];
        assert!(feasible_family_nonempty(&two, &cfg, &ctx));
        let clones = vec![
            cand(1, 0b0011, 1.0, 0.8),
            cand(2, 0b0011, 1.0, 0.8),
            cand(3, 0b0011, 1.0, 0.8),
        ];
        assert!(!feasible_family_nonempty(&clones, &cfg, &ctx));
        let cfg10 = small_cfg(10);
        let nine: Vec<Candidate> = (0..9).map(|i| cand(i, 1 << i, 1.0, 0.8)).collect();
        assert!(!feasible_family_nonempty(&nine, &cfg10, &ctx));
    }

    #[test]
    fn exact_returns_empty_without_feasible_subset() {
        let ctx = TaskContext::default_dual_bowl(10);
        let cfg = small_cfg(3);
        let pool = vec![cand(1, 1, 5.0, 0.8), cand(2, 2, 5.0, 0.1), cand(3, 4, 5.0, 0.8)];
        let p = build_panel_exact(&pool, &cfg, &ctx);
        assert!(p.is_empty());
        assert_eq!(p.utility, f64::NEG_INFINITY);
    }

    #[test]
    fn exact_returns_the_unique_feasible_subset() {
        let ctx = TaskContext::default_dual_bowl(10);
        let cfg = small_cfg(3);
        // 1, 2, 4 are mutually disjoint; 6 is infeasible
        let mut pool = vec![
            cand(1, 0b0001, 1.0, 0.8),
            cand(2, 0b0010, 1.0, 0.8),
            cand(4, 0b0100, 1.0, 0.8),
            cand(6, 0b1000, 9.0, 0.2),
        ];
        let p = build_panel_exact(&pool, &cfg, &ctx);
        assert_eq!(p.ids(), vec![1, 2, 4]);
        p.check_constraints(&cfg, &ctx).unwrap();

        // a stronger clone of 1 displaces it but cannot join it
        pool.push(cand(5, 0b0001, 9.0, 0.8));
        let p = build_panel_exact(&pool, &cfg, &ctx);
        assert_eq!(p.ids(), vec![2, 4, 5]);
    }

    #[test]
    fn equal_utility_ties_pick_smallest_id_tuple() {
        let ctx = TaskContext::default_dual_bowl(10);
        let cfg = small_cfg(2);
        let pool: Vec<Candidate> = (0..4).map(|i| cand(10 - i, 1 << i, 3.0, 0.8)).collect();
        let p = build_panel_exact(&pool, &cfg, &ctx);
        assert_eq!(p.ids(), vec![7, 8]);
    }

    #[test]
    fn greedy_matches_exact_on_separable_pool() {
        let ctx = TaskContext::default_dual_bowl(10);
        let cfg = small_cfg(3);
        let pool: Vec<Candidate> = (0..6).map(|i| cand(i, 0b11 << (2 * i), i as f64, 0.8)).collect();
        let g = build_panel_greedy(&pool, &cfg, &ctx);
        let e = build_panel_exact(&pool, &cfg, &ctx);
        assert_eq!(g.ids(), e.ids());
        assert_eq!(g.ids(), vec![3, 4, 5]);
    }

    #[test]
    fn greedy_on_infeasible_pool_is_empty() {
        let ctx = TaskContext::default_dual_bowl(10);
        let cfg = small_cfg(2);
        let pool: Vec<Candidate> = (0..5).map(|i| cand(i, 1 << i, 1.0, 0.1)).collect();
        assert!(build_panel_greedy(&pool, &cfg, &ctx).is_empty());
    }

    #[test]
    fn incumbent_update_keeps_the_max() {
        let mut p = Panel::empty();
        p.utility = 5.0;
        p.members.push(cand(1, 1, 1.0, 0.8));
        let mut q = Panel::empty();
        q.utility = 3.0;
        q.members.push(cand(2, 2, 1.0, 0.8));
        assert_eq!(update_incumbent(Panel::empty(), p.clone()).utility, 5.0);
        assert_eq!(update_incumbent(p.clone(), q.clone()).ids(), vec![1]);
        let mut tie = q.clone();
        tie.utility = 5.0;
        assert_eq!(update_incumbent(p, tie).ids(), vec![1]);
    }
}
