//! Property suites checked over seeded runs and constructed pools. Each
//! property carries its own brute-force or direct-definition check.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::analysis::harness::{hitting_probability_experiment, run_seed};
use crate::config::{default_config, SearchConfig};
use crate::engine::{run_search, spawn_offspring};
use crate::error::{Result, ReuseError};
use crate::evaluators::fingerprint_distance;
use crate::funnel::{pool_offspring, run_funnel, FunnelOutcome};
use crate::generator::PriorSpec;
use crate::order::lex_compare;
use crate::panel::{build_panel_exact, panel_feasible};
use crate::par;
use crate::rng::{self, Purpose};
use crate::scoring::panel_utility;
use crate::task::TaskContext;
use crate::trace::{Operator, TraceRecord};
use crate::types::{Candidate, Fingerprint, Id, IdAllocator, LatentPoint, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorems,
    Funnel,
    Panel,
    Hitting,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Theorems, Suite::Funnel, Suite::Panel, Suite::Hitting];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorems => "theorems",
            Suite::Funnel => "funnel",
            Suite::Panel => "panel",
            Suite::Hitting => "hitting",
        }
    }

    /// Runs, pools or seeds checked when `--runs` is not given.
    pub fn default_runs(self) -> usize {
        match self {
            Suite::Theorems => 100,
            Suite::Funnel => 500,
            Suite::Panel => 200,
            Suite::Hitting => 2000,
        }
    }
}

impl FromStr for Suite {
    type Err = ReuseError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            ReuseError::Input(format!(
                "unknown suite `{s}` (expected theorems, funnel, panel or hitting)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub checked: usize,
    pub violations: usize,
    /// First violation, or a summary statistic.
    pub detail: String,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl fmt::Display for PropertyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} checked, {} violations",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checked,
            self.violations
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Accumulates violations and remembers the first one.
struct Tally {
    name: &'static str,
    checked: usize,
    violations: usize,
    detail: String,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            violations: 0,
            detail: String::new(),
        }
    }

    fn check(&mut self, ok: bool, why: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            if self.violations == 0 {
                self.detail = why();
            }
            self.violations += 1;
        }
    }

    fn finish(self) -> PropertyOutcome {
        PropertyOutcome {
            name: self.name,
            checked: self.checked,
            violations: self.violations,
            detail: self.detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub outcomes: Vec<PropertyOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(PropertyOutcome::passed)
    }
}

pub fn run_suite(suite: Suite, runs: Option<usize>, seed: u64) -> Result<SuiteReport> {
    let n = runs.unwrap_or(suite.default_runs());
    let outcomes = match suite {
        Suite::Theorems => theorems(n, seed)?,
        Suite::Funnel => funnel_suite(n, seed)?,
        Suite::Panel => vec![panel_oracle(n, seed)],
        Suite::Hitting => vec![hitting(n, seed)?],
    };
    Ok(SuiteReport { suite, outcomes })
}

/// Seeded runs of the default configuration on the default task.
pub fn seeded_runs(runs: usize, base: u64) -> Result<Vec<crate::engine::RunResult>> {
    let ctx = TaskContext::default_dual_bowl(default_config().latent_dim);
    par::map_range(runs, |r| {
        let mut cfg = default_config();
        cfg.seed = run_seed(base, r);
        run_search(&ctx, &cfg)
    })
    .into_iter()
    .collect()
}

fn theorems(runs: usize, seed: u64) -> Result<Vec<PropertyOutcome>> {
    let cfg = default_config();
    let ctx = TaskContext::default_dual_bowl(cfg.latent_dim);
    let results = seeded_runs(runs, seed)?;

    let mut mono = Tally::new("incumbent monotonicity");
    let mut nested = Tally::new("stage nestedness and budget compliance");
    let mut constraints = Tally::new("panel constraint preservation");
    let mut bookkeeping = Tally::new("incumbent equals best panel; trace length equals T");
    for (r, res) in results.iter().enumerate() {
        let utils: Vec<f64> = res.trace.iter().map(|t| t.incumbent_utility).collect();
        mono.check(utils.windows(2).all(|w| w[0] <= w[1]), || format!("run {r}: {utils:?}"));
        for rec in &res.trace {
            let bad = nestedness_violation(rec, &cfg);
            nested.check(bad.is_none(), || format!("run {r}: {}", bad.unwrap_or_default()));
            let bad = trace_panel_violation(rec, &rec.panel, &cfg);
            constraints.check(bad.is_none(), || format!("run {r} panel: {}", bad.unwrap_or_default()));
        }
        let inc = res.incumbent.check_constraints(&cfg, &ctx);
        constraints.check(inc.is_ok(), || format!("run {r} incumbent: {}", inc.unwrap_err()));
        let best = res
            .trace
            .iter()
            .map(|t| t.panel_utility)
            .fold(f64::NEG_INFINITY, f64::max);
        bookkeeping.check(
            res.trace.len() == cfg.iterations && res.incumbent.utility == best,
            || format!("run {r}: incumbent {} vs best {best}", res.incumbent.utility),
        );
    }
    Ok(vec![
        mono.finish(),
        nested.finish(),
        constraints.finish(),
        bookkeeping.finish(),
        operator_mixture(10_000, seed)?,
    ])
}

/// Checks `C_s ⊆ C_{s-1}` and `|C_s| = min(|C_{s-1}|, B_s)` for every stage.
pub fn nestedness_violation(rec: &TraceRecord, cfg: &SearchConfig) -> Option<String> {
    for (prev, cur) in rec.stages.iter().zip(rec.stages.iter().skip(1)) {
        let budget = cfg.stage_budgets[cur.stage - 1];
        if cur.members.len() != prev.members.len().min(budget) {
            return Some(format!(
                "iteration {} stage {}: size {} with budget {budget} from {}",
                rec.iteration,
                cur.stage,
                cur.members.len(),
                prev.members.len()
            ));
        }
        if let Some(id) = cur.members.iter().find(|id| !prev.members.contains(id)) {
            return Some(format!(
                "iteration {} stage {}: {id} not in previous pool",
                rec.iteration, cur.stage
            ));
        }
    }
    None
}

/// Size, feasibility and pairwise distance of a panel recorded in a trace.
pub fn trace_panel_violation(rec: &TraceRecord, panel: &[Id], cfg: &SearchConfig) -> Option<String> {
    if panel.is_empty() {
        return None;
    }
    if panel.len() != cfg.panel_size {
        return Some(format!("iteration {}: {} members", rec.iteration, panel.len()));
    }
    let s = rec.terminal_stage();
    let mut members = Vec::with_capacity(panel.len());
    for &id in panel {
        let Some(c) = rec.candidate(id) else {
            return Some(format!("iteration {}: member {id} missing", rec.iteration));
        };
        if !c.score_at(s).is_some_and(|x| x.feasible) {
            return Some(format!("iteration {}: member {id} infeasible", rec.iteration));
        }
        members.push(c);
    }
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            let d = fingerprint_distance(Fingerprint(a.features), Fingerprint(b.features));
            if d < cfg.tau {
                return Some(format!(
                    "iteration {}: {} and {} at distance {d}",
                    rec.iteration, a.id, b.id
                ));
            }
        }
    }
    None
}

/// Empirical operator frequencies over `draws` offspring.
pub fn operator_counts(draws: usize, seed: u64) -> Result<[usize; 3]> {
    let cfg = default_config();
    let ctx = TaskContext::default_dual_bowl(cfg.latent_dim);
    let parents: Vec<LatentPoint> = (0..cfg.parents as Id)
        .map(|i| LatentPoint::new(i, vec![i as f64; cfg.latent_dim], 0))
        .collect();
    let batches = draws.div_ceil(cfg.offspring);
    let mut ids = IdAllocator::new(cfg.parents as Id);
    let mut counts = [0usize; 3];
    let mut seen = 0;
    for b in 0..batches {
        let seed_b = rng::derive(seed, Purpose::Harness, &[0x0FF5, b as u64]);
        for o in spawn_offspring(&parents, 0, &ctx, &cfg, seed_b, &mut ids)? {
            if seen == draws {
                break;
            }
            seen += 1;
            counts[match o.operator {
                Operator::Mutation => 0,
                Operator::Crossover => 1,
                Operator::Immigration => 2,
            }] += 1;
        }
    }
    Ok(counts)
}

pub const OPERATOR_TOLERANCE: f64 = 0.02;

fn operator_mixture(draws: usize, seed: u64) -> Result<PropertyOutcome> {
    let cfg = default_config();
    let counts = operator_counts(draws, seed)?;
    let freq = counts.map(|c| c as f64 / draws as f64);
    let target = [cfg.alpha_mut, cfg.alpha_cross, cfg.alpha_imm];
    let mut t = Tally::new("operator mixture frequencies");
    for (f, a) in freq.iter().zip(target) {
        t.check((f - a).abs() <= OPERATOR_TOLERANCE, || {
            format!("{freq:?} vs {target:?}")
        });
    }
    let mut out = t.finish();
    if out.passed() {
        out.detail = format!("{:.4}/{:.4}/{:.4}", freq[0], freq[1], freq[2]);
    }
    Ok(out)
}

/// Constructed candidate pools.
pub mod pools {
    use super::*;

    /// Fingerprints clustered around a few random scaffolds, so that members
    /// of one scaffold sit close together and the diversity floor binds.
    pub fn scaffold_fingerprints<R: RngCore>(rng: &mut R, n: usize) -> Vec<Fingerprint> {
        let scaffolds: Vec<u64> = (0..rng.random_range(2..=5))
            .map(|_| rng.next_u64() & rng.next_u64())
            .collect();
        (0..n)
            .map(|_| {
                let mut fp = scaffolds[rng.random_range(0..scaffolds.len())];
                for _ in 0..rng.random_range(0..4) {
                    fp ^= 1u64 << rng.random_range(0..64);
                }
                Fingerprint(fp | 1)
            })
            .collect()
    }

    /// A terminal pool with final-stage affinities already recorded. Roughly
    /// a fifth of the members miss a chemistry floor.
    pub fn terminal_pool<R: RngCore>(rng: &mut R, n: usize, cfg: &SearchConfig) -> Vec<Candidate> {
        let fps = scaffold_fingerprints(rng, n);
        let s = cfg.num_stages();
        fps.into_iter()
            .enumerate()
            .map(|(i, fp)| {
                let (a, b) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
                let qed = if rng.random_bool(0.2) {
                    0.3
                } else {
                    rng.random_range(0.5..1.0)
                };
                let mut c = Candidate::synthetic(i as Id, fp, [a, b], qed, rng.random_range(0.5..1.0));
                for stage in 1..=s {
                    c.affinity.set(stage, Target::A, a);
                    c.affinity.set(stage, Target::B, b);
                }
                c
            })
            .collect()
    }

    /// Feasible candidates with low affinity mixed with infeasible ones
    /// (chemistry floor or validity) with high affinity, and random budgets.
    pub fn adversarial_pool<R: RngCore>(rng: &mut R, cfg: &mut SearchConfig) -> Vec<Candidate> {
        let n = rng.random_range(4..=60);
        let b1 = rng.random_range(1..=n);
        let b2 = rng.random_range(1..=b1);
        cfg.stage_budgets = vec![b1, b2];
        let fps = scaffold_fingerprints(rng, n);
        let mut ids: Vec<Id> = (0..n as Id).collect();
        ids.shuffle(rng);
        fps.into_iter()
            .zip(ids)
            .map(|(fp, id)| {
                if rng.random_bool(0.5) {
                    let a = rng.random_range(0.0..3.0);
                    Candidate::synthetic(id, fp, [a, rng.random_range(0.0..3.0)], 0.9, 0.9)
                } else {
                    let a = rng.random_range(7.0..10.0);
                    let mut c = Candidate::synthetic(id, fp, [a, rng.random_range(7.0..10.0)], 0.9, 0.9);
                    match rng.random_range(0..3) {
                        0 => c.qed_like = rng.random_range(0.0..cfg.qed_floor),
                        1 => c.sa_like = rng.random_range(0.0..cfg.sa_floor),
                        _ => c.valid = false,
                    }
                    c
                }
            })
            .collect()
    }

    /// A pool with a marked feasible candidate preceded, at every stage, by
    /// at most `B_s - 1` others: a few far stronger feasible members, while
    /// the rest are either much weaker or infeasible. Returns the pool and the
    /// marked id.
    pub fn witness_pool<R: RngCore>(rng: &mut R, cfg: &mut SearchConfig) -> (Vec<Candidate>, Id) {
        let b1 = rng.random_range(2..=30);
        let b2 = rng.random_range(1..=b1);
        let n = rng.random_range(b1 + 1..=60);
        cfg.stage_budgets = vec![b1, b2];
        let dominators = rng.random_range(0..b2);
        let fps = scaffold_fingerprints(rng, n);
        let mut ids: Vec<Id> = (0..n as Id).collect();
        ids.shuffle(rng);
        let marked = ids[0];
        let pool = fps
            .into_iter()
            .zip(ids)
            .enumerate()
            .map(|(i, (fp, id))| {
                let (lo, hi, qed) = if i == 0 {
                    (45.0, 55.0, 0.9)
                } else if i <= dominators {
                    (75.0, 95.0, 0.9)
                } else if rng.random_bool(0.5) {
                    (0.0, 25.0, 0.9)
                } else {
                    (80.0, 100.0, 0.1)
                };
                let a: f64 = rng.random_range(lo..hi);
                let b = (a + rng.random_range(-2.0..2.0)).clamp(lo, hi);
                Candidate::synthetic(id, fp, [a, b], qed, 0.9)
            })
            .collect();
        (pool, marked)
    }

    pub fn stream(seed: u64, tag: u64, i: usize) -> ChaCha8Rng {
        rng::stream(seed, Purpose::Harness, &[tag, i as u64])
    }
}

/// Ids ranked ahead of `id` under the stage order, by stage.
pub fn ranked_ahead(outcome: &FunnelOutcome, id: Id) -> Vec<Option<usize>> {
    outcome
        .scored
        .iter()
        .map(|scores| {
            let key = scores.iter().find(|s| s.candidate_id == id)?.rank_key();
            Some(
                scores
                    .iter()
                    .filter(|s| lex_compare(&s.rank_key(), &key) == std::cmp::Ordering::Less)
                    .count(),
            )
        })
        .collect()
}

fn funnel_suite(pools_n: usize, seed: u64) -> Result<Vec<PropertyOutcome>> {
    let ctx = TaskContext::default_dual_bowl(default_config().latent_dim);

    let mut first = Tally::new("feasibility-first selection");
    let mut nested = Tally::new("constructed-pool nestedness and budget compliance");
    for i in 0..pools_n {
        let mut r = pools::stream(seed, 1, i);
        let mut cfg = default_config();
        let members = pools::adversarial_pool(&mut r, &mut cfg);
        let out = run_funnel(pool_offspring(vec![members]), &cfg, &ctx, r.next_u64())?;
        for (s, scores) in out.scored.iter().enumerate() {
            let kept = &out.pools[s + 1];
            let dropped_feasible = scores
                .iter()
                .any(|x| x.feasible && kept.members.binary_search_by_key(&x.candidate_id, |m| m.id).is_err());
            let kept_infeasible = scores
                .iter()
                .any(|x| !x.feasible && kept.members.binary_search_by_key(&x.candidate_id, |m| m.id).is_ok());
            first.check(!(dropped_feasible && kept_infeasible), || {
                format!("pool {i} stage {}", s + 1)
            });
            let prev = &out.pools[s];
            let ok = kept.len() == prev.len().min(cfg.stage_budgets[s])
                && kept
                    .members
                    .iter()
                    .all(|m| prev.members.binary_search_by_key(&m.id, |p| p.id).is_ok());
            nested.check(ok, || format!("pool {i} stage {}", s + 1));
        }
    }

    let mut witness = Tally::new("deterministic witness survival");
    let mut premise = Tally::new("witness construction bounds dominators");
    for i in 0..pools_n.clamp(1, 100) {
        let mut r = pools::stream(seed, 2, i);
        let mut cfg = default_config();
        let (members, marked) = pools::witness_pool(&mut r, &mut cfg);
        let out = run_funnel(pool_offspring(vec![members]), &cfg, &ctx, r.next_u64())?;
        let ahead = ranked_ahead(&out, marked);
        let held = ahead
            .iter()
            .zip(&cfg.stage_budgets)
            .all(|(a, &b)| a.is_some_and(|a| a < b));
        premise.check(held, || {
            format!("pool {i}: ranked ahead {ahead:?} budgets {:?}", cfg.stage_budgets)
        });
        witness.check(out.terminal().ids().contains(&marked), || {
            format!("pool {i}: marked {marked} eliminated")
        });
    }
    Ok(vec![
        first.finish(),
        nested.finish(),
        premise.finish(),
        witness.finish(),
    ])
}

/// Best utility over all size-N feasible, tau-diverse subsets, by enumeration.
pub fn brute_force_best(pool: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> f64 {
    let feasible: Vec<&Candidate> = pool.iter().filter(|m| panel_feasible(m, cfg, ctx)).collect();
    let n = feasible.len();
    let k = cfg.panel_size;
    let mut best = f64::NEG_INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return best;
    }
    loop {
        let subset: Vec<Candidate> = idx.iter().map(|&i| feasible[i].clone()).collect();
        let diverse =
            (0..k).all(|a| (a + 1..k).all(|b| fingerprint_distance(subset[a].features, subset[b].features) >= cfg.tau));
        if diverse {
            best = best.max(panel_utility(&subset, cfg, ctx));
        }
        // Next k-combination in lexicographic order.
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub const PANEL_TOLERANCE: f64 = 1e-9;

fn panel_oracle(pools_n: usize, seed: u64) -> PropertyOutcome {
    let mut cfg = default_config();
    cfg.panel_size = 3;
    let ctx = TaskContext::default_dual_bowl(cfg.latent_dim);
    let results = par::map_range(pools_n, |i| {
        let mut r = pools::stream(seed, 3, i);
        let n = r.random_range(1..=15);
        let pool = pools::terminal_pool(&mut r, n, &cfg);
        let exact = build_panel_exact(&pool, &cfg, &ctx);
        let brute = brute_force_best(&pool, &cfg, &ctx);
        let same = (exact.utility == brute) || (exact.utility - brute).abs() <= PANEL_TOLERANCE;
        (
            same && exact.check_constraints(&cfg, &ctx).is_ok(),
            exact.utility,
            brute,
        )
    });
    let mut t = Tally::new("exact panel equals brute-force optimum");
    for (i, (ok, e, b)) in results.into_iter().enumerate() {
        t.check(ok, || format!("pool {i}: exact {e} brute {b}"));
    }
    t.finish()
}

/// Gaussian-prior task and the half-space `{z_0 > 0}`, whose prior mass is
/// exactly one half.
pub fn half_space_setup() -> (TaskContext, SearchConfig) {
    let cfg = default_config();
    let mut ctx = TaskContext::default_dual_bowl(cfg.latent_dim);
    ctx.prior = PriorSpec::gaussian(1.0);
    (ctx, cfg)
}

fn hitting(runs: usize, seed: u64) -> Result<PropertyOutcome> {
    let (ctx, mut cfg) = half_space_setup();
    cfg.seed = seed;
    let res = hitting_probability_experiment(|z| z.coords[0] > 0.0, 0.5, &ctx, &cfg, runs)?;
    let mut t = Tally::new("finite-horizon hitting bound");
    t.check(res.passes(), String::new);
    let mut out = t.finish();
    out.detail = format!(
        "empirical {:.4} >= bound {:.4} - margin {:.4}",
        res.empirical, res.bound, res.margin
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse_by_name() {
        assert_eq!("panel".parse::<Suite>().unwrap(), Suite::Panel);
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        for suite in Suite::ALL {
            let runs = if suite == Suite::Hitting { 200 } else { 10 };
            let report = run_suite(suite, Some(runs), 0).unwrap();
            for o in &report.outcomes {
                assert!(o.passed(), "{o}");
            }
        }
    }

    #[test]
    fn brute_force_enumerates_subsets() {
        let mut cfg = default_config();
        cfg.panel_size = 3;
        let ctx = TaskContext::default_dual_bowl(10);
        assert_eq!(brute_force_best(&[], &cfg, &ctx), f64::NEG_INFINITY);
        let cand = |id: Id, fp: u64, a: f64| {
            let mut c = Candidate::synthetic(id, Fingerprint(fp), [a, a], 0.9, 0.9);
            for s in 1..=2 {
                c.affinity.set(s, Target::A, a);
                c.affinity.set(s, Target::B, a);
            }
            c
        };
        // Disjoint fingerprints; 3 is a near-copy of 0, so {0, 3} is never allowed.
        let pool = vec![
            cand(0, 0b0011, 5.0),
            cand(1, 0b1100, 1.0),
            cand(2, 0b11_0000, 2.0),
            cand(3, 0b0011, 9.0),
        ];
        let best = brute_force_best(&pool, &cfg, &ctx);
        let expected = panel_utility(&[pool[1].clone(), pool[2].clone(), pool[3].clone()], &cfg, &ctx);
        assert_eq!(best, expected);
    }
}
