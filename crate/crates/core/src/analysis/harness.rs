//! Seeded Monte Carlo harnesses over whole search runs.

use crate::config::SearchConfig;
use crate::engine::run_search;
use crate::error::{Result, ReuseError};
use crate::par;
use crate::rng::{self, Purpose};
use crate::task::TaskContext;
use crate::trace::TraceRecord;
use crate::types::LatentPoint;

use super::metrics::{mean, percentile};

/// Seed of the `r`-th harness run derived from a base seed.
pub fn run_seed(base: u64, r: usize) -> u64 {
    rng::derive(base, Purpose::Harness, &[r as u64])
}

/// Probability that `sum(n_t)` independent offspring, each an immigrant with
/// probability `alpha_imm`, include a prior draw inside a region of mass `q`.
pub fn hitting_bound(alpha_imm: f64, q: f64, offspring_per_iteration: &[usize]) -> f64 {
    let miss = (1.0 - alpha_imm * q).clamp(0.0, 1.0);
    1.0 - offspring_per_iteration
        .iter()
        .map(|&n| miss.powi(n as i32))
        .product::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingResult {
    pub runs: usize,
    pub hits: usize,
    pub empirical: f64,
    pub bound: f64,
    /// Three binomial standard deviations at the bound.
    pub margin: f64,
}

impl HittingResult {
    pub fn passes(&self) -> bool {
        self.empirical >= self.bound - self.margin
    }
}

/// Fraction of seeded runs in which some offspring lands in `region`, next to
/// the immigration-only lower bound for a region of prior mass `q`.
pub fn hitting_probability_experiment<F>(
    region: F,
    q: f64,
    ctx: &TaskContext,
    cfg: &SearchConfig,
    runs: usize,
) -> Result<HittingResult>
where
    F: Fn(&LatentPoint) -> bool + Sync,
{
    if runs == 0 {
        return Err(ReuseError::Input("hitting experiment needs at least one run".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(ReuseError::Input(format!("region mass {q} outside [0, 1]")));
    }
    let outcomes = par::map_range(runs, |r| -> Result<bool> {
        let mut c = cfg.clone();
        c.seed = run_seed(cfg.seed, r);
        let result = run_search(ctx, &c)?;
        Ok(result.trace.iter().any(|rec| {
            rec.offspring.iter().any(|o| {
                let mut z = LatentPoint::new(o.id, o.coords.clone(), rec.iteration as u32);
                z.lineage = o.lineage.clone();
                region(&z)
            })
        }))
    });
    let mut hits = 0;
    for o in outcomes {
        hits += usize::from(o?);
    }
    let bound = hitting_bound(cfg.alpha_imm, q, &vec![cfg.offspring; cfg.iterations]);
    Ok(HittingResult {
        runs,
        hits,
        empirical: hits as f64 / runs as f64,
        bound,
        margin: 3.0 * (bound * (1.0 - bound) / runs as f64).sqrt(),
    })
}

/// Best-so-far family utility and chemistry recovery within the first `b`
/// offspring evaluations of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetPoint {
    pub budget: usize,
    pub best_so_far: f64,
    pub recovered: bool,
}

/// Offspring are counted in iteration order. Budgets beyond the number of
/// offspring in the trace see the whole trace.
pub fn budget_curve(trace: &[TraceRecord], budgets: &[usize], qed_floor: f64, sa_floor: f64) -> Vec<BudgetPoint> {
    // Per offspring in evaluation order: (fitness, decoded a chemistry-feasible candidate).
    let mut steps: Vec<(f64, bool)> = Vec::new();
    for rec in trace {
        for o in &rec.offspring {
            let chem = rec
                .candidates
                .iter()
                .any(|c| c.origin == o.id && c.qed >= qed_floor && c.sa >= sa_floor);
            steps.push((o.fitness, chem));
        }
    }
    budgets
        .iter()
        .map(|&b| {
            let seen = &steps[..b.min(steps.len())];
            BudgetPoint {
                budget: b,
                best_so_far: seen.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max),
                recovered: seen.iter().any(|s| s.1),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub budget: usize,
    pub score_mean: f64,
    pub score_p25: f64,
    pub score_p75: f64,
    /// Fraction of runs that reached a chemistry-feasible candidate.
    pub recovery: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSweep {
    pub rows: Vec<BudgetRow>,
    /// One curve per run, aligned with `rows`.
    pub runs: Vec<Vec<BudgetPoint>>,
}

/// Aggregates per-run budget curves into mean / quartile / recovery rows.
pub fn summarize_budget(budgets: &[usize], runs: Vec<Vec<BudgetPoint>>) -> BudgetSweep {
    let rows = budgets
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let scores: Vec<f64> = runs.iter().map(|r| r[i].best_so_far).collect();
            let recovered = runs.iter().filter(|r| r[i].recovered).count();
            BudgetRow {
                budget: b,
                score_mean: mean(&scores),
                score_p25: percentile(&scores, 25.0),
                score_p75: percentile(&scores, 75.0),
                recovery: if runs.is_empty() {
                    f64::NAN
                } else {
                    recovered as f64 / runs.len() as f64
                },
            }
        })
        .collect();
    BudgetSweep { rows, runs }
}

/// Runs `runs` seeded searches and tabulates the budget curves.
pub fn budget_sweep(ctx: &TaskContext, cfg: &SearchConfig, budgets: &[usize], runs: usize) -> Result<BudgetSweep> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) || budgets[0] == 0 {
        return Err(ReuseError::Input(
            "budgets must be positive and strictly increasing".into(),
        ));
    }
    let curves = par::map_range(runs, |r| -> Result<Vec<BudgetPoint>> {
        let mut c = cfg.clone();
        c.seed = run_seed(cfg.seed, r);
        let result = run_search(ctx, &c)?;
        Ok(budget_curve(&result.trace, budgets, cfg.qed_floor, cfg.sa_floor))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(summarize_budget(budgets, curves))
}
