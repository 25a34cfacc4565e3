//! CSV tables computed from a serialized trace.

use std::io::Write;

use crate::config::SearchConfig;
use crate::error::{Result, ReuseError};
use crate::order::{lex_compare, RankKey};
use crate::trace::{CandidateRecord, TraceRecord};
use crate::types::Id;

use super::harness::budget_curve;
use super::metrics::{
    dual_hit_from, frontier_overlap, local_consistency, mean, percentile, rank_agreement, ConsistencyPoint,
    RankAgreement,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Best-so-far family utility and chemistry recovery after each offspring.
pub fn budget_report(trace: &[TraceRecord], qed_floor: f64, sa_floor: f64) -> Table {
    let total: usize = trace.iter().map(|r| r.offspring.len()).sum();
    let budgets: Vec<usize> = (1..=total).collect();
    let mut t = Table::new(&["budget", "best_so_far", "chem_recovered"]);
    for p in budget_curve(trace, &budgets, qed_floor, sa_floor) {
        t.rows.push(vec![
            p.budget.to_string(),
            fmt_num(p.best_so_far),
            u8::from(p.recovered).to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheapVsFull {
    pub n: usize,
    /// `(k, Ov@k)` for each requested k not exceeding `n`.
    pub overlap: Vec<(usize, f64)>,
    pub agreement: Option<RankAgreement>,
}

/// Agreement between balance-aware affinity at `cheap_stage` and at
/// `full_stage`, over candidates evaluated at both.
pub fn cheap_vs_full(rec: &TraceRecord, cheap_stage: usize, full_stage: usize, ks: &[usize]) -> Result<CheapVsFull> {
    let mut cheap = Vec::new();
    let mut full = Vec::new();
    for c in &rec.candidates {
        let (Some(a), Some(b)) = (c.score_at(cheap_stage), c.score_at(full_stage)) else {
            continue;
        };
        if a.f_aff.is_finite() && b.f_aff.is_finite() {
            cheap.push((c.id, a.f_aff));
            full.push((c.id, b.f_aff));
        }
    }
    let n = cheap.len();
    let mut overlap = Vec::new();
    for &k in ks.iter().filter(|&&k| k >= 1 && k <= n) {
        overlap.push((k, frontier_overlap(&cheap, &full, k)?));
    }
    let agreement = if n >= 2 {
        let x: Vec<f64> = cheap.iter().map(|s| s.1).collect();
        let y: Vec<f64> = full.iter().map(|s| s.1).collect();
        Some(rank_agreement(&x, &y)?)
    } else {
        None
    };
    Ok(CheapVsFull { n, overlap, agreement })
}

pub const FUNNEL_OVERLAP_KS: [usize; 2] = [5, 8];

/// One row per iteration and scored stage: pool sizes, feasibility, best
/// score, and agreement of that stage with the terminal stage.
pub fn funnel_report(trace: &[TraceRecord]) -> Result<Table> {
    let mut t = Table::new(&[
        "iteration",
        "stage",
        "budget",
        "evaluated",
        "survivors",
        "feasible",
        "best_h",
        "cost",
        "ov_at_5",
        "ov_at_8",
        "spearman",
        "pearson",
        "kendall",
    ]);
    for rec in trace {
        let terminal = rec.terminal_stage();
        for (prev, stage) in rec.stages.iter().zip(rec.stages.iter().skip(1)) {
            let s = stage.stage;
            let scores: Vec<_> = rec.candidates.iter().filter_map(|c| c.score_at(s)).collect();
            let feasible = scores.iter().filter(|x| x.feasible).count();
            let best_h = scores
                .iter()
                .filter(|x| x.feasible)
                .map(|x| x.h)
                .fold(f64::NEG_INFINITY, f64::max);
            let (ov, agree) = if s < terminal {
                let cf = cheap_vs_full(rec, s, terminal, &FUNNEL_OVERLAP_KS)?;
                let ov = |k: usize| cf.overlap.iter().find(|o| o.0 == k).map(|o| o.1);
                ([ov(5), ov(8)], cf.agreement)
            } else {
                ([None, None], None)
            };
            let cost = if s == 1 { Some(rec.cost) } else { None };
            t.rows.push(vec![
                rec.iteration.to_string(),
                s.to_string(),
                stage.budget.map(|b| b.to_string()).unwrap_or_default(),
                prev.members.len().to_string(),
                stage.members.len().to_string(),
                feasible.to_string(),
                fmt_num(best_h),
                fmt_opt(cost),
                fmt_opt(ov[0]),
                fmt_opt(ov[1]),
                fmt_opt(agree.map(|a| a.spearman)),
                fmt_opt(agree.map(|a| a.pearson)),
                fmt_opt(agree.map(|a| a.kendall)),
            ]);
        }
    }
    Ok(t)
}

fn consistency_points<'a>(recs: impl Iterator<Item = &'a TraceRecord>) -> Vec<ConsistencyPoint> {
    recs.flat_map(|r| r.candidates.iter())
        .filter_map(|c| {
            let s = c.score_at(1)?;
            s.f_aff.is_finite().then(|| ConsistencyPoint {
                id: c.id,
                coords: c.position.clone(),
                group: c.origin,
                objective: s.f_aff,
            })
        })
        .collect()
}

/// Local consistency of decoded candidates: group is the originating latent,
/// objective is the stage-1 balance-aware affinity. The threshold defaults to
/// the median objective over the whole trace.
pub fn consistency_report(trace: &[TraceRecord], k_set: &[usize], threshold: Option<f64>) -> Result<Table> {
    let all = consistency_points(trace.iter());
    let threshold = threshold.unwrap_or_else(|| percentile(&all.iter().map(|p| p.objective).collect::<Vec<_>>(), 50.0));
    let k_label = k_set.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
    let mut t = Table::new(&["scope", "points", "k_set", "threshold", "s_bar", "o_bar"]);
    let k_max = k_set.iter().copied().max().unwrap_or(0);
    let mut push = |scope: String, pts: &[ConsistencyPoint]| -> Result<()> {
        if pts.len() <= k_max {
            return Ok(());
        }
        let (s, o) = local_consistency(pts, k_set, threshold)?;
        t.rows.push(vec![
            scope,
            pts.len().to_string(),
            k_label.clone(),
            fmt_num(threshold),
            fmt_num(s),
            fmt_num(o),
        ]);
        Ok(())
    };
    for rec in trace {
        push(rec.iteration.to_string(), &consistency_points(std::iter::once(rec)))?;
    }
    if all.len() <= k_max {
        return Err(ReuseError::Input(format!(
            "trace has {} scored candidates; need more than {k_max}",
            all.len()
        )));
    }
    push("all".into(), &all)?;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetMetrics {
    pub dual_hit: f64,
    pub feasible_dual_hit: f64,
    /// Mean over members of the weaker of the two final-stage affinities.
    pub worst_target: f64,
}

fn set_metrics(members: &[&CandidateRecord], stage: usize, thresholds: (f64, f64)) -> SetMetrics {
    let rows: Vec<(f64, f64, bool)> = members
        .iter()
        .map(|c| {
            let (a, b) = c.affinity_at(stage).unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY));
            (a, b, c.score_at(stage).is_some_and(|s| s.feasible))
        })
        .collect();
    let d = dual_hit_from(rows.iter().copied(), thresholds);
    let worst: Vec<f64> = rows.iter().map(|r| r.0.min(r.1)).collect();
    SetMetrics {
        dual_hit: d.dual_hit,
        feasible_dual_hit: d.feasible_dual_hit,
        worst_target: mean(&worst),
    }
}

/// Terminal-pool members in stage-preference order.
fn ranked_terminal(rec: &TraceRecord) -> Vec<&CandidateRecord> {
    let s = rec.terminal_stage();
    let Some(stage) = rec.stages.last() else {
        return Vec::new();
    };
    let mut members: Vec<(RankKey, &CandidateRecord)> = stage
        .members
        .iter()
        .filter_map(|&id| rec.candidate(id))
        .map(|c| {
            let sc = c.score_at(s);
            (
                RankKey::new(
                    sc.is_some_and(|x| x.feasible),
                    sc.map_or(f64::NEG_INFINITY, |x| x.h),
                    c.id,
                ),
                c,
            )
        })
        .collect();
    members.sort_by(|a, b| lex_compare(&a.0, &b.0));
    members.into_iter().map(|m| m.1).collect()
}

/// For each iteration with a nonempty panel: metrics of the top-N slice of
/// the terminal pool and of the constructed panel.
pub fn prepost_pairs(
    trace: &[TraceRecord],
    panel_size: usize,
    thresholds: (f64, f64),
) -> Vec<(usize, SetMetrics, SetMetrics)> {
    trace
        .iter()
        .filter(|r| !r.panel.is_empty())
        .map(|r| {
            let s = r.terminal_stage();
            let pre: Vec<&CandidateRecord> = ranked_terminal(r).into_iter().take(panel_size).collect();
            let post: Vec<&CandidateRecord> = r.panel.iter().filter_map(|&id: &Id| r.candidate(id)).collect();
            (
                r.iteration,
                set_metrics(&pre, s, thresholds),
                set_metrics(&post, s, thresholds),
            )
        })
        .collect()
}

/// Default dual-hit thresholds: two fifths of the default bowl peak on each
/// target.
pub const DEFAULT_HIT_THRESHOLDS: (f64, f64) = (4.0, 4.0);

pub fn prepost_report(trace: &[TraceRecord], cfg: &SearchConfig, thresholds: (f64, f64)) -> Table {
    let pairs = prepost_pairs(trace, cfg.panel_size, thresholds);
    let mut t = Table::new(&[
        "set",
        "iterations",
        "feasible_dual_hit_mean",
        "feasible_dual_hit_p25",
        "feasible_dual_hit_p75",
        "dual_hit_mean",
        "dual_hit_p25",
        "dual_hit_p75",
        "worst_target_mean",
        "worst_target_p25",
        "worst_target_p75",
    ]);
    for (label, pick) in [("pre", 0usize), ("post", 1)] {
        let sets: Vec<SetMetrics> = pairs.iter().map(|p| if pick == 0 { p.1 } else { p.2 }).collect();
        let mut row = vec![label.to_string(), sets.len().to_string()];
        for f in [
            |m: &SetMetrics| m.feasible_dual_hit,
            |m: &SetMetrics| m.dual_hit,
            |m: &SetMetrics| m.worst_target,
        ] {
            let v: Vec<f64> = sets.iter().map(f).collect();
            row.extend([mean(&v), percentile(&v, 25.0), percentile(&v, 75.0)].map(fmt_num));
        }
        t.rows.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::engine::run_search;
    use crate::task::TaskContext;

    fn trace() -> Vec<TraceRecord> {
        let ctx = TaskContext::default_dual_bowl(10);
        run_search(&ctx, &default_config()).unwrap().trace
    }

    #[test]
    fn budget_report_is_monotone() {
        let cfg = default_config();
        let t = budget_report(&trace(), cfg.qed_floor, cfg.sa_floor);
        assert_eq!(t.rows.len(), cfg.offspring * cfg.iterations);
        let best: Vec<f64> = t.rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert!(best.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn funnel_report_rows_per_stage() {
        let tr = trace();
        let t = funnel_report(&tr).unwrap();
        assert_eq!(t.rows.len(), tr.len() * 2);
        let ov = t.column("ov_at_5").unwrap();
        let v: f64 = t.rows[0][ov].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert!(t.rows[1][ov].is_empty());
    }

    #[test]
    fn consistency_report_in_unit_interval() {
        let t = consistency_report(&trace(), &[3, 5, 10], None).unwrap();
        assert_eq!(t.rows.last().unwrap()[0], "all");
        for r in &t.rows {
            for col in [4, 5] {
                let v: f64 = r[col].parse().unwrap();
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn prepost_has_two_rows() {
        let t = prepost_report(&trace(), &default_config(), DEFAULT_HIT_THRESHOLDS);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][0], "pre");
        assert_eq!(t.rows[1][0], "post");
    }

    #[test]
    fn numbers_format_round_trip() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(3.0), "3");
    }
}
