//! Pure diagnostics: frontier overlap, rank agreement, dual-hit rates and
//! local consistency.

use crate::config::SearchConfig;
use crate::error::{Result, ReuseError};
use crate::evaluators::feasibility;
use crate::panel::Panel;
use crate::par;
use crate::types::Id;

fn input_err(msg: impl Into<String>) -> ReuseError {
    ReuseError::Input(msg.into())
}

/// Ids of the `k` highest scores, ties broken by smaller id.
fn top_k_ids(scores: &[(Id, f64)], k: usize) -> Vec<Id> {
    let mut v: Vec<(Id, f64)> = scores.to_vec();
    v.sort_by(|a, b| value_cmp(b.1, a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(id, _)| id).collect()
}

fn sorted_ids(scores: &[(Id, f64)]) -> Vec<Id> {
    let mut ids: Vec<Id> = scores.iter().map(|s| s.0).collect();
    ids.sort_unstable();
    ids
}

/// Fraction of the full evaluator's top-k also in the cheap evaluator's top-k.
pub fn frontier_overlap(cheap: &[(Id, f64)], full: &[(Id, f64)], k: usize) -> Result<f64> {
    let ids = sorted_ids(full);
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(input_err("duplicate ids in score list"));
    }
    if sorted_ids(cheap) != ids {
        return Err(input_err("cheap and full score lists cover different ids"));
    }
    if k == 0 || k > ids.len() {
        return Err(input_err(format!("k = {k} must lie in 1..={}", ids.len())));
    }
    let top_full = top_k_ids(full, k);
    let hits = top_k_ids(cheap, k).iter().filter(|id| top_full.contains(id)).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankAgreement {
    pub spearman: f64,
    pub pearson: f64,
    pub kendall: f64,
}

/// Spearman (average ranks), Pearson and Kendall tau-b. Coefficients that
/// are undefined because an input is constant are NaN.
pub fn rank_agreement(x: &[f64], y: &[f64]) -> Result<RankAgreement> {
    if x.len() != y.len() {
        return Err(input_err(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(input_err("rank agreement needs at least two points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(input_err("rank agreement needs finite values"));
    }
    Ok(RankAgreement {
        spearman: pearson(&average_ranks(x), &average_ranks(y)),
        pearson: pearson(x, y),
        kendall: kendall_tau_b(x, y),
    })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Numeric order in which -0.0 and 0.0 tie; NaN falls back to total order.
fn value_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or_else(|| a.total_cmp(&b))
}

/// 1-based ranks; tied values share the mean of their positions.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| value_cmp(v[a], v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as u64;
        total += t * (t - 1) / 2;
        i = j;
    }
    total
}

/// Knight's O(n log n) tau-b.
fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| value_cmp(a.0, b.0).then(value_cmp(a.1, b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tied_pairs(&xs);
    let ties_xy = tied_pairs(&pairs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_count(&mut ys);
    let ties_y = tied_pairs(&ys);

    let n0 = n * (n - 1) / 2;
    let denom = ((n0 - ties_x) as f64 * (n0 - ties_y) as f64).sqrt();
    if denom == 0.0 {
        return f64::NAN;
    }
    let s = n0 as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * swaps as f64;
    (s / denom).clamp(-1.0, 1.0)
}

/// Sorts `v` and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualHit {
    pub dual_hit: f64,
    pub feasible_dual_hit: f64,
}

/// Fractions of hits among `(a, b, feasible)` triples; both affinities must
/// strictly exceed their thresholds.
pub fn dual_hit_from(members: impl IntoIterator<Item = (f64, f64, bool)>, thresholds: (f64, f64)) -> DualHit {
    let (mut n, mut hit, mut feasible_hit) = (0usize, 0usize, 0usize);
    for (a, b, feasible) in members {
        n += 1;
        if a > thresholds.0 && b > thresholds.1 {
            hit += 1;
            if feasible {
                feasible_hit += 1;
            }
        }
    }
    if n == 0 {
        return DualHit {
            dual_hit: 0.0,
            feasible_dual_hit: 0.0,
        };
    }
    DualHit {
        dual_hit: hit as f64 / n as f64,
        feasible_dual_hit: feasible_hit as f64 / n as f64,
    }
}

/// Dual-hit rates of a panel from its final-stage affinities.
pub fn dual_hit_rates(panel: &Panel, thresholds: (f64, f64), cfg: &SearchConfig) -> DualHit {
    let s = cfg.num_stages();
    dual_hit_from(
        panel.members.iter().map(|m| {
            let (a, b) = m.affinity.pair(s).unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY));
            (a, b, feasibility(m, cfg, s, None).feasible)
        }),
        thresholds,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyPoint {
    pub id: Id,
    pub coords: Vec<f64>,
    pub group: u64,
    pub objective: f64,
}

pub const DEFAULT_K_SET: [usize; 3] = [3, 5, 10];

/// Mean structural and objective-region agreement with the k nearest
/// neighbours, averaged over points and then over `k_set`.
pub fn local_consistency(points: &[ConsistencyPoint], k_set: &[usize], threshold: f64) -> Result<(f64, f64)> {
    if k_set.is_empty() {
        return Err(input_err("k_set is empty"));
    }
    let n = points.len();
    let k_max = *k_set.iter().max().unwrap_or(&0);
    if k_set.contains(&0) {
        return Err(input_err("neighbourhood sizes must be at least 1"));
    }
    if k_max >= n {
        return Err(input_err(format!("k = {k_max} needs more than {n} points")));
    }
    let high: Vec<bool> = points.iter().map(|p| p.objective >= threshold).collect();

    // Per point, the running agreement counts over its k_max nearest neighbours.
    let prefix: Vec<Vec<(usize, usize)>> = par::map_range(n, |i| {
        let mut others: Vec<(f64, Id, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (sq_dist(&points[i].coords, &points[j].coords), points[j].id, j))
            .collect();
        let cmp = |a: &(f64, Id, usize), b: &(f64, Id, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k_max < others.len() {
            others.select_nth_unstable_by(k_max - 1, cmp);
            others.truncate(k_max);
        }
        others.sort_by(cmp);
        let (mut s, mut o) = (0, 0);
        others
            .iter()
            .map(|&(_, _, j)| {
                s += usize::from(points[j].group == points[i].group);
                o += usize::from(high[j] == high[i]);
                (s, o)
            })
            .collect()
    });

    let (mut s_bar, mut o_bar) = (0.0, 0.0);
    for &k in k_set {
        let (mut s_k, mut o_k) = (0.0, 0.0);
        for counts in &prefix {
            let (s, o) = counts[k - 1];
            s_k += s as f64 / k as f64;
            o_k += o as f64 / k as f64;
        }
        s_bar += s_k / n as f64;
        o_bar += o_k / n as f64;
    }
    let m = k_set.len() as f64;
    Ok((s_bar / m, o_bar / m))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Linear-interpolation percentile of `values` (0 ≤ p ≤ 100).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
