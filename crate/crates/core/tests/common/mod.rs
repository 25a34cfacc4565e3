//! Direct-definition oracles shared by the integration tests. Nothing here
//! calls into the library's scoring, ordering or metric code.

#![allow(dead_code)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reuse_core::types::{Candidate, Fingerprint, Target};
use reuse_core::{SearchConfig, TaskContext};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tanimoto_distance(a: u64, b: u64) -> f64 {
    let union = (a | b).count_ones();
    if union == 0 {
        return 0.0;
    }
    1.0 - (a & b).count_ones() as f64 / union as f64
}

/// Hard feasibility of a candidate at `stage`, from its raw attributes.
pub fn feasible_at(m: &Candidate, cfg: &SearchConfig, stage: usize) -> bool {
    let parent_ok = m.parent_features.is_none_or(|p| {
        let (a, b) = (m.features.0, p.0);
        let union = (a | b).count_ones();
        let sim = if union == 0 {
            1.0
        } else {
            (a & b).count_ones() as f64 / union as f64
        };
        sim >= cfg.parent_similarity_floor
    });
    let aff_ok = stage == 0
        || [Target::A, Target::B]
            .iter()
            .all(|&t| m.affinity.get(stage, t).is_some_and(f64::is_finite));
    m.valid && m.qed_like >= cfg.qed_floor && m.sa_like >= cfg.sa_floor && parent_ok && aff_ok
}

/// Panel utility from its written-out definition.
pub fn panel_j(members: &[&Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> f64 {
    if members.is_empty() {
        return f64::NEG_INFINITY;
    }
    let s = cfg.stage_budgets.len();
    let n = members.len() as f64;
    let mut per = 0.0;
    let mut gap = 0.0;
    for m in members {
        let a = m.affinity.get(s, Target::A).unwrap();
        let b = m.affinity.get(s, Target::B).unwrap();
        let f = ctx.w_a * a + ctx.w_b * b - ctx.lambda_bal * (a - b).abs();
        per += cfg.eta_aff * f + cfg.eta_chem * (m.qed_like + m.sa_like) / 2.0;
        gap += (a - b).abs();
    }
    let mut div = 0.0;
    let mut pairs = 0.0;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            div += tanimoto_distance(members[i].features.0, members[j].features.0);
            pairs += 1.0;
        }
    }
    let d = if pairs > 0.0 { div / pairs } else { 0.0 };
    per / n + cfg.eta_div * d - cfg.beta_bal_subset * gap / n
}

/// Best panel utility over all feasible, tau-diverse subsets of size N,
/// enumerated by bitmask.
pub fn brute_force_panel(pool: &[Candidate], cfg: &SearchConfig, ctx: &TaskContext) -> f64 {
    let s = cfg.stage_budgets.len();
    let n = pool.len();
    assert!(n <= 20, "bitmask enumeration is for small pools");
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != cfg.panel_size {
            continue;
        }
        let members: Vec<&Candidate> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &pool[i]).collect();
        if !members.iter().all(|m| feasible_at(m, cfg, s)) {
            continue;
        }
        let diverse = members.iter().enumerate().all(|(i, a)| {
            members[i + 1..]
                .iter()
                .all(|b| tanimoto_distance(a.features.0, b.features.0) >= cfg.tau)
        });
        if diverse {
            best = best.max(panel_j(&members, cfg, ctx));
        }
    }
    best
}

/// Scaffold-clustered fingerprints so the diversity floor binds.
pub fn clustered_fingerprints<R: RngCore>(r: &mut R, n: usize) -> Vec<u64> {
    let bases: Vec<u64> = (0..r.random_range(2..=4))
        .map(|_| r.next_u64() & r.next_u64())
        .collect();
    (0..n)
        .map(|_| {
            let mut fp = bases[r.random_range(0..bases.len())];
            for _ in 0..r.random_range(0..3) {
                fp ^= 1 << r.random_range(0..64);
            }
            fp | 2
        })
        .collect()
}

/// A terminal pool with affinities recorded at every stage.
pub fn random_terminal_pool<R: RngCore>(r: &mut R, n: usize, cfg: &SearchConfig) -> Vec<Candidate> {
    let s = cfg.stage_budgets.len();
    clustered_fingerprints(r, n)
        .into_iter()
        .enumerate()
        .map(|(i, fp)| {
            let a = r.random_range(0.0..10.0);
            let b = r.random_range(0.0..10.0);
            let qed = if r.random_bool(0.25) {
                0.2
            } else {
                r.random_range(0.5..1.0)
            };
            let mut c = Candidate::synthetic(i as u64 * 3 + 1, Fingerprint(fp), [a, b], qed, r.random_range(0.5..1.0));
            for stage in 1..=s {
                c.affinity.set(stage, Target::A, a);
                c.affinity.set(stage, Target::B, b);
            }
            c
        })
        .collect()
}

/// 1-based ranks with ties sharing their mean position, by counting.
pub fn ranks_by_counting(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson_by_sums(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let num = n * sxy - sx * sy;
    let den = ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    num / den
}

/// Tau-b by enumerating all pairs.
pub fn kendall_by_pairs(x: &[f64], y: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    let n = x.len();
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let den = (((conc + disc + tx) * (conc + disc + ty)) as f64).sqrt();
    (conc - disc) as f64 / den
}

pub struct Point {
    pub id: u64,
    pub coords: Vec<f64>,
    pub group: u64,
    pub objective: f64,
}

/// Local consistency by sorting every pairwise distance.
pub fn consistency_by_all_pairs(points: &[Point], k_set: &[usize], threshold: f64) -> (f64, f64) {
    let n = points.len();
    let mut s_sum = 0.0;
    let mut o_sum = 0.0;
    for &k in k_set {
        let mut s_k = 0.0;
        let mut o_k = 0.0;
        for i in 0..n {
            let mut d: Vec<(f64, u64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dist: f64 = points[i]
                        .coords
                        .iter()
                        .zip(&points[j].coords)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    (dist, points[j].id, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let yi = points[i].objective >= threshold;
            let same_group = d[..k].iter().filter(|e| points[e.2].group == points[i].group).count();
            let same_side = d[..k]
                .iter()
                .filter(|e| (points[e.2].objective >= threshold) == yi)
                .count();
            s_k += same_group as f64 / k as f64;
            o_k += same_side as f64 / k as f64;
        }
        s_sum += s_k / n as f64;
        o_sum += o_k / n as f64;
    }
    (s_sum / k_set.len() as f64, o_sum / k_set.len() as f64)
}

/// Points drawn around a few planted cluster centres; the cluster is the
/// group and the objective is higher near the first centre.
pub fn planted_clusters<R: RngCore>(r: &mut R, n: usize, dim: usize) -> Vec<Point> {
    let clusters = r.random_range(2..=4);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| r.random_range(-5.0..5.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            let g = r.random_range(0..clusters);
            let coords: Vec<f64> = centres[g].iter().map(|c| c + r.random_range(-1.0..1.0)).collect();
            let objective = -coords
                .iter()
                .zip(&centres[0])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
            Point {
                id: (i as u64 * 7919) % 1009,
                coords,
                group: g as u64,
                objective,
            }
        })
        .collect()
}

/// One-sided sign-test p-value: P(X >= wins) for X ~ Binomial(n, 1/2).
pub fn sign_test_p(wins: u64, n: u64) -> f64 {
    let mut tail: u128 = 0;
    let mut c: u128 = 1;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as u128 / (k + 1) as u128;
    }
    tail as f64 / 2f64.powi(n as i32)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[test]
fn oracle_self_checks() {
    assert_eq!(ranks_by_counting(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    assert!((sign_test_p(34, 50) - 0.0077).abs() < 1e-4);
    assert!((sign_test_p(0, 10) - 1.0).abs() < 1e-12);
    assert_eq!(tanimoto_distance(0b11, 0b01), 0.5);
    assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    let _ = rng(0).random::<u8>();
}
