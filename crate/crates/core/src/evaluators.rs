//! Multi-fidelity affinity estimates, chemistry score, hard feasibility and
//! fingerprint dissimilarity.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{EvaluatorStage, SearchConfig};
use crate::rng::{self, Purpose};
use crate::types::{Candidate, Fingerprint, Target};

/// Stage-`s` affinity estimate: the candidate's true landscape utility plus
/// Gaussian proxy noise of the stage's scale.
pub fn affinity(m: &Candidate, target: Target, stage: &EvaluatorStage, rng_seed: u64) -> f64 {
    let truth = m.true_affinity[target.index()];
    if stage.noise_sigma == 0.0 {
        return truth;
    }
    let mut r = rng::stream(
        rng_seed,
        Purpose::StageNoise,
        &[m.id, target.index() as u64, stage.stage_index as u64],
    );
    let e: f64 = StandardNormal.sample(&mut r);
    truth + stage.noise_sigma * e
}

/// Computes both targets' stage affinities and stores them on `m`.
pub fn evaluate_stage(m: &mut Candidate, stage: &EvaluatorStage, rng_seed: u64) {
    for t in Target::BOTH {
        let v = affinity(m, t, stage, rng_seed);
        m.affinity.set(stage.stage_index, t, v);
    }
}

/// Soft chemistry quality in [0, 1].
pub fn chemistry_score(m: &Candidate) -> f64 {
    0.5 * (m.qed_like + m.sa_like)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    InvalidMolecule,
    QedBelowFloor,
    SaBelowFloor,
    MissingAffinity,
    ParentDeviationExceeded,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub reasons: Vec<InfeasibleReason>,
}

impl FeasibilityReport {
    fn from_reasons(reasons: Vec<InfeasibleReason>) -> Self {
        Self {
            feasible: reasons.is_empty(),
            reasons,
        }
    }
}

/// Hard feasibility at `stage_index` (0 means no affinity is required yet).
///
/// The structural-deviation check compares against `parent` when given,
/// otherwise against the reference fingerprint the candidate inherited from
/// a mutation parent, if any.
pub fn feasibility(
    m: &Candidate,
    cfg: &SearchConfig,
    stage_index: usize,
    parent: Option<&Candidate>,
) -> FeasibilityReport {
    let mut reasons = Vec::new();
    if !m.valid {
        reasons.push(InfeasibleReason::InvalidMolecule);
    }
    if !(m.qed_like >= cfg.qed_floor) {
        reasons.push(InfeasibleReason::QedBelowFloor);
    }
    if !(m.sa_like >= cfg.sa_floor) {
        reasons.push(InfeasibleReason::SaBelowFloor);
    }
    if stage_index >= 1 {
        let ok = Target::BOTH
            .iter()
            .all(|&t| m.affinity.get(stage_index, t).is_some_and(f64::is_finite));
        if !ok {
            reasons.push(InfeasibleReason::MissingAffinity);
        }
    }
    let reference = parent.map(|p| p.features).or(m.parent_features);
    if let Some(fp) = reference {
        if tanimoto_similarity(m.features, fp) < cfg.parent_similarity_floor {
            reasons.push(InfeasibleReason::ParentDeviationExceeded);
        }
    }
    FeasibilityReport::from_reasons(reasons)
}

/// Tanimoto similarity; two empty fingerprints are identical (similarity 1).
pub fn tanimoto_similarity(a: Fingerprint, b: Fingerprint) -> f64 {
    let union = a.union(b);
    if union == 0 {
        1.0
    } else {
        a.intersection(b) as f64 / union as f64
    }
}

pub fn fingerprint_distance(a: Fingerprint, b: Fingerprint) -> f64 {
    1.0 - tanimoto_similarity(a, b)
}

/// Pairwise dissimilarity between candidates.
pub fn tanimoto_distance(m1: &Candidate, m2: &Candidate) -> f64 {
    fingerprint_distance(m1.features, m2.features)
}
