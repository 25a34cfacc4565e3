//! Per-iteration trace records, serialized as one JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ReuseError};
use crate::funnel::FunnelOutcome;
use crate::scoring::ScoredCandidate;
use crate::types::{Candidate, Id, Lineage};

pub const SCHEMA_VERSION: u32 = 1;

/// Serializes negative infinity (the empty-panel utility) as `null`.
pub mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Mutation,
    Crossover,
    Immigration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringRecord {
    pub id: Id,
    pub operator: Operator,
    pub lineage: Lineage,
    pub coords: Vec<f64>,
    #[serde(with = "neg_inf_as_null")]
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub id: Id,
    #[serde(with = "neg_inf_as_null")]
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScoreRecord {
    pub stage: usize,
    pub feasible: bool,
    #[serde(with = "neg_inf_as_null")]
    pub h: f64,
    #[serde(with = "neg_inf_as_null")]
    pub f_aff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: Id,
    pub origin: Id,
    pub position: Vec<f64>,
    pub features: u64,
    pub valid: bool,
    pub qed: f64,
    pub sa: f64,
    /// `[A_a, A_b]` per evaluated stage, starting at stage 1.
    pub affinity: Vec<[Option<f64>; 2]>,
    pub scores: Vec<StageScoreRecord>,
}

impl CandidateRecord {
    fn from_candidate(c: &Candidate, scores: Vec<StageScoreRecord>) -> Self {
        let n = c.affinity.num_stages();
        Self {
            id: c.id,
            origin: c.origin_latent,
            position: c.position.clone(),
            features: c.features.0,
            valid: c.valid,
            qed: c.qed_like,
            sa: c.sa_like,
            affinity: (1..=n)
                .map(|s| {
                    [
                        c.affinity.get(s, crate::types::Target::A),
                        c.affinity.get(s, crate::types::Target::B),
                    ]
                })
                .collect(),
            scores,
        }
    }

    pub fn score_at(&self, stage: usize) -> Option<&StageScoreRecord> {
        self.scores.iter().find(|s| s.stage == stage)
    }

    pub fn affinity_at(&self, stage: usize) -> Option<(f64, f64)> {
        let row = self.affinity.get(stage.checked_sub(1)?)?;
        Some((row[0]?, row[1]?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub budget: Option<usize>,
    pub members: Vec<Id>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema_version: u32,
    pub iteration: usize,
    pub offspring: Vec<OffspringRecord>,
    pub population: Vec<PopulationEntry>,
    pub stages: Vec<StageRecord>,
    pub candidates: Vec<CandidateRecord>,
    pub cost: f64,
    pub cumulative_cost: f64,
    pub panel: Vec<Id>,
    #[serde(with = "neg_inf_as_null")]
    pub panel_utility: f64,
    pub incumbent: Vec<Id>,
    #[serde(with = "neg_inf_as_null")]
    pub incumbent_utility: f64,
}

impl TraceRecord {
    pub fn stage_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.members.len()).collect()
    }

    pub fn candidate(&self, id: Id) -> Option<&CandidateRecord> {
        self.candidates
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.candidates[i])
    }

    pub fn terminal_stage(&self) -> usize {
        self.stages.last().map_or(0, |s| s.stage)
    }
}

/// Builds candidate records from the funnel's per-stage evaluations.
pub(crate) fn candidate_records(funnel: &FunnelOutcome) -> Vec<CandidateRecord> {
    // Deepest evaluated copy of each candidate carries every stage it reached.
    let mut latest: Vec<&Candidate> = funnel.pools[0].members.iter().collect();
    for stage_pool in &funnel.evaluated {
        for m in stage_pool {
            if let Ok(i) = latest.binary_search_by_key(&m.id, |c| c.id) {
                latest[i] = m;
            }
        }
    }
    let mut scores: Vec<Vec<StageScoreRecord>> = vec![Vec::new(); latest.len()];
    for (s, stage_scores) in funnel.scored.iter().enumerate() {
        for sc in stage_scores {
            if let Ok(i) = latest.binary_search_by_key(&sc.candidate_id, |c| c.id) {
                scores[i].push(stage_score_record(s + 1, sc));
            }
        }
    }
    latest
        .into_iter()
        .zip(scores)
        .map(|(c, sc)| CandidateRecord::from_candidate(c, sc))
        .collect()
}

fn stage_score_record(stage: usize, s: &ScoredCandidate) -> StageScoreRecord {
    StageScoreRecord {
        stage,
        feasible: s.feasible,
        h: s.h,
        f_aff: s.f_aff,
    }
}

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace, naming the 1-based line number of the first corrupt line.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| ReuseError::CorruptTrace {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(ReuseError::CorruptTrace {
                line: i + 1,
                message: format!("unsupported schema_version {}", rec.schema_version),
            });
        }
        out.push(rec);
    }
    Ok(out)
}
