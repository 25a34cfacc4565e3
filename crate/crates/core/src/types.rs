//! Domain value types shared by every module.

use serde::{Deserialize, Serialize};

/// Run-unique ordinal used for deterministic tie-breaking.
pub type Id = u64;

/// Hands out strictly increasing ids. Blocks are reserved up front so that
/// parallel workers never race on the counter.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator {
    next: Id,
}

impl IdAllocator {
    pub fn new(start: Id) -> Self {
        Self { next: start }
    }

    pub fn next_id(&mut self) -> Id {
        let id = self.next;
        self.next += 1;
        id
    }

    /// Reserves `n` consecutive ids and returns the first one.
    pub fn reserve(&mut self, n: usize) -> Id {
        let first = self.next;
        self.next += n as Id;
        first
    }

    pub fn peek(&self) -> Id {
        self.next
    }
}

/// How a latent point came into existence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Lineage {
    Prior,
    Mutation { parent: Id },
    Crossover { first: Id, second: Id, lambda: f64 },
}

/// A point in the generator's input noise space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPoint {
    pub id: Id,
    pub coords: Vec<f64>,
    pub birth_iteration: u32,
    pub lineage: Lineage,
    /// Fingerprint of the parent's noise-free decode, set for mutation
    /// offspring. Decoded candidates inherit it for the parent-deviation check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_features: Option<Fingerprint>,
}

impl LatentPoint {
    pub fn new(id: Id, coords: Vec<f64>, birth_iteration: u32) -> Self {
        Self {
            id,
            coords,
            birth_iteration,
            lineage: Lineage::Prior,
            parent_features: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// 64-bit synthetic structural fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(pub u64);

impl Fingerprint {
    pub fn from_bits(bits: &[u32]) -> Self {
        Self(bits.iter().fold(0u64, |acc, &b| acc | (1u64 << (b % 64))))
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn intersection(self, other: Self) -> u32 {
        (self.0 & other.0).count_ones()
    }

    pub fn union(self, other: Self) -> u32 {
        (self.0 | other.0).count_ones()
    }
}

/// One of the two targets of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    A,
    B,
}

impl Target {
    pub const BOTH: [Target; 2] = [Target::A, Target::B];

    pub fn index(self) -> usize {
        match self {
            Target::A => 0,
            Target::B => 1,
        }
    }
}

/// Per-stage, per-target affinity estimates on a larger-is-better scale.
/// Stage indices are 1-based.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffinityTable {
    stages: Vec<[Option<f64>; 2]>,
}

impl AffinityTable {
    pub fn get(&self, stage: usize, target: Target) -> Option<f64> {
        stage
            .checked_sub(1)
            .and_then(|i| self.stages.get(i))
            .and_then(|row| row[target.index()])
    }

    pub fn pair(&self, stage: usize) -> Option<(f64, f64)> {
        Some((self.get(stage, Target::A)?, self.get(stage, Target::B)?))
    }

    pub fn set(&mut self, stage: usize, target: Target, value: f64) {
        assert!(stage >= 1, "stage indices start at 1");
        if self.stages.len() < stage {
            self.stages.resize(stage, [None, None]);
        }
        self.stages[stage - 1][target.index()] = Some(value);
    }

    pub fn clear_stage(&mut self, stage: usize, target: Target) {
        if let Some(row) = stage.checked_sub(1).and_then(|i| self.stages.get_mut(i)) {
            row[target.index()] = None;
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// True when every present entry is finite.
    pub fn all_finite(&self) -> bool {
        self.stages.iter().flatten().flatten().all(|v| v.is_finite())
    }
}

/// A decoded synthetic molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: Id,
    pub origin_latent: Id,
    pub features: Fingerprint,
    /// Position of the decoded sample in input space.
    pub position: Vec<f64>,
    /// Noise-free per-target landscape utility at `position`.
    pub true_affinity: [f64; 2],
    pub affinity: AffinityTable,
    pub qed_like: f64,
    pub sa_like: f64,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_features: Option<Fingerprint>,
}

impl Candidate {
    /// A bare candidate with the given scores, used for constructed pools.
    pub fn synthetic(id: Id, features: Fingerprint, true_affinity: [f64; 2], qed: f64, sa: f64) -> Self {
        Self {
            id,
            origin_latent: id,
            features,
            position: Vec::new(),
            true_affinity,
            affinity: AffinityTable::default(),
            qed_like: qed,
            sa_like: sa,
            valid: true,
            parent_features: None,
        }
    }
}
