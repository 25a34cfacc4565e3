//! Synthetic stand-in for the frozen generator and its input prior.
//!
//! A latent point decodes into a finite family of candidates. Each candidate
//! sits at a Gaussian perturbation of the latent; its fingerprint, chemistry
//! scores and true per-target affinities are deterministic functions of that
//! position.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result, ReuseError};
use crate::rng::{self, splitmix64, Purpose};
use crate::task::TaskContext;
use crate::types::{Candidate, Fingerprint, Id, IdAllocator, LatentPoint, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeKind {
    QuadraticBowl,
    MultiBasin,
}

/// Affinity landscape over input space, in utility scale (larger is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub kind: LandscapeKind,
    pub center: Vec<f64>,
    pub scale: f64,
    /// Candidate-level deviation added to the landscape value at decode time.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Second basin, used by `multi_basin`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub second_center: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub second_scale: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn bowl(z: &[f64], center: &[f64], scale: f64) -> f64 {
    let d = z.len().max(1) as f64;
    let sq: f64 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    scale * (-sq / d).exp()
}

impl LandscapeSpec {
    pub fn bowl(center: Vec<f64>, scale: f64) -> Self {
        Self {
            kind: LandscapeKind::QuadraticBowl,
            center,
            scale,
            noise_sigma: 0.0,
            second_center: Vec::new(),
            second_scale: 0.0,
        }
    }

    /// Noise-free landscape value.
    pub fn value(&self, z: &[f64]) -> f64 {
        let primary = bowl(z, &self.center, self.scale);
        match self.kind {
            LandscapeKind::QuadraticBowl => primary,
            LandscapeKind::MultiBasin => primary + bowl(z, &self.second_center, self.second_scale),
        }
    }

    /// Largest value attainable by the primary basin.
    pub fn peak(&self) -> f64 {
        self.scale
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.center.len() != dim {
            return Err(config_err(format!(
                "landscape center has length {}, expected {dim}",
                self.center.len()
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(config_err("landscape scale must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(config_err("landscape noise_sigma must be non-negative"));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(config_err("landscape center must be finite"));
        }
        if self.kind == LandscapeKind::MultiBasin {
            if self.second_center.len() != dim {
                return Err(config_err("multi_basin requires second_center of length d_z"));
            }
            if !(self.second_scale.is_finite() && self.second_scale > 0.0) {
                return Err(config_err("multi_basin requires positive second_scale"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    Gaussian,
    AnchorMixture,
}

/// Initialization and immigration distribution over input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub mode: PriorMode,
    #[serde(default)]
    pub anchors: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl PriorSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            mode: PriorMode::Gaussian,
            anchors: Vec::new(),
            sigma,
        }
    }

    pub fn anchor_mixture(anchors: Vec<Vec<f64>>, sigma: f64) -> Self {
        Self {
            mode: PriorMode::AnchorMixture,
            anchors,
            sigma,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(config_err("prior sigma must be non-negative"));
        }
        if self.mode == PriorMode::AnchorMixture {
            if self.anchors.is_empty() {
                return Err(config_err("anchor_mixture prior requires at least one anchor"));
            }
            if self.anchors.iter().any(|a| a.len() != dim) {
                return Err(config_err(format!("prior anchors must have length {dim}")));
            }
        }
        Ok(())
    }

    /// Draws one point from the prior using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        let base: Vec<f64> = match self.mode {
            PriorMode::Gaussian => vec![0.0; dim],
            PriorMode::AnchorMixture => {
                let i = rng.random_range(0..self.anchors.len());
                self.anchors[i].clone()
            }
        };
        base.into_iter()
            .map(|c| {
                let e: f64 = StandardNormal.sample(rng);
                c + self.sigma * e
            })
            .collect()
    }
}

/// Samples `count` latent points. Point `i` uses its own stream, so results
/// depend only on `(prior, rng_seed, count, dim)` and the allocated ids.
pub fn sample_prior(
    prior: &PriorSpec,
    dim: usize,
    rng_seed: u64,
    count: usize,
    ids: &mut IdAllocator,
    birth_iteration: u32,
) -> Result<Vec<LatentPoint>> {
    if count == 0 {
        return Err(ReuseError::Precondition("sample_prior requires count >= 1".into()));
    }
    prior.validate(dim)?;
    Ok((0..count)
        .map(|i| {
            let mut r = rng::stream(rng_seed, Purpose::Prior, &[i as u64]);
            LatentPoint::new(ids.next_id(), prior.draw(dim, &mut r), birth_iteration)
        })
        .collect())
}

/// Decoder behaviour: spread of decoded samples around the latent and the
/// probability of producing an invalid candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSpec {
    pub latent_sigma: f64,
    pub invalid_prob: f64,
}

impl Default for DecoderSpec {
    fn default() -> Self {
        Self {
            latent_sigma: 0.5,
            invalid_prob: 0.02,
        }
    }
}

/// Linear chemistry model: `qed = sigmoid(<u, z>)`, `sa = sigmoid(<v, z>)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemistryMap {
    pub qed_axis: Vec<f64>,
    pub sa_axis: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl ChemistryMap {
    /// Draws two unit axes from `seed`.
    pub fn from_seed(dim: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, Purpose::ChemistryAxes, &[dim as u64]);
        let qed_axis = unit_vector(dim, &mut r);
        let sa_axis = unit_vector(dim, &mut r);
        Self { qed_axis, sa_axis }
    }

    pub fn qed(&self, z: &[f64]) -> f64 {
        sigmoid(dot(&self.qed_axis, z))
    }

    pub fn sa(&self, z: &[f64]) -> f64 {
        sigmoid(dot(&self.sa_axis, z))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const FP_SALT: u64 = 0x5EED_F1A9_0000_0001;
const FP_THRESHOLD_SPAN: f64 = 1.5;

/// Fingerprint of a position. Bit `j` thresholds coordinate `j mod d` at a
/// hash-derived offset and XORs the result with a hash bit of `j`.
pub fn fingerprint_of(position: &[f64]) -> Fingerprint {
    let d = position.len();
    if d == 0 {
        return Fingerprint(0);
    }
    let mut bits = 0u64;
    for j in 0..64u64 {
        let h = splitmix64(FP_SALT ^ j);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        let threshold = FP_THRESHOLD_SPAN * (2.0 * u - 1.0);
        let above = position[(j as usize) % d] > threshold;
        let flip = h & 1 == 1;
        if above ^ flip {
            bits |= 1 << j;
        }
    }
    Fingerprint(bits)
}

/// Decodes `k` candidates from `z`. Sample `j` uses a stream keyed by
/// `(rng_seed, k, j)`; callers fold the latent id into `rng_seed`. Candidate
/// ids are `first_id..first_id + k`.
pub fn decode_family(
    z: &LatentPoint,
    ctx: &TaskContext,
    k: usize,
    rng_seed: u64,
    first_id: Id,
) -> Result<Vec<Candidate>> {
    if k == 0 {
        return Err(ReuseError::Precondition("decode_family requires k >= 1".into()));
    }
    let dim = z.dim();
    let spread = Normal::new(0.0, ctx.decoder.latent_sigma.max(0.0))
        .map_err(|e| config_err(format!("decoder latent_sigma: {e}")))?;
    Ok((0..k)
        .map(|j| {
            let mut r = rng::stream(rng_seed, Purpose::Decode, &[k as u64, j as u64]);
            let position: Vec<f64> = z.coords.iter().map(|c| c + spread.sample(&mut r)).collect();
            let mut true_affinity = [0.0; 2];
            for t in Target::BOTH {
                let land = ctx.landscape(t);
                let e: f64 = StandardNormal.sample(&mut r);
                true_affinity[t.index()] = land.value(&position) + land.noise_sigma * e;
            }
            let valid = r.random::<f64>() >= ctx.decoder.invalid_prob;
            debug_assert_eq!(position.len(), dim);
            Candidate {
                id: first_id + j as Id,
                origin_latent: z.id,
                features: fingerprint_of(&position),
                qed_like: ctx.chemistry.qed(&position),
                sa_like: ctx.chemistry.sa(&position),
                true_affinity,
                position,
                affinity: Default::default(),
                valid,
                parent_features: z.parent_features,
            }
        })
        .collect())
}
