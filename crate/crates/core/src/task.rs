//! The target pair being optimized.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::generator::{ChemistryMap, DecoderSpec, LandscapeSpec, PriorSpec};
use crate::rng::{self, Purpose};
use crate::types::Target;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub pair_id: String,
    pub landscape_a: LandscapeSpec,
    pub landscape_b: LandscapeSpec,
    pub prior: PriorSpec,
    pub w_a: f64,
    pub w_b: f64,
    pub lambda_bal: f64,
    pub decoder: DecoderSpec,
    pub chemistry: ChemistryMap,
}

/// Seed used for the default task's chemistry axes.
pub const DEFAULT_TASK_SEED: u64 = 0;

const DEFAULT_SCALE: f64 = 10.0;
/// Offset of the balanced optimum along the chemistry-favourable direction.
const DEFAULT_CHEM_OFFSET: f64 = 1.2;
/// Half the distance between the two bowl centers.
const DEFAULT_HALF_SEPARATION: f64 = 2.0;
/// Spread of the anchor-centred prior.
const DEFAULT_PRIOR_SIGMA: f64 = 0.6;

impl TaskContext {
    /// Two quadratic bowls placed symmetrically about a point where both
    /// chemistry scores exceed one half. The prior is a mixture of Gaussians
    /// anchored at the two single-target optima.
    pub fn default_dual_bowl(dim: usize) -> Self {
        Self::dual_bowl(dim, DEFAULT_TASK_SEED)
    }

    pub fn dual_bowl(dim: usize, task_seed: u64) -> Self {
        let chemistry = ChemistryMap::from_seed(dim, task_seed);
        let (mid, across) = dual_bowl_frame(&chemistry, task_seed);
        let center = |sign: f64| -> Vec<f64> {
            mid.iter()
                .zip(&across)
                .map(|(m, a)| DEFAULT_CHEM_OFFSET * m + sign * DEFAULT_HALF_SEPARATION * a)
                .collect()
        };
        let (ca, cb) = (center(1.0), center(-1.0));
        let prior = PriorSpec::anchor_mixture(vec![ca.clone(), cb.clone()], DEFAULT_PRIOR_SIGMA);
        let mut landscape_a = LandscapeSpec::bowl(ca, DEFAULT_SCALE);
        let mut landscape_b = LandscapeSpec::bowl(cb, DEFAULT_SCALE);
        landscape_a.noise_sigma = 0.2;
        landscape_b.noise_sigma = 0.2;
        Self {
            pair_id: "synthetic-dual-bowl".into(),
            landscape_a,
            landscape_b,
            prior,
            w_a: 1.0,
            w_b: 1.0,
            lambda_bal: 0.25,
            decoder: DecoderSpec::default(),
            chemistry,
        }
    }

    pub fn landscape(&self, t: Target) -> &LandscapeSpec {
        match t {
            Target::A => &self.landscape_a,
            Target::B => &self.landscape_b,
        }
    }

    pub fn dim(&self) -> usize {
        self.landscape_a.center.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.landscape_a.validate(dim)?;
        self.landscape_b.validate(dim)?;
        self.prior.validate(dim)?;
        if !(self.w_a > 0.0 && self.w_b > 0.0 && self.w_a.is_finite() && self.w_b.is_finite()) {
            return Err(config_err("target weights must be positive"));
        }
        if !(self.lambda_bal.is_finite() && self.lambda_bal >= 0.0) {
            return Err(config_err("lambda_bal must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.decoder.invalid_prob) {
            return Err(config_err("decoder invalid_prob must lie in [0, 1]"));
        }
        if !(self.decoder.latent_sigma.is_finite() && self.decoder.latent_sigma >= 0.0) {
            return Err(config_err("decoder latent_sigma must be non-negative"));
        }
        if self.chemistry.qed_axis.len() != dim || self.chemistry.sa_axis.len() != dim {
            return Err(config_err("chemistry axes must have length d_z"));
        }
        Ok(())
    }
}

/// Unit direction along `qed_axis + sa_axis`, and a unit direction
/// orthogonal to both axes.
fn dual_bowl_frame(chem: &ChemistryMap, seed: u64) -> (Vec<f64>, Vec<f64>) {
    use rand_distr::{Distribution, StandardNormal};

    let dim = chem.qed_axis.len();
    let normalize = |v: Vec<f64>| -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            v.into_iter().map(|x| x / n).collect()
        } else {
            v
        }
    };
    let mid = normalize(chem.qed_axis.iter().zip(&chem.sa_axis).map(|(a, b)| a + b).collect());
    if dim < 3 {
        return (mid, vec![0.0; dim]);
    }
    let mut r = rng::stream(seed, Purpose::Landscape, &[dim as u64]);
    let basis = [
        chem.qed_axis.clone(),
        normalize(orthogonalize(&chem.sa_axis, &[&chem.qed_axis])),
    ];
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let across = normalize(orthogonalize(&raw, &[&basis[0], &basis[1]]));
    (mid, across)
}

fn orthogonalize(v: &[f64], basis: &[&Vec<f64>]) -> Vec<f64> {
    let mut out = v.to_vec();
    for b in basis {
        let proj: f64 = out.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        for (o, bi) in out.iter_mut().zip(b.iter()) {
            *o -= proj * bi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_task_is_valid_and_balanced_optimum_is_chemistry_feasible() {
        let ctx = TaskContext::default_dual_bowl(10);
        ctx.validate(10).unwrap();
        let mid: Vec<f64> = ctx
            .landscape_a
            .center
            .iter()
            .zip(&ctx.landscape_b.center)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        assert!(ctx.chemistry.qed(&mid) > 0.5);
        assert!(ctx.chemistry.sa(&mid) > 0.5);
        let va = ctx.landscape_a.value(&mid);
        let vb = ctx.landscape_b.value(&mid);
        assert!((va - vb).abs() < 1e-9);
    }
}
