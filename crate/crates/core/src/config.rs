//! Search hyperparameters and their validation.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// One fidelity level of the selection funnel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatorStage {
    pub stage_index: usize,
    /// Standard deviation of the proxy noise added to the true landscape value.
    pub noise_sigma: f64,
    /// Simulated cost per evaluated candidate.
    pub cost_units: f64,
}

impl EvaluatorStage {
    pub fn new(stage_index: usize, noise_sigma: f64, cost_units: f64) -> Self {
        Self {
            stage_index,
            noise_sigma,
            cost_units,
        }
    }
}

/// Whether the outer loop uses evolutionary feedback or only independent
/// prior draws with the same per-iteration candidate budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Full,
    NoSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Population size B.
    pub population: usize,
    /// Parent pool size.
    pub parents: usize,
    /// Offspring per generation.
    pub offspring: usize,
    pub iterations: usize,
    pub latent_dim: usize,
    pub alpha_mut: f64,
    pub alpha_cross: f64,
    pub alpha_imm: f64,
    pub sigma_mut: f64,
    pub gamma_mut: f64,
    /// Random injections per generation; only used to derive `alpha_imm`.
    pub n_imm: usize,
    /// Decodes per latent when computing family utility.
    pub eval_samples: usize,
    /// Decodes per offspring contributing to the candidate pool.
    pub family_size: usize,
    /// Top-L members averaged by the family utility.
    pub top_l: usize,
    pub stage_budgets: Vec<usize>,
    #[serde(skip)]
    pub funnel: Vec<EvaluatorStage>,
    pub panel_size: usize,
    /// Minimum pairwise fingerprint distance inside a panel.
    pub tau: f64,
    pub qed_floor: f64,
    pub sa_floor: f64,
    /// Minimum similarity to the parent's reference fingerprint for mutation offspring.
    pub parent_similarity_floor: f64,
    pub beta_chem_search: f64,
    pub beta_chem_rerank: f64,
    pub beta_div_subset: f64,
    pub beta_bal_subset: f64,
    pub lambda_bal_proxy: f64,
    pub eta_aff: f64,
    pub eta_chem: f64,
    pub eta_div: f64,
    /// Largest feasible pool solved by exhaustive subset search.
    pub exact_cap: usize,
    pub mode: SearchMode,
    pub seed: u64,
    /// Generator horizons. Recorded, not used by the synthetic generator.
    pub t_train: usize,
    pub t_infer: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        default_config()
    }
}

/// The final-implementation hyperparameters.
pub fn default_config() -> SearchConfig {
    let offspring = 4;
    let n_imm = 1;
    let alpha_cross = 0.35;
    let alpha_imm = n_imm as f64 / offspring as f64;
    let beta_chem_rerank = 0.60;
    let beta_div_subset = 0.05;
    SearchConfig {
        population: 4,
        parents: 3,
        offspring,
        iterations: 3,
        latent_dim: 10,
        alpha_mut: 1.0 - alpha_cross - alpha_imm,
        alpha_cross,
        alpha_imm,
        sigma_mut: 0.42,
        gamma_mut: 0.82,
        n_imm,
        eval_samples: 2,
        family_size: 25,
        top_l: 2,
        stage_budgets: vec![40, 20],
        funnel: default_funnel(),
        panel_size: 10,
        tau: 1.0 - 0.85,
        qed_floor: 0.50,
        sa_floor: 0.50,
        parent_similarity_floor: 0.3,
        beta_chem_search: 0.40,
        beta_chem_rerank,
        beta_div_subset,
        beta_bal_subset: 0.02,
        lambda_bal_proxy: 0.25,
        eta_aff: 1.0,
        eta_chem: beta_chem_rerank,
        eta_div: beta_div_subset,
        exact_cap: 25,
        mode: SearchMode::Full,
        seed: 0,
        t_train: 1000,
        t_infer: 100,
    }
}

/// Cheap noisy screen followed by a noise-free full evaluation.
pub fn default_funnel() -> Vec<EvaluatorStage> {
    vec![EvaluatorStage::new(1, 0.5, 1.0), EvaluatorStage::new(2, 0.0, 8.0)]
}

impl SearchConfig {
    pub fn num_stages(&self) -> usize {
        self.stage_budgets.len()
    }

    pub fn stage(&self, stage_index: usize) -> Result<&EvaluatorStage> {
        stage_index
            .checked_sub(1)
            .and_then(|i| self.funnel.get(i))
            .ok_or_else(|| config_err(format!("unknown stage index {stage_index}")))
    }

    /// Chemistry weight used in the stage score at `stage_index`.
    pub fn beta_chem_at(&self, stage_index: usize) -> f64 {
        if stage_index >= self.num_stages() && stage_index > 1 {
            self.beta_chem_rerank
        } else {
            self.beta_chem_search
        }
    }

    /// Mutation scale at a given generation (0-based).
    pub fn sigma_at(&self, generation: u32) -> f64 {
        self.sigma_mut * self.gamma_mut.powi(generation as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let alphas = [self.alpha_mut, self.alpha_cross, self.alpha_imm];
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(config_err("mixture weights must be finite and non-negative"));
        }
        let sum: f64 = alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(config_err(format!("mixture weights sum to {sum}, expected 1")));
        }
        if self.population == 0 || self.parents == 0 || self.offspring == 0 {
            return Err(config_err("population, parents and offspring must be at least 1"));
        }
        if self.parents > self.population {
            return Err(config_err(format!(
                "parents ({}) exceeds population ({})",
                self.parents, self.population
            )));
        }
        if self.latent_dim == 0 {
            return Err(config_err("latent_dim must be at least 1"));
        }
        if self.eval_samples == 0 || self.family_size == 0 || self.top_l == 0 {
            return Err(config_err("eval_samples, family_size and top_l must be at least 1"));
        }
        if self.stage_budgets.is_empty() || self.stage_budgets.contains(&0) {
            return Err(config_err("stage budgets must be non-empty and each at least 1"));
        }
        if self.funnel.len() != self.stage_budgets.len() {
            return Err(config_err(format!(
                "funnel has {} stages but {} budgets are configured",
                self.funnel.len(),
                self.stage_budgets.len()
            )));
        }
        for (i, st) in self.funnel.iter().enumerate() {
            if st.stage_index != i + 1 {
                return Err(config_err(format!(
                    "funnel stage {} has index {}",
                    i + 1,
                    st.stage_index
                )));
            }
            if !(st.noise_sigma.is_finite() && st.noise_sigma >= 0.0) {
                return Err(config_err("stage noise_sigma must be finite and non-negative"));
            }
            if !(st.cost_units.is_finite() && st.cost_units > 0.0) {
                return Err(config_err("stage cost_units must be positive"));
            }
        }
        if self.funnel.windows(2).any(|w| w[1].noise_sigma > w[0].noise_sigma) {
            return Err(config_err("stage noise must be non-increasing along the funnel"));
        }
        if self.panel_size < 2 {
            return Err(config_err("panel_size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(config_err("tau must lie in [0, 1]"));
        }
        if !(self.sigma_mut.is_finite() && self.sigma_mut >= 0.0) {
            return Err(config_err("sigma_mut must be non-negative"));
        }
        if !(self.gamma_mut > 0.0 && self.gamma_mut <= 1.0) {
            return Err(config_err("gamma_mut must lie in (0, 1]"));
        }
        let weights = [
            self.qed_floor,
            self.sa_floor,
            self.parent_similarity_floor,
            self.beta_chem_search,
            self.beta_chem_rerank,
            self.beta_div_subset,
            self.beta_bal_subset,
            self.lambda_bal_proxy,
            self.eta_aff,
            self.eta_chem,
            self.eta_div,
        ];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(config_err("weights and floors must be finite"));
        }
        if self.lambda_bal_proxy < 0.0 {
            return Err(config_err("lambda_bal_proxy must be non-negative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_final_implementation_values() {
        let c = default_config();
        assert_eq!((c.population, c.parents, c.iterations), (4, 3, 3));
        assert_eq!(c.latent_dim, 10);
        assert_eq!(c.offspring, 4);
        assert_eq!(c.eval_samples, 2);
        assert_eq!(c.n_imm, 1);
        assert_eq!(c.stage_budgets, vec![40, 20]);
        assert_eq!(c.panel_size, 10);
        assert_eq!(c.alpha_cross, 0.35);
        assert_eq!(c.sigma_mut, 0.42);
        assert_eq!(c.gamma_mut, 0.82);
        assert_eq!((c.qed_floor, c.sa_floor), (0.5, 0.5));
        assert_eq!(c.lambda_bal_proxy, 0.25);
        assert_eq!((c.beta_chem_search, c.beta_chem_rerank), (0.40, 0.60));
        assert_eq!((c.beta_div_subset, c.beta_bal_subset), (0.05, 0.02));
        assert!((c.tau - 0.15).abs() < 1e-12);
        assert!((c.alpha_imm - 0.25).abs() < 1e-12);
        assert!((c.alpha_mut - 0.40).abs() < 1e-12);
        assert_eq!((c.eta_aff, c.eta_chem, c.eta_div), (1.0, 0.60, 0.05));
        c.validate().unwrap();
    }

    #[test]
    fn mutation_scale_decays() {
        let c = default_config();
        assert_eq!(c.sigma_at(0), 0.42);
        assert!((c.sigma_at(1) - 0.3444).abs() < 1e-12);
    }

    #[test]
    fn chemistry_weight_switches_at_final_stage() {
        let c = default_config();
        assert_eq!(c.beta_chem_at(1), 0.40);
        assert_eq!(c.beta_chem_at(2), 0.60);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = default_config();
        c.alpha_mut += 0.01;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.parents = 5;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.panel_size = 1;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.funnel[1].noise_sigma = 0.9;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.gamma_mut = 0.0;
        assert!(c.validate().is_err());

        let mut c = default_config();
        c.stage_budgets.push(5);
        assert!(c.validate().is_err());
    }
}
