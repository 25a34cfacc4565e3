//! TOML run configuration with `[search]`, `[task]`, `[funnel]` and
//! `[output]` sections. Every key is optional and falls back to the defaults;
//! unknown keys are rejected by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{EvaluatorStage, SearchConfig};
use crate::error::{config_err, Result, ReuseError};
use crate::generator::{LandscapeKind, PriorMode, PriorSpec};
use crate::task::{TaskContext, DEFAULT_TASK_SEED};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigDocument {
    pub search: SearchConfig,
    pub task: TaskSection,
    pub funnel: FunnelSection,
    pub output: OutputSection,
}

/// Overrides applied on top of the default dual-bowl task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub pair_id: Option<String>,
    /// Seed for the chemistry axes and default bowl placement.
    pub task_seed: Option<u64>,
    pub kind: Option<LandscapeKind>,
    pub center_a: Option<Vec<f64>>,
    pub center_b: Option<Vec<f64>>,
    pub scale_a: Option<f64>,
    pub scale_b: Option<f64>,
    pub second_center_a: Option<Vec<f64>>,
    pub second_center_b: Option<Vec<f64>>,
    pub second_scale_a: Option<f64>,
    pub second_scale_b: Option<f64>,
    /// Candidate-level deviation from the landscape value at decode.
    pub landscape_noise: Option<f64>,
    pub w_a: Option<f64>,
    pub w_b: Option<f64>,
    pub prior: Option<PriorMode>,
    pub prior_sigma: Option<f64>,
    /// Mixture anchors; defaults to the two bowl centers.
    pub prior_anchors: Option<Vec<Vec<f64>>>,
    pub decoder_sigma: Option<f64>,
    pub invalid_prob: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub noise_sigma: f64,
    pub cost_units: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunnelSection {
    /// One entry per stage, in order. Absent means the default funnel.
    pub stages: Option<Vec<StageSection>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Trace,
    Panel,
    Metrics,
}

pub const ALL_FORMATS: [OutputFormat; 3] = [OutputFormat::Trace, OutputFormat::Panel, OutputFormat::Metrics];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub formats: Option<Vec<OutputFormat>>,
}

impl OutputSection {
    pub fn formats(&self) -> Vec<OutputFormat> {
        self.formats.clone().unwrap_or_else(|| ALL_FORMATS.to_vec())
    }
}

impl RunConfigDocument {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ReuseError::Document(e.to_string()))?;
        check_keys(&table)?;
        toml::from_str(text).map_err(|e| ReuseError::Document(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ReuseError::Document(e.to_string()))
    }

    /// The validated search configuration, funnel included.
    pub fn search_config(&self) -> Result<SearchConfig> {
        let mut cfg = self.search.clone();
        if let Some(stages) = &self.funnel.stages {
            cfg.funnel = stages
                .iter()
                .enumerate()
                .map(|(i, s)| EvaluatorStage::new(i + 1, s.noise_sigma, s.cost_units))
                .collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The task context with overrides applied, validated against `d_z`.
    pub fn task_context(&self) -> Result<TaskContext> {
        let t = &self.task;
        let dim = self.search.latent_dim;
        let mut ctx = TaskContext::dual_bowl(dim, t.task_seed.unwrap_or(DEFAULT_TASK_SEED));
        if let Some(id) = &t.pair_id {
            ctx.pair_id = id.clone();
        }
        let defaults_anchored = ctx.prior.mode == PriorMode::AnchorMixture
            && ctx.prior.anchors == [ctx.landscape_a.center.clone(), ctx.landscape_b.center.clone()];
        for (land, center, scale, second_center, second_scale) in [
            (
                &mut ctx.landscape_a,
                &t.center_a,
                t.scale_a,
                &t.second_center_a,
                t.second_scale_a,
            ),
            (
                &mut ctx.landscape_b,
                &t.center_b,
                t.scale_b,
                &t.second_center_b,
                t.second_scale_b,
            ),
        ] {
            if let Some(k) = t.kind {
                land.kind = k;
            }
            if let Some(c) = center {
                land.center = c.clone();
            }
            if let Some(s) = scale {
                land.scale = s;
            }
            if let Some(c) = second_center {
                land.second_center = c.clone();
            }
            if let Some(s) = second_scale {
                land.second_scale = s;
            }
            if let Some(n) = t.landscape_noise {
                land.noise_sigma = n;
            }
        }
        if let Some(w) = t.w_a {
            ctx.w_a = w;
        }
        if let Some(w) = t.w_b {
            ctx.w_b = w;
        }
        let sigma = t.prior_sigma.unwrap_or(ctx.prior.sigma);
        ctx.prior = match t.prior.unwrap_or(ctx.prior.mode) {
            PriorMode::Gaussian => PriorSpec::gaussian(sigma),
            PriorMode::AnchorMixture => {
                let anchors = match &t.prior_anchors {
                    Some(a) => a.clone(),
                    None if defaults_anchored => vec![ctx.landscape_a.center.clone(), ctx.landscape_b.center.clone()],
                    None => ctx.prior.anchors.clone(),
                };
                PriorSpec::anchor_mixture(anchors, sigma)
            }
        };
        if let Some(s) = t.decoder_sigma {
            ctx.decoder.latent_sigma = s;
        }
        if let Some(p) = t.invalid_prob {
            ctx.decoder.invalid_prob = p;
        }
        ctx.lambda_bal = self.search.lambda_bal_proxy;
        ctx.validate(dim)?;
        Ok(ctx)
    }

    pub fn resolve(&self) -> Result<(SearchConfig, TaskContext)> {
        let cfg = self.search_config()?;
        let ctx = self.task_context()?;
        Ok((cfg, ctx))
    }
}

/// A document with every optional key present, used to enumerate known keys.
fn full_document() -> RunConfigDocument {
    let v = Some(vec![0.0]);
    RunConfigDocument {
        search: SearchConfig::default(),
        task: TaskSection {
            pair_id: Some(String::new()),
            task_seed: Some(0),
            kind: Some(LandscapeKind::QuadraticBowl),
            center_a: v.clone(),
            center_b: v.clone(),
            scale_a: Some(0.0),
            scale_b: Some(0.0),
            second_center_a: v.clone(),
            second_center_b: v,
            second_scale_a: Some(0.0),
            second_scale_b: Some(0.0),
            landscape_noise: Some(0.0),
            w_a: Some(0.0),
            w_b: Some(0.0),
            prior: Some(PriorMode::Gaussian),
            prior_sigma: Some(0.0),
            prior_anchors: Some(vec![vec![0.0]]),
            decoder_sigma: Some(0.0),
            invalid_prob: Some(0.0),
        },
        funnel: FunnelSection {
            stages: Some(vec![StageSection {
                noise_sigma: 0.0,
                cost_units: 0.0,
            }]),
        },
        output: OutputSection {
            directory: Some(String::new()),
            formats: Some(ALL_FORMATS.to_vec()),
        },
    }
}

fn check_keys(doc: &toml::Table) -> Result<()> {
    let known = toml::Table::try_from(full_document()).map_err(|e| ReuseError::Document(e.to_string()))?;
    check_table(doc, &known, "")
}

fn check_table(doc: &toml::Table, known: &toml::Table, section: &str) -> Result<()> {
    for (key, value) in doc {
        let Some(k) = known.get(key) else {
            return Err(ReuseError::UnknownKey {
                section: if section.is_empty() {
                    "<root>".into()
                } else {
                    section.into()
                },
                key: key.clone(),
            });
        };
        let path = if section.is_empty() {
            key.clone()
        } else {
            format!("{section}.{key}")
        };
        match (value, k) {
            (toml::Value::Table(d), toml::Value::Table(kt)) => check_table(d, kt, &path)?,
            (toml::Value::Array(items), toml::Value::Array(kitems)) => {
                if let Some(toml::Value::Table(kt)) = kitems.first() {
                    for item in items {
                        if let toml::Value::Table(d) = item {
                            check_table(d, kt, &path)?;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Checks that a document's funnel agrees with its stage budgets.
pub fn check_funnel_shape(doc: &RunConfigDocument) -> Result<()> {
    if let Some(stages) = &doc.funnel.stages {
        if stages.len() != doc.search.stage_budgets.len() {
            return Err(config_err(format!(
                "funnel has {} stages but stage_budgets has {}",
                stages.len(),
                doc.search.stage_budgets.len()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_config, SearchMode};
    use proptest::prelude::*;

    #[test]
    fn empty_document_is_the_default() {
        let doc = RunConfigDocument::from_toml_str("").unwrap();
        let (cfg, ctx) = doc.resolve().unwrap();
        assert_eq!(cfg, default_config());
        assert_eq!(ctx, TaskContext::default_dual_bowl(10));
    }

    #[test]
    fn absent_keys_fall_back() {
        let doc = RunConfigDocument::from_toml_str("[search]\niterations = 7\n").unwrap();
        let cfg = doc.search_config().unwrap();
        assert_eq!(cfg.iterations, 7);
        assert_eq!(cfg.population, default_config().population);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (text, section, key) in [
            ("[search]\nitterations = 3\n", "search", "itterations"),
            ("[task]\ncentre_a = [1.0]\n", "task", "centre_a"),
            ("[bogus]\nx = 1\n", "<root>", "bogus"),
            (
                "[[funnel.stages]]\nnoise_sigma = 0.5\ncost_units = 1.0\ncost = 2\n",
                "funnel.stages",
                "cost",
            ),
            ("[output]\ndir = \"x\"\n", "output", "dir"),
        ] {
            match RunConfigDocument::from_toml_str(text) {
                Err(ReuseError::UnknownKey { section: s, key: k }) => {
                    assert_eq!((s.as_str(), k.as_str()), (section, key));
                }
                other => panic!("expected unknown key for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_document_is_rejected() {
        assert!(matches!(
            RunConfigDocument::from_toml_str("[search\n"),
            Err(ReuseError::Document(_))
        ));
        assert!(matches!(
            RunConfigDocument::from_toml_str("[search]\niterations = \"three\"\n"),
            Err(ReuseError::Document(_))
        ));
    }

    #[test]
    fn funnel_and_task_overrides_apply() {
        let text = "[search]\nstage_budgets = [30, 10, 5]\nlambda_bal_proxy = 0.5\n\
                    [task]\nprior = \"gaussian\"\nprior_sigma = 2.0\nscale_a = 4.0\n\
                    [[funnel.stages]]\nnoise_sigma = 1.0\ncost_units = 1.0\n\
                    [[funnel.stages]]\nnoise_sigma = 0.3\ncost_units = 3.0\n\
                    [[funnel.stages]]\nnoise_sigma = 0.0\ncost_units = 9.0\n";
        let doc = RunConfigDocument::from_toml_str(text).unwrap();
        check_funnel_shape(&doc).unwrap();
        let (cfg, ctx) = doc.resolve().unwrap();
        assert_eq!(cfg.num_stages(), 3);
        assert_eq!(cfg.funnel[2], EvaluatorStage::new(3, 0.0, 9.0));
        assert_eq!(ctx.prior, PriorSpec::gaussian(2.0));
        assert_eq!(ctx.landscape_a.scale, 4.0);
        assert_eq!(ctx.lambda_bal, 0.5);
    }

    #[test]
    fn mismatched_funnel_is_invalid() {
        let text = "[[funnel.stages]]\nnoise_sigma = 1.0\ncost_units = 1.0\n";
        let doc = RunConfigDocument::from_toml_str(text).unwrap();
        assert!(check_funnel_shape(&doc).is_err());
        assert!(doc.search_config().is_err());
    }

    fn arb_document() -> impl Strategy<Value = RunConfigDocument> {
        (
            (
                1usize..8,
                1usize..5,
                0usize..20,
                1usize..16,
                0.0f64..1.0,
                0.01f64..2.0,
                0.5f64..1.0,
            ),
            (
                any::<bool>(),
                0u64..(i64::MAX as u64),
                prop::collection::vec(-3.0f64..3.0, 1..4),
            ),
            (prop::option::of(0.0f64..2.0), prop::option::of(1u64..100)),
            (
                prop::option::of(prop::collection::vec((0.0f64..1.0, 0.1f64..10.0), 1..4)),
                prop::option::of("[a-z]{1,8}"),
            ),
        )
            .prop_map(
                |(
                    (population, parents, iterations, dim, alpha_cross, sigma, gamma),
                    (nosearch, seed, center),
                    (prior_sigma, task_seed),
                    (stages, dir),
                )| {
                    let mut doc = RunConfigDocument::default();
                    let s = &mut doc.search;
                    s.population = population.max(parents);
                    s.parents = parents;
                    s.iterations = iterations;
                    s.latent_dim = dim;
                    s.alpha_cross = alpha_cross;
                    s.sigma_mut = sigma;
                    s.gamma_mut = gamma;
                    s.mode = if nosearch {
                        SearchMode::NoSearch
                    } else {
                        SearchMode::Full
                    };
                    s.seed = seed;
                    doc.task.center_a = Some(center);
                    doc.task.prior_sigma = prior_sigma;
                    doc.task.task_seed = task_seed;
                    doc.funnel.stages = stages.map(|v| {
                        v.into_iter()
                            .map(|(noise_sigma, cost_units)| StageSection {
                                noise_sigma,
                                cost_units,
                            })
                            .collect()
                    });
                    doc.output.directory = dir;
                    doc
                },
            )
    }

    proptest! {
        #[test]
        fn document_round_trips(doc in arb_document()) {
            let text = doc.to_toml_string().unwrap();
            let back = RunConfigDocument::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, doc);
        }
    }
}
