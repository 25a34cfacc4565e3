//! The outer evolutionary loop over input space.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{SearchConfig, SearchMode};
use crate::error::{config_err, Result, ReuseError};
use crate::funnel::{pool_offspring, run_funnel};
use crate::generator::{decode_family, fingerprint_of, sample_prior};
use crate::order::{lex_compare, RankKey};
use crate::panel::{build_panel, update_incumbent, Panel};
use crate::par;
use crate::rng::{self, Purpose};
use crate::scoring::family_utility;
use crate::task::TaskContext;
use crate::trace::{
    candidate_records, OffspringRecord, Operator, PopulationEntry, StageRecord, TraceRecord, SCHEMA_VERSION,
};
use crate::types::{Id, IdAllocator, LatentPoint, Lineage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub point: LatentPoint,
    pub fitness: f64,
}

impl Member {
    fn rank_key(&self) -> RankKey {
        // every member competes in the same class; only fitness and id matter
        RankKey::new(true, self.fitness, self.point.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    /// Members in rank order (best first).
    pub members: Vec<Member>,
    pub generation: u32,
}

impl Population {
    pub fn new(mut members: Vec<Member>) -> Self {
        members.sort_by(|a, b| lex_compare(&a.rank_key(), &b.rank_key()));
        Self { members, generation: 0 }
    }

    pub fn best_fitness(&self) -> f64 {
        self.members.first().map_or(f64::NEG_INFINITY, |m| m.fitness)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// The `parents` members with the largest fitness, ties by smaller id.
pub fn select_parents(pop: &Population, cfg: &SearchConfig) -> Result<Vec<LatentPoint>> {
    if pop.len() < cfg.parents {
        return Err(config_err(format!(
            "population of {} cannot supply {} parents",
            pop.len(),
            cfg.parents
        )));
    }
    let mut ranked: Vec<&Member> = pop.members.iter().collect();
    ranked.sort_by(|a, b| lex_compare(&a.rank_key(), &b.rank_key()));
    Ok(ranked.into_iter().take(cfg.parents).map(|m| m.point.clone()).collect())
}

/// Gaussian mutation with scale `sigma_mut * gamma_mut^generation`.
pub fn mutate(z: &LatentPoint, generation: u32, cfg: &SearchConfig, rng_seed: u64, id: Id) -> LatentPoint {
    let sigma = cfg.sigma_at(generation);
    let mut r = rng::stream(rng_seed, Purpose::Mutation, &[z.id]);
    let coords = if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        z.coords.iter().map(|c| c + normal.sample(&mut r)).collect()
    } else {
        z.coords.clone()
    };
    LatentPoint {
        id,
        coords,
        birth_iteration: generation + 1,
        lineage: Lineage::Mutation { parent: z.id },
        parent_features: Some(fingerprint_of(&z.coords)),
    }
}

/// Convex combination `lambda * z_i + (1 - lambda) * z_j`.
pub fn crossover_at(z_i: &LatentPoint, z_j: &LatentPoint, lambda: f64, id: Id) -> Result<LatentPoint> {
    if z_i.dim() != z_j.dim() {
        return Err(ReuseError::Precondition(format!(
            "crossover of latents with dimensions {} and {}",
            z_i.dim(),
            z_j.dim()
        )));
    }
    let coords = z_i
        .coords
        .iter()
        .zip(&z_j.coords)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Ok(LatentPoint {
        id,
        coords,
        birth_iteration: z_i.birth_iteration.max(z_j.birth_iteration) + 1,
        lineage: Lineage::Crossover {
            first: z_i.id,
            second: z_j.id,
            lambda,
        },
        parent_features: None,
    })
}

/// Crossover with `lambda ~ Uniform(0, 1)`.
pub fn crossover(z_i: &LatentPoint, z_j: &LatentPoint, rng_seed: u64, id: Id) -> Result<LatentPoint> {
    let mut r = rng::stream(rng_seed, Purpose::Crossover, &[z_i.id, z_j.id]);
    crossover_at(z_i, z_j, r.random::<f64>(), id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub point: LatentPoint,
    pub operator: Operator,
}

/// Draws `cfg.offspring` children from the mutation / crossover / immigration
/// mixture. With a single parent the crossover mass goes to mutation.
pub fn spawn_offspring(
    parents: &[LatentPoint],
    generation: u32,
    ctx: &TaskContext,
    cfg: &SearchConfig,
    rng_seed: u64,
    ids: &mut IdAllocator,
) -> Result<Vec<Offspring>> {
    if parents.is_empty() {
        return Err(ReuseError::Precondition(
            "spawn_offspring needs at least one parent".into(),
        ));
    }
    let dim = parents[0].dim();
    let mut out = Vec::with_capacity(cfg.offspring);
    for i in 0..cfg.offspring {
        let mut r = rng::stream(rng_seed, Purpose::Operator, &[i as u64]);
        let u: f64 = r.random();
        let mut op = if u < cfg.alpha_mut {
            Operator::Mutation
        } else if u < cfg.alpha_mut + cfg.alpha_cross {
            Operator::Crossover
        } else {
            Operator::Immigration
        };
        if op == Operator::Crossover && parents.len() < 2 {
            op = Operator::Mutation;
        }
        let id = ids.next_id();
        let child_seed = rng::derive(rng_seed, Purpose::Operator, &[i as u64, 1]);
        let point = match op {
            Operator::Mutation => {
                let p = &parents[r.random_range(0..parents.len())];
                mutate(p, generation, cfg, child_seed, id)
            }
            Operator::Crossover => {
                let a = r.random_range(0..parents.len());
                let mut b = r.random_range(0..parents.len() - 1);
                if b >= a {
                    b += 1;
                }
                crossover(&parents[a], &parents[b], child_seed, id)?
            }
            Operator::Immigration => {
                let mut pr = rng::stream(child_seed, Purpose::Immigration, &[]);
                let mut z = LatentPoint::new(id, ctx.prior.draw(dim, &mut pr), generation + 1);
                z.lineage = Lineage::Prior;
                z
            }
        };
        out.push(Offspring { point, operator: op });
    }
    Ok(out)
}

/// Elitist survival: the best `population` members of the union.
pub fn update_population(pop: &Population, offspring: Vec<(LatentPoint, f64)>, cfg: &SearchConfig) -> Population {
    let mut all: Vec<Member> = pop.members.clone();
    all.extend(offspring.into_iter().map(|(point, fitness)| Member { point, fitness }));
    all.sort_by(|a, b| lex_compare(&a.rank_key(), &b.rank_key()));
    all.truncate(cfg.population);
    Population {
        members: all,
        generation: pop.generation + 1,
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub incumbent: Panel,
    pub trace: Vec<TraceRecord>,
    pub total_cost: f64,
    pub wall_clock: Duration,
    pub config: SearchConfig,
    pub seed: u64,
    pub final_population: Population,
}

/// Fitness for each latent, evaluated in parallel with pre-reserved ids.
fn evaluate_fitness(
    points: &[LatentPoint],
    ctx: &TaskContext,
    cfg: &SearchConfig,
    ids: &mut IdAllocator,
) -> Result<Vec<f64>> {
    let jobs: Vec<(&LatentPoint, Id)> = points.iter().map(|z| (z, ids.reserve(cfg.eval_samples))).collect();
    par::map(&jobs, |&(z, first)| {
        family_utility(z, ctx, cfg, rng::derive(cfg.seed, Purpose::Fitness, &[z.id]), first)
    })
    .into_iter()
    .collect()
}

/// Runs the full search loop for `cfg.iterations` iterations.
pub fn run_search(ctx: &TaskContext, cfg: &SearchConfig) -> Result<RunResult> {
    let started = Instant::now();
    cfg.validate()?;
    ctx.validate(cfg.latent_dim)?;
    let seed = cfg.seed;
    let mut ids = IdAllocator::new(0);

    let initial = sample_prior(
        &ctx.prior,
        cfg.latent_dim,
        rng::derive(seed, Purpose::Prior, &[0]),
        cfg.population,
        &mut ids,
        0,
    )?;
    let fitness = evaluate_fitness(&initial, ctx, cfg, &mut ids)?;
    let mut pop = Population::new(
        initial
            .into_iter()
            .zip(fitness)
            .map(|(point, fitness)| Member { point, fitness })
            .collect(),
    );

    let mut incumbent = Panel::empty();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut total_cost = 0.0;

    for t in 1..=cfg.iterations {
        let generation = (t - 1) as u32;
        let offspring: Vec<Offspring> = match cfg.mode {
            SearchMode::Full => {
                let parents = select_parents(&pop, cfg)?;
                spawn_offspring(
                    &parents,
                    generation,
                    ctx,
                    cfg,
                    rng::derive(seed, Purpose::Operator, &[t as u64]),
                    &mut ids,
                )?
            }
            SearchMode::NoSearch => sample_prior(
                &ctx.prior,
                cfg.latent_dim,
                rng::derive(seed, Purpose::Prior, &[t as u64]),
                cfg.offspring,
                &mut ids,
                t as u32,
            )?
            .into_iter()
            .map(|point| Offspring {
                point,
                operator: Operator::Immigration,
            })
            .collect(),
        };

        let points: Vec<LatentPoint> = offspring.iter().map(|o| o.point.clone()).collect();
        let fitness = evaluate_fitness(&points, ctx, cfg, &mut ids)?;
        let jobs: Vec<(&LatentPoint, Id)> = points.iter().map(|z| (z, ids.reserve(cfg.family_size))).collect();
        let families = par::map(&jobs, |&(z, first)| {
            decode_family(
                z,
                ctx,
                cfg.family_size,
                rng::derive(seed, Purpose::Decode, &[z.id]),
                first,
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let funnel = run_funnel(
            pool_offspring(families),
            cfg,
            ctx,
            rng::derive(seed, Purpose::StageNoise, &[t as u64]),
        )?;
        total_cost += funnel.cost;

        let mut panel = build_panel(&funnel.terminal().members, cfg, ctx);
        if !panel.is_empty() {
            panel.source_iteration = Some(t);
        }

        if cfg.mode == SearchMode::Full {
            pop = update_population(&pop, points.iter().cloned().zip(fitness.iter().copied()).collect(), cfg);
        } else {
            pop.generation += 1;
        }
        incumbent = update_incumbent(incumbent, panel.clone());

        trace.push(TraceRecord {
            schema_version: SCHEMA_VERSION,
            iteration: t,
            offspring: offspring
                .iter()
                .zip(&fitness)
                .map(|(o, &f)| OffspringRecord {
                    id: o.point.id,
                    operator: o.operator,
                    lineage: o.point.lineage.clone(),
                    coords: o.point.coords.clone(),
                    fitness: f,
                })
                .collect(),
            population: pop
                .members
                .iter()
                .map(|m| PopulationEntry {
                    id: m.point.id,
                    fitness: m.fitness,
                })
                .collect(),
            stages: funnel
                .pools
                .iter()
                .map(|p| StageRecord {
                    stage: p.stage_index,
                    budget: p.budget,
                    members: p.ids(),
                })
                .collect(),
            candidates: candidate_records(&funnel),
            cost: funnel.cost,
            cumulative_cost: total_cost,
            panel: panel.ids(),
            panel_utility: panel.utility,
            incumbent: incumbent.ids(),
            incumbent_utility: incumbent.utility,
        });
    }

    Ok(RunResult {
        incumbent,
        trace,
        total_cost,
        wall_clock: started.elapsed(),
        config: cfg.clone(),
        seed,
        final_population: pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;

    fn member(id: Id, fitness: f64) -> Member {
        Member {
            point: LatentPoint::new(id, vec![0.0; 10], 0),
            fitness,
        }
    }

    #[test]
    fn parents_are_top_by_fitness() {
        let cfg = default_config();
        let pop = Population::new(vec![member(0, 1.0), member(1, 4.0), member(2, 2.0), member(3, 9.0)]);
        let ids: Vec<Id> = select_parents(&pop, &cfg).unwrap().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![3, 1, 2]);

        let flat = Population::new((0..4).rev().map(|i| member(i, 1.0)).collect());
        let ids: Vec<Id> = select_parents(&flat, &cfg).unwrap().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);

        let tiny = Population::new(vec![member(0, 1.0)]);
        assert!(select_parents(&tiny, &cfg).is_err());
    }

    #[test]
    fn mutation_scale_and_identity() {
        let mut cfg = default_config();
        let z = LatentPoint::new(0, vec![1.0; 10], 0);
        cfg.sigma_mut = 0.0;
        let m = mutate(&z, 0, &cfg, 3, 1);
        assert_eq!(m.coords, z.coords);
        assert_eq!(m.id, 1);
        assert_eq!(m.lineage, Lineage::Mutation { parent: 0 });
    }

    #[test]
    fn crossover_endpoints_and_midpoint() {
        let a = LatentPoint::new(0, vec![0.0, 2.0, 1.0], 0);
        let b = LatentPoint::new(1, vec![2.0, 0.0, 1.0], 0);
        assert_eq!(crossover_at(&a, &b, 1.0, 5).unwrap().coords, a.coords);
        assert_eq!(crossover_at(&a, &b, 0.5, 5).unwrap().coords, vec![1.0, 1.0, 1.0]);
        let c = crossover(&a, &b, 11, 6).unwrap();
        for ((x, lo), hi) in c.coords.iter().zip([0.0, 0.0, 1.0]).zip([2.0, 2.0, 1.0]) {
            assert!(*x >= lo && *x <= hi);
        }
        let short = LatentPoint::new(2, vec![0.0], 0);
        assert!(crossover_at(&a, &short, 0.5, 7).is_err());
    }

    #[test]
    fn pure_immigration_mixture() {
        let mut cfg = default_config();
        cfg.alpha_mut = 0.0;
        cfg.alpha_cross = 0.0;
        cfg.alpha_imm = 1.0;
        let ctx = TaskContext::default_dual_bowl(10);
        let parents = vec![LatentPoint::new(0, vec![5.0; 10], 0)];
        let kids = spawn_offspring(&parents, 0, &ctx, &cfg, 1, &mut IdAllocator::new(10)).unwrap();
        assert_eq!(kids.len(), 4);
        assert!(kids
            .iter()
            .all(|k| k.operator == Operator::Immigration && k.point.lineage == Lineage::Prior));
    }

    #[test]
    fn single_parent_crossover_folds_into_mutation() {
        let mut cfg = default_config();
        cfg.alpha_mut = 0.0;
        cfg.alpha_cross = 1.0;
        cfg.alpha_imm = 0.0;
        let ctx = TaskContext::default_dual_bowl(10);
        let parents = vec![LatentPoint::new(0, vec![0.0; 10], 0)];
        let kids = spawn_offspring(&parents, 0, &ctx, &cfg, 1, &mut IdAllocator::new(10)).unwrap();
        assert!(kids.iter().all(|k| k.operator == Operator::Mutation));
    }

    #[test]
    fn elitist_update() {
        let cfg = default_config();
        let pop = Population::new((0..4).map(|i| member(i, 10.0 + i as f64)).collect());
        let worse: Vec<(LatentPoint, f64)> = (10..14).map(|i| (LatentPoint::new(i, vec![0.0; 10], 1), 0.0)).collect();
        let next = update_population(&pop, worse, &cfg);
        assert_eq!(next.generation, 1);
        let mut ids: Vec<Id> = next.members.iter().map(|m| m.point.id).collect();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3]);

        let better: Vec<(LatentPoint, f64)> = (10..14)
            .map(|i| (LatentPoint::new(i, vec![0.0; 10], 1), 100.0))
            .collect();
        let next = update_population(&pop, better, &cfg);
        let mut ids: Vec<Id> = next.members.iter().map(|m| m.point.id).collect();
        ids.sort();
        assert_eq!(ids, vec![10, 11, 12, 13]);
        assert!(next.best_fitness() >= pop.best_fitness());
    }

    #[test]
    fn zero_iterations_gives_empty_incumbent() {
        let mut cfg = default_config();
        cfg.iterations = 0;
        let r = run_search(&TaskContext::default_dual_bowl(10), &cfg).unwrap();
        assert!(r.incumbent.is_empty());
        assert_eq!(r.incumbent.utility, f64::NEG_INFINITY);
        assert!(r.trace.is_empty());
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = default_config();
        let ctx = TaskContext::default_dual_bowl(10);
        let a = run_search(&ctx, &cfg).unwrap();
        let b = run_search(&ctx, &cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.incumbent, b.incumbent);
        assert_eq!(a.trace.len(), 3);
    }
}
