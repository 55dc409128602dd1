use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trace::{StaticCostKind, TraceEntry, TrainingTrace};
use super::{check_lambda, TrainingSet};
use crate::data::{DynDataset, SteadyDataset};
use crate::models::MlpModel;
use crate::steady_state::{cost_jd_on, legacy_static_cost, FixedPointConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Extension of the blend-crossover interval beyond the parents.
    pub blend_alpha: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of each gene's population spread.
    pub mutation_scale: f64,
    /// Relative spread of the initial population around the seed model.
    pub init_spread: f64,
    pub seed: u64,
    /// Evaluate each generation on the rayon pool.
    pub parallel: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 40,
            generations: 21,
            tournament_size: 3,
            crossover_rate: 0.9,
            blend_alpha: 0.5,
            mutation_rate: 0.2,
            mutation_scale: 0.1,
            init_spread: 0.5,
            seed: 0,
            parallel: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.tournament_size == 0 {
            return Err(Error::invalid(
                "ga config",
                "population and tournament sizes must be positive",
            ));
        }
        for (name, v) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    "ga config",
                    format!("{name} must lie in [0, 1], got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("blend_alpha", self.blend_alpha),
            ("mutation_scale", self.mutation_scale),
            ("init_spread", self.init_spread),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    "ga config",
                    format!("{name} must be non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaGeneration {
    pub generation: usize,
    pub best_cost: f64,
    pub best_j_d: f64,
    pub best_j_s_legacy: f64,
    pub wall_time_ms: f64,
    /// Cumulative model evaluations.
    pub model_evaluations: u64,
    /// Cumulative objective calls.
    pub objective_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaTrace {
    pub generations: Vec<GaGeneration>,
    /// Model evaluations spent by each objective call, in call order.
    pub evaluations_per_call: Vec<u64>,
}

impl From<GaTrace> for TrainingTrace {
    fn from(t: GaTrace) -> Self {
        TrainingTrace {
            static_cost: StaticCostKind::Legacy,
            entries: t
                .generations
                .iter()
                .map(|g| TraceEntry {
                    iteration: g.generation,
                    j_d: g.best_j_d,
                    j_s: g.best_j_s_legacy,
                    j_sd: g.best_cost,
                    wall_time_ms: g.wall_time_ms,
                    model_evaluations: g.model_evaluations,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Scored {
    theta: Vec<f64>,
    cost: f64,
    j_d: f64,
    j_s: f64,
    evaluations: u64,
}

struct Objective<'a> {
    template: &'a MlpModel,
    set: &'a TrainingSet,
    zs: &'a SteadyDataset,
    lambda: f64,
    fixed_point: &'a FixedPointConfig,
}

impl Objective<'_> {
    fn score(&self, theta: Vec<f64>) -> Result<Scored> {
        let model = self.template.with_theta(theta)?;
        let j_d = cost_jd_on(&model, &self.set.dynamic);
        let legacy = legacy_static_cost(&model, self.zs, self.fixed_point)?;
        let mut cost = (1.0 - self.lambda) * j_d + self.lambda * legacy.value;
        if !cost.is_finite() {
            cost = f64::INFINITY;
        }
        Ok(Scored {
            theta: model.theta().to_vec(),
            cost,
            j_d,
            j_s: legacy.value,
            evaluations: self.set.dynamic_rows() as u64 + legacy.evaluations,
        })
    }

    fn score_all(&self, pop: Vec<Vec<f64>>, parallel: bool) -> Result<Vec<Scored>> {
        if parallel {
            pop.into_par_iter().map(|t| self.score(t)).collect()
        } else {
            pop.into_iter().map(|t| self.score(t)).collect()
        }
    }
}

fn best(pop: &[Scored]) -> &Scored {
    pop.iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("population is never empty")
}

fn tournament<'a>(pop: &'a [Scored], size: usize, rng: &mut ChaCha8Rng) -> &'a Scored {
    let mut winner = pop.choose(rng).expect("population is never empty");
    for _ in 1..size {
        let c = pop.choose(rng).expect("population is never empty");
        if c.cost < winner.cost {
            winner = c;
        }
    }
    winner
}

fn gene_spread(pop: &[Scored], q: usize) -> Vec<f64> {
    let n = pop.len() as f64;
    (0..q)
        .map(|j| {
            let mean = pop.iter().map(|s| s.theta[j]).sum::<f64>() / n;
            (pop.iter().map(|s| (s.theta[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Real-coded GA on `(1-λ)J_d + λJ_s` with `J_s` from iterated fixed points.
/// The seed model is the first member of the initial population and the best
/// individual always survives.
pub fn fit_ga_legacy(
    seed_model: &MlpModel,
    zd: &DynDataset,
    zs: &SteadyDataset,
    lambda: f64,
    config: &GaConfig,
    fixed_point: &FixedPointConfig,
) -> Result<(MlpModel, GaTrace)> {
    check_lambda(lambda)?;
    config.validate()?;
    fixed_point.validate()?;
    let start = Instant::now();
    let set = TrainingSet::new(seed_model.spec(), zd, zs)?;
    let objective = Objective {
        template: seed_model,
        set: &set,
        zs,
        lambda,
        fixed_point,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let q = seed_model.theta().len();

    let seed_theta = seed_model.theta();
    let mut initial = vec![seed_theta.to_vec()];
    while initial.len() < config.population_size {
        initial.push(
            seed_theta
                .iter()
                .map(|&t| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    t + config.init_spread * t.abs().max(0.1) * z
                })
                .collect(),
        );
    }
    let mut population = objective.score_all(initial, config.parallel)?;

    let mut trace = GaTrace {
        generations: Vec::with_capacity(config.generations + 1),
        evaluations_per_call: Vec::new(),
    };
    let record = |trace: &mut GaTrace, generation: usize, pop: &[Scored]| {
        trace
            .evaluations_per_call
            .extend(pop.iter().map(|s| s.evaluations));
        let b = best(pop);
        trace.generations.push(GaGeneration {
            generation,
            best_cost: b.cost,
            best_j_d: b.j_d,
            best_j_s_legacy: b.j_s,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            model_evaluations: trace.evaluations_per_call.iter().sum(),
            objective_calls: trace.evaluations_per_call.len() as u64,
        });
    };
    record(&mut trace, 0, &population);

    for generation in 1..=config.generations {
        let spread = gene_spread(&population, q);
        let elite = best(&population).clone();
        let mut children = Vec::with_capacity(config.population_size - 1);
        while children.len() + 1 < config.population_size {
            let a = tournament(&population, config.tournament_size, &mut rng);
            let b = tournament(&population, config.tournament_size, &mut rng);
            let mut child: Vec<f64> = if rng.random::<f64>() < config.crossover_rate {
                a.theta
                    .iter()
                    .zip(&b.theta)
                    .map(|(&x, &y)| {
                        let (lo, hi) = (x.min(y), x.max(y));
                        let ext = config.blend_alpha * (hi - lo);
                        if hi - lo > 0.0 {
                            rng.random_range(lo - ext..=hi + ext)
                        } else {
                            lo
                        }
                    })
                    .collect()
            } else {
                a.theta.clone()
            };
            for (g, s) in child.iter_mut().zip(&spread) {
                let sd = config.mutation_scale * s;
                if sd > 0.0 && rng.random::<f64>() < config.mutation_rate {
                    *g += Normal::new(0.0, sd)
                        .expect("positive deviation")
                        .sample(&mut rng);
                }
            }
            children.push(child);
        }
        let scored = objective.score_all(children, config.parallel)?;
        record(&mut trace, generation, &scored);
        population = std::iter::once(elite).chain(scored).collect();
    }

    let winner = seed_model.with_theta(best(&population).theta.clone())?;
    Ok((winner, trace))
}
