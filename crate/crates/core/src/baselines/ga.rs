use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{compute_reward, SizingEnv, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationMode {
    /// Move the gene one grid step up or down.
    Step,
    /// Redraw the gene uniformly over its grid.
    Resample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub tournament_k: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation: MutationMode,
    pub max_evals: usize,
    /// Population sizes tried by the sweep mode; the best mean is reported.
    pub population_sweep: Vec<usize>,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            tournament_k: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation: MutationMode::Step,
            max_evals: 10_000,
            population_sweep: vec![20, 50, 100],
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.population < 4 {
            return Err("population must be at least 4".into());
        }
        if self.tournament_k == 0 || self.tournament_k > self.population {
            return Err("tournament_k must lie in [1, population]".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err("rates must lie in [0, 1]".into());
        }
        if self.max_evals == 0 {
            return Err("max_evals must be positive".into());
        }
        if self.population_sweep.iter().any(|&p| p < 4) {
            return Err("population_sweep entries must be at least 4".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best_x: Vec<usize>,
    pub best_r: f64,
    /// Simulations spent, in generation order, up to and including the first success.
    pub eval_count: usize,
    pub success: bool,
    pub generations: usize,
    /// Best fitness after each generation, the initial population included.
    pub best_history: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Individual {
    x: Vec<usize>,
    r: f64,
}

/// Fitness through the environment's own shaping and success test.
fn evaluate(env: &SizingEnv, target: &TargetSpec, xs: Vec<Vec<usize>>) -> Vec<(Individual, bool)> {
    let circuit = env.circuit();
    xs.into_par_iter()
        .map(|x| {
            let spec = circuit.simulate(&x).ok();
            let r = env.shaped(spec.as_ref(), target);
            let ok = spec.is_some() && compute_reward(r, &env.config().reward).1;
            (Individual { x, r }, ok)
        })
        .collect()
}

fn tournament<'a>(pop: &'a [Individual], k: usize, rng: &mut ChaCha8Rng) -> &'a Individual {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..k {
        let c = &pop[rng.gen_range(0..pop.len())];
        if c.r > best.r {
            best = c;
        }
    }
    best
}

/// Generational GA over the environment's grid with elitism of one.
pub fn ga_optimize(env: &SizingEnv, target: &TargetSpec, cfg: &GaConfig) -> GaResult {
    let sizes = env.circuit().param_space().grid_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init: Vec<Vec<usize>> =
        (0..cfg.population).map(|_| sizes.iter().map(|&k| rng.gen_range(0..k)).collect()).collect();
    ga_from_population(env, target, cfg, init, &mut rng)
}

fn ga_from_population(
    env: &SizingEnv,
    target: &TargetSpec,
    cfg: &GaConfig,
    init: Vec<Vec<usize>>,
    rng: &mut ChaCha8Rng,
) -> GaResult {
    let sizes = env.circuit().param_space().grid_sizes();
    let mut evals = 0usize;
    let mut pop: Vec<Individual> = Vec::with_capacity(cfg.population);
    let mut history = Vec::new();
    let mut generations = 0;

    // stops at the first success so evaluations after it are not counted
    let absorb = |batch: Vec<(Individual, bool)>, pop: &mut Vec<Individual>, evals: &mut usize| -> Option<Individual> {
        for (ind, ok) in batch {
            *evals += 1;
            if ok {
                return Some(ind);
            }
            pop.push(ind);
        }
        None
    };

    let budget = cfg.max_evals.min(init.len());
    let first: Vec<Vec<usize>> = init.into_iter().take(budget).collect();
    if let Some(hit) = absorb(evaluate(env, target, first), &mut pop, &mut evals) {
        return GaResult {
            best_r: hit.r,
            best_x: hit.x,
            eval_count: evals,
            success: true,
            generations,
            best_history: history,
        };
    }
    let best_of = |pop: &[Individual]| pop.iter().max_by(|a, b| a.r.total_cmp(&b.r)).unwrap().clone();
    history.push(best_of(&pop).r);

    while evals < cfg.max_evals {
        generations += 1;
        let elite = best_of(&pop);
        let want = (cfg.population - 1).min(cfg.max_evals - evals);
        let children: Vec<Vec<usize>> = (0..want)
            .map(|_| {
                let a = tournament(&pop, cfg.tournament_k, rng).x.clone();
                let b = &tournament(&pop, cfg.tournament_k, rng).x;
                let mut child = if rng.gen::<f64>() < cfg.crossover_rate {
                    a.iter().zip(b).map(|(&ga, &gb)| if rng.gen::<bool>() { ga } else { gb }).collect()
                } else {
                    a
                };
                for (g, &k) in child.iter_mut().zip(&sizes) {
                    if rng.gen::<f64>() < cfg.mutation_rate {
                        *g = match cfg.mutation {
                            MutationMode::Step => {
                                if rng.gen::<bool>() {
                                    (*g + 1).min(k - 1)
                                } else {
                                    g.saturating_sub(1)
                                }
                            }
                            MutationMode::Resample => rng.gen_range(0..k),
                        };
                    }
                }
                child
            })
            .collect();
        let mut next = vec![elite];
        if let Some(hit) = absorb(evaluate(env, target, children), &mut next, &mut evals) {
            history.push(hit.r);
            return GaResult {
                best_r: hit.r,
                best_x: hit.x,
                eval_count: evals,
                success: true,
                generations,
                best_history: history,
            };
        }
        pop = next;
        history.push(best_of(&pop).r);
    }
    let best = best_of(&pop);
    GaResult { best_x: best.x, best_r: best.r, eval_count: evals, success: false, generations, best_history: history }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub population: usize,
    pub mean_evals: f64,
    pub successes: usize,
    pub total: usize,
}

/// Runs the GA on every target for each population size. Mean evaluations
/// average successful runs only.
pub fn ga_population_sweep(env: &SizingEnv, targets: &[TargetSpec], cfg: &GaConfig) -> Vec<SweepRow> {
    cfg.population_sweep
        .iter()
        .map(|&population| {
            let c = GaConfig { population, tournament_k: cfg.tournament_k.min(population), ..cfg.clone() };
            let runs: Vec<GaResult> = targets
                .iter()
                .enumerate()
                .map(|(i, t)| ga_optimize(env, t, &GaConfig { seed: cfg.seed.wrapping_add(i as u64), ..c.clone() }))
                .collect();
            let ok: Vec<&GaResult> = runs.iter().filter(|r| r.success).collect();
            let mean_evals = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.eval_count as f64).sum::<f64>() / ok.len() as f64
            };
            SweepRow { population, mean_evals, successes: ok.len(), total: runs.len() }
        })
        .collect()
}

/// The sweep row with the lowest mean evaluation count among rows with any success.
pub fn best_sweep_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().filter(|r| r.successes > 0).min_by(|a, b| a.mean_evals.total_cmp(&b.mean_evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::ToyCircuit;
    use crate::env::EnvConfig;
    use std::sync::Arc;

    fn toy_env() -> SizingEnv {
        let c = ToyCircuit::new(3, 11);
        let r = c.ranges();
        SizingEnv::new(Arc::new(c), r, EnvConfig::default()).unwrap()
    }

    #[test]
    fn finds_known_grid_point() {
        let env = toy_env();
        // the toy grid has 11^3 points; exactly one meets this target
        let goal = [7usize, 2, 9];
        let target = TargetSpec::new(ToyCircuit::spec_at(&goal));
        let mut hits = 0;
        for a in 0..11 {
            for b in 0..11 {
                for c in 0..11 {
                    let s = ToyCircuit::spec_at(&[a, b, c]);
                    hits += compute_reward(
                        env.shaped(Some(&crate::circuits::SpecVector::new(s)), &target),
                        &env.config().reward,
                    )
                    .1 as usize;
                }
            }
        }
        assert_eq!(hits, 1);
        let res = ga_optimize(&env, &target, &GaConfig::default());
        assert!(res.success, "{res:?}");
        assert_eq!(res.best_x, goal);
        assert!(res.eval_count <= 2000);
    }

    #[test]
    fn deterministic_under_seed() {
        let env = toy_env();
        let t = TargetSpec::new(ToyCircuit::spec_at(&[1, 10, 4]));
        let cfg = GaConfig { seed: 9, ..Default::default() };
        assert_eq!(ga_optimize(&env, &t, &cfg), ga_optimize(&env, &t, &cfg));
    }

    #[test]
    fn no_variation_is_stationary() {
        let env = toy_env();
        let t = TargetSpec::new(ToyCircuit::spec_at(&[0, 0, 0]));
        let cfg =
            GaConfig { crossover_rate: 0.0, mutation_rate: 0.0, max_evals: 500, population: 10, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let res = ga_from_population(&env, &t, &cfg, vec![vec![5, 5, 5]; 10], &mut rng);
        assert!(!res.success);
        assert_eq!(res.best_x, vec![5, 5, 5]);
        assert!(res.best_history.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(res.eval_count, 500);
    }

    #[test]
    fn elitism_keeps_best_fitness_monotone() {
        let env = toy_env();
        let t = TargetSpec::new(vec![100.0; 6]);
        for mode in [MutationMode::Step, MutationMode::Resample] {
            let cfg = GaConfig { max_evals: 1000, mutation: mode, ..Default::default() };
            let res = ga_optimize(&env, &t, &cfg);
            assert!(!res.success);
            assert!(res.best_history.windows(2).all(|w| w[1] >= w[0]));
            assert!(res.eval_count <= 1000);
        }
    }

    #[test]
    fn sweep_reports_each_population() {
        let env = toy_env();
        let targets: Vec<TargetSpec> =
            [[1, 2, 3], [9, 9, 0]].iter().map(|x| TargetSpec::new(ToyCircuit::spec_at(x))).collect();
        let rows =
            ga_population_sweep(&env, &targets, &GaConfig { population_sweep: vec![10, 30], ..Default::default() });
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.total == 2));
        assert!(best_sweep_row(&rows).is_some());
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        assert!(GaConfig { population: 3, ..Default::default() }.validate().is_err());
        assert!(GaConfig { mutation_rate: 1.5, ..Default::default() }.validate().is_err());
    }
}
