//! Real-coded genetic search over flattened latent vectors.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaError {
    #[error("invalid optimizer configuration: {0}")]
    Config(&'static str),
    #[error("corpus has {corpus} members but the population needs {needed}")]
    CorpusTooSmall { corpus: usize, needed: usize },
    #[error("genome lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GaConfig {
    pub population: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    /// Range of the crossover weight `r`; values above 1 extrapolate.
    pub r_range: (f64, f64),
    /// Mutation standard deviation as a multiple of the population spread.
    pub mutation_scale: f64,
    /// Lower bound on the spread used by mutation, as a fraction of the
    /// initial population's spread; keeps a converged population exploring.
    pub spread_floor: f64,
    pub generations: usize,
    pub elites: usize,
    /// Search stops once the best fitness drops below this (m).
    pub stop_fitness: f64,
    /// Added to the worst fitness of the generation for failed evaluations.
    pub failure_penalty: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            crossover_probability: 0.9,
            mutation_probability: 0.05,
            r_range: (0.0, 1.2),
            mutation_scale: 0.5,
            spread_floor: 0.5,
            generations: 200,
            elites: 2,
            stop_fitness: 1e-3,
            failure_penalty: 1.0,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.population < 2 {
            return Err(GaError::Config("population must hold at least 2 individuals"));
        }
        if !prob(self.crossover_probability) || !prob(self.mutation_probability) {
            return Err(GaError::Config("probabilities must lie in [0, 1]"));
        }
        if !(self.r_range.0 < self.r_range.1) || !self.r_range.0.is_finite() || !self.r_range.1.is_finite() {
            return Err(GaError::Config("crossover range needs lower < upper"));
        }
        if !(self.spread_floor >= 0.0) || !(self.mutation_scale >= 0.0) || !(self.failure_penalty >= 0.0) {
            return Err(GaError::Config("mutation scale and failure penalty must be non-negative"));
        }
        if self.elites > self.population {
            return Err(GaError::Config("more elites than individuals"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    /// Simulated landing height (m); 0 for failed evaluations.
    pub height: f64,
    /// `|target − height|`, or a penalty when the evaluation failed.
    pub fitness: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: usize,
    pub individuals: Vec<Individual>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub median: f64,
    pub mean: f64,
    /// Fraction with fitness ≤ 0.1 m.
    pub within_0_1: f64,
    /// Fraction with fitness ≤ 0.5 m.
    pub within_0_5: f64,
    pub max_height: f64,
    pub failures: usize,
}

/// Absolute residual between achieved and target heights.
pub fn fitness(height: f64, target: f64) -> f64 {
    (target - height).abs()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) }
}

impl Population {
    pub fn stats(&self) -> GenerationStats {
        let mut f: Vec<f64> = self.individuals.iter().map(|i| i.fitness).collect();
        f.sort_by(f64::total_cmp);
        let n = f.len().max(1) as f64;
        let within = |d: f64| f.iter().filter(|&&v| v <= d).count() as f64 / n;
        GenerationStats {
            generation: self.generation,
            best: f.first().copied().unwrap_or(f64::NAN),
            median: median(&f),
            mean: f.iter().sum::<f64>() / n,
            within_0_1: within(0.1),
            within_0_5: within(0.5),
            max_height: self.individuals.iter().map(|i| i.height).fold(f64::NEG_INFINITY, f64::max),
            failures: self.individuals.iter().filter(|i| i.failed).count(),
        }
    }

    pub fn best(&self) -> Option<&Individual> {
        self.individuals.iter().min_by(|a, b| a.fitness.total_cmp(&b.fitness))
    }

    pub fn genome_len(&self) -> usize {
        self.individuals.first().map_or(0, |i| i.genome.len())
    }
}

/// Sorts the scored corpus by height, splits the ranks into `n` contiguous
/// strata (the first `N mod n` one member larger) and draws one member per
/// stratum. Returns the population and the chosen corpus indices.
pub fn init_population(
    corpus: &[(Vec<f64>, f64)],
    n: usize,
    target: f64,
    seed: u64,
) -> Result<(Population, Vec<usize>), GaError> {
    if n == 0 {
        return Err(GaError::Config("population must be non-empty"));
    }
    if corpus.len() < n {
        return Err(GaError::CorpusTooSmall { corpus: corpus.len(), needed: n });
    }
    let len = corpus[0].0.len();
    for (g, h) in corpus {
        if g.len() != len {
            return Err(GaError::LengthMismatch(len, g.len()));
        }
        if !h.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(GaError::NonFinite("corpus"));
        }
    }
    let mut ranked: Vec<usize> = (0..corpus.len()).collect();
    ranked.sort_by(|&a, &b| corpus[a].1.total_cmp(&corpus[b].1).then(a.cmp(&b)));
    let base = corpus.len() / n;
    let extra = corpus.len() % n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    let mut start = 0;
    for s in 0..n {
        let size = base + usize::from(s < extra);
        chosen.push(ranked[start + rng.random_range(0..size)]);
        start += size;
    }
    let individuals = chosen
        .iter()
        .map(|&i| Individual {
            genome: corpus[i].0.clone(),
            height: corpus[i].1,
            fitness: fitness(corpus[i].1, target),
            failed: false,
        })
        .collect();
    Ok((Population { generation: 0, individuals }, chosen))
}

/// `r·p1 + (1 − r)·p2` with one `r` for every component.
pub fn line_crossover(p1: &[f64], p2: &[f64], r: f64) -> Result<Vec<f64>, GaError> {
    if p1.len() != p2.len() {
        return Err(GaError::LengthMismatch(p1.len(), p2.len()));
    }
    Ok(p1.iter().zip(p2).map(|(a, b)| r * a + (1.0 - r) * b).collect())
}

/// [`line_crossover`] with `r` drawn uniformly from `range`.
pub fn line_crossover_random<R: Rng + ?Sized>(
    p1: &[f64],
    p2: &[f64],
    range: (f64, f64),
    rng: &mut R,
) -> Result<Vec<f64>, GaError> {
    let r = rng.random_range(range.0..range.1);
    line_crossover(p1, p2, r)
}

/// Each component fires with `probability` and then receives Gaussian noise
/// with standard deviation `scale · spread[i]`.
pub fn mutate<R: Rng + ?Sized>(genome: &mut [f64], probability: f64, scale: f64, spread: &[f64], rng: &mut R) {
    for (g, s) in genome.iter_mut().zip(spread) {
        if rng.random::<f64>() < probability {
            let n: f64 = StandardNormal.sample(rng);
            *g += n * scale * s;
        }
    }
}

/// Per-component population standard deviation.
pub fn population_spread(genomes: &[&[f64]]) -> Vec<f64> {
    let len = genomes.first().map_or(0, |g| g.len());
    let n = genomes.len().max(1) as f64;
    (0..len)
        .map(|i| {
            let mean = genomes.iter().map(|g| g[i]).sum::<f64>() / n;
            (genomes.iter().map(|g| (g[i] - mean) * (g[i] - mean)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Maps a genome to a landing height. Must be pure.
pub trait Evaluator {
    fn evaluate(&self, genome: &[f64]) -> Result<f64, String>;

    /// Results in input order.
    fn evaluate_batch(&self, genomes: &[&[f64]]) -> Vec<Result<f64, String>> {
        genomes.iter().map(|g| self.evaluate(g)).collect()
    }
}

impl<F: Fn(&[f64]) -> Result<f64, String>> Evaluator for F {
    fn evaluate(&self, genome: &[f64]) -> Result<f64, String> {
        self(genome)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationFailure {
    pub generation: usize,
    pub individual: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRun {
    pub initial: Population,
    pub last: Population,
    /// Statistics of generation 0 (the initial population) onward.
    pub history: Vec<GenerationStats>,
    pub failures: Vec<EvaluationFailure>,
    /// Evaluator calls actually made (cache misses).
    pub evaluations: usize,
    pub stopped_early: bool,
}

fn genome_key(g: &[f64]) -> Vec<u64> {
    g.iter().map(|v| v.to_bits()).collect()
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.fitness < a.fitness { b } else { a }
}

pub fn evolve<E: Evaluator + ?Sized>(
    initial: Population,
    evaluator: &E,
    target: f64,
    config: &GaConfig,
) -> Result<EvolutionRun, GaError> {
    evolve_with(initial, evaluator, target, config, |_, _| {})
}

/// Generational loop with elitism, binary tournaments, line crossover and
/// spread-scaled mutation. `on_generation` sees every population, starting
/// with the initial one. Deterministic in `(initial, config)` for a pure
/// evaluator.
pub fn evolve_with<E: Evaluator + ?Sized>(
    initial: Population,
    evaluator: &E,
    target: f64,
    config: &GaConfig,
    mut on_generation: impl FnMut(&Population, &GenerationStats),
) -> Result<EvolutionRun, GaError> {
    config.validate()?;
    if initial.individuals.len() != config.population {
        return Err(GaError::Config("initial population size differs from config"));
    }
    let len = initial.genome_len();
    for ind in &initial.individuals {
        if ind.genome.len() != len {
            return Err(GaError::LengthMismatch(len, ind.genome.len()));
        }
        if ind.genome.iter().any(|v| !v.is_finite()) {
            return Err(GaError::NonFinite("initial genome"));
        }
    }
    if !target.is_finite() {
        return Err(GaError::NonFinite("target"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial_refs: Vec<&[f64]> = initial.individuals.iter().map(|i| i.genome.as_slice()).collect();
    let spread_floor: Vec<f64> =
        population_spread(&initial_refs).iter().map(|s| s * config.spread_floor).collect();
    let mut cache: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut pop = initial.clone();
    for ind in &mut pop.individuals {
        if !ind.failed {
            ind.fitness = fitness(ind.height, target);
            cache.insert(genome_key(&ind.genome), ind.height);
        }
    }
    let mut history = Vec::with_capacity(config.generations + 1);
    let mut failures = Vec::new();
    let mut evaluations = 0;
    let stats = pop.stats();
    on_generation(&pop, &stats);
    history.push(stats);
    let mut stopped_early = false;

    for generation in 1..=config.generations {
        if history.last().is_some_and(|s| s.best < config.stop_fitness) {
            stopped_early = true;
            break;
        }
        let mut sorted = pop.individuals.clone();
        sorted.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        let refs: Vec<&[f64]> = sorted.iter().map(|i| i.genome.as_slice()).collect();
        let spread: Vec<f64> =
            population_spread(&refs).iter().zip(&spread_floor).map(|(s, f)| s.max(*f)).collect();

        let mut genomes: Vec<Vec<f64>> = Vec::with_capacity(config.population);
        let mut carried: Vec<Option<Individual>> = Vec::with_capacity(config.population);
        for elite in sorted.iter().take(config.elites) {
            genomes.push(elite.genome.clone());
            carried.push(Some(elite.clone()));
        }
        while genomes.len() < config.population {
            let p1 = tournament(&sorted, &mut rng);
            let p2 = tournament(&sorted, &mut rng);
            // the fitter parent comes first, so r > 1 extrapolates past it
            let (p1, p2) = if p2.fitness < p1.fitness { (p2, p1) } else { (p1, p2) };
            let mut child = if rng.random::<f64>() < config.crossover_probability {
                line_crossover_random(&p1.genome, &p2.genome, config.r_range, &mut rng)?
            } else {
                p1.genome.clone()
            };
            mutate(&mut child, config.mutation_probability, config.mutation_scale, &spread, &mut rng);
            genomes.push(child);
            carried.push(None);
        }

        // Evaluate cache misses once each, in population order.
        let mut pending: Vec<usize> = Vec::new();
        let mut pending_keys: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        for (i, g) in genomes.iter().enumerate() {
            if carried[i].is_some() {
                continue;
            }
            let key = genome_key(g);
            if !cache.contains_key(&key) && !pending_keys.contains_key(&key) {
                pending_keys.insert(key, i);
                pending.push(i);
            }
        }
        let batch: Vec<&[f64]> = pending.iter().map(|&i| genomes[i].as_slice()).collect();
        let results = evaluator.evaluate_batch(&batch);
        evaluations += batch.len();
        let mut failed_keys: BTreeMap<Vec<u64>, String> = BTreeMap::new();
        for (&i, result) in pending.iter().zip(results) {
            let key = genome_key(&genomes[i]);
            match result {
                Ok(h) if h.is_finite() => {
                    cache.insert(key, h);
                }
                Ok(_) => {
                    failed_keys.insert(key, "non-finite height".into());
                }
                Err(message) => {
                    failed_keys.insert(key, message);
                }
            }
        }

        let mut individuals: Vec<Individual> = Vec::with_capacity(config.population);
        let mut failed_slots = Vec::new();
        for (i, (genome, carry)) in genomes.into_iter().zip(carried).enumerate() {
            if let Some(ind) = carry {
                individuals.push(ind);
                continue;
            }
            let key = genome_key(&genome);
            match cache.get(&key) {
                Some(&height) => {
                    individuals.push(Individual { genome, height, fitness: fitness(height, target), failed: false })
                }
                None => {
                    let message = failed_keys.get(&key).cloned().unwrap_or_default();
                    failures.push(EvaluationFailure { generation, individual: i, message });
                    failed_slots.push(i);
                    individuals.push(Individual { genome, height: 0.0, fitness: 0.0, failed: true });
                }
            }
        }
        if !failed_slots.is_empty() {
            let worst = individuals
                .iter()
                .filter(|i| !i.failed)
                .map(|i| i.fitness)
                .fold(fitness(0.0, target), f64::max);
            for &i in &failed_slots {
                individuals[i].fitness = worst + config.failure_penalty;
            }
        }
        pop = Population { generation, individuals };
        let stats = pop.stats();
        on_generation(&pop, &stats);
        history.push(stats);
    }
    Ok(EvolutionRun { initial, last: pop, history, failures, evaluations, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn crossover_endpoints() {
        let p1 = [1.0, 0.0];
        let p2 = [0.0, 1.0];
        assert_eq!(line_crossover(&p1, &p2, 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(line_crossover(&p1, &p2, 0.0).unwrap(), vec![0.0, 1.0]);
        let c = line_crossover(&p1, &p2, 1.2).unwrap();
        assert!((c[0] - 1.2).abs() < 1e-12 && (c[1] + 0.2).abs() < 1e-12);
        assert!(line_crossover(&p1, &[1.0], 0.5).is_err());
    }

    #[test]
    fn fitness_examples() {
        assert_eq!(fitness(6.0, 6.0), 0.0);
        assert!((fitness(12.6, 13.8) - 1.2).abs() < 1e-12);
        assert_eq!(fitness(0.0, 6.0), 6.0);
    }

    #[test]
    fn stratified_init_covers_every_stratum() {
        let corpus: Vec<(Vec<f64>, f64)> = (0..10).map(|i| (vec![i as f64], (9 - i) as f64)).collect();
        let (pop, chosen) = init_population(&corpus, 10, 6.0, 1).unwrap();
        let mut sorted = chosen.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(pop.individuals.len(), 10);
        assert!(init_population(&corpus, 11, 6.0, 1).is_err());
    }

    #[test]
    fn identical_population_without_mutation_is_fixed() {
        let ind = Individual { genome: vec![1.0, 2.0], height: 3.0, fitness: 3.0, failed: false };
        let pop = Population { generation: 0, individuals: vec![ind; 10] };
        let cfg = GaConfig { population: 10, mutation_probability: 0.0, generations: 5, ..GaConfig::default() };
        let eval = |g: &[f64]| -> Result<f64, String> { Ok(g[0] + 2.0) };
        let run = evolve(pop.clone(), &eval, 6.0, &cfg).unwrap();
        for ind in &run.last.individuals {
            assert_eq!(ind.genome, vec![1.0, 2.0]);
        }
        assert_eq!(run.evaluations, 0);
    }

    #[test]
    fn failures_get_penalized() {
        let corpus: Vec<(Vec<f64>, f64)> = (0..4).map(|i| (vec![i as f64], i as f64)).collect();
        let (pop, _) = init_population(&corpus, 4, 2.5, 0).unwrap();
        let cfg = GaConfig { population: 4, elites: 1, generations: 3, ..GaConfig::default() };
        let eval = |_: &[f64]| -> Result<f64, String> { Err("boom".into()) };
        let run = evolve(pop, &eval, 2.5, &cfg).unwrap();
        assert!(!run.failures.is_empty());
        let s = run.history.last().unwrap();
        assert_eq!(s.best, 0.5);
        assert!(run.last.individuals.iter().filter(|i| i.failed).all(|i| i.fitness >= 3.5));
    }
}
