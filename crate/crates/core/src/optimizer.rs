//! Genetic search over the seven tunable pipeline parameters, minimizing
//! cross-validated error.
//!
//! Genes are stored as reals and integer genes are rounded when decoded.
//! Selection is roulette on `1 - error`, crossover is scattered (each gene
//! from either parent), the remaining children are mutated copies with a
//! per-gene uniform reset, and the best `elite_count` genomes survive with
//! their fitness cached.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleSet;
use crate::error::{ensure, Result};
use crate::io::csv_bytes;
use crate::pipeline::{cross_validate, derive_seed, MappingMode, PipelineParams};

pub const GENE_COUNT: usize = 7;

/// Gene order used by [`Genome::genes`].
pub const GENE_NAMES: [&str; GENE_COUNT] = [
    "spike_threshold",
    "firing_threshold",
    "stdp_rate",
    "refractory",
    "mod",
    "drift",
    "k",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneRange {
    pub low: f64,
    pub high: f64,
    pub integer: bool,
}

impl GeneRange {
    fn decode(&self, x: f64) -> f64 {
        let x = x.clamp(self.low, self.high);
        if self.integer {
            x.round()
        } else {
            x
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub ranges: [GeneRange; GENE_COUNT],
}

impl Default for ParamSpec {
    fn default() -> Self {
        let r = |low, high, integer| GeneRange { low, high, integer };
        Self {
            ranges: [
                r(0.1, 0.9, false),
                r(0.01, 0.8, false),
                r(0.001, 0.5, false),
                r(2.0, 9.0, true),
                r(0.00001, 0.5, false),
                r(0.1, 0.95, false),
                r(1.0, 10.0, true),
            ],
        }
    }
}

impl ParamSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in GENE_NAMES.iter().zip(&self.ranges) {
            ensure!(
                r.low.is_finite() && r.high.is_finite() && r.low < r.high,
                "gene {name}: range [{}, {}] is empty",
                r.low,
                r.high
            );
        }
        let lowest = |i: usize| self.ranges[i].low;
        ensure!(lowest(0) > 0.0, "spike_threshold range must be positive");
        ensure!(lowest(1) > 0.0, "firing_threshold range must be positive");
        ensure!(lowest(2) >= 0.0, "stdp_rate range must be non-negative");
        ensure!(lowest(3) >= 1.0, "refractory range must start at 1 or more");
        ensure!(lowest(4) > 0.0 && self.ranges[4].high < 1.0, "mod range must lie in (0, 1)");
        ensure!(lowest(5) >= 0.0, "drift range must be non-negative");
        ensure!(lowest(6) >= 1.0, "k range must start at 1 or more");
        Ok(())
    }

    pub fn random_genes<R: Rng>(&self, rng: &mut R) -> [f64; GENE_COUNT] {
        std::array::from_fn(|i| rng.random_range(self.ranges[i].low..=self.ranges[i].high))
    }

    pub fn contains(&self, genes: &[f64; GENE_COUNT]) -> bool {
        genes.iter().zip(&self.ranges).all(|(&g, r)| g >= r.low && g <= r.high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub genes: [f64; GENE_COUNT],
    /// Cross-validated error, `None` until evaluated.
    pub error: Option<f64>,
}

impl Genome {
    pub fn new(genes: [f64; GENE_COUNT]) -> Self {
        Self { genes, error: None }
    }

    /// Gene values after clamping and integer rounding.
    pub fn decoded(&self, spec: &ParamSpec) -> [f64; GENE_COUNT] {
        std::array::from_fn(|i| spec.ranges[i].decode(self.genes[i]))
    }

    /// Pipeline parameters with the seven tuned fields replaced.
    pub fn apply(&self, spec: &ParamSpec, base: &PipelineParams) -> PipelineParams {
        let g = self.decoded(spec);
        let mut p = base.clone();
        p.encoding.alpha = g[0];
        p.lif.firing_threshold = g[1];
        p.stdp_rate = g[2];
        p.lif.refractory_ticks = g[3] as usize;
        p.desnn.modulation = g[4];
        p.desnn.drift = g[5];
        p.desnn.k = g[6] as usize;
        p
    }

    /// Named view of the decoded genes, for reports.
    pub fn named(&self, spec: &ParamSpec) -> Vec<(&'static str, f64)> {
        GENE_NAMES.iter().copied().zip(self.decoded(spec)).collect()
    }

    fn key(&self) -> [u64; GENE_COUNT] {
        self.genes.map(f64::to_bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub generations: usize,
    pub population: usize,
    pub crossover_fraction: f64,
    pub elite_count: usize,
    pub folds: usize,
    pub seed: u64,
    pub mapping_mode: MappingMode,
    /// Re-score survivors every generation with a fresh evaluation seed
    /// instead of keeping their cached error.
    pub reevaluate_elites: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            generations: 16,
            population: 50,
            crossover_fraction: 0.2,
            elite_count: 5,
            folds: 2,
            seed: 0,
            mapping_mode: MappingMode::Graph,
            reevaluate_elites: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.generations >= 1, "generations must be >= 1");
        ensure!(self.population >= 2, "population must be >= 2, got {}", self.population);
        ensure!(
            self.elite_count < self.population,
            "elite count {} must be below population {}",
            self.elite_count,
            self.population
        );
        ensure!(
            (0.0..=1.0).contains(&self.crossover_fraction),
            "crossover fraction must be in [0, 1], got {}",
            self.crossover_fraction
        );
        ensure!(self.folds >= 2, "folds must be >= 2, got {}", self.folds);
        Ok(())
    }

    /// Seed used to score genomes in generation `g`.
    pub fn evaluation_seed(&self, generation: usize) -> u64 {
        if self.reevaluate_elites {
            derive_seed(self.seed, 1000 + generation as u64)
        } else {
            self.seed
        }
    }
}

/// Cross-validated error (1 - pooled accuracy) of the pipeline with the
/// genome's parameters.
pub fn evaluate_fitness(
    genome: &Genome,
    spec: &ParamSpec,
    base: &PipelineParams,
    set: &SampleSet,
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let params = genome.apply(spec, base);
    params.validate()?;
    let acc = cross_validate(set, &params, folds, seed, &[1.0])?;
    Ok(1.0 - acc[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub best_error: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Genome,
    pub trace: Vec<TraceRow>,
    pub population: Vec<Genome>,
    pub evaluations: usize,
}

impl GaResult {
    pub fn best_params(&self, spec: &ParamSpec, base: &PipelineParams) -> PipelineParams {
        self.best.apply(spec, base)
    }
}

/// Trace as CSV: `generation,best_error,mean_error`.
pub fn trace_csv(trace: &[TraceRow]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["generation", "best_error", "mean_error"])?;
        for r in trace {
            w.write_record([r.generation.to_string(), r.best_error.to_string(), r.mean_error.to_string()])?;
        }
        Ok(())
    })
}

fn roulette<R: Rng>(rng: &mut R, scores: &[f64]) -> usize {
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..scores.len());
    }
    let mut x = rng.random::<f64>() * total;
    for (i, &s) in scores.iter().enumerate() {
        if x < s {
            return i;
        }
        x -= s;
    }
    scores.iter().rposition(|&s| s > 0.0).unwrap_or(0)
}

fn sort_by_error(pop: &mut [Genome]) {
    pop.sort_by(|a, b| a.error.unwrap_or(f64::INFINITY).total_cmp(&b.error.unwrap_or(f64::INFINITY)));
}

pub fn ga_optimize(set: &SampleSet, spec: &ParamSpec, base: &PipelineParams, cfg: &GaConfig) -> Result<GaResult> {
    spec.validate()?;
    cfg.validate()?;
    let mut base = base.clone();
    base.mapping_mode = cfg.mapping_mode;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 7));
    let mut pop: Vec<Genome> = (0..cfg.population).map(|_| Genome::new(spec.random_genes(&mut rng))).collect();
    let mut cache: HashMap<[u64; GENE_COUNT], f64> = HashMap::new();
    let mut trace = Vec::with_capacity(cfg.generations);
    let mut best: Option<Genome> = None;
    let mut evaluations = 0;

    for generation in 0..cfg.generations {
        let eval_seed = cfg.evaluation_seed(generation);
        if cfg.reevaluate_elites {
            cache.clear();
            pop.iter_mut().for_each(|g| g.error = None);
        }
        for g in pop.iter_mut().filter(|g| g.error.is_none()) {
            g.error = cache.get(&g.key()).copied();
        }
        let pending: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].error.is_none()).collect();
        let mut unique: Vec<usize> = Vec::new();
        for &i in &pending {
            if !unique.iter().any(|&u| pop[u].key() == pop[i].key()) {
                unique.push(i);
            }
        }
        let scored: Vec<f64> = unique
            .par_iter()
            .map(|&i| evaluate_fitness(&pop[i], spec, &base, set, cfg.folds, eval_seed))
            .collect::<Result<_>>()?;
        evaluations += scored.len();
        for (&i, &e) in unique.iter().zip(&scored) {
            cache.insert(pop[i].key(), e);
        }
        for &i in &pending {
            pop[i].error = cache.get(&pop[i].key()).copied();
        }

        sort_by_error(&mut pop);
        let errors: Vec<f64> = pop.iter().map(|g| g.error.expect("scored")).collect();
        let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
        trace.push(TraceRow {
            generation,
            best_error: errors[0],
            mean_error,
        });
        log::info!("generation {generation}: best {:.4}, mean {:.4}", errors[0], mean_error);
        if best.as_ref().is_none_or(|b| errors[0] < b.error.expect("scored")) {
            best = Some(pop[0].clone());
        }
        if generation + 1 == cfg.generations {
            break;
        }

        let fitness: Vec<f64> = errors.iter().map(|e| 1.0 - e).collect();
        let children = cfg.population - cfg.elite_count;
        let crossovers = (cfg.crossover_fraction * children as f64).round() as usize;
        let mut next: Vec<Genome> = pop[..cfg.elite_count].to_vec();
        for _ in 0..crossovers {
            let a = roulette(&mut rng, &fitness);
            let b = roulette(&mut rng, &fitness);
            let genes = std::array::from_fn(|i| {
                if rng.random::<bool>() {
                    pop[a].genes[i]
                } else {
                    pop[b].genes[i]
                }
            });
            next.push(Genome::new(genes));
        }
        while next.len() < cfg.population {
            let a = roulette(&mut rng, &fitness);
            let mut genes = pop[a].genes;
            for (i, g) in genes.iter_mut().enumerate() {
                if rng.random::<f64>() < 1.0 / GENE_COUNT as f64 {
                    *g = rng.random_range(spec.ranges[i].low..=spec.ranges[i].high);
                }
            }
            next.push(Genome::new(genes));
        }
        pop = next;
    }

    Ok(GaResult {
        best: best.expect("at least one generation"),
        trace,
        population: pop,
        evaluations,
    })
}
