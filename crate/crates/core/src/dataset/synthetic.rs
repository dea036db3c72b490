use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SampleSet, TemporalSample};
use crate::error::{ensure, Result};

/// Correlated-group generator.
///
/// Every variable belongs to exactly one group; members of a group follow
/// that group's latent sinusoidal driver plus independent AR(1) noise.
/// Classes share driver frequencies and amplitudes and differ only in the
/// phase offset of each group's driver, so class identity lives in the
/// relative timing of the groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub variables: usize,
    pub ticks: usize,
    pub samples_per_class: usize,
    pub class_count: usize,
    /// Partition of `0..variables`.
    pub groups: Vec<Vec<usize>>,
    /// Driver frequency band, in cycles per series.
    pub freq_low: f64,
    pub freq_high: f64,
    pub amplitude: f64,
    /// Phase offset (radians) of each group's driver per class index;
    /// odd-numbered groups rotate the other way.
    pub class_phase_step: f64,
    /// Std of the per-sample, per-group random phase.
    pub phase_jitter: f64,
    pub noise_std: f64,
    /// AR(1) coefficient of the noise, in `[0, 1)`; 0 is white noise.
    pub noise_memory: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            variables: 8,
            ticks: 60,
            samples_per_class: 20,
            class_count: 2,
            groups: vec![vec![0, 4], vec![1, 5], vec![2, 6], vec![3, 7]],
            freq_low: 1.0,
            freq_high: 3.0,
            amplitude: 1.0,
            class_phase_step: PI / 2.0,
            phase_jitter: 0.5,
            noise_std: 0.3,
            noise_memory: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.variables >= 1, "synthetic: need at least one variable");
        ensure!(self.ticks >= 2, "synthetic: need at least 2 ticks");
        ensure!(self.class_count >= 2, "synthetic: need at least 2 classes");
        ensure!(self.samples_per_class >= 2, "synthetic: need at least 2 samples per class");
        ensure!(self.noise_std >= 0.0, "synthetic: noise_std must be >= 0");
        ensure!(
            (0.0..1.0).contains(&self.noise_memory),
            "synthetic: noise_memory must lie in [0, 1)"
        );
        ensure!(self.phase_jitter >= 0.0, "synthetic: phase_jitter must be >= 0");
        ensure!(
            self.freq_low > 0.0 && self.freq_low <= self.freq_high,
            "synthetic: need 0 < freq_low <= freq_high"
        );
        let mut seen = vec![false; self.variables];
        for (g, group) in self.groups.iter().enumerate() {
            ensure!(!group.is_empty(), "synthetic: group {g} is empty");
            for &j in group {
                ensure!(j < self.variables, "synthetic: group {g} names variable {j} out of range");
                ensure!(!seen[j], "synthetic: variable {j} appears in more than one group");
                seen[j] = true;
            }
        }
        ensure!(
            seen.iter().all(|&s| s),
            "synthetic: groups must cover every variable"
        );
        Ok(())
    }

    /// Group index of each variable.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.variables];
        for (g, group) in self.groups.iter().enumerate() {
            for &j in group {
                out[j] = g;
            }
        }
        out
    }

}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let group_of = cfg.group_of();
    let n_groups = cfg.groups.len();
    let freqs: Vec<f64> = (0..n_groups)
        .map(|_| rng.random_range(cfg.freq_low..=cfg.freq_high))
        .collect();
    let base_phase: Vec<f64> = (0..n_groups).map(|_| rng.random_range(0.0..2.0 * PI)).collect();

    let t = cfg.ticks;
    let v = cfg.variables;
    let innovation = cfg.noise_std * (1.0 - cfg.noise_memory * cfg.noise_memory).sqrt();
    let mut samples = Vec::with_capacity(cfg.class_count * cfg.samples_per_class);
    for class in 0..cfg.class_count {
        for k in 0..cfg.samples_per_class {
            let phases: Vec<f64> = (0..n_groups)
                .map(|g| {
                    let dir = if g % 2 == 0 { 1.0 } else { -1.0 };
                    let jitter = normal(&mut rng) * cfg.phase_jitter;
                    base_phase[g] + dir * class as f64 * cfg.class_phase_step + jitter
                })
                .collect();
            let mut values = vec![0.0; t * v];
            for j in 0..v {
                let g = group_of[j];
                let mut noise = cfg.noise_std * normal(&mut rng);
                for i in 0..t {
                    if i > 0 {
                        noise = cfg.noise_memory * noise + innovation * normal(&mut rng);
                    }
                    let arg = 2.0 * PI * freqs[g] * i as f64 / t as f64 + phases[g];
                    values[i * v + j] = cfg.amplitude * arg.sin() + noise;
                }
            }
            let id = format!("c{class}_s{k:03}");
            samples.push(TemporalSample::from_row_major(id, class, t, v, values)?);
        }
    }
    let variable_names = (0..v).map(|j| format!("x{j}")).collect();
    let class_names = (0..cfg.class_count).map(|c| c.to_string()).collect();
    SampleSet::new(samples, variable_names, class_names)
}
