//! Spike-train similarity: kernel-density Pearson correlation (polarity
//! ignored) and maximum signed coincidence under bounded time shifts, plus
//! aggregation into a variable-by-variable matrix.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::encoding::{SpikeRaster, SpikeTrain};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kernel: Kernel,
    /// Bandwidth in ticks.
    pub bandwidth: f64,
}

impl KernelConfig {
    pub fn gaussian(bandwidth: f64) -> Self {
        Self {
            kernel: Kernel::Gaussian,
            bandwidth,
        }
    }

    /// Gaussian kernel with bandwidth `ticks / 20`.
    pub fn for_ticks(ticks: usize) -> Self {
        Self::gaussian(ticks as f64 / 20.0)
    }

    fn validate(&self) -> Result<()> {
        ensure!(
            self.bandwidth.is_finite() && self.bandwidth > 0.0,
            "kernel bandwidth must be > 0, got {}",
            self.bandwidth
        );
        Ok(())
    }
}

/// Kernel density estimate sampled on the tick grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFunction {
    pub values: Vec<f64>,
    pub spike_count: usize,
}

pub fn spike_density(train: &SpikeTrain, cfg: &KernelConfig) -> Result<DensityFunction> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::NoSpikes("density of an empty spike train is undefined".into()));
    }
    let h = cfg.bandwidth;
    let norm = 1.0 / (train.len() as f64 * h);
    let values = (0..train.ticks())
        .map(|t| {
            norm * train
                .spikes()
                .iter()
                .map(|s| cfg.kernel.eval((t as f64 - s.tick as f64) / h))
                .sum::<f64>()
        })
        .collect();
    Ok(DensityFunction {
        values,
        spike_count: train.len(),
    })
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Pearson correlation of the two tick-sampled densities; 0 when either
/// density is flat.
pub fn density_correlation(a: &SpikeTrain, b: &SpikeTrain, cfg: &KernelConfig) -> Result<f64> {
    ensure!(
        a.ticks() == b.ticks(),
        "spike trains differ in length ({} vs {})",
        a.ticks(),
        b.ticks()
    );
    let pa = spike_density(a, cfg)?;
    let pb = spike_density(b, cfg)?;
    Ok(pearson(&pa.values, &pb.values))
}

/// Largest number of equal-polarity coincidences when `a` is shifted by any
/// `tau` in `[-tau_max, tau_max]` over `b`.
pub fn max_coincidence(a: &SpikeTrain, b: &SpikeTrain, tau_max: usize) -> Result<usize> {
    ensure!(
        a.ticks() == b.ticks(),
        "spike trains differ in length ({} vs {})",
        a.ticks(),
        b.ticks()
    );
    ensure!(
        tau_max < a.ticks(),
        "tau_max {tau_max} must be smaller than the train length {}",
        a.ticks()
    );
    if a.is_empty() || b.is_empty() {
        return Ok(0);
    }
    let dense_b = b.to_dense();
    let t = a.ticks() as i64;
    let tau_max = tau_max as i64;
    let mut best = 0;
    for tau in -tau_max..=tau_max {
        let hits = a
            .spikes()
            .iter()
            .filter(|s| {
                let at = s.tick as i64 + tau;
                at >= 0 && at < t && dense_b[at as usize] == s.polarity.sign()
            })
            .count();
        best = best.max(hits);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMethod {
    DensityCorrelation,
    #[default]
    MaxCoincidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub method: SimilarityMethod,
    /// Kernel bandwidth in ticks; `None` means `ticks / 20`.
    pub bandwidth: Option<f64>,
    /// Shift bound; `None` means `floor(ticks / 4)`.
    pub tau_max: Option<usize>,
}

impl SimilarityConfig {
    pub fn kernel(&self, ticks: usize) -> KernelConfig {
        match self.bandwidth {
            Some(h) => KernelConfig::gaussian(h),
            None => KernelConfig::for_ticks(ticks),
        }
    }

    pub fn tau_max(&self, ticks: usize) -> usize {
        self.tau_max.unwrap_or(ticks / 4)
    }
}

/// Symmetric `v × v` similarity between variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub method: SimilarityMethod,
    size: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(method: SimilarityMethod, rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut values = Vec::with_capacity(size * size);
        for r in rows {
            ensure!(r.len() == size, "similarity matrix must be square");
            values.extend_from_slice(r);
        }
        Ok(Self { method, size, values })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    /// Square CSV with variable names as header.
    pub fn to_csv(&self, names: &[String]) -> Result<Vec<u8>> {
        ensure!(names.len() == self.size, "expected {} names", self.size);
        crate::io::csv_bytes(|w| {
            w.write_record(names)?;
            for i in 0..self.size {
                w.write_record(self.row(i).iter().map(|x| x.to_string()))?;
            }
            Ok(())
        })
    }
}

/// Mean pairwise similarity across samples.
///
/// Coincidence counts are normalized by `min(N_i, N_j)` (0 when either train
/// is empty) before averaging. Density correlation skips samples where either
/// train is empty. The diagonal is fixed at 1.
pub fn similarity_matrix(raster: &SpikeRaster, cfg: &SimilarityConfig) -> Result<SimilarityMatrix> {
    let v = raster.variables();
    let s = raster.samples();
    let ticks = raster.ticks();
    let mut values = vec![0.0; v * v];
    match cfg.method {
        SimilarityMethod::MaxCoincidence => {
            let tau_max = cfg.tau_max(ticks);
            for i in 0..v {
                for j in (i + 1)..v {
                    let mut sum = 0.0;
                    for k in 0..s {
                        let (a, b) = (raster.train(k, i), raster.train(k, j));
                        let denom = a.len().min(b.len());
                        if denom > 0 {
                            sum += max_coincidence(a, b, tau_max)? as f64 / denom as f64;
                        }
                    }
                    values[i * v + j] = sum / s as f64;
                    values[j * v + i] = sum / s as f64;
                }
            }
        }
        SimilarityMethod::DensityCorrelation => {
            let kernel = cfg.kernel(ticks);
            for j in 0..v {
                if (0..s).all(|k| raster.train(k, j).is_empty()) {
                    return Err(Error::NoSpikes(format!(
                        "variable {j} has no spikes in any sample; density correlation is undefined"
                    )));
                }
            }
            let densities: Vec<Option<Vec<f64>>> = (0..s * v)
                .map(|idx| {
                    let tr = raster.train(idx / v, idx % v);
                    if tr.is_empty() {
                        Ok(None)
                    } else {
                        spike_density(tr, &kernel).map(|d| Some(d.values))
                    }
                })
                .collect::<Result<_>>()?;
            for i in 0..v {
                for j in (i + 1)..v {
                    let mut sum = 0.0;
                    let mut used = 0usize;
                    for k in 0..s {
                        if let (Some(a), Some(b)) = (&densities[k * v + i], &densities[k * v + j]) {
                            sum += pearson(a, b);
                            used += 1;
                        }
                    }
                    let mean = if used > 0 { sum / used as f64 } else { 0.0 };
                    values[i * v + j] = mean;
                    values[j * v + i] = mean;
                }
            }
        }
    }
    for i in 0..v {
        values[i * v + i] = 1.0;
    }
    Ok(SimilarityMatrix {
        method: cfg.method,
        size: v,
        values,
    })
}
