//! Adaptive-threshold bipolar spike encoding.
//!
//! A signal is differentiated by forward differences `g_i = f[i+1] - f[i]`.
//! The threshold is `mean(|g|) + alpha * std(|g|)` (population std), and
//! tick `i >= 1` carries a positive spike when `g[i-1]` exceeds it, a
//! negative spike when `g[i-1]` falls below its negation.

use serde::{Deserialize, Serialize};

use crate::dataset::SampleSet;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spike {
    pub tick: usize,
    pub polarity: Polarity,
}

/// Signed events on a grid of `ticks` time steps, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    ticks: usize,
    spikes: Vec<Spike>,
}

impl SpikeTrain {
    pub fn new(ticks: usize, spikes: Vec<Spike>) -> Result<Self> {
        for w in spikes.windows(2) {
            ensure!(w[0].tick < w[1].tick, "spike ticks must be strictly increasing");
        }
        if let Some(last) = spikes.last() {
            ensure!(last.tick < ticks, "spike at tick {} outside [0, {ticks})", last.tick);
        }
        Ok(Self { ticks, spikes })
    }

    pub fn empty(ticks: usize) -> Self {
        Self { ticks, spikes: Vec::new() }
    }

    /// Builds a train from `(tick, sign)` pairs; convenient in tests.
    pub fn from_signed(ticks: usize, events: &[(usize, i64)]) -> Result<Self> {
        let spikes = events
            .iter()
            .map(|&(tick, sign)| {
                Polarity::from_sign(sign)
                    .map(|polarity| Spike { tick, polarity })
                    .ok_or_else(|| Error::InvalidArgument(format!("polarity must be +1 or -1, got {sign}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ticks, spikes)
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    /// Dense view: `+1`, `-1` or `0` per tick.
    pub fn to_dense(&self) -> Vec<i8> {
        let mut out = vec![0; self.ticks];
        for s in &self.spikes {
            out[s.tick] = s.polarity.sign();
        }
        out
    }

    pub fn flipped(&self) -> Self {
        Self {
            ticks: self.ticks,
            spikes: self
                .spikes
                .iter()
                .map(|s| Spike {
                    tick: s.tick,
                    polarity: s.polarity.flipped(),
                })
                .collect(),
        }
    }

    /// Moves every spike by `offset` ticks, dropping those that leave the grid.
    pub fn shifted(&self, offset: i64) -> Self {
        let spikes = self
            .spikes
            .iter()
            .filter_map(|s| {
                let t = s.tick as i64 + offset;
                (t >= 0 && t < self.ticks as i64).then_some(Spike {
                    tick: t as usize,
                    polarity: s.polarity,
                })
            })
            .collect();
        Self { ticks: self.ticks, spikes }
    }

    /// Keeps the first `ticks` ticks.
    pub fn prefix(&self, ticks: usize) -> Self {
        let ticks = ticks.min(self.ticks);
        Self {
            ticks,
            spikes: self.spikes.iter().copied().filter(|s| s.tick < ticks).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    /// Spike-rate control: larger values raise the threshold.
    pub alpha: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.alpha.is_finite() && self.alpha > 0.0,
            "encoding alpha must be > 0, got {}",
            self.alpha
        );
        Ok(())
    }
}

fn forward_differences(signal: &[f64]) -> Result<Vec<f64>> {
    ensure!(signal.len() >= 2, "encoding needs at least 2 ticks, got {}", signal.len());
    Ok(signal.windows(2).map(|w| w[1] - w[0]).collect())
}

fn threshold_from_gradient(gradient: &[f64], alpha: f64) -> f64 {
    let n = gradient.len() as f64;
    let mean = gradient.iter().map(|g| g.abs()).sum::<f64>() / n;
    let var = gradient
        .iter()
        .map(|g| {
            let d = g.abs() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    mean + alpha * var.sqrt()
}

pub fn atb_threshold(signal: &[f64], alpha: f64) -> Result<f64> {
    let g = forward_differences(signal)?;
    Ok(threshold_from_gradient(&g, alpha))
}

pub fn atb_encode(signal: &[f64], alpha: f64) -> Result<SpikeTrain> {
    let g = forward_differences(signal)?;
    let threshold = threshold_from_gradient(&g, alpha);
    let spikes = g
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| {
            let polarity = if d > threshold {
                Polarity::Positive
            } else if d < -threshold {
                Polarity::Negative
            } else {
                return None;
            };
            Some(Spike { tick: i + 1, polarity })
        })
        .collect();
    Ok(SpikeTrain {
        ticks: signal.len(),
        spikes,
    })
}

/// Spike trains for a whole sample set, indexed `[sample][variable]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    ticks: usize,
    variables: usize,
    sample_ids: Vec<String>,
    trains: Vec<SpikeTrain>,
}

impl SpikeRaster {
    /// `rows[s]` holds the `variables` trains of sample `s`.
    pub fn new(sample_ids: Vec<String>, rows: Vec<Vec<SpikeTrain>>) -> Result<Self> {
        ensure!(!rows.is_empty(), "raster needs at least one sample");
        ensure!(sample_ids.len() == rows.len(), "one id per raster row required");
        let variables = rows[0].len();
        ensure!(variables >= 1, "raster needs at least one variable");
        let ticks = rows[0][0].ticks;
        let mut trains = Vec::with_capacity(rows.len() * variables);
        for (s, row) in rows.into_iter().enumerate() {
            ensure!(row.len() == variables, "raster row {s} has {} trains, expected {variables}", row.len());
            for tr in row {
                ensure!(tr.ticks == ticks, "raster row {s}: train length {} != {ticks}", tr.ticks);
                trains.push(tr);
            }
        }
        Ok(Self {
            ticks,
            variables,
            sample_ids,
            trains,
        })
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    pub fn samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn train(&self, sample: usize, variable: usize) -> &SpikeTrain {
        &self.trains[sample * self.variables + variable]
    }

    /// The `variables` trains of one sample.
    pub fn row(&self, sample: usize) -> &[SpikeTrain] {
        &self.trains[sample * self.variables..(sample + 1) * self.variables]
    }

    pub fn total_spikes(&self) -> usize {
        self.trains.iter().map(SpikeTrain::len).sum()
    }

    /// Restricts every train to its first `ticks` ticks.
    pub fn prefix(&self, ticks: usize) -> Self {
        Self {
            ticks: ticks.min(self.ticks),
            variables: self.variables,
            sample_ids: self.sample_ids.clone(),
            trains: self.trains.iter().map(|t| t.prefix(ticks)).collect(),
        }
    }

    /// CSV dump with columns `sample_id,variable,tick,polarity`.
    pub fn to_csv(&self, variable_names: &[String]) -> Result<Vec<u8>> {
        ensure!(
            variable_names.len() == self.variables,
            "expected {} variable names, got {}",
            self.variables,
            variable_names.len()
        );
        crate::io::csv_bytes(|w| {
            w.write_record(["sample_id", "variable", "tick", "polarity"])?;
            for (s, id) in self.sample_ids.iter().enumerate() {
                for (j, name) in variable_names.iter().enumerate() {
                    for spike in self.train(s, j).spikes() {
                        w.write_record([
                            id.as_str(),
                            name.as_str(),
                            &spike.tick.to_string(),
                            &spike.polarity.sign().to_string(),
                        ])?;
                    }
                }
            }
            Ok(())
        })
    }
}

pub fn encode_set(set: &SampleSet, cfg: &EncodingConfig) -> Result<SpikeRaster> {
    cfg.validate()?;
    let rows = set
        .samples()
        .iter()
        .map(|s| (0..set.variables()).map(|j| atb_encode(&s.series(j), cfg.alpha)).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    let ids = set.samples().iter().map(|s| s.id.clone()).collect();
    SpikeRaster::new(ids, rows)
}
