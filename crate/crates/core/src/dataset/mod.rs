//! Multivariate temporal samples: containers, CSV ingestion, synthetic
//! generation, prefix truncation and static feature concatenation.

mod csv_io;
mod synthetic;

pub use csv_io::{load_samples, read_samples, write_samples, write_samples_to, CsvSchema, FillPolicy};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use std::collections::BTreeSet;

use crate::error::{ensure, Error, Result};

/// One labeled sample: a `ticks × variables` matrix stored row-major
/// (one row per tick).
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSample {
    pub id: String,
    pub label: usize,
    ticks: usize,
    variables: usize,
    values: Vec<f64>,
}

impl TemporalSample {
    /// `rows[i][j]` is the value of variable `j` at tick `i`.
    pub fn from_rows(id: impl Into<String>, label: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let id = id.into();
        ensure!(!rows.is_empty(), "sample '{id}' has no ticks");
        let variables = rows[0].len();
        ensure!(variables >= 1, "sample '{id}' has no variables");
        let mut values = Vec::with_capacity(rows.len() * variables);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != variables {
                return Err(Error::Data(format!(
                    "sample '{id}' tick {i}: expected {variables} values, found {}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(id, label, rows.len(), variables, values)
    }

    pub fn from_row_major(
        id: impl Into<String>,
        label: usize,
        ticks: usize,
        variables: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        ensure!(
            values.len() == ticks * variables,
            "sample '{id}': {} values do not fill {ticks}x{variables}",
            values.len()
        );
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "sample '{id}': non-finite value at tick {}, variable {}",
                pos / variables,
                pos % variables
            )));
        }
        Ok(Self {
            id,
            label,
            ticks,
            variables,
            values,
        })
    }

    pub fn ticks(&self) -> usize {
        self.ticks
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    pub fn value(&self, tick: usize, variable: usize) -> f64 {
        self.values[tick * self.variables + variable]
    }

    pub fn row(&self, tick: usize) -> &[f64] {
        &self.values[tick * self.variables..(tick + 1) * self.variables]
    }

    /// The full time series of one variable.
    pub fn series(&self, variable: usize) -> Vec<f64> {
        (0..self.ticks).map(|i| self.value(i, variable)).collect()
    }

    fn prefix(&self, ticks: usize) -> Self {
        Self {
            id: self.id.clone(),
            label: self.label,
            ticks,
            variables: self.variables,
            values: self.values[..ticks * self.variables].to_vec(),
        }
    }
}

/// An ordered, validated collection of samples sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<TemporalSample>,
    variable_names: Vec<String>,
    class_names: Vec<String>,
}

impl SampleSet {
    /// Builds a set and checks every invariant: at least two ticks, uniform
    /// shape, dense labels `0..class_count` with every class present, and
    /// at least two classes.
    pub fn new(
        samples: Vec<TemporalSample>,
        variable_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let set = Self::new_unchecked_classes(samples, variable_names, class_names)?;
        ensure!(
            set.class_count() >= 2,
            "a sample set needs at least 2 classes, found {}",
            set.class_count()
        );
        let present: BTreeSet<usize> = set.samples.iter().map(|s| s.label).collect();
        if present.len() != set.class_count() {
            return Err(Error::Data(format!(
                "declared {} classes but only {} appear in the samples",
                set.class_count(),
                present.len()
            )));
        }
        Ok(set)
    }

    fn new_unchecked_classes(
        samples: Vec<TemporalSample>,
        variable_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        ensure!(!samples.is_empty(), "a sample set needs at least one sample");
        let ticks = samples[0].ticks;
        let variables = variable_names.len();
        ensure!(variables >= 1, "a sample set needs at least one variable");
        for s in &samples {
            if s.ticks != ticks {
                return Err(Error::RaggedSample {
                    sample_id: s.id.clone(),
                    expected: ticks,
                    found: s.ticks,
                });
            }
            if s.variables != variables {
                return Err(Error::Data(format!(
                    "sample '{}' has {} variables, header declares {variables}",
                    s.id, s.variables
                )));
            }
            if s.label >= class_names.len() {
                return Err(Error::Data(format!(
                    "sample '{}' label {} is outside 0..{}",
                    s.id,
                    s.label,
                    class_names.len()
                )));
            }
        }
        ensure!(ticks >= 2, "samples need at least 2 ticks, found {ticks}");
        Ok(Self {
            samples,
            variable_names,
            class_names,
        })
    }

    /// Selects samples by index, keeping the parent's class dictionary even
    /// if some classes end up absent (folds, held-out sets).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("sample index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new_unchecked_classes(samples, self.variable_names.clone(), self.class_names.clone())
    }

    pub fn samples(&self) -> &[TemporalSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ticks(&self) -> usize {
        self.samples[0].ticks
    }

    pub fn variables(&self) -> usize {
        self.variable_names.len()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// Keeps the first `floor(fraction * t)` ticks of every sample.
pub fn truncate(set: &SampleSet, fraction: f64) -> Result<SampleSet> {
    ensure!(
        fraction > 0.0 && fraction <= 1.0,
        "truncation fraction must lie in (0, 1], got {fraction}"
    );
    let ticks = truncated_length(set.ticks(), fraction);
    ensure!(
        ticks >= 2,
        "fraction {fraction} leaves {ticks} ticks of {}, need at least 2",
        set.ticks()
    );
    Ok(SampleSet {
        samples: set.samples.iter().map(|s| s.prefix(ticks)).collect(),
        variable_names: set.variable_names.clone(),
        class_names: set.class_names.clone(),
    })
}

/// `floor(fraction * ticks)`, tolerant of products like `0.29 * 100`
/// landing a hair below an integer.
pub fn truncated_length(ticks: usize, fraction: f64) -> usize {
    ((fraction * ticks as f64) + 1e-9).floor() as usize
}

/// Flattens each sample variable-major: variable 0's whole series, then
/// variable 1's, and so on. Element `(tick i, variable j)` lands at `j*t + i`.
pub fn concat_features(set: &SampleSet) -> Vec<(Vec<f64>, usize)> {
    set.samples
        .iter()
        .map(|s| {
            let mut out = Vec::with_capacity(s.ticks * s.variables);
            for j in 0..s.variables {
                out.extend((0..s.ticks).map(|i| s.value(i, j)));
            }
            (out, s.label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: usize, rows: &[&[f64]]) -> TemporalSample {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        TemporalSample::from_rows(id, label, &rows).unwrap()
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn ramp_set(ticks: usize) -> SampleSet {
        let mk = |id: &str, label, off: f64| {
            let rows: Vec<Vec<f64>> = (0..ticks).map(|i| vec![i as f64 + off, -(i as f64)]).collect();
            TemporalSample::from_rows(id, label, &rows).unwrap()
        };
        SampleSet::new(vec![mk("a", 0, 0.0), mk("b", 1, 0.5)], names("x", 2), names("", 2)).unwrap()
    }

    #[test]
    fn truncate_full_is_identity() {
        let set = ramp_set(60);
        assert_eq!(truncate(&set, 1.0).unwrap(), set);
    }

    #[test]
    fn truncate_fractions_of_sixty() {
        let set = ramp_set(60);
        assert_eq!(truncate(&set, 0.75).unwrap().ticks(), 45);
        assert_eq!(truncate(&set, 0.5).unwrap().ticks(), 30);
        let t = truncate(&set, 0.5).unwrap();
        assert_eq!(t.labels(), set.labels());
        assert_eq!(t.samples()[1].series(0), set.samples()[1].series(0)[..30].to_vec());
    }

    #[test]
    fn truncate_rejects_bad_fractions() {
        let set = ramp_set(10);
        assert!(truncate(&set, 0.0).is_err());
        assert!(truncate(&set, 1.5).is_err());
        assert!(truncate(&set, -0.2).is_err());
        // floor(0.15 * 10) = 1 < 2
        assert!(truncate(&set, 0.15).is_err());
    }

    #[test]
    fn truncate_is_monotone_in_fraction() {
        let set = ramp_set(37);
        let mut last = 0;
        for k in 1..=20 {
            let f = k as f64 / 20.0;
            if let Ok(t) = truncate(&set, f) {
                assert!(t.ticks() >= last);
                last = t.ticks();
            }
        }
        let once = truncate(&set, 0.8).unwrap();
        let twice = truncate(&once, 0.5).unwrap();
        assert!(twice.ticks() <= once.ticks());
    }

    #[test]
    fn concat_two_by_two() {
        let s = sample("s", 0, &[&[1.0, 3.0], &[2.0, 4.0]]);
        let t = sample("t", 1, &[&[0.0, 0.0], &[0.0, 0.0]]);
        let set = SampleSet::new(vec![s, t], names("v", 2), names("", 2)).unwrap();
        let f = concat_features(&set);
        assert_eq!(f[0].0, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(f[0].1, 0);
    }

    #[test]
    fn concat_single_variable_is_series() {
        let s = sample("s", 0, &[&[1.5], &[2.5], &[-1.0]]);
        let t = sample("t", 1, &[&[0.0], &[1.0], &[2.0]]);
        let set = SampleSet::new(vec![s, t], names("v", 1), names("", 2)).unwrap();
        assert_eq!(concat_features(&set)[0].0, vec![1.5, 2.5, -1.0]);
    }

    #[test]
    fn concat_matches_index_arithmetic() {
        let vals = [0.3, -1.2, 4.0, 2.2, 9.1, -0.5, 7.7, 1.1, 0.0];
        let rows: Vec<Vec<f64>> = vals.chunks(3).map(|c| c.to_vec()).collect();
        let s = TemporalSample::from_rows("s", 0, &rows).unwrap();
        let t = TemporalSample::from_rows("t", 1, &rows).unwrap();
        let set = SampleSet::new(vec![s, t], names("v", 3), names("", 2)).unwrap();
        let f = &concat_features(&set)[0].0;
        assert_eq!(f.len(), 9);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f[j * 3 + i], vals[i * 3 + j]);
            }
        }
    }

    #[test]
    fn set_validation() {
        let a = sample("a", 0, &[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let b = sample("b", 1, &[&[1.0], &[2.0], &[3.0]]);
        match SampleSet::new(vec![a.clone(), b], names("v", 1), names("", 2)) {
            Err(Error::RaggedSample { sample_id, .. }) => assert_eq!(sample_id, "b"),
            other => panic!("expected ragged error, got {other:?}"),
        }
        // single class
        let c = sample("c", 0, &[&[1.0], &[2.0], &[3.0], &[4.0]]);
        assert!(SampleSet::new(vec![a.clone(), c], names("v", 1), names("", 1)).is_err());
        // one tick
        let d = sample("d", 0, &[&[1.0]]);
        let e = sample("e", 1, &[&[1.0]]);
        assert!(SampleSet::new(vec![d, e], names("v", 1), names("", 2)).is_err());
        // label beyond dictionary
        let f = sample("f", 3, &[&[1.0], &[2.0], &[3.0], &[4.0]]);
        assert!(SampleSet::new(vec![a, f], names("v", 1), names("", 2)).is_err());
    }

    #[test]
    fn subset_keeps_class_dictionary() {
        let set = ramp_set(5);
        let sub = set.subset(&[1]).unwrap();
        assert_eq!(sub.len(), 1);
        assert_eq!(sub.class_count(), 2);
        assert_eq!(sub.samples()[0].id, "b");
        assert!(set.subset(&[5]).is_err());
    }
}
