//! deSNN output layer: one output neuron per training sample, rank-order
//! initial weights with drift, and weighted kNN voting. Also the static
//! vector wkNN baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::reservoir::FiringRecord;

/// Offset in the `1 / (d + ε)` vote weight.
pub const VOTE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesnnParams {
    /// Rank-order modulation factor.
    #[serde(rename = "mod")]
    pub modulation: f64,
    pub drift: f64,
    pub k: usize,
}

impl Default for DesnnParams {
    fn default() -> Self {
        Self {
            modulation: 0.8,
            drift: 0.25,
            k: 3,
        }
    }
}

impl DesnnParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.modulation > 0.0 && self.modulation < 1.0,
            "mod must lie in (0, 1), got {}",
            self.modulation
        );
        ensure!(self.drift >= 0.0 && self.drift.is_finite(), "drift must be >= 0, got {}", self.drift);
        ensure!(self.k >= 1, "k must be >= 1");
        Ok(())
    }
}

/// Rank-order weights plus drift for one record. Neurons that never fire get 0.
pub fn desnn_weights(record: &FiringRecord, params: &DesnnParams) -> Vec<f64> {
    let n = record.neurons();
    let t = record.ticks();
    let mut first: Vec<Option<usize>> = vec![None; n];
    let mut firing_order = Vec::new();
    for tick in 0..t {
        // fired_at is ascending, so simultaneous first spikes rank by index
        for &i in record.fired_at(tick) {
            if first[i].is_none() {
                first[i] = Some(tick);
                firing_order.push(i);
            }
        }
    }
    let mut weights = vec![0.0; n];
    if firing_order.is_empty() {
        return weights;
    }
    let mut scale = vec![0.0; n];
    let mut m = 1.0;
    for &i in &firing_order {
        weights[i] = m;
        scale[i] = m;
        m *= params.modulation;
    }
    if params.drift > 0.0 {
        let unit = params.drift / t as f64;
        let mut fired_now = vec![false; n];
        for tick in 0..t {
            for &i in record.fired_at(tick) {
                fired_now[i] = true;
            }
            for &i in &firing_order {
                let f = first[i].unwrap();
                if tick > f {
                    let q = unit * scale[i];
                    if fired_now[i] {
                        weights[i] += q;
                    } else {
                        weights[i] = (weights[i] - q).max(0.0);
                    }
                }
            }
            for &i in record.fired_at(tick) {
                fired_now[i] = false;
            }
        }
    }
    weights
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputNeuron {
    pub sample_id: String,
    pub label: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    params: DesnnParams,
    class_count: usize,
    neurons: Vec<OutputNeuron>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: usize,
    /// Summed vote weight per class.
    pub scores: Vec<f64>,
    pub nearest_distance: f64,
}

pub fn train_desnn(
    records: &[FiringRecord],
    labels: &[usize],
    sample_ids: &[String],
    class_count: usize,
    params: &DesnnParams,
) -> Result<Classifier> {
    params.validate()?;
    ensure!(!records.is_empty(), "no training records");
    ensure!(
        records.len() == labels.len() && labels.len() == sample_ids.len(),
        "{} records, {} labels and {} sample ids do not align",
        records.len(),
        labels.len(),
        sample_ids.len()
    );
    let n = records[0].neurons();
    ensure!(records.iter().all(|r| r.neurons() == n), "records differ in neuron count");
    ensure!(
        labels.iter().all(|&l| l < class_count),
        "label out of range for {class_count} classes"
    );
    let neurons = records
        .iter()
        .zip(labels)
        .zip(sample_ids)
        .map(|((r, &label), id)| {
            if r.total_firings() == 0 {
                log::warn!("training sample {id} produced no firing; its output neuron has zero weights");
            }
            OutputNeuron {
                sample_id: id.clone(),
                label,
                weights: desnn_weights(r, params),
            }
        })
        .collect();
    Ok(Classifier {
        params: *params,
        class_count,
        neurons,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Weighted kNN vote over `(distance, label)` candidates. Neighbours are the
/// `k` smallest by `(distance, label)`; the winning class is the highest
/// score with ties going to the smaller class id.
pub fn wknn_vote(mut candidates: Vec<(f64, usize)>, k: usize, class_count: usize) -> Prediction {
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut scores = vec![0.0; class_count];
    for &(d, label) in candidates.iter().take(k) {
        scores[label] += 1.0 / (d + VOTE_EPSILON);
    }
    let mut best = 0;
    for c in 1..class_count {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    Prediction {
        label: best,
        scores,
        nearest_distance: candidates.first().map_or(f64::INFINITY, |c| c.0),
    }
}

fn clamp_k(k: usize, available: usize) -> usize {
    if k > available {
        log::warn!("k = {k} exceeds the {available} training samples; using {available}");
        available
    } else {
        k
    }
}

impl Classifier {
    pub fn params(&self) -> &DesnnParams {
        &self.params
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn neurons(&self) -> &[OutputNeuron] {
        &self.neurons
    }

    pub fn input_size(&self) -> usize {
        self.neurons[0].weights.len()
    }

    /// Same classifier with different readout parameters; output neurons are
    /// kept, so only `k` changes take effect without retraining.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let params = DesnnParams { k, ..self.params };
        params.validate()?;
        Ok(Self { params, ..self.clone() })
    }

    pub fn classify(&self, record: &FiringRecord) -> Result<Prediction> {
        ensure!(
            record.neurons() == self.input_size(),
            "record has {} neurons, classifier expects {}",
            record.neurons(),
            self.input_size()
        );
        let w = desnn_weights(record, &self.params);
        let candidates = self
            .neurons
            .iter()
            .map(|o| (euclidean(&w, &o.weights), o.label))
            .collect();
        let k = clamp_k(self.params.k, self.neurons.len());
        Ok(wknn_vote(candidates, k, self.class_count))
    }

    pub fn classify_all(&self, records: &[FiringRecord]) -> Result<Vec<Prediction>> {
        records.par_iter().map(|r| self.classify(r)).collect()
    }

    pub fn to_model(&self) -> DesnnModel {
        DesnnModel {
            params: self.params,
            class_count: self.class_count,
            neurons: self.neurons.len(),
            input_size: self.input_size(),
            output_neurons: self
                .neurons
                .iter()
                .map(|o| SparseOutputNeuron {
                    sample_id: o.sample_id.clone(),
                    label: o.label,
                    weights: o
                        .weights
                        .iter()
                        .enumerate()
                        .filter(|(_, &w)| w != 0.0)
                        .map(|(i, &w)| (i, w))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_model(model: DesnnModel) -> Result<Self> {
        model.params.validate()?;
        ensure!(model.output_neurons.len() == model.neurons, "model neuron count mismatch");
        ensure!(!model.output_neurons.is_empty(), "model has no output neurons");
        let mut neurons = Vec::with_capacity(model.neurons);
        for o in model.output_neurons {
            ensure!(o.label < model.class_count, "output neuron {} has label out of range", o.sample_id);
            let mut weights = vec![0.0; model.input_size];
            for (i, w) in o.weights {
                ensure!(i < model.input_size && w.is_finite(), "bad weight entry in output neuron {}", o.sample_id);
                weights[i] = w;
            }
            neurons.push(OutputNeuron {
                sample_id: o.sample_id,
                label: o.label,
                weights,
            });
        }
        Ok(Self {
            params: model.params,
            class_count: model.class_count,
            neurons,
        })
    }
}

/// Serialized classifier: output neurons with sparse `(neuron, weight)` lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesnnModel {
    pub params: DesnnParams,
    pub class_count: usize,
    pub neurons: usize,
    pub input_size: usize,
    pub output_neurons: Vec<SparseOutputNeuron>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseOutputNeuron {
    pub sample_id: String,
    pub label: usize,
    pub weights: Vec<(usize, f64)>,
}

/// Weighted kNN on static vectors with the same voting rule as the deSNN
/// readout.
pub fn baseline_wknn(train: &[(Vec<f64>, usize)], test: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    ensure!(!train.is_empty(), "no training vectors");
    ensure!(k >= 1, "k must be >= 1");
    let dim = train[0].0.len();
    ensure!(
        train.iter().all(|(x, _)| x.len() == dim) && test.iter().all(|x| x.len() == dim),
        "vectors differ in length"
    );
    let class_count = train.iter().map(|(_, l)| l + 1).max().unwrap_or(1);
    let k = clamp_k(k, train.len());
    Ok(test
        .par_iter()
        .map(|x| {
            let c = train.iter().map(|(t, l)| (euclidean(x, t), *l)).collect();
            wknn_vote(c, k, class_count).label
        })
        .collect())
}
