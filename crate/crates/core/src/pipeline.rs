//! End-to-end training and recall: encode, map variables onto the cube,
//! STDP training, deSNN readout, and evaluation on full or truncated data.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{truncate, SampleSet};
use crate::encoding::{encode_set, EncodingConfig, SpikeRaster};
use crate::error::{ensure, Result};
use crate::mapping::{build_nsg, build_ssg, qap_objective, rescaled_nsg, solve_mapping, Mapping, MappingConfig, MappingSolution};
use crate::readout::{train_desnn, Classifier, DesnnModel, DesnnParams, Prediction};
use crate::reservoir::{build_cube, recall, train_unsupervised, Cube, CubeConfig, CubeSnapshot, FiringRecord, LifParams};
use crate::similarity::{similarity_matrix, SimilarityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    #[default]
    Graph,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub encoding: EncodingConfig,
    pub similarity: SimilarityConfig,
    pub mapping: MappingConfig,
    pub mapping_mode: MappingMode,
    pub cube: CubeConfig,
    pub lif: LifParams,
    pub stdp_rate: f64,
    pub epochs: usize,
    pub desnn: DesnnParams,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            encoding: EncodingConfig::default(),
            similarity: SimilarityConfig::default(),
            mapping: MappingConfig::default(),
            mapping_mode: MappingMode::Graph,
            cube: CubeConfig::default(),
            lif: LifParams::default(),
            stdp_rate: 0.01,
            epochs: 1,
            desnn: DesnnParams::default(),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.mapping.validate()?;
        self.cube.validate()?;
        self.lif.validate()?;
        self.desnn.validate()?;
        ensure!(
            self.stdp_rate >= 0.0 && self.stdp_rate.is_finite(),
            "stdp rate must be >= 0, got {}",
            self.stdp_rate
        );
        ensure!(self.epochs >= 1, "epochs must be >= 1");
        Ok(())
    }

    /// Copy with every seed replaced by one derived from `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.cube.seed = derive_seed(seed, 1);
        p.mapping.seed = derive_seed(seed, 2);
        p
    }
}

/// SplitMix64 mixing of a master seed and a stream tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mapping of the training raster's variables onto the cube's input neurons.
pub fn map_variables(cube: &Cube, raster: &SpikeRaster, params: &PipelineParams) -> Result<MappingSolution> {
    let coords: Vec<[f64; 3]> = cube
        .input_neurons()
        .iter()
        .map(|&i| cube.position(i).map(|c| c as f64))
        .collect();
    let v = coords.len();
    if v < 2 {
        return Ok(MappingSolution {
            mapping: Mapping::identity(v),
            objective: 0.0,
        });
    }
    let nsg = build_nsg(&coords, params.mapping.k_nsg.min(v - 1))?;
    let sim = similarity_matrix(raster, &params.similarity)?;
    let ssg = build_ssg(&sim, params.mapping.k_ssg.min(v - 1))?;
    match params.mapping_mode {
        MappingMode::Graph => {
            let cfg = MappingConfig {
                k_nsg: params.mapping.k_nsg.min(v - 1),
                k_ssg: params.mapping.k_ssg.min(v - 1),
                ..params.mapping.clone()
            };
            solve_mapping(&nsg, &ssg, &cfg)
        }
        MappingMode::Random => {
            let mapping = Mapping::random(v, params.mapping.seed);
            let objective = qap_objective(&rescaled_nsg(&nsg), &ssg.adjacency, &mapping);
            Ok(MappingSolution { mapping, objective })
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: PipelineParams,
    pub cube: Cube,
    pub classifier: Classifier,
    pub mapping: MappingSolution,
    /// Frozen recall of the training set with the trained weights.
    pub train_records: Vec<FiringRecord>,
    pub variable_names: Vec<String>,
    pub class_names: Vec<String>,
}

/// On-disk form of a [`TrainedModel`]. Training records are not stored;
/// they can be regenerated by recalling the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub params: PipelineParams,
    pub mapping: MappingSolution,
    pub cube: CubeSnapshot,
    pub readout: DesnnModel,
    pub variable_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl TrainedModel {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            params: self.params.clone(),
            mapping: self.mapping.clone(),
            cube: self.cube.snapshot(),
            readout: self.classifier.to_model(),
            variable_names: self.variable_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn from_file(f: ModelFile) -> Result<Self> {
        f.params.validate()?;
        let cube = Cube::from_snapshot(f.cube)?;
        let classifier = Classifier::from_model(f.readout)?;
        ensure!(
            cube.mapping() == Some(&f.mapping.mapping),
            "model mapping disagrees with the cube's input assignment"
        );
        ensure!(
            classifier.input_size() == cube.neuron_count(),
            "readout expects {} neurons, cube has {}",
            classifier.input_size(),
            cube.neuron_count()
        );
        ensure!(
            f.variable_names.len() == cube.input_neurons().len(),
            "model lists {} variables for {} input neurons",
            f.variable_names.len(),
            cube.input_neurons().len()
        );
        ensure!(
            f.class_names.len() == classifier.class_count(),
            "model lists {} class names for {} classes",
            f.class_names.len(),
            classifier.class_count()
        );
        Ok(Self {
            params: f.params,
            cube,
            classifier,
            mapping: f.mapping,
            train_records: Vec::new(),
            variable_names: f.variable_names,
            class_names: f.class_names,
        })
    }
}

/// Two-stage training: unsupervised STDP over the training set, then the
/// readout is built from a frozen recall pass so that training and test
/// vectors come from the same weights.
pub fn fit(train: &SampleSet, params: &PipelineParams) -> Result<TrainedModel> {
    params.validate()?;
    ensure!(!train.is_empty(), "empty training set");
    let raster = encode_set(train, &params.encoding)?;
    let mut cube = build_cube(&params.cube, &params.lif, train.variables())?;
    let mapping = map_variables(&cube, &raster, params)?;
    cube.assign_mapping(mapping.mapping.clone())?;
    train_unsupervised(&mut cube, &raster, params.stdp_rate, params.epochs)?;
    let train_records = recall(&mut cube, &raster)?;
    let ids: Vec<String> = train.samples().iter().map(|s| s.id.clone()).collect();
    let classifier = train_desnn(&train_records, &train.labels(), &ids, train.class_count(), &params.desnn)?;
    Ok(TrainedModel {
        params: params.clone(),
        cube,
        classifier,
        mapping,
        train_records,
        variable_names: train.variable_names().to_vec(),
        class_names: train.class_names().to_vec(),
    })
}

/// Frozen recall of every sample in `set`.
pub fn recall_set(model: &TrainedModel, set: &SampleSet) -> Result<Vec<FiringRecord>> {
    ensure!(
        set.variables() == model.variable_names.len(),
        "data has {} variables, the model was trained on {}",
        set.variables(),
        model.variable_names.len()
    );
    let raster = encode_set(set, &model.params.encoding)?;
    let mut cube = model.cube.clone();
    recall(&mut cube, &raster)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<Prediction>,
    pub sparsity: f64,
}

pub fn score(predictions: Vec<Prediction>, labels: &[usize], class_count: usize, records: &[FiringRecord]) -> Evaluation {
    let mut confusion = vec![vec![0; class_count]; class_count];
    let mut correct = 0;
    for (p, &l) in predictions.iter().zip(labels) {
        confusion[l][p.label] += 1;
        correct += usize::from(p.label == l);
    }
    Evaluation {
        accuracy: if labels.is_empty() { 0.0 } else { correct as f64 / labels.len() as f64 },
        confusion,
        predictions,
        sparsity: mean_sparsity(records),
    }
}

pub fn mean_sparsity(records: &[FiringRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let fired: usize = records.iter().map(FiringRecord::total_firings).sum();
    let cells: usize = records.iter().map(|r| r.ticks() * r.neurons()).sum();
    if cells == 0 {
        0.0
    } else {
        fired as f64 / cells as f64
    }
}

pub fn evaluate(model: &TrainedModel, set: &SampleSet) -> Result<Evaluation> {
    let records = recall_set(model, set)?;
    let predictions = model.classifier.classify_all(&records)?;
    Ok(score(predictions, &set.labels(), model.classifier.class_count(), &records))
}

/// Accuracy on the first `fraction` of every sample.
pub fn evaluate_truncated(model: &TrainedModel, set: &SampleSet, fraction: f64) -> Result<Evaluation> {
    evaluate(model, &truncate(set, fraction)?)
}

/// Stratified k-fold split; each fold lists sample indices, ascending.
/// Within each class the samples are shuffled once and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    ensure!(folds >= 2, "need at least 2 folds, got {folds}");
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        ensure!(
            members.len() >= folds,
            "class {c} has {} samples, fewer than {folds} folds",
            members.len()
        );
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            out[(k + offset) % folds].push(i);
        }
        offset += 1;
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Pooled cross-validated accuracy at each truncation fraction. Models are
/// trained on full-length training folds; validation folds are truncated
/// before encoding. Cube and mapping seeds derive from `(seed, fold)`.
pub fn cross_validate(set: &SampleSet, params: &PipelineParams, folds: usize, seed: u64, fractions: &[f64]) -> Result<Vec<f64>> {
    ensure!(!fractions.is_empty(), "no truncation fractions given");
    let split = stratified_folds(&set.labels(), folds, seed)?;
    let mut correct = vec![0usize; fractions.len()];
    for (f, test_idx) in split.iter().enumerate() {
        let train_idx: Vec<usize> = (0..set.len()).filter(|i| test_idx.binary_search(i).is_err()).collect();
        let model = fit(&set.subset(&train_idx)?, &params.reseeded(derive_seed(seed, 100 + f as u64)))?;
        let test = set.subset(test_idx)?;
        for (c, &fr) in correct.iter_mut().zip(fractions) {
            let e = evaluate_truncated(&model, &test, fr)?;
            *c += e.predictions.iter().zip(test.labels()).filter(|(p, l)| p.label == *l).count();
        }
    }
    Ok(correct.into_iter().map(|c| c as f64 / set.len() as f64).collect())
}
