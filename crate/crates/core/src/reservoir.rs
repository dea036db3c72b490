//! The 3D spiking lattice: construction, leaky integrate-and-fire dynamics,
//! STDP plasticity, frozen recall and spike-flow accounting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{Polarity, SpikeRaster, SpikeTrain};
use crate::error::{ensure, Error, Result};
use crate::linalg::CsrMatrix;
use crate::mapping::Mapping;

/// STDP time constant and pairing window, in ticks.
pub const STDP_WINDOW: usize = 10;
/// Input spikes inject this multiple of the firing threshold.
pub const INPUT_DRIVE: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CubeConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Maximum wiring distance in lattice units.
    pub connection_radius: f64,
    /// Pair `(i, j)` at distance `d` is wired with probability
    /// `connection_prob * exp(-d^2)`.
    pub connection_prob: f64,
    pub inhibitory_fraction: f64,
    pub init_weight_scale: f64,
    pub seed: u64,
}

impl Default for CubeConfig {
    fn default() -> Self {
        Self {
            nx: 6,
            ny: 6,
            nz: 6,
            connection_radius: 3.0,
            connection_prob: 0.15,
            inhibitory_fraction: 0.2,
            init_weight_scale: 0.2,
            seed: 0,
        }
    }
}

impl CubeConfig {
    pub fn neuron_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.nx >= 2 && self.ny >= 2 && self.nz >= 2,
            "cube dimensions must be >= 2, got {}x{}x{}",
            self.nx,
            self.ny,
            self.nz
        );
        ensure!(self.connection_radius >= 0.0, "connection radius must be >= 0");
        ensure!(
            (0.0..=1.0).contains(&self.connection_prob),
            "connection probability must lie in [0, 1]"
        );
        ensure!(
            (0.0..1.0).contains(&self.inhibitory_fraction),
            "inhibitory fraction must lie in [0, 1)"
        );
        ensure!(self.init_weight_scale > 0.0, "initial weight scale must be > 0");
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    pub firing_threshold: f64,
    /// Fraction of membrane potential lost per tick.
    pub leak: f64,
    pub refractory_ticks: usize,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            firing_threshold: 0.5,
            leak: 0.1,
            refractory_ticks: 2,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.firing_threshold > 0.0, "firing threshold must be > 0");
        ensure!((0.0..1.0).contains(&self.leak), "leak must lie in [0, 1)");
        ensure!(self.refractory_ticks >= 1, "refractory period must be >= 1 tick");
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub pre: usize,
    pub post: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Plastic,
    Frozen,
}

/// Lattice of LIF neurons with directed weighted synapses.
#[derive(Debug, Clone)]
pub struct Cube {
    dims: [usize; 3],
    lif: LifParams,
    synapses: Vec<Synapse>,
    out_ptr: Vec<usize>,
    out_syn: Vec<usize>,
    in_ptr: Vec<usize>,
    in_syn: Vec<usize>,
    input_neurons: Vec<usize>,
    mapping: Option<Mapping>,
    transmitted: Vec<u64>,
    potential: Vec<f64>,
    refractory: Vec<usize>,
    last_fire: Vec<Option<usize>>,
}

impl PartialEq for Cube {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.lif == other.lif
            && self.synapses == other.synapses
            && self.input_neurons == other.input_neurons
            && self.mapping == other.mapping
    }
}

fn csr_by(n: usize, synapses: &[Synapse], key: impl Fn(&Synapse) -> usize) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = vec![0; n + 1];
    for s in synapses {
        ptr[key(s) + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    let mut fill = ptr.clone();
    let mut idx = vec![0; synapses.len()];
    for (k, s) in synapses.iter().enumerate() {
        let slot = &mut fill[key(s)];
        idx[*slot] = k;
        *slot += 1;
    }
    (ptr, idx)
}

impl Cube {
    /// Assembles a cube from explicit parts; used by [`build_cube`], by
    /// snapshot loading and by hand-built test circuits.
    pub fn from_parts(
        dims: [usize; 3],
        lif: LifParams,
        synapses: Vec<Synapse>,
        input_neurons: Vec<usize>,
    ) -> Result<Self> {
        lif.validate()?;
        let n = dims[0] * dims[1] * dims[2];
        ensure!(n >= 1, "cube has no neurons");
        for s in &synapses {
            ensure!(s.pre < n && s.post < n, "synapse {}->{} outside {n} neurons", s.pre, s.post);
            ensure!(s.pre != s.post, "self-synapse on neuron {}", s.pre);
            ensure!(s.weight.is_finite(), "non-finite synapse weight");
        }
        let mut seen = vec![false; n];
        for &i in &input_neurons {
            ensure!(i < n && !seen[i], "input neurons must be distinct and in range");
            seen[i] = true;
        }
        let (out_ptr, out_syn) = csr_by(n, &synapses, |s| s.pre);
        let (in_ptr, in_syn) = csr_by(n, &synapses, |s| s.post);
        Ok(Self {
            dims,
            lif,
            transmitted: vec![0; synapses.len()],
            synapses,
            out_ptr,
            out_syn,
            in_ptr,
            in_syn,
            input_neurons,
            mapping: None,
            potential: vec![0.0; n],
            refractory: vec![0; n],
            last_fire: vec![None; n],
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn neuron_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Lattice coordinates; neurons are indexed in ascending `(x, y, z)` order.
    pub fn position(&self, neuron: usize) -> [usize; 3] {
        let [_, ny, nz] = self.dims;
        [neuron / (ny * nz), (neuron / nz) % ny, neuron % nz]
    }

    pub fn index_of(&self, p: [usize; 3]) -> usize {
        let [_, ny, nz] = self.dims;
        p[0] * ny * nz + p[1] * nz + p[2]
    }

    pub fn positions(&self) -> Vec<[usize; 3]> {
        (0..self.neuron_count()).map(|i| self.position(i)).collect()
    }

    /// Lattice neighbours within Chebyshev distance 1 (up to 26).
    pub fn lattice_neighbors(&self, neuron: usize) -> Vec<usize> {
        lattice_neighbors(self.dims, neuron)
    }

    pub fn lif(&self) -> &LifParams {
        &self.lif
    }

    pub fn set_lif(&mut self, lif: LifParams) -> Result<()> {
        lif.validate()?;
        self.lif = lif;
        Ok(())
    }

    pub fn synapses(&self) -> &[Synapse] {
        &self.synapses
    }

    pub fn weights(&self) -> Vec<f64> {
        self.synapses.iter().map(|s| s.weight).collect()
    }

    /// Weight of the first synapse `pre -> post`, if wired.
    pub fn weight(&self, pre: usize, post: usize) -> Option<f64> {
        self.out_syn[self.out_ptr[pre]..self.out_ptr[pre + 1]]
            .iter()
            .map(|&k| &self.synapses[k])
            .find(|s| s.post == post)
            .map(|s| s.weight)
    }

    pub fn input_neurons(&self) -> &[usize] {
        &self.input_neurons
    }

    pub fn mapping(&self) -> Option<&Mapping> {
        self.mapping.as_ref()
    }

    pub fn assign_mapping(&mut self, mapping: Mapping) -> Result<()> {
        ensure!(
            mapping.len() == self.input_neurons.len(),
            "mapping covers {} variables but the cube has {} input neurons",
            mapping.len(),
            self.input_neurons.len()
        );
        self.mapping = Some(mapping);
        Ok(())
    }

    /// Input neuron driven by each variable under the current mapping.
    pub fn variable_neurons(&self) -> Option<Vec<usize>> {
        self.mapping
            .as_ref()
            .map(|m| m.permutation().iter().map(|&slot| self.input_neurons[slot]).collect())
    }

    /// Cumulative spikes delivered per synapse since construction.
    pub fn transmitted(&self) -> &[u64] {
        &self.transmitted
    }

    pub fn reset_state(&mut self) {
        self.potential.iter_mut().for_each(|p| *p = 0.0);
        self.refractory.iter_mut().for_each(|r| *r = 0);
        self.last_fire.iter_mut().for_each(|t| *t = None);
    }

    pub fn snapshot(&self) -> CubeSnapshot {
        CubeSnapshot {
            dims: self.dims,
            lif: self.lif,
            positions: self.positions(),
            input_neurons: self.input_neurons.clone(),
            mapping: self.mapping.clone(),
            synapses: self.synapses.clone(),
        }
    }

    pub fn from_snapshot(s: CubeSnapshot) -> Result<Self> {
        let mut cube = Self::from_parts(s.dims, s.lif, s.synapses, s.input_neurons)?;
        ensure!(
            s.positions == cube.positions(),
            "snapshot positions disagree with the lattice ordering"
        );
        if let Some(m) = s.mapping {
            cube.assign_mapping(m)?;
        }
        Ok(cube)
    }
}

/// Neighbours of `neuron` within Chebyshev distance 1 on an
/// `nx × ny × nz` lattice indexed in ascending `(x, y, z)` order, ascending.
pub fn lattice_neighbors(dims: [usize; 3], neuron: usize) -> Vec<usize> {
    let [_, ny, nz] = dims;
    let p = [neuron / (ny * nz), (neuron / nz) % ny, neuron % nz];
    let mut out = Vec::with_capacity(26);
    for dx in -1i64..=1 {
        for dy in -1i64..=1 {
            for dz in -1i64..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let q = [p[0] as i64 + dx, p[1] as i64 + dy, p[2] as i64 + dz];
                if (0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as i64) {
                    out.push(q[0] as usize * ny * nz + q[1] as usize * nz + q[2] as usize);
                }
            }
        }
    }
    out
}

/// Serializable view of a cube: positions, input neurons and synapse list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSnapshot {
    pub dims: [usize; 3],
    pub lif: LifParams,
    pub positions: Vec<[usize; 3]>,
    pub input_neurons: Vec<usize>,
    pub mapping: Option<Mapping>,
    pub synapses: Vec<Synapse>,
}

fn lattice_distance(a: [usize; 3], b: [usize; 3]) -> f64 {
    let d: f64 = (0..3).map(|k| (a[k] as f64 - b[k] as f64).powi(2)).sum();
    d.sqrt()
}

/// Probability that the ordered pair `(i, j)` at distance `d` is wired.
pub fn connection_probability(cfg: &CubeConfig, d: f64) -> f64 {
    if d == 0.0 || d > cfg.connection_radius {
        0.0
    } else {
        cfg.connection_prob * (-d * d).exp()
    }
}

pub fn build_cube(cfg: &CubeConfig, lif: &LifParams, variables: usize) -> Result<Cube> {
    cfg.validate()?;
    lif.validate()?;
    let n = cfg.neuron_count();
    ensure!(
        variables <= n,
        "{variables} variables do not fit in a cube of {n} neurons"
    );
    let dims = [cfg.nx, cfg.ny, cfg.nz];
    let pos = |i: usize| [i / (cfg.ny * cfg.nz), (i / cfg.nz) % cfg.ny, i % cfg.nz];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.connection_radius.floor() as i64;
    let mut synapses = Vec::new();
    for i in 0..n {
        let p = pos(i);
        // visit candidates in ascending index order for reproducibility
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let q = [p[0] as i64 + dx, p[1] as i64 + dy, p[2] as i64 + dz];
                    if !(0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as i64) {
                        continue;
                    }
                    let q = [q[0] as usize, q[1] as usize, q[2] as usize];
                    let prob = connection_probability(cfg, lattice_distance(p, q));
                    if prob <= 0.0 || rng.random::<f64>() >= prob {
                        continue;
                    }
                    let magnitude = cfg.init_weight_scale * (1.0 - rng.random::<f64>());
                    let sign = if rng.random::<f64>() < cfg.inhibitory_fraction { -1.0 } else { 1.0 };
                    synapses.push(Synapse {
                        pre: i,
                        post: q[0] * cfg.ny * cfg.nz + q[1] * cfg.nz + q[2],
                        weight: sign * magnitude,
                    });
                }
            }
        }
    }
    let inputs = choose_inputs(n, variables, &pos, &mut rng);
    Cube::from_parts(dims, *lif, synapses, inputs)
}

/// Random distinct neurons, preferring mutual separation of at least two
/// lattice units; falls back to unconstrained picks when the lattice is too
/// crowded.
fn choose_inputs(n: usize, v: usize, pos: &dyn Fn(usize) -> [usize; 3], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut chosen: Vec<usize> = Vec::with_capacity(v);
    for &c in &order {
        if chosen.len() == v {
            break;
        }
        if chosen.iter().all(|&o| lattice_distance(pos(o), pos(c)) >= 2.0) {
            chosen.push(c);
        }
    }
    for &c in &order {
        if chosen.len() == v {
            break;
        }
        if !chosen.contains(&c) {
            chosen.push(c);
        }
    }
    chosen
}

/// Which neurons fired at each tick, plus per-synapse delivery counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringRecord {
    neurons: usize,
    fired: Vec<Vec<usize>>,
    transmitted: Vec<u32>,
}

impl FiringRecord {
    pub fn new(neurons: usize, fired: Vec<Vec<usize>>, transmitted: Vec<u32>) -> Self {
        Self {
            neurons,
            fired,
            transmitted,
        }
    }

    pub fn ticks(&self) -> usize {
        self.fired.len()
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    /// Neurons firing at `tick`, ascending.
    pub fn fired_at(&self, tick: usize) -> &[usize] {
        &self.fired[tick]
    }

    pub fn fired(&self, tick: usize, neuron: usize) -> bool {
        self.fired[tick].binary_search(&neuron).is_ok()
    }

    pub fn total_firings(&self) -> usize {
        self.fired.iter().map(Vec::len).sum()
    }

    /// Fired entries over `ticks × neurons`.
    pub fn sparsity(&self) -> f64 {
        if self.fired.is_empty() || self.neurons == 0 {
            return 0.0;
        }
        self.total_firings() as f64 / (self.ticks() * self.neurons) as f64
    }

    pub fn transmitted(&self) -> &[u32] {
        &self.transmitted
    }

    /// Keeps the first `ticks` ticks; delivery counts are not recoverable
    /// per tick and are dropped.
    pub fn prefix(&self, ticks: usize) -> Self {
        Self {
            neurons: self.neurons,
            fired: self.fired[..ticks.min(self.fired.len())].to_vec(),
            transmitted: Vec::new(),
        }
    }
}

/// Runs one sample through the cube from a reset state.
///
/// Each tick, every neuron leaks its carried potential, adds the weighted
/// spikes its presynaptic partners fired on the previous tick plus any input
/// drive, and fires when the result exceeds threshold outside its refractory
/// window. In plastic mode each firing pairs with the last firing of every
/// synaptic partner inside the STDP window: earlier presynaptic firing
/// potentiates, earlier postsynaptic firing depresses.
pub fn simulate(cube: &mut Cube, row: &[SpikeTrain], mode: Mode, stdp_rate: f64) -> Result<FiringRecord> {
    let drivers = cube
        .variable_neurons()
        .ok_or_else(|| Error::InvalidArgument("cube has no input mapping assigned".into()))?;
    ensure!(
        row.len() == drivers.len(),
        "sample has {} variables but the cube maps {}",
        row.len(),
        drivers.len()
    );
    ensure!(stdp_rate >= 0.0 && stdp_rate.is_finite(), "stdp rate must be >= 0");
    let ticks = row.first().map_or(0, SpikeTrain::ticks);
    ensure!(row.iter().all(|t| t.ticks() == ticks), "trains in a sample differ in length");

    cube.reset_state();
    let n = cube.neuron_count();
    let lif = cube.lif;
    let drive = INPUT_DRIVE * lif.firing_threshold;
    let dense: Vec<Vec<i8>> = row.iter().map(SpikeTrain::to_dense).collect();
    let mut input = vec![0.0; n];
    let mut incoming = vec![0.0; n];
    let mut next_incoming = vec![0.0; n];
    let mut transmitted = vec![0u32; cube.synapses.len()];
    let mut fired: Vec<Vec<usize>> = Vec::with_capacity(ticks);
    let window = STDP_WINDOW as f64;

    for t in 0..ticks {
        for (j, &neuron) in drivers.iter().enumerate() {
            input[neuron] = match dense[j][t] {
                1 => drive,
                -1 => -drive,
                _ => 0.0,
            };
        }
        let mut now = Vec::new();
        for i in 0..n {
            if cube.refractory[i] > 0 {
                cube.refractory[i] -= 1;
                cube.potential[i] = 0.0;
                continue;
            }
            let p = cube.potential[i] * (1.0 - lif.leak) + incoming[i] + input[i];
            if p > lif.firing_threshold {
                cube.potential[i] = 0.0;
                cube.refractory[i] = lif.refractory_ticks;
                now.push(i);
            } else {
                cube.potential[i] = p;
            }
        }
        for &neuron in &drivers {
            input[neuron] = 0.0;
        }

        if mode == Mode::Plastic && stdp_rate > 0.0 {
            for &i in &now {
                cube.last_fire[i] = Some(t);
            }
            for &i in &now {
                for k in cube.in_ptr[i]..cube.in_ptr[i + 1] {
                    let s = cube.in_syn[k];
                    if let Some(tp) = cube.last_fire[cube.synapses[s].pre] {
                        let dt = t - tp;
                        if dt > 0 && dt <= STDP_WINDOW {
                            let w = &mut cube.synapses[s].weight;
                            *w = (*w + stdp_rate * (-(dt as f64) / window).exp()).clamp(-1.0, 1.0);
                        }
                    }
                }
                for k in cube.out_ptr[i]..cube.out_ptr[i + 1] {
                    let s = cube.out_syn[k];
                    if let Some(tp) = cube.last_fire[cube.synapses[s].post] {
                        let dt = t - tp;
                        if dt > 0 && dt <= STDP_WINDOW {
                            let w = &mut cube.synapses[s].weight;
                            *w = (*w - stdp_rate * (-(dt as f64) / window).exp()).clamp(-1.0, 1.0);
                        }
                    }
                }
            }
        } else {
            for &i in &now {
                cube.last_fire[i] = Some(t);
            }
        }

        next_incoming.iter_mut().for_each(|x| *x = 0.0);
        for &i in &now {
            for k in cube.out_ptr[i]..cube.out_ptr[i + 1] {
                let s = cube.out_syn[k];
                let syn = cube.synapses[s];
                next_incoming[syn.post] += syn.weight;
                transmitted[s] += 1;
                cube.transmitted[s] += 1;
            }
        }
        std::mem::swap(&mut incoming, &mut next_incoming);
        fired.push(now);
    }
    Ok(FiringRecord {
        neurons: n,
        fired,
        transmitted,
    })
}

/// Plastic pass over every sample in dataset order, `epochs` times. LIF
/// state resets between samples; weights carry over. Returns the records of
/// the final epoch.
pub fn train_unsupervised(
    cube: &mut Cube,
    raster: &SpikeRaster,
    stdp_rate: f64,
    epochs: usize,
) -> Result<Vec<FiringRecord>> {
    ensure!(epochs >= 1, "at least one training epoch is required");
    let mut records = Vec::with_capacity(raster.samples());
    for epoch in 0..epochs {
        records.clear();
        for s in 0..raster.samples() {
            records.push(simulate(cube, raster.row(s), Mode::Plastic, stdp_rate)?);
        }
        log::debug!("stdp epoch {epoch} done");
    }
    Ok(records)
}

/// Frozen-weight recall of every sample.
pub fn recall(cube: &mut Cube, raster: &SpikeRaster) -> Result<Vec<FiringRecord>> {
    (0..raster.samples())
        .map(|s| simulate(cube, raster.row(s), Mode::Frozen, 0.0))
        .collect()
}

/// Symmetric `N × N` matrix of spikes exchanged between neuron pairs over
/// the given records: `A[i][j] = A[j][i]` = deliveries on `i -> j` plus
/// `j -> i`.
pub fn spike_flow(cube: &Cube, records: &[FiringRecord]) -> Result<CsrMatrix> {
    let mut counts = vec![0u64; cube.synapses.len()];
    for r in records {
        ensure!(
            r.transmitted.len() == counts.len(),
            "record carries {} synapse counters, cube has {}",
            r.transmitted.len(),
            counts.len()
        );
        for (c, &x) in counts.iter_mut().zip(&r.transmitted) {
            *c += x as u64;
        }
    }
    Ok(flow_from_counts(cube, &counts))
}

/// Spike flow from the cube's cumulative counters.
pub fn spike_flow_from_counters(cube: &Cube) -> CsrMatrix {
    flow_from_counts(cube, &cube.transmitted)
}

fn flow_from_counts(cube: &Cube, counts: &[u64]) -> CsrMatrix {
    let mut trip = Vec::new();
    for (s, &c) in cube.synapses.iter().zip(counts) {
        if c > 0 {
            trip.push((s.pre, s.post, c as f64));
            trip.push((s.post, s.pre, c as f64));
        }
    }
    CsrMatrix::from_triplets(cube.neuron_count(), trip)
}

/// Polarity-aware helper for building test inputs: a train with spikes of
/// `polarity` at `ticks`.
pub fn train_at(len: usize, ticks: &[usize], polarity: Polarity) -> Result<SpikeTrain> {
    let spikes = ticks
        .iter()
        .map(|&tick| crate::encoding::Spike { tick, polarity })
        .collect();
    SpikeTrain::new(len, spikes)
}
