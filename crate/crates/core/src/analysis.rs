//! Information-propagation clustering of a trained cube: each input neuron
//! is a source, influence spreads through the normalized spike-flow graph
//! at per-neuron rates, and every neuron joins the cluster of the source it
//! hears most from.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg::CsrMatrix;
use crate::reservoir::{lattice_neighbors, Cube, FiringRecord, Synapse};

/// Largest `N` accepted by the dense closed-form solver.
pub const CLOSED_FORM_LIMIT: usize = 5000;

/// `F_src`: variable `j`'s single source is neuron `inputs[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMatrix {
    neurons: usize,
    inputs: Vec<usize>,
}

impl SourceMatrix {
    pub fn new(neurons: usize, inputs: Vec<usize>) -> Result<Self> {
        ensure!(!inputs.is_empty(), "no source neurons");
        let mut seen = vec![false; neurons];
        for &i in &inputs {
            ensure!(i < neurons, "source neuron {i} outside {neurons} neurons");
            ensure!(!seen[i], "neuron {i} is the source of two variables");
            seen[i] = true;
        }
        Ok(Self { neurons, inputs })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn variables(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    /// Row-major `N × v` 0/1 matrix.
    pub fn dense(&self) -> Vec<f64> {
        let v = self.variables();
        let mut out = vec![0.0; self.neurons * v];
        for (j, &i) in self.inputs.iter().enumerate() {
            out[i * v + j] = 1.0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// Rate width; `None` uses the median of the positive neighbour means.
    pub sigma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub rate_cap: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            tol: 1e-10,
            max_iter: 10_000,
            rate_cap: 1.0 - 1e-6,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sigma {
            ensure!(s > 0.0 && s.is_finite(), "sigma must be > 0, got {s}");
        }
        ensure!(self.tol > 0.0, "tolerance must be > 0");
        ensure!(self.max_iter >= 1, "max_iter must be >= 1");
        ensure!(
            self.rate_cap > 0.0 && self.rate_cap < 1.0,
            "rate cap must lie in (0, 1), got {}",
            self.rate_cap
        );
        Ok(())
    }
}

fn check_affinity(a: &CsrMatrix) -> Result<()> {
    ensure!(a.is_symmetric(1e-12), "affinity matrix is not symmetric");
    for r in 0..a.size() {
        for (_, v) in a.row(r) {
            ensure!(v >= 0.0 && v.is_finite(), "affinity matrix has a negative or non-finite entry in row {r}");
        }
    }
    Ok(())
}

/// `d̄_i`: mean of `A[i][n]` over the lattice neighbours `n` of neuron `i`.
pub fn neighbor_means(a: &CsrMatrix, dims: [usize; 3]) -> Result<Vec<f64>> {
    let n = dims[0] * dims[1] * dims[2];
    ensure!(a.size() == n, "matrix is {0}x{0} but the lattice has {n} neurons", a.size());
    Ok((0..n)
        .map(|i| {
            let nb = lattice_neighbors(dims, i);
            if nb.is_empty() {
                0.0
            } else {
                nb.iter().map(|&j| a.get(i, j)).sum::<f64>() / nb.len() as f64
            }
        })
        .collect())
}

/// Median of the positive entries, or 1 when there are none.
pub fn default_sigma(means: &[f64]) -> f64 {
    let mut pos: Vec<f64> = means.iter().copied().filter(|&d| d > 0.0).collect();
    if pos.is_empty() {
        return 1.0;
    }
    pos.sort_by(f64::total_cmp);
    let m = pos.len() / 2;
    if pos.len() % 2 == 1 {
        pos[m]
    } else {
        0.5 * (pos[m - 1] + pos[m])
    }
}

/// `min(exp(-d̄² / 2σ²), cap)` for each mean.
pub fn rates_from_means(means: &[f64], sigma: f64, rate_cap: f64) -> Result<Vec<f64>> {
    ensure!(sigma > 0.0 && sigma.is_finite(), "sigma must be > 0, got {sigma}");
    ensure!(rate_cap > 0.0 && rate_cap < 1.0, "rate cap must lie in (0, 1)");
    Ok(means
        .iter()
        .map(|&d| (-d * d / (2.0 * sigma * sigma)).exp().min(rate_cap))
        .collect())
}

pub fn propagation_rates(a: &CsrMatrix, dims: [usize; 3], cfg: &PropagationConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_affinity(a)?;
    let means = neighbor_means(a, dims)?;
    let sigma = cfg.sigma.unwrap_or_else(|| default_sigma(&means));
    rates_from_means(&means, sigma, cfg.rate_cap)
}

/// `S = D^-1/2 A D^-1/2`; rows and columns of zero-degree neurons stay zero.
pub fn normalized_operator(a: &CsrMatrix) -> CsrMatrix {
    let inv_sqrt: Vec<f64> = a
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    a.map(|r, c, v| v * inv_sqrt[r] * inv_sqrt[c])
}

/// Normalized influence `F` (row-major `N × v`) plus the unnormalized fixed
/// point. Rows with zero total influence are unassigned and left at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub neurons: usize,
    pub variables: usize,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub assigned: Vec<bool>,
    pub iterations: usize,
    pub residual: f64,
}

impl Influence {
    fn from_raw(neurons: usize, variables: usize, raw: Vec<f64>, iterations: usize, residual: f64) -> Self {
        let mut normalized = raw.clone();
        let mut assigned = vec![false; neurons];
        for i in 0..neurons {
            let row = &mut normalized[i * variables..(i + 1) * variables];
            let g: f64 = row.iter().sum();
            if g > 0.0 {
                row.iter_mut().for_each(|x| *x /= g);
                assigned[i] = true;
            }
        }
        Self {
            neurons,
            variables,
            raw,
            normalized,
            assigned,
            iterations,
            residual,
        }
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.normalized[neuron * self.variables..(neuron + 1) * self.variables]
    }

    pub fn raw_row(&self, neuron: usize) -> &[f64] {
        &self.raw[neuron * self.variables..(neuron + 1) * self.variables]
    }
}

fn check_inputs(a: &CsrMatrix, src: &SourceMatrix, rates: &[f64]) -> Result<()> {
    check_affinity(a)?;
    ensure!(
        src.neurons() == a.size() && rates.len() == a.size(),
        "affinity ({}), source ({}) and rate ({}) sizes differ",
        a.size(),
        src.neurons(),
        rates.len()
    );
    ensure!(
        rates.iter().all(|&r| (0.0..1.0).contains(&r)),
        "propagation rates must lie in [0, 1)"
    );
    Ok(())
}

fn normalize_rows(raw: &[f64], v: usize, out: &mut [f64]) {
    for (src, dst) in raw.chunks(v).zip(out.chunks_mut(v)) {
        let g: f64 = src.iter().sum();
        for (d, &x) in dst.iter_mut().zip(src) {
            *d = if g > 0.0 { x / g } else { 0.0 };
        }
    }
}

/// Iterates `F̃ <- R·S·F̃ + (I - R)·F_src` from `F̃ = F_src`, then
/// row-normalizes. Stops once the largest entry change of `F̃` and of its
/// row-normalized form are both below `tol`; the second test keeps weakly
/// reached rows, whose row sums are tiny, as accurate as the rest.
pub fn propagate(a: &CsrMatrix, src: &SourceMatrix, rates: &[f64], cfg: &PropagationConfig) -> Result<Influence> {
    cfg.validate()?;
    check_inputs(a, src, rates)?;
    let n = a.size();
    let v = src.variables();
    let s = normalized_operator(a);
    let f_src = src.dense();
    let base: Vec<f64> = (0..n * v).map(|k| (1.0 - rates[k / v]) * f_src[k]).collect();
    let mut f = f_src;
    let mut sf = vec![0.0; n * v];
    let mut norm = vec![0.0; n * v];
    let mut next_norm = vec![0.0; n * v];
    normalize_rows(&f, v, &mut norm);
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        s.mul_dense(&f, v, &mut sf);
        residual = 0.0;
        for k in 0..n * v {
            let next = rates[k / v] * sf[k] + base[k];
            residual = residual.max((next - f[k]).abs());
            f[k] = next;
        }
        normalize_rows(&f, v, &mut next_norm);
        let shift = max_abs_diff(&norm, &next_norm);
        std::mem::swap(&mut norm, &mut next_norm);
        if residual < cfg.tol && shift < cfg.tol {
            return Ok(Influence::from_raw(n, v, f, it, residual));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        residual,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `F* = (I - R·S)^-1 (I - R) F_src` by dense LU, then row-normalized.
pub fn closed_form(a: &CsrMatrix, src: &SourceMatrix, rates: &[f64]) -> Result<Influence> {
    check_inputs(a, src, rates)?;
    let n = a.size();
    ensure!(n <= CLOSED_FORM_LIMIT, "closed form limited to {CLOSED_FORM_LIMIT} neurons, got {n}");
    let v = src.variables();
    let s = normalized_operator(a);
    let mut m = DMatrix::<f64>::identity(n, n);
    for r in 0..n {
        for (c, x) in s.row(r) {
            m[(r, c)] -= rates[r] * x;
        }
    }
    let mut rhs = DMatrix::<f64>::zeros(n, v);
    for (j, &i) in src.inputs().iter().enumerate() {
        rhs[(i, j)] = 1.0 - rates[i];
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("I - R·S is singular".into()))?;
    let raw = (0..n * v).map(|k| sol[(k / v, k % v)]).collect();
    Ok(Influence::from_raw(n, v, raw, 0, 0.0))
}

/// Power-iteration estimate of `ρ(R·S)`, run on the similar symmetric matrix
/// `R^1/2 S R^1/2` so that sign-alternating spectra still converge.
pub fn spectral_radius(a: &CsrMatrix, rates: &[f64], max_iter: usize) -> f64 {
    let n = a.size();
    if n == 0 {
        return 0.0;
    }
    let s = normalized_operator(a);
    let root: Vec<f64> = rates.iter().map(|r| r.sqrt()).collect();
    let m = s.map(|r, c, x| root[r] * x * root[c]);
    // fixed non-uniform start, strictly positive
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|a| *a /= nx);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let y = m.mul_vec(&x);
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        let done = (ny - est).abs() <= 1e-13 * ny;
        est = ny;
        x = y.into_iter().map(|a| a / ny).collect();
        if done {
            break;
        }
    }
    est
}

/// Per-neuron cluster: the variable with the largest influence, ties to the
/// lowest index; `None` when the neuron received nothing. Input neurons
/// always belong to their own variable, even when a strongly coupled
/// neighbouring source outweighs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<Option<usize>>,
    pub variables: usize,
}

impl ClusterAssignment {
    /// Neurons per variable cluster.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.variables];
        for l in self.labels.iter().flatten() {
            h[*l] += 1;
        }
        h
    }

    pub fn unassigned(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

pub fn assign_clusters(f: &Influence, src: &SourceMatrix) -> ClusterAssignment {
    let mut labels: Vec<Option<usize>> = (0..f.neurons)
        .map(|i| {
            if !f.assigned[i] {
                return None;
            }
            let row = f.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            Some(best)
        })
        .collect();
    for (j, &i) in src.inputs().iter().enumerate() {
        labels[i] = Some(j);
    }
    ClusterAssignment {
        labels,
        variables: f.variables,
    }
}

/// Complete cluster analysis of a cube from its recall records.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub flow: CsrMatrix,
    pub rates: Vec<f64>,
    pub influence: Influence,
    pub clusters: ClusterAssignment,
    pub spectral_radius: f64,
}

pub fn analyze_cube(cube: &Cube, records: &[FiringRecord], cfg: &PropagationConfig) -> Result<ClusterReport> {
    ensure!(!records.is_empty(), "analysis needs at least one firing record");
    let inputs = cube
        .variable_neurons()
        .ok_or_else(|| Error::InvalidArgument("cube has no input mapping assigned".into()))?;
    let flow = crate::reservoir::spike_flow(cube, records)?;
    let rates = propagation_rates(&flow, cube.dims(), cfg)?;
    let src = SourceMatrix::new(cube.neuron_count(), inputs)?;
    let influence = propagate(&flow, &src, &rates, cfg)?;
    let clusters = assign_clusters(&influence, &src);
    let rho = spectral_radius(&flow, &rates, 10_000);
    Ok(ClusterReport {
        flow,
        rates,
        influence,
        clusters,
        spectral_radius: rho,
    })
}

/// Visualization documents for external 3D plotting. Every kind carries the
/// lattice positions so it can be drawn on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Snapshot {
    Connectivity {
        dims: [usize; 3],
        positions: Vec<[usize; 3]>,
        input_neurons: Vec<usize>,
        synapses: Vec<Synapse>,
    },
    FiringFrame {
        dims: [usize; 3],
        positions: Vec<[usize; 3]>,
        tick: usize,
        firing: Vec<u8>,
    },
    Clusters {
        dims: [usize; 3],
        positions: Vec<[usize; 3]>,
        /// Input neuron of each variable.
        input_neurons: Vec<usize>,
        labels: Vec<Option<usize>>,
        influence: Vec<Vec<f64>>,
        histogram: Vec<usize>,
    },
}

pub fn connectivity_snapshot(cube: &Cube) -> Snapshot {
    Snapshot::Connectivity {
        dims: cube.dims(),
        positions: cube.positions(),
        input_neurons: cube.variable_neurons().unwrap_or_else(|| cube.input_neurons().to_vec()),
        synapses: cube.synapses().to_vec(),
    }
}

pub fn firing_frame(cube: &Cube, record: &FiringRecord, tick: usize) -> Result<Snapshot> {
    ensure!(record.neurons() == cube.neuron_count(), "record and cube differ in neuron count");
    ensure!(tick < record.ticks(), "tick {tick} outside a record of {} ticks", record.ticks());
    let mut firing = vec![0u8; cube.neuron_count()];
    for &i in record.fired_at(tick) {
        firing[i] = 1;
    }
    Ok(Snapshot::FiringFrame {
        dims: cube.dims(),
        positions: cube.positions(),
        tick,
        firing,
    })
}

/// One frame per tick.
pub fn firing_frames(cube: &Cube, record: &FiringRecord) -> Result<Vec<Snapshot>> {
    (0..record.ticks()).map(|t| firing_frame(cube, record, t)).collect()
}

pub fn cluster_snapshot(cube: &Cube, influence: &Influence, clusters: &ClusterAssignment) -> Result<Snapshot> {
    ensure!(influence.neurons == cube.neuron_count(), "influence and cube differ in neuron count");
    Ok(Snapshot::Clusters {
        dims: cube.dims(),
        positions: cube.positions(),
        input_neurons: cube.variable_neurons().unwrap_or_default(),
        labels: clusters.labels.clone(),
        influence: (0..influence.neurons).map(|i| influence.row(i).to_vec()).collect(),
        histogram: clusters.histogram(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::Mapping;
    use crate::reservoir::LifParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rate_laws() {
        let r = rates_from_means(&[0.0, 1e6, 2.0 * (2.0 * 2.0f64.ln()).sqrt()], 2.0, 0.99).unwrap();
        assert_eq!(r[0], 0.99);
        assert_eq!(r[1], 0.0);
        assert!((r[2] - 0.5).abs() < 1e-12);
        assert!(rates_from_means(&[1.0], 0.0, 0.5).is_err());
        assert!(propagation_rates(&CsrMatrix::zeros(8), [2, 2, 2], &PropagationConfig { sigma: Some(-1.0), ..Default::default() }).is_err());
    }

    #[test]
    fn neighbor_means_and_sigma() {
        // 2x2x2: every neuron neighbours the other 7
        let a = CsrMatrix::from_triplets(8, vec![(0, 1, 7.0), (1, 0, 7.0)]);
        let m = neighbor_means(&a, [2, 2, 2]).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(m[1], 1.0);
        assert_eq!(m[2], 0.0);
        assert_eq!(default_sigma(&m), 1.0);
        assert_eq!(default_sigma(&[0.0, 0.0]), 1.0);
        assert_eq!(default_sigma(&[3.0, 1.0, 0.0, 2.0, 4.0]), 2.5);
    }

    #[test]
    fn zero_affinity_leaves_only_sources() {
        let a = CsrMatrix::zeros(6);
        let src = SourceMatrix::new(6, vec![4, 1]).unwrap();
        let rates = vec![0.3; 6];
        let f = propagate(&a, &src, &rates, &PropagationConfig::default()).unwrap();
        assert_eq!(f.raw_row(4), &[0.7, 0.0]);
        assert_eq!(f.row(4), &[1.0, 0.0]);
        assert_eq!(f.row(1), &[0.0, 1.0]);
        let c = assign_clusters(&f, &src);
        assert_eq!(c.labels, vec![None, Some(1), None, None, Some(0), None]);
        assert_eq!(c.histogram(), vec![1, 1]);
    }

    #[test]
    fn two_neuron_fixed_point_by_hand() {
        // S = [[0,1],[1,0]], source at 0, uniform rate r:
        // x0 = r x1 + (1-r), x1 = r x0  =>  x0 = (1-r)/(1-r^2), x1 = r x0
        let r = 0.6;
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let src = SourceMatrix::new(2, vec![0]).unwrap();
        let f = propagate(&a, &src, &[r, r], &PropagationConfig::default()).unwrap();
        let x0 = (1.0 - r) / (1.0 - r * r);
        assert!((f.raw[0] - x0).abs() < 1e-9);
        assert!((f.raw[1] - r * x0).abs() < 1e-9);
        assert_eq!(f.row(1), &[1.0]);
    }

    #[test]
    fn zero_rates_closed_form_is_source() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 2.0, 0.0], vec![2.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        let src = SourceMatrix::new(3, vec![2]).unwrap();
        let f = closed_form(&a, &src, &[0.0; 3]).unwrap();
        assert_eq!(f.raw, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn tie_goes_to_lowest_variable() {
        let src = SourceMatrix::new(3, vec![1, 2]).unwrap();
        let f = Influence::from_raw(3, 2, vec![0.25, 0.25, 1.0, 0.0, 0.0, 1.0], 0, 0.0);
        assert_eq!(assign_clusters(&f, &src).labels[0], Some(0));
    }

    #[test]
    fn line_graph_splits_at_midpoint() {
        let n = 10;
        let trip = (0..n - 1).flat_map(|i| [(i, i + 1, 1.0), (i + 1, i, 1.0)]).collect();
        let a = CsrMatrix::from_triplets(n, trip);
        let src = SourceMatrix::new(n, vec![0, n - 1]).unwrap();
        let f = propagate(&a, &src, &vec![0.8; n], &PropagationConfig::default()).unwrap();
        let c = assign_clusters(&f, &src);
        let expect: Vec<Option<usize>> = (0..n).map(|i| Some(usize::from(i >= n / 2))).collect();
        assert_eq!(c.labels, expect);
        // the two middle neurons are mirror images
        assert!((f.row(4)[0] - f.row(5)[1]).abs() < 1e-9);
    }

    #[test]
    fn unreachable_neurons_unassigned() {
        // component {0,1,2} holds the source; {3,4} is disconnected
        let a = CsrMatrix::from_triplets(5, vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0), (3, 4, 1.0), (4, 3, 1.0)]);
        let src = SourceMatrix::new(5, vec![0]).unwrap();
        let f = propagate(&a, &src, &[0.5; 5], &PropagationConfig::default()).unwrap();
        assert_eq!(f.assigned, vec![true, true, true, false, false]);
    }

    #[test]
    fn not_converged_reports_residual() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let src = SourceMatrix::new(2, vec![0]).unwrap();
        let cfg = PropagationConfig { max_iter: 3, ..Default::default() };
        match propagate(&a, &src, &[0.9, 0.9], &cfg) {
            Err(Error::NotConverged { iterations: 3, residual }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
    }

    fn random_instance(seed: u64, dims: [usize; 3], v: usize) -> (CsrMatrix, SourceMatrix, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = dims[0] * dims[1] * dims[2];
        let mut trip = Vec::new();
        for i in 0..n {
            for j in lattice_neighbors(dims, i) {
                if j > i && rng.random::<f64>() < 0.3 {
                    let w = rng.random_range(1..20) as f64;
                    trip.push((i, j, w));
                    trip.push((j, i, w));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, trip);
        let mut inputs: Vec<usize> = Vec::new();
        while inputs.len() < v {
            let c = rng.random_range(0..n);
            if !inputs.contains(&c) {
                inputs.push(c);
            }
        }
        let rates = propagation_rates(&a, dims, &PropagationConfig::default()).unwrap();
        (a, SourceMatrix::new(n, inputs).unwrap(), rates)
    }

    #[test]
    fn iterative_matches_closed_form() {
        for seed in 0..5 {
            let (a, src, rates) = random_instance(seed, [4, 4, 4], 3);
            let it = propagate(&a, &src, &rates, &PropagationConfig::default()).unwrap();
            let cf = closed_form(&a, &src, &rates).unwrap();
            assert_eq!(it.assigned, cf.assigned);
            assert!(max_diff(&it.normalized, &cf.normalized) < 1e-8);
            assert!(spectral_radius(&a, &rates, 10_000) < 1.0);
        }
    }

    #[test]
    fn spectral_radius_matches_dense_eigenvalues() {
        let (a, _, rates) = random_instance(9, [3, 3, 3], 2);
        let n = a.size();
        let s = normalized_operator(&a);
        let root: Vec<f64> = rates.iter().map(|r| r.sqrt()).collect();
        let m = DMatrix::from_fn(n, n, |r, c| root[r] * s.get(r, c) * root[c]);
        let rho = m.symmetric_eigenvalues().iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
        assert!((spectral_radius(&a, &rates, 100_000) - rho).abs() < 1e-6);
        // bipartite 2-cycle has eigenvalues +-r
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!((spectral_radius(&a, &[0.5, 0.5], 1000) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn snapshots_round_trip() {
        let mut cube = Cube::from_parts([2, 2, 2], LifParams::default(), vec![], vec![0, 7]).unwrap();
        cube.assign_mapping(Mapping::identity(2)).unwrap();
        let doc = connectivity_snapshot(&cube);
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.contains("\"kind\":\"connectivity\""));
        assert!(json.contains("\"synapses\":[]"));
        assert_eq!(serde_json::from_str::<Snapshot>(&json).unwrap(), doc);

        let rec = FiringRecord::new(8, vec![vec![0, 3], vec![]], vec![]);
        let frames = firing_frames(&cube, &rec).unwrap();
        assert_eq!(frames.len(), 2);
        match &frames[0] {
            Snapshot::FiringFrame { firing, .. } => assert_eq!(firing, &vec![1, 0, 0, 1, 0, 0, 0, 0]),
            _ => unreachable!(),
        }
        assert!(firing_frame(&cube, &rec, 2).is_err());
    }

    #[test]
    fn cluster_snapshot_histogram_matches() {
        let dims = [4, 4, 4];
        let (a, src, rates) = random_instance(3, dims, 4);
        let f = propagate(&a, &src, &rates, &PropagationConfig::default()).unwrap();
        let c = assign_clusters(&f, &src);
        let mut cube = Cube::from_parts(dims, LifParams::default(), vec![], src.inputs().to_vec()).unwrap();
        cube.assign_mapping(Mapping::identity(4)).unwrap();
        let doc = cluster_snapshot(&cube, &f, &c).unwrap();
        let back: Snapshot = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
        if let Snapshot::Clusters { labels, histogram, .. } = back {
            let mut h = vec![0; 4];
            for l in labels.iter().flatten() {
                h[*l] += 1;
            }
            assert_eq!(h, histogram);
            assert_eq!(h, c.histogram());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fixed_point_and_row_sums(seed in 0u64..1000) {
            let (a, src, rates) = random_instance(seed, [3, 3, 4], 3);
            let cfg = PropagationConfig::default();
            let f = propagate(&a, &src, &rates, &cfg).unwrap();
            // fixed point residual
            let s = normalized_operator(&a);
            let v = 3;
            let mut sf = vec![0.0; f.raw.len()];
            s.mul_dense(&f.raw, v, &mut sf);
            let fsrc = src.dense();
            let res = (0..f.raw.len())
                .map(|k| (rates[k / v] * sf[k] + (1.0 - rates[k / v]) * fsrc[k] - f.raw[k]).abs())
                .fold(0.0, f64::max);
            prop_assert!(res < cfg.tol);
            for i in 0..a.size() {
                if f.assigned[i] {
                    prop_assert!((f.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
            // inputs label their own variable
            let c = assign_clusters(&f, &src);
            for (j, &i) in src.inputs().iter().enumerate() {
                prop_assert_eq!(c.labels[i], Some(j));
            }
        }
    }
}
