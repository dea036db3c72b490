//! Graph-matched input mapping.
//!
//! Two weighted graphs are built over `v` vertices: one over the chosen
//! input neurons (inverse Euclidean distance between k nearest neighbours)
//! and one over the input variables (spike-train similarity between k most
//! similar neighbours). A permutation assigning variables to input neurons
//! is then sought that minimizes `||A_n - P A_s P^T||_F^2`, with the neuron
//! graph rescaled to `[0, 1]`.
//!
//! The solver is a greedy seeding driven by vertex and edge affinities,
//! refined by best-improvement pairwise swaps, and restarted from several
//! randomized seedings. [`exhaustive_mapping`] enumerates all permutations
//! for small `v` and serves as the reference optimum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::similarity::SimilarityMatrix;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    size: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        let mut data = Vec::with_capacity(size * size);
        for r in rows {
            ensure!(r.len() == size, "matrix rows must have length {size}");
            data.extend_from_slice(r);
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.size + j] = x;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            size: self.size,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `P A P^T` where variable `i` moves to row/column `perm[i]`.
    pub fn permuted(&self, mapping: &Mapping) -> Self {
        let mut out = Self::zeros(self.size);
        let p = mapping.permutation();
        for i in 0..self.size {
            for j in 0..self.size {
                out.set(p[i], p[j], self.get(i, j));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VertexPayload {
    /// Lattice coordinates of input neurons.
    Positions(Vec<[f64; 3]>),
    /// Variable indices.
    Variables(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub adjacency: SquareMatrix,
    /// Edge membership, row-major; signal edges may carry zero weight.
    edges: Vec<bool>,
    pub payload: VertexPayload,
}

impl WeightedGraph {
    /// Treats every nonzero off-diagonal weight as an edge.
    pub fn from_adjacency(adjacency: SquareMatrix, payload: VertexPayload) -> Self {
        let n = adjacency.size();
        let edges = (0..n * n)
            .map(|idx| idx / n != idx % n && adjacency.get(idx / n, idx % n) != 0.0)
            .collect();
        Self {
            adjacency,
            edges,
            payload,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.size()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency.get(i, j)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.vertex_count() + j]
    }

    /// Sum of incident edge weights per vertex.
    pub fn weight_degrees(&self) -> Vec<f64> {
        let n = self.vertex_count();
        (0..n).map(|i| (0..n).map(|j| self.weight(i, j)).sum()).collect()
    }
}

/// Assignment of variables to input-neuron slots: entry `j` is the slot
/// hosting variable `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Mapping(Vec<usize>);

impl Mapping {
    pub fn new(permutation: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            ensure!(
                p < permutation.len() && !seen[p],
                "mapping {permutation:?} is not a permutation"
            );
            seen[p] = true;
        }
        Ok(Self(permutation))
    }

    pub fn identity(v: usize) -> Self {
        Self((0..v).collect())
    }

    pub fn random(v: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p: Vec<usize> = (0..v).collect();
        p.shuffle(&mut rng);
        Self(p)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn slot_of(&self, variable: usize) -> usize {
        self.0[variable]
    }

    /// Inverse view: the variable hosted by each slot.
    pub fn variables_by_slot(&self) -> Vec<usize> {
        let mut inv = vec![0; self.0.len()];
        for (j, &p) in self.0.iter().enumerate() {
            inv[p] = j;
        }
        inv
    }
}

impl TryFrom<Vec<usize>> for Mapping {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Mapping::new(v)
    }
}

impl From<Mapping> for Vec<usize> {
    fn from(m: Mapping) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Greedy2opt,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub k_nsg: usize,
    pub k_ssg: usize,
    pub sigma_n: f64,
    pub sigma_e: f64,
    pub solver: Solver,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            k_nsg: 3,
            k_ssg: 3,
            sigma_n: 0.5,
            sigma_e: 0.5,
            solver: Solver::Greedy2opt,
            restarts: 8,
            seed: 0,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.k_nsg >= 1 && self.k_ssg >= 1, "neighbour counts must be >= 1");
        ensure!(
            self.sigma_n > 0.0 && self.sigma_e > 0.0,
            "affinity widths must be > 0"
        );
        ensure!(self.restarts >= 1, "restarts must be >= 1");
        Ok(())
    }
}

/// Symmetrized top-k selection: `score(i, j)` ranks candidates (higher is
/// better, ties to the lower index) and `weight(i, j)` labels the edge.
fn knn_graph(
    n: usize,
    k: usize,
    score: impl Fn(usize, usize) -> f64,
    weight: impl Fn(usize, usize) -> f64,
    payload: VertexPayload,
) -> WeightedGraph {
    let mut adjacency = SquareMatrix::zeros(n);
    let mut edges = vec![false; n * n];
    for i in 0..n {
        let mut cand: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        cand.sort_by(|&a, &b| score(i, b).total_cmp(&score(i, a)).then(a.cmp(&b)));
        for &j in cand.iter().take(k) {
            let w = weight(i, j);
            adjacency.set(i, j, w);
            adjacency.set(j, i, w);
            edges[i * n + j] = true;
            edges[j * n + i] = true;
        }
    }
    WeightedGraph {
        adjacency,
        edges,
        payload,
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Input-neuron graph: each vertex links to its `k` nearest neighbours with
/// weight `1 / distance`; an edge exists if either endpoint selects the other.
pub fn build_nsg(coords: &[[f64; 3]], k: usize) -> Result<WeightedGraph> {
    let n = coords.len();
    ensure!(n >= 2, "neuron graph needs at least 2 vertices");
    ensure!(k >= 1 && k < n, "k = {k} must satisfy 1 <= k < {n}");
    for i in 0..n {
        for j in (i + 1)..n {
            if distance(&coords[i], &coords[j]) == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "input neurons {i} and {j} share coordinates {:?}",
                    coords[i]
                )));
            }
        }
    }
    Ok(knn_graph(
        n,
        k,
        |i, j| -distance(&coords[i], &coords[j]),
        |i, j| 1.0 / distance(&coords[i], &coords[j]),
        VertexPayload::Positions(coords.to_vec()),
    ))
}

/// Variable graph: each vertex links to its `k` most similar neighbours with
/// weight `max(similarity, 0)`.
pub fn build_ssg(sim: &SimilarityMatrix, k: usize) -> Result<WeightedGraph> {
    let n = sim.size();
    ensure!(n >= 2, "signal graph needs at least 2 vertices");
    ensure!(k >= 1 && k < n, "k = {k} must satisfy 1 <= k < {n}");
    for i in 0..n {
        for j in (i + 1)..n {
            ensure!(
                (sim.get(i, j) - sim.get(j, i)).abs() <= 1e-9,
                "similarity matrix is not symmetric at ({i}, {j})"
            );
        }
        if (0..n).filter(|&j| j != i).all(|j| sim.get(i, j) <= 0.0) {
            log::warn!("variable {i} has no positive similarity; its signal-graph edges carry zero weight");
        }
    }
    // Use the upper triangle for both directions so the graph is exactly symmetric.
    let sym = |i: usize, j: usize| if i < j { sim.get(i, j) } else { sim.get(j, i) };
    Ok(knn_graph(
        n,
        k,
        sym,
        |i, j| sym(i, j).max(0.0),
        VertexPayload::Variables((0..n).collect()),
    ))
}

fn check_sizes(nsg: &WeightedGraph, ssg: &WeightedGraph) -> Result<usize> {
    ensure!(
        nsg.vertex_count() == ssg.vertex_count(),
        "graphs differ in size ({} vs {})",
        nsg.vertex_count(),
        ssg.vertex_count()
    );
    Ok(nsg.vertex_count())
}

fn normalized_degrees(g: &WeightedGraph, name: &str) -> Result<Vec<f64>> {
    let d = g.weight_degrees();
    let max = d.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{name} graph has no positive edge weight; degree normalization is undefined"
        )));
    }
    Ok(d.into_iter().map(|x| x / max).collect())
}

/// `out.get(n, s)` compares neuron-graph vertex `n` with signal-graph vertex
/// `s` through their max-normalized weighted degrees.
pub fn vertex_affinity(nsg: &WeightedGraph, ssg: &WeightedGraph, sigma_n: f64) -> Result<SquareMatrix> {
    let v = check_sizes(nsg, ssg)?;
    ensure!(sigma_n > 0.0, "sigma_n must be > 0");
    let dn = normalized_degrees(nsg, "neuron")?;
    let ds = normalized_degrees(ssg, "signal")?;
    let mut out = SquareMatrix::zeros(v);
    for n in 0..v {
        for s in 0..v {
            out.set(n, s, gaussian_affinity(dn[n] - ds[s], sigma_n));
        }
    }
    Ok(out)
}

#[inline]
fn gaussian_affinity(diff: f64, sigma: f64) -> f64 {
    (-(diff * diff) / (2.0 * sigma * sigma)).exp()
}

/// Neuron-graph adjacency divided by its largest weight.
pub fn rescaled_nsg(nsg: &WeightedGraph) -> SquareMatrix {
    let max = nsg.adjacency.max();
    if max > 0.0 {
        nsg.adjacency.scaled(1.0 / max)
    } else {
        nsg.adjacency.clone()
    }
}

/// Affinity between neuron edge `(i, j)` and signal edge `(k, l)`.
pub fn edge_affinity(
    nsg: &WeightedGraph,
    ssg: &WeightedGraph,
    sigma_e: f64,
    nsg_edge: (usize, usize),
    ssg_edge: (usize, usize),
) -> Result<f64> {
    check_sizes(nsg, ssg)?;
    ensure!(sigma_e > 0.0, "sigma_e must be > 0");
    let (i, j) = nsg_edge;
    let (k, l) = ssg_edge;
    let v = nsg.vertex_count();
    ensure!(
        i < v && j < v && nsg.has_edge(i, j),
        "({i}, {j}) is not an edge of the neuron graph"
    );
    ensure!(
        k < v && l < v && ssg.has_edge(k, l),
        "({k}, {l}) is not an edge of the signal graph"
    );
    let a_n = nsg.weight(i, j) / nsg.adjacency.max();
    Ok(gaussian_affinity(a_n - ssg.weight(k, l), sigma_e))
}

/// `||A_n - P A_s P^T||_F^2` evaluated by permuted lookup.
pub fn qap_objective(a_n: &SquareMatrix, a_s: &SquareMatrix, mapping: &Mapping) -> f64 {
    let p = mapping.permutation();
    let v = p.len();
    let mut total = 0.0;
    for i in 0..v {
        for j in 0..v {
            let d = a_n.get(p[i], p[j]) - a_s.get(i, j);
            total += d * d;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSolution {
    pub mapping: Mapping,
    pub objective: f64,
}

/// Change in objective from swapping the slots of variables `a` and `b`.
fn swap_delta(a_n: &SquareMatrix, a_s: &SquareMatrix, perm: &[usize], a: usize, b: usize) -> f64 {
    let v = perm.len();
    let term = |p: &dyn Fn(usize) -> usize, i: usize, j: usize| {
        let d = a_n.get(p(i), p(j)) - a_s.get(i, j);
        d * d
    };
    let affected = |p: &dyn Fn(usize) -> usize| {
        let mut s = 0.0;
        for &i in &[a, b] {
            for j in 0..v {
                s += term(p, i, j);
            }
        }
        for i in 0..v {
            if i == a || i == b {
                continue;
            }
            s += term(p, i, a) + term(p, i, b);
        }
        s
    };
    let before = affected(&|i| perm[i]);
    let after = affected(&|i| {
        if i == a {
            perm[b]
        } else if i == b {
            perm[a]
        } else {
            perm[i]
        }
    });
    after - before
}

/// Best-improvement pairwise swaps until no swap lowers the objective.
fn two_opt(a_n: &SquareMatrix, a_s: &SquareMatrix, perm: &mut [usize]) {
    let v = perm.len();
    loop {
        let mut best = (0.0, 0, 0);
        for a in 0..v {
            for b in (a + 1)..v {
                let d = swap_delta(a_n, a_s, perm, a, b);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        if best.0 >= -1e-12 {
            break;
        }
        perm.swap(best.1, best.2);
    }
}

/// Affinity-guided constructive seeding. Slots are visited in `slot_order`;
/// each receives the unassigned variable with the highest vertex affinity
/// plus mean edge affinity against the pairs already placed.
fn greedy_seed(
    a_n: &SquareMatrix,
    a_s: &SquareMatrix,
    vertex_aff: &SquareMatrix,
    sigma_e: f64,
    slot_order: &[usize],
) -> Vec<usize> {
    let v = slot_order.len();
    let mut perm = vec![usize::MAX; v];
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(v);
    for &slot in slot_order {
        let mut best: Option<(f64, usize)> = None;
        for var in 0..v {
            if perm[var] != usize::MAX {
                continue;
            }
            let mut score = vertex_aff.get(slot, var);
            if !placed.is_empty() {
                let edge: f64 = placed
                    .iter()
                    .map(|&(s2, v2)| gaussian_affinity(a_n.get(slot, s2) - a_s.get(var, v2), sigma_e))
                    .sum();
                score += edge / placed.len() as f64;
            }
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, var));
            }
        }
        let (_, var) = best.expect("an unassigned variable remains");
        perm[var] = slot;
        placed.push((slot, var));
    }
    perm
}

pub fn solve_mapping(nsg: &WeightedGraph, ssg: &WeightedGraph, cfg: &MappingConfig) -> Result<MappingSolution> {
    cfg.validate()?;
    let v = check_sizes(nsg, ssg)?;
    ensure!(v >= 2, "mapping needs at least 2 variables");
    if cfg.solver == Solver::Exhaustive {
        return exhaustive_mapping(nsg, ssg);
    }
    let a_n = rescaled_nsg(nsg);
    let a_s = &ssg.adjacency;
    let vertex_aff = vertex_affinity(nsg, ssg, cfg.sigma_n)?;

    // First seeding visits slots by decreasing best affinity; later ones in
    // random order. Seedings never depend on variable labels, only on scores.
    let mut first: Vec<usize> = (0..v).collect();
    let best_aff = |n: usize| (0..v).map(|s| vertex_aff.get(n, s)).fold(0.0, f64::max);
    first.sort_by(|&a, &b| best_aff(b).total_cmp(&best_aff(a)).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut orders = vec![first];
    for _ in 1..cfg.restarts {
        let mut o: Vec<usize> = (0..v).collect();
        o.shuffle(&mut rng);
        orders.push(o);
    }

    let mut best: Option<MappingSolution> = None;
    let mut consider = |mut perm: Vec<usize>| {
        two_opt(&a_n, a_s, &mut perm);
        let mapping = Mapping(perm);
        let objective = qap_objective(&a_n, a_s, &mapping);
        if best.as_ref().is_none_or(|b| objective < b.objective - 1e-12) {
            best = Some(MappingSolution { mapping, objective });
        }
    };
    for order in &orders {
        consider(greedy_seed(&a_n, a_s, &vertex_aff, cfg.sigma_e, order));
    }
    // identity is always a candidate, so the result never loses to it
    consider((0..v).collect());
    Ok(best.expect("at least one seeding"))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub const EXHAUSTIVE_LIMIT: usize = 9;

/// Global optimum by lexicographic enumeration of all `v!` permutations;
/// the first (lexicographically smallest) minimizer wins ties.
pub fn exhaustive_mapping(nsg: &WeightedGraph, ssg: &WeightedGraph) -> Result<MappingSolution> {
    let v = check_sizes(nsg, ssg)?;
    ensure!(
        v <= EXHAUSTIVE_LIMIT,
        "exhaustive mapping is limited to {EXHAUSTIVE_LIMIT} variables, got {v}"
    );
    let a_n = rescaled_nsg(nsg);
    let a_s = &ssg.adjacency;
    let mut perm: Vec<usize> = (0..v).collect();
    let mut best_perm = perm.clone();
    let mut best = qap_objective(&a_n, a_s, &Mapping(perm.clone()));
    while next_permutation(&mut perm) {
        let obj = qap_objective(&a_n, a_s, &Mapping(perm.clone()));
        if obj < best - 1e-12 * (1.0 + best) {
            best = obj;
            best_perm.copy_from_slice(&perm);
        }
    }
    Ok(MappingSolution {
        mapping: Mapping(best_perm),
        objective: best,
    })
}

/// CSV rows `variable,input_neuron_id,x,y,z`.
pub fn mapping_csv(
    mapping: &Mapping,
    variable_names: &[String],
    input_neurons: &[usize],
    positions: &[[f64; 3]],
) -> Result<Vec<u8>> {
    ensure!(
        variable_names.len() == mapping.len() && input_neurons.len() == mapping.len() && positions.len() == mapping.len(),
        "mapping export needs one name, neuron and position per variable"
    );
    crate::io::csv_bytes(|w| {
        w.write_record(["variable", "input_neuron_id", "x", "y", "z"])?;
        for (j, name) in variable_names.iter().enumerate() {
            let slot = mapping.slot_of(j);
            let p = positions[slot];
            w.write_record([
                name.clone(),
                input_neurons[slot].to_string(),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
            ])?;
        }
        Ok(())
    })
}
