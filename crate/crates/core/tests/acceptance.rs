//! Acceptance suite: one pass/fail line per criterion. Exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neucube::analysis::{closed_form, propagate, propagation_rates, spectral_radius, PropagationConfig, SourceMatrix};
use neucube::dataset::{generate_synthetic, SampleSet, SyntheticConfig};
use neucube::encoding::{atb_encode, Polarity, Spike, SpikeRaster, SpikeTrain};
use neucube::linalg::CsrMatrix;
use neucube::mapping::{
    build_nsg, build_ssg, exhaustive_mapping, rescaled_nsg, solve_mapping, Mapping, MappingConfig, VertexPayload,
    WeightedGraph,
};
use neucube::optimizer::{ga_optimize, trace_csv, GaConfig, ParamSpec};
use neucube::pipeline::{cross_validate, evaluate, fit, mean_sparsity, MappingMode, PipelineParams};
use neucube::readout::DesnnParams;
use neucube::reservoir::{lattice_neighbors, simulate, train_at, Cube, LifParams, Mode, Synapse};
use neucube::similarity::{
    density_correlation, max_coincidence, similarity_matrix, KernelConfig, SimilarityConfig, SimilarityMethod,
    SimilarityMatrix,
};

type Check = std::result::Result<String, String>;

macro_rules! check {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+));
        }
    };
}

const SEEDS: u64 = 10;

fn synthetic(seed: u64) -> SampleSet {
    generate_synthetic(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

// 1 ------------------------------------------------------------------------

fn random_flow(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> CsrMatrix {
    let n = dims[0] * dims[1] * dims[2];
    let mut trip = Vec::new();
    for i in 0..n {
        // local links, like spike flow along short synapses
        for j in lattice_neighbors(dims, i) {
            if j > i && rng.random::<f64>() < 0.35 {
                let w = rng.random_range(1..40) as f64;
                trip.push((i, j, w));
                trip.push((j, i, w));
            }
        }
        if rng.random::<f64>() < 0.05 {
            let j = rng.random_range(0..n);
            if j != i {
                let w = rng.random_range(1..5) as f64;
                trip.push((i, j, w));
                trip.push((j, i, w));
            }
        }
    }
    CsrMatrix::from_triplets(n, trip)
}

fn propagation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst, mut slowest, mut max_rho) = (0.0f64, Duration::ZERO, 0.0f64);
    for instance in 0..50 {
        let dims = loop {
            let d = [rng.random_range(2..=10), rng.random_range(2..=10), rng.random_range(2..=8)];
            if d[0] * d[1] * d[2] <= 500 {
                break d;
            }
        };
        let dims = if instance % 10 == 0 { [10, 10, 5] } else { dims };
        let n = dims[0] * dims[1] * dims[2];
        let a = random_flow(&mut rng, dims);
        let mut inputs: Vec<usize> = Vec::new();
        while inputs.len() < 5.min(n) {
            let i = rng.random_range(0..n);
            if !inputs.contains(&i) {
                inputs.push(i);
            }
        }
        let src = SourceMatrix::new(n, inputs).unwrap();
        let cfg = PropagationConfig {
            sigma: if instance % 3 == 0 { Some(rng.random_range(1.0..50.0)) } else { None },
            ..PropagationConfig::default()
        };
        let start = Instant::now();
        let rates = propagation_rates(&a, dims, &cfg).unwrap();
        let it = propagate(&a, &src, &rates, &cfg).unwrap();
        let cf = closed_form(&a, &src, &rates).unwrap();
        let rho = spectral_radius(&a, &rates, 10_000);
        let took = start.elapsed();
        check!(it.assigned == cf.assigned, "instance {instance}: assigned rows differ");
        let diff = it
            .normalized
            .iter()
            .zip(&cf.normalized)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        check!(diff <= 1e-8, "instance {instance} (N={n}): max |F - F*| = {diff:e}");
        check!(rho < 1.0, "instance {instance}: spectral radius {rho}");
        check!(took < Duration::from_secs(1), "instance {instance} took {took:?}");
        worst = worst.max(diff);
        slowest = slowest.max(took);
        max_rho = max_rho.max(rho);
    }
    Ok(format!(
        "50 instances, max diff {worst:.1e}, max rho {max_rho:.6}, slowest {:.0} ms",
        slowest.as_secs_f64() * 1e3
    ))
}

// 2 ------------------------------------------------------------------------

fn nsg_instance(rng: &mut ChaCha8Rng, v: usize) -> WeightedGraph {
    let mut coords: Vec<[f64; 3]> = Vec::new();
    while coords.len() < v {
        let p = [0, 0, 0].map(|_: i32| rng.random_range(0..6) as f64);
        if !coords.contains(&p) {
            coords.push(p);
        }
    }
    build_nsg(&coords, 3.min(v - 1)).unwrap()
}

fn ssg_instance(rng: &mut ChaCha8Rng, v: usize) -> WeightedGraph {
    let mut rows = vec![vec![1.0; v]; v];
    for i in 0..v {
        for j in (i + 1)..v {
            let x = rng.random::<f64>();
            rows[i][j] = x;
            rows[j][i] = x;
        }
    }
    let sim = SimilarityMatrix::from_rows(SimilarityMethod::MaxCoincidence, &rows).unwrap();
    build_ssg(&sim, 3.min(v - 1)).unwrap()
}

fn qap_quality() -> Check {
    let start = Instant::now();
    let mut summary = Vec::new();
    for v in [4usize, 5, 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + v as u64);
        let mut matched = 0;
        let mut worst_ratio = 1.0f64;
        for trial in 0..100u64 {
            let nsg = nsg_instance(&mut rng, v);
            let ssg = ssg_instance(&mut rng, v);
            let cfg = MappingConfig { seed: trial, ..MappingConfig::default() };
            let got = solve_mapping(&nsg, &ssg, &cfg).unwrap().objective;
            let opt = exhaustive_mapping(&nsg, &ssg).unwrap().objective;
            check!(got >= opt - 1e-12, "v={v} trial {trial}: solver beat the exhaustive optimum");
            if got <= opt + 1e-12 {
                matched += 1;
            } else {
                let ratio = got / opt;
                check!(ratio <= 1.25, "v={v} trial {trial}: {got} vs optimum {opt} (ratio {ratio:.3})");
                worst_ratio = worst_ratio.max(ratio);
            }

            // isomorphic copy: A_s = Q^T A_n Q reaches zero
            let rescaled = WeightedGraph::from_adjacency(rescaled_nsg(&nsg), nsg.payload.clone());
            let q = Mapping::random(v, 1000 + trial);
            let inv = Mapping::new(q.variables_by_slot()).unwrap();
            let copy = WeightedGraph::from_adjacency(
                rescaled.adjacency.permuted(&inv),
                VertexPayload::Variables((0..v).collect()),
            );
            let iso = solve_mapping(&rescaled, &copy, &cfg).unwrap().objective;
            check!(iso < 1e-20, "v={v} trial {trial}: isomorphic copy left objective {iso:e}");
        }
        check!(matched >= 90, "v={v}: optimum matched in {matched}/100 instances");
        summary.push(format!("v={v}: {matched}/100 optimal, worst ratio {worst_ratio:.3}"));
    }
    let took = start.elapsed();
    check!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("{}; isomorphic copies all 0; {:.1} s", summary.join(", "), took.as_secs_f64()))
}

// 3 ------------------------------------------------------------------------

fn two_neuron_cube() -> Cube {
    let syn = vec![
        Synapse { pre: 0, post: 1, weight: 0.2 },
        Synapse { pre: 1, post: 0, weight: 0.2 },
    ];
    let mut cube = Cube::from_parts([2, 1, 1], LifParams::default(), syn, vec![0, 1]).unwrap();
    cube.assign_mapping(Mapping::identity(2)).unwrap();
    cube
}

/// Runs 50 repetitions where `first` fires one tick before `second` and
/// checks the sign of every weight change.
fn order_protocol(first: usize, second: usize) -> std::result::Result<(f64, f64), String> {
    let mut cube = two_neuron_cube();
    let w0 = (cube.weight(first, second).unwrap(), cube.weight(second, first).unwrap());
    for rep in 0..50 {
        let mut row = vec![SpikeTrain::empty(8), SpikeTrain::empty(8)];
        row[first] = train_at(8, &[2], Polarity::Positive).unwrap();
        row[second] = train_at(8, &[3], Polarity::Positive).unwrap();
        let fwd = cube.weight(first, second).unwrap();
        let back = cube.weight(second, first).unwrap();
        let rec = simulate(&mut cube, &row, Mode::Plastic, 0.01).unwrap();
        check!(rec.fired(2, first) && rec.fired(3, second), "rep {rep}: protocol spikes did not fire");
        let fwd2 = cube.weight(first, second).unwrap();
        let back2 = cube.weight(second, first).unwrap();
        check!(fwd2 > fwd, "rep {rep}: w({first}->{second}) did not increase ({fwd} -> {fwd2})");
        check!(back2 < back, "rep {rep}: w({second}->{first}) did not decrease ({back} -> {back2})");
    }
    Ok((
        cube.weight(first, second).unwrap() - w0.0,
        cube.weight(second, first).unwrap() - w0.1,
    ))
}

fn stdp_order_law() -> Check {
    let (up, down) = order_protocol(0, 1)?;
    let (up_rev, down_rev) = order_protocol(1, 0)?;
    Ok(format!(
        "j->i: dw(j->i) {up:+.4}, dw(i->j) {down:+.4}; reversed: dw(i->j) {up_rev:+.4}, dw(j->i) {down_rev:+.4}"
    ))
}

// 4 ------------------------------------------------------------------------

fn encoding_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let alphas: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1).collect();
    for s in 0..20 {
        let len = rng.random_range(10..120);
        let mut x = 0.0f64;
        // dyadic values keep differences, and so the shift law, exact
        let signal: Vec<f64> = (0..len)
            .map(|_| {
                x += rng.random_range(-1.0..1.0);
                (x * 1024.0).round() / 1024.0
            })
            .collect();
        let counts: Vec<usize> = alphas.iter().map(|&a| atb_encode(&signal, a).unwrap().len()).collect();
        check!(counts.windows(2).all(|w| w[1] <= w[0]), "signal {s}: counts {counts:?} not monotone");
        let neg: Vec<f64> = signal.iter().map(|v| -v).collect();
        let c = rng.random_range(-512i32..512) as f64 / 8.0;
        let moved: Vec<f64> = signal.iter().map(|v| v + c).collect();
        for &a in &alphas {
            let base = atb_encode(&signal, a).unwrap();
            check!(atb_encode(&neg, a).unwrap() == base.flipped(), "signal {s}, alpha {a}: antisymmetry");
            check!(atb_encode(&moved, a).unwrap() == base, "signal {s}, alpha {a}: shift by {c}");
        }
    }
    Ok("20 signals x 10 alphas: monotone counts, exact antisymmetry and shift invariance".into())
}

// 5, 6 -----------------------------------------------------------------------

struct Comparison {
    graph: Vec<[f64; 3]>,
    random: Vec<[f64; 3]>,
    took: Duration,
}

fn mapping_runs() -> Comparison {
    let start = Instant::now();
    let fractions = [1.0, 0.75, 0.5];
    let mut graph = Vec::new();
    let mut random = Vec::new();
    for seed in 0..SEEDS {
        let set = synthetic(seed);
        for (mode, out) in [(MappingMode::Graph, &mut graph), (MappingMode::Random, &mut random)] {
            let p = PipelineParams { mapping_mode: mode, ..PipelineParams::default() };
            let acc = cross_validate(&set, &p, 2, seed, &fractions).unwrap();
            out.push([acc[0], acc[1], acc[2]]);
        }
    }
    Comparison {
        graph,
        random,
        took: start.elapsed(),
    }
}

fn mean_at(rows: &[[f64; 3]], k: usize) -> f64 {
    rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64
}

fn mapping_superiority(c: &Comparison) -> Check {
    let gaps: Vec<f64> = c.graph.iter().zip(&c.random).map(|(g, r)| g[0] - r[0]).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let (g, r) = (mean_at(&c.graph, 0), mean_at(&c.random, 0));
    let wins = gaps.iter().filter(|&&d| d > 0.0).count();
    let losses = gaps.iter().filter(|&&d| d < 0.0).count();
    let detail = format!(
        "graph {g:.4} vs random {r:.4}, mean paired gap {mean_gap:+.4} (wins {wins}, losses {losses}); {:.1} s",
        c.took.as_secs_f64()
    );
    check!(g >= r && mean_gap > 0.0, "{detail}");
    check!(c.took < Duration::from_secs(600), "took {:?}", c.took);
    Ok(detail)
}

fn early_degradation(c: &Comparison) -> Check {
    let means: Vec<f64> = (0..3).map(|k| mean_at(&c.graph, k)).collect();
    let rises: Vec<f64> = means.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    let detail = format!("mean accuracy at 1.0/0.75/0.5: {:.4} / {:.4} / {:.4}", means[0], means[1], means[2]);
    check!(rises.len() <= 1 && rises.iter().all(|&d| d <= 0.02), "{detail}");
    Ok(detail)
}

// 7, 8 -----------------------------------------------------------------------

fn memorization() -> Check {
    let params = PipelineParams {
        desnn: DesnnParams { k: 1, drift: 0.0, ..DesnnParams::default() },
        ..PipelineParams::default()
    };
    for seed in 0..SEEDS {
        let set = synthetic(seed);
        let model = fit(&set, &params.reseeded(seed)).unwrap();
        let e = evaluate(&model, &set).unwrap();
        check!(e.accuracy == 1.0, "seed {seed}: training accuracy {}", e.accuracy);
    }
    Ok(format!("k=1, drift=0: training accuracy 1.0 on {SEEDS} seeds"))
}

fn firing_sparsity() -> Check {
    let mut all = Vec::new();
    for seed in 0..SEEDS {
        let model = fit(&synthetic(seed), &PipelineParams::default().reseeded(seed)).unwrap();
        let s = mean_sparsity(&model.train_records);
        check!(s < 0.10, "seed {seed}: sparsity {:.2}%", s * 100.0);
        all.push(s);
    }
    let max = all.iter().cloned().fold(0.0, f64::max);
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    Ok(format!("mean {:.2}%, max {:.2}% over {SEEDS} seeds", mean * 100.0, max * 100.0))
}

// 9 ------------------------------------------------------------------------

fn ga_contract() -> Check {
    let set = synthetic(0);
    let spec = ParamSpec::default();
    let cfg = GaConfig { seed: 2024, ..GaConfig::default() };
    check!(cfg.generations == 16 && cfg.population == 50 && cfg.elite_count == 5, "GA defaults changed");
    let start = Instant::now();
    let a = ga_optimize(&set, &spec, &PipelineParams::default(), &cfg).unwrap();
    let took = start.elapsed();
    let b = ga_optimize(&set, &spec, &PipelineParams::default(), &cfg).unwrap();
    check!(took < Duration::from_secs(900), "run took {took:?}");
    check!(a.trace.len() == 16, "trace has {} rows", a.trace.len());
    let best: Vec<f64> = a.trace.iter().map(|r| r.best_error).collect();
    check!(best.windows(2).all(|w| w[1] <= w[0]), "best-so-far rose: {best:?}");
    check!(a.population.iter().all(|g| spec.contains(&g.genes)), "gene out of range");
    check!(trace_csv(&a.trace).unwrap() == trace_csv(&b.trace).unwrap(), "traces differ between runs");
    check!(
        serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap(),
        "results differ between runs"
    );
    Ok(format!(
        "16 x 50: best error {:.3} -> {:.3}, {} evaluations, {:.1} s per run, repeat byte-identical",
        best[0],
        best[15],
        a.evaluations,
        took.as_secs_f64()
    ))
}

// 10 -----------------------------------------------------------------------

fn random_train(rng: &mut ChaCha8Rng, ticks: usize, lo: usize, hi: usize, p: f64) -> SpikeTrain {
    let mut spikes = Vec::new();
    for tick in lo..hi {
        if rng.random::<f64>() < p {
            let polarity = if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative };
            spikes.push(Spike { tick, polarity });
        }
    }
    SpikeTrain::new(ticks, spikes).unwrap()
}

fn similarity_suites() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..2000 {
        let t = rng.random_range(8..120);
        let tau = rng.random_range(0..t / 2);
        let pa = rng.random_range(0.0..0.6);
        let a = random_train(&mut rng, t, 0, t, pa);
        let pb = rng.random_range(0.0..0.6);
        let b = random_train(&mut rng, t, 0, t, pb);
        let c = max_coincidence(&a, &b, tau).unwrap();
        check!(c <= a.len().min(b.len()), "case {case}: coincidence {c} above min count");
        check!(c == max_coincidence(&b, &a, tau).unwrap(), "case {case}: coincidence not symmetric");

        // shift recovery: keep spikes far enough from the edges to survive
        let tau0 = rng.random_range(0..=tau);
        let inner = random_train(&mut rng, t, tau0, t - tau0, 0.3);
        let offset = if rng.random::<bool>() { tau0 as i64 } else { -(tau0 as i64) };
        let moved = inner.shifted(offset);
        check!(moved.len() == inner.len(), "case {case}: shift dropped spikes");
        let got = max_coincidence(&moved, &inner, tau).unwrap();
        check!(got == inner.len(), "case {case}: shift {offset} recovered {got} of {}", inner.len());

        if a.len() >= 2 {
            let h = rng.random_range(0.3..5.0);
            let r = density_correlation(&a, &a, &KernelConfig::gaussian(h)).unwrap();
            check!((r - 1.0).abs() < 1e-12, "case {case}: self-correlation {r}");
        }
    }
    for case in 0..100 {
        let (s, v, t) = (rng.random_range(1..5), rng.random_range(2..7), rng.random_range(10..80));
        let rows: Vec<Vec<SpikeTrain>> = (0..s)
            .map(|_| (0..v).map(|_| random_train(&mut rng, t, 0, t, 0.25)).collect())
            .collect();
        let raster = SpikeRaster::new((0..s).map(|i| format!("s{i}")).collect(), rows).unwrap();
        let mc = similarity_matrix(&raster, &SimilarityConfig::default()).unwrap();
        for i in 0..v {
            for j in 0..v {
                check!(mc.get(i, j) == mc.get(j, i), "case {case}: coincidence matrix asymmetric");
                check!((0.0..=1.0).contains(&mc.get(i, j)), "case {case}: coincidence entry out of [0, 1]");
            }
        }
        let cfg = SimilarityConfig {
            method: SimilarityMethod::DensityCorrelation,
            ..SimilarityConfig::default()
        };
        if let Ok(dc) = similarity_matrix(&raster, &cfg) {
            for i in 0..v {
                for j in 0..v {
                    check!((dc.get(i, j) - dc.get(j, i)).abs() <= 1e-12, "case {case}: correlation asymmetric");
                }
            }
        }
    }
    let took = start.elapsed();
    check!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("2000 train pairs, 100 rasters; {:.2} s", took.as_secs_f64()))
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("[{tag}] {name} ({secs:.1} s): {detail}");
    outcome.is_ok()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // listing mode used by test runners
    if args.iter().any(|a| a == "--list") {
        return;
    }
    println!("acceptance criteria");
    let mut ok = Vec::new();
    ok.push(run(" 1 propagation oracle equivalence", propagation_oracle));
    ok.push(run(" 2 QAP solver quality", qap_quality));
    ok.push(run(" 3 STDP order law", stdp_order_law));
    ok.push(run(" 4 encoding laws", encoding_laws));
    let comparison = catch_unwind(mapping_runs).ok();
    let missing = || Err::<String, String>("graph/random cross-validation runs panicked".into());
    ok.push(run(" 5 mapping superiority", || comparison.as_ref().map_or_else(missing, mapping_superiority)));
    ok.push(run(" 6 early-prediction degradation", || {
        comparison.as_ref().map_or_else(missing, early_degradation)
    }));
    ok.push(run(" 7 memorization sanity", memorization));
    ok.push(run(" 8 firing sparsity", firing_sparsity));
    ok.push(run(" 9 GA contract", ga_contract));
    ok.push(run("10 similarity suites", similarity_suites));
    let passed = ok.iter().filter(|&&b| b).count();
    println!("{passed}/{} criteria passed", ok.len());
    if passed != ok.len() {
        std::process::exit(1);
    }
}
