use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn neucube(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neucube"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = neucube(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["synth", "--seed", "7", "--out", s(&a)]);
    ok(&["synth", "--seed", "7", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    ok(&["synth", "--seed", "8", "--out", s(&c)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn full_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    ok(&["synth", "--seed", "3", "--samples-per-class", "8", "--out", s(&data)]);

    let raster = d.join("raster.csv");
    ok(&["encode", "--input", s(&data), "--out", s(&raster)]);
    let text = std::fs::read_to_string(&raster).unwrap();
    assert!(text.starts_with("sample_id,variable,tick,polarity"));

    let map = d.join("map");
    ok(&["map", "--seed", "3", "--input", s(&data), "--out", s(&map)]);
    let mapping = std::fs::read_to_string(map.join("mapping.csv")).unwrap();
    assert_eq!(mapping.lines().count(), 9);
    assert!(json(map.join("mapping.json"))["mapping_objective"].as_f64().unwrap() >= 0.0);

    // memorization: k = 1, no drift, predicting the training set
    let train = d.join("train");
    ok(&["train", "--seed", "3", "--input", s(&data), "--out", s(&train), "--k", "1", "--drift", "0"]);
    for f in ["model.json", "cube.json", "metrics.json", "config.json", "mapping.csv", "timings.json"] {
        assert!(train.join(f).exists(), "{f} missing");
    }
    let metrics = json(train.join("metrics.json"));
    assert_eq!(metrics["accuracy"].as_f64(), Some(1.0));
    assert!(metrics["sparsity"].as_f64().unwrap() < 0.1);
    assert!(metrics["seeds"]["cube"].is_u64());
    assert!(metrics["mapping_objective"].is_f64());

    let pred = d.join("pred");
    ok(&["predict", "--model", s(&train.join("model.json")), "--input", s(&data), "--out", s(&pred)]);
    assert_eq!(json(pred.join("metrics.json"))["accuracy"].as_f64(), Some(1.0));
    let preds = std::fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("sample_id,label,predicted"));
    assert_eq!(preds.lines().count(), 17);

    let early = d.join("early");
    ok(&["early-predict", "--model", s(&train.join("model.json")), "--input", s(&data), "--out", s(&early)]);
    let rows = std::fs::read_to_string(early.join("early.csv")).unwrap();
    let ticks: Vec<&str> = rows.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ticks, ["60", "45", "30"]);

    let an = d.join("analysis");
    ok(&[
        "analyze",
        "--model",
        s(&train.join("model.json")),
        "--input",
        s(&data),
        "--out",
        s(&an),
        "--frames",
    ]);
    let clusters = json(an.join("clusters.json"));
    assert_eq!(clusters["kind"], "clusters");
    let report = json(an.join("analysis.json"));
    let hist: Vec<u64> = report["histogram"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    let labels = clusters["labels"].as_array().unwrap();
    for (j, &n) in hist.iter().enumerate() {
        assert_eq!(labels.iter().filter(|l| l.as_u64() == Some(j as u64)).count() as u64, n);
    }
    assert!(report["spectral_radius"].as_f64().unwrap() < 1.0);
    assert_eq!(json(an.join("connectivity.json"))["kind"], "connectivity");
    let frames = std::fs::read_dir(an.join("frames")).unwrap().count();
    assert_eq!(frames, 60);
    assert_eq!(json(an.join("frames").join("frame_0005.json"))["tick"], 5);
}

#[test]
fn training_artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    ok(&["synth", "--seed", "5", "--samples-per-class", "6", "--out", s(&data)]);
    for run in ["a", "b"] {
        ok(&["train", "--seed", "9", "--input", s(&data), "--out", s(&d.join(run))]);
    }
    for f in ["model.json", "cube.json", "metrics.json", "mapping.csv"] {
        assert_eq!(
            std::fs::read(d.join("a").join(f)).unwrap(),
            std::fs::read(d.join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    // the resolved config differs only in the output path
    let mut ca = json(d.join("a").join("config.json"));
    let mut cb = json(d.join("b").join("config.json"));
    ca["paths"]["out"] = Value::Null;
    cb["paths"]["out"] = Value::Null;
    assert_eq!(ca, cb);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    ok(&["synth", "--seed", "2", "--samples-per-class", "6", "--out", s(&data)]);
    let cfg = d.join("run.json");
    let doc = serde_json::json!({
        "seed": 4,
        "pipeline": { "desnn": { "k": 1, "drift": 0.0 } },
        "paths": { "input": data, "out": d.join("out") }
    });
    std::fs::write(&cfg, doc.to_string()).unwrap();
    ok(&["train", "--config", s(&cfg)]);
    let used = json(d.join("out").join("config.json"));
    assert_eq!(used["pipeline"]["desnn"]["k"], 1);
    assert_eq!(json(d.join("out").join("metrics.json"))["accuracy"].as_f64(), Some(1.0));

    ok(&["train", "--config", s(&cfg), "--set", "pipeline.lif.leak=0.3", "--out", s(&d.join("o2"))]);
    assert_eq!(json(d.join("o2").join("config.json"))["pipeline"]["lif"]["leak"], 0.3);

    std::fs::write(&cfg, r#"{"pipeline": {"bogus": 1}}"#).unwrap();
    assert_eq!(neucube(&["train", "--config", s(&cfg)]).status.code(), Some(1));
    assert_eq!(
        neucube(&["train", "--input", s(&data), "--out", s(&d.join("o3")), "--set", "pipeline.lif.nope=1"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(neucube(&["--help"]).status.code(), Some(0));
    for sub in ["synth", "encode", "map", "train", "predict", "early-predict", "analyze", "optimize"] {
        let out = neucube(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    assert_eq!(neucube(&["nonsense"]).status.code(), Some(1));
    assert_eq!(neucube(&["train"]).status.code(), Some(1));

    let missing = d.join("missing.csv");
    let out = neucube(&["train", "--input", s(&missing), "--out", s(&d.join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));

    let ragged = d.join("ragged.csv");
    std::fs::write(
        &ragged,
        "sample_id,tick,a,label\ns1,0,1,0\ns1,1,2,0\ns1,2,3,0\ns2,0,1,1\ns2,1,2,1\n",
    )
    .unwrap();
    let out = neucube(&["train", "--input", s(&ragged), "--out", s(&d.join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s2"));

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "sample_id,tick,a,label\ns1,0,x,0\ns1,1,2,0\n").unwrap();
    assert_eq!(neucube(&["encode", "--input", s(&bad), "--out", s(&d.join("r.csv"))]).status.code(), Some(2));
}

#[test]
fn optimize_writes_trace_and_compares_mappings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    ok(&["synth", "--seed", "1", "--samples-per-class", "4", "--ticks", "30", "--out", s(&data)]);
    let args = |out: &Path| {
        vec![
            "optimize".to_string(),
            "--seed".into(),
            "2".into(),
            "--input".into(),
            s(&data).into(),
            "--out".into(),
            s(out).into(),
            "--generations".into(),
            "3".into(),
            "--population".into(),
            "4".into(),
            "--set".into(),
            "ga.elite_count=1".into(),
            "--compare-mapping".into(),
        ]
    };
    let a = d.join("a");
    let b = d.join("b");
    let run = |out: &Path| {
        let v = args(out);
        ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    };
    run(&a);
    run(&b);
    for mode in ["graph", "random"] {
        let trace = std::fs::read_to_string(a.join(mode).join("trace.csv")).unwrap();
        assert_eq!(trace.lines().next(), Some("generation,best_error,mean_error"));
        assert_eq!(trace.lines().count(), 4);
        let best: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(
            std::fs::read(a.join(mode).join("trace.csv")).unwrap(),
            std::fs::read(b.join(mode).join("trace.csv")).unwrap()
        );
        let params = json(a.join(mode).join("best_params.json"));
        assert_eq!(params["mapping_mode"], mode);
        assert!(params["genes"]["k"].as_f64().unwrap() >= 1.0);
    }
    let cmp = json(a.join("comparison.json"));
    assert!(cmp["best_error"]["graph"].is_f64() && cmp["best_error"]["random"].is_f64());
}

/// Early-prediction accuracy should not rise as samples are cut shorter,
/// averaged over seeds.
#[test]
fn early_predict_trend_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut sums = [0.0f64; 3];
    for seed in 0..10 {
        let data = d.join(format!("d{seed}.csv"));
        let out = d.join(format!("e{seed}"));
        let seed = seed.to_string();
        ok(&["synth", "--seed", &seed, "--out", s(&data)]);
        ok(&["early-predict", "--seed", &seed, "--input", s(&data), "--out", s(&out)]);
        let acc = json(out.join("metrics.json"))["accuracy"].clone();
        for (k, x) in acc.as_array().unwrap().iter().enumerate() {
            sums[k] += x.as_f64().unwrap();
        }
    }
    let mean: Vec<f64> = sums.iter().map(|x| x / 10.0).collect();
    let inversions: Vec<f64> = mean.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    assert!(inversions.len() <= 1 && inversions.iter().all(|&d| d <= 0.02), "{mean:?}");
}
