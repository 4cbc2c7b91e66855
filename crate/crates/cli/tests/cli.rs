//! End-to-end runs of the binary: subcommand grammar, exit codes, artifact
//! schemas, and byte-level reproducibility of data artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grabforest"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn lemma1_verification_reports_uniformity() {
    let out = run(&["verify-lemma1", "--arms", "2,0,0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("uniform over 4 states, exact"), "{text}");
}

#[test]
fn lemma1_writes_the_oracle_csv() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("lemma1");
    let out = run(&[
        "verify-lemma1",
        "--arms",
        "1,1,0",
        "--out",
        stem.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("lemma1.oracle.csv")).unwrap();
    assert!(csv.starts_with("outcome,numerator,denominator"));
    assert_eq!(csv.lines().count(), 5, "4 outcomes plus header: {csv}");
    assert!(Path::new(&dir.path().join("lemma1.json")).exists());
    assert!(Path::new(&dir.path().join("lemma1.csv")).exists());
}

#[test]
fn kemperman_rational_mode_is_exact() {
    let out = run(&[
        "kemperman",
        "--mu",
        "0:1/2,1:1/4,2:1/4",
        "--n-max",
        "30",
        "--mode",
        "rational",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("max deviation 0 (exact)"));
}

#[test]
fn theorem1_exact_sweep_passes() {
    let out = run(&["verify-theorem1", "--mu", "0:1/2,2:1/2", "--n-max", "5"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("shape_mixture_equals_conditioned_gw"));
}

#[test]
fn theorem1_monte_carlo_check_passes() {
    let out = run(&[
        "verify-theorem1",
        "--mu",
        "0:1/2,2:1/2",
        "--n-max",
        "4",
        "--mc-reps",
        "20000",
        "--k",
        "2",
        "--n",
        "6",
        "--seed",
        "11",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("pipeline_matches_conditioned_gw"));
}

#[test]
fn tilt_and_sizebias_print_transformed_laws() {
    let out = run(&["tilt", "--mu", "0:0.25,2:0.75", "--target-mean", "0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("theta = 0.333333333333333"), "{text}");

    let out = run(&[
        "sizebias",
        "--mu",
        "0:1/2,1:3/10,2:1/5",
        "--mode",
        "rational",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("size-biased law: 0:3/7,1:4/7"), "{text}");
    assert!(text.contains("giant-component criterion: -3/10"), "{text}");
}

#[test]
fn exit_codes_follow_the_contract() {
    // usage error: malformed flag
    let out = run(&["theorem2", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // config error: unnormalized law
    let out = run(&[
        "theorem2",
        "--mu",
        "0:0.5,2:0.6",
        "--tree",
        "(0)",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // config error: randomized subcommand without a seed
    let out = run(&["theorem2", "--mu", "0:0.5,2:0.5", "--tree", "(0)"]);
    assert_eq!(out.status.code(), Some(2));
    // config error: malformed tree text
    let out = run(&[
        "theorem2",
        "--mu",
        "0:0.5,2:0.5",
        "--tree",
        "(0,0)",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // criterion failure: unreachable final tolerance
    let out = run(&[
        "ratio",
        "--mu",
        "0:0.35,1:0.30,2:0.35",
        "--n",
        "50,100",
        "--ell",
        "5",
        "--final-tol",
        "0.0000001",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // success
    let out = run(&[
        "ratio",
        "--mu",
        "0:0.35,1:0.30,2:0.35",
        "--n",
        "50,100",
        "--ell",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn periodic_laws_are_rejected_by_ratio() {
    let out = run(&["ratio", "--mu", "0:0.5,2:0.5", "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("period"), "{err}");
}

#[test]
fn artifacts_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for round in 0..2 {
        let stem = dir.path().join(format!("run{round}"));
        let out = run(&[
            "theorem2",
            "--mu",
            "0:0.5,2:0.5",
            "--tree",
            "(0)",
            "--n",
            "20,40",
            "--reps",
            "200",
            "--seed",
            "42",
            "--out",
            stem.to_str().unwrap(),
            "--plot",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let json = std::fs::read(dir.path().join(format!("run{round}.json"))).unwrap();
        let csv = std::fs::read(dir.path().join(format!("run{round}.csv"))).unwrap();
        let plot =
            std::fs::read(dir.path().join(format!("run{round}.mean_sq_deviation.csv"))).unwrap();
        bytes.push((json, csv, plot));
    }
    // the config block embeds `out`, which differs by stem; compare the
    // report body and the flat artifacts
    let a = String::from_utf8(bytes[0].0.clone()).unwrap();
    let b = String::from_utf8(bytes[1].0.clone()).unwrap();
    let report = |s: &str| s.split("\"report\"").nth(1).unwrap().to_owned();
    assert_eq!(report(&a), report(&b));
    assert_eq!(bytes[0].1, bytes[1].1);
    assert_eq!(bytes[0].2, bytes[1].2);
}

#[test]
fn simulate_emits_schema_compliant_jsonl() {
    let out = run(&[
        "simulate",
        "--mu",
        "0:0.5,1:0.3,2:0.2",
        "--n",
        "50",
        "--reps",
        "4",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["seed"], 3);
        assert_eq!(v["stream"], i as u64);
        assert_eq!(v["n"], 50);
        assert!(v["k"].as_u64().unwrap() >= 1);
        assert!(v["arms_digest"].as_str().unwrap().len() == 64);
        assert!(v["shape"].as_str().unwrap().starts_with('('));
        assert!(v["elapsed_ns"].as_u64().is_some());
        assert!(v.get("vertex_labels").is_none(), "shape mode omits labels");
    }

    // full fidelity adds label arrays
    let out = run(&[
        "simulate",
        "--arms",
        "2,0,0",
        "--reps",
        "1",
        "--seed",
        "3",
        "--fidelity",
        "full",
    ]);
    let text = stdout(&out);
    let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(v["vertex_labels"].as_array().unwrap().len(), 3);
    assert_eq!(v["edge_labels"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_data_fields_are_deterministic() {
    let strip_timing = |text: &str| -> Vec<serde_json::Value> {
        text.lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("elapsed_ns");
                v
            })
            .collect()
    };
    let args = [
        "simulate",
        "--mu",
        "0:0.5,2:0.5",
        "--n",
        "30",
        "--reps",
        "8",
        "--seed",
        "5",
    ];
    let a = strip_timing(&stdout(&run(&args)));
    let b = strip_timing(&stdout(&run(&args)));
    assert_eq!(a, b);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "mu = \"0:0.5,2:0.5\"\nseed = 9\nreps = 100\nn = [20]\n",
    )
    .unwrap();
    let out = run(&[
        "theorem2",
        "--tree",
        "(0)",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["report"]["seed"], 9);
    assert_eq!(doc["report"]["reps"], 100);

    // a flag beats the file
    let out = run(&[
        "theorem2",
        "--tree",
        "(0)",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "77",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["report"]["seed"], 77);

    // unknown keys are rejected
    std::fs::write(&cfg, "mu = \"0:0.5,2:0.5\"\nbogus = 1\n").unwrap();
    let out = run(&[
        "theorem2",
        "--tree",
        "(0)",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_variables_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\n").unwrap();
    let out = bin()
        .args([
            "theorem2",
            "--mu",
            "0:0.5,2:0.5",
            "--tree",
            "(0)",
            "--reps",
            "50",
            "--n",
            "20",
            "--config",
            cfg.to_str().unwrap(),
        ])
        .env("GF_SEED", "123")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["report"]["seed"], 123);
}

#[test]
fn dwass_configcmp_supercrit_smoke() {
    let out = run(&[
        "dwass",
        "--mu",
        "0:0.5,2:0.5",
        "--k",
        "3",
        "--reps",
        "20000",
        "--seed",
        "6",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = run(&[
        "configcmp",
        "--mu",
        "0:0.5,1:0.3,2:0.2",
        "--n",
        "300",
        "--reps",
        "4000",
        "--seed",
        "6",
        "--tv-threshold",
        "0.08",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = run(&[
        "supercrit",
        "--mu",
        "0:0.25,2:0.75",
        "--n",
        "60",
        "--reps",
        "500",
        "--seed",
        "6",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(doc["report"]["extra"]["tilted_law"].is_string());
}

#[test]
fn pairfact_converges_for_the_subcritical_law() {
    // target: T((0)) · T((1,0)) = 0.5 · 0.15 = 0.075; subcritical tree
    // counts grow linearly, so the finite-n bias is negligible at n = 800
    let out = run(&[
        "pairfact",
        "--mu",
        "0:0.5,1:0.3,2:0.2",
        "--t1",
        "(0)",
        "--t2",
        "(1,0)",
        "--n",
        "800",
        "--reps",
        "2000",
        "--seed",
        "8",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let est = doc["report"]["rows"][0]["value"].as_f64().unwrap();
    assert!((est - 0.075).abs() < 0.02, "estimate {est}");
}
