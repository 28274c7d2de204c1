use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polytraverse::network::{load_network, NetworkFormat};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_polytraverse"));
    c.env_remove("POLYTRAVERSE_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn path(name: &str) -> String {
    fixture(name).display().to_string()
}

const SQUARE: &str = r#"{"type": "box", "lower": [-1, -1], "upper": [1, 1]}"#;

#[test]
fn traverse_report_layout() {
    let net = path("identity.json");
    let out = run(&["traverse", "--net", &net, "--region", &path("square.json")]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let keys = [
        "schema",
        "artifact_version",
        "command",
        "network",
        "config",
        "result",
        "stats",
        "exit_code",
    ];
    let positions: Vec<usize> = keys
        .iter()
        .map(|k| {
            text.find(&format!("\n  \"{k}\""))
                .unwrap_or_else(|| panic!("missing {k}"))
        })
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));

    let r = report(&out);
    assert_eq!(r["schema"], "report_v1");
    assert_eq!(r["exit_code"], 0);
    let digest = hex_digest(&std::fs::read(fixture("identity.json")).unwrap());
    assert_eq!(r["network"]["fingerprint"], digest.as_str());
    assert_eq!(r["network"]["hidden_widths"], serde_json::json!([2]));
    assert_eq!(r["result"]["codes"].as_array().unwrap().len(), 4);
    assert_eq!(r["stats"]["polytopes_visited"], 4);
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn traverse_truncation_and_models() {
    let net = path("identity.json");
    let out = run(&["--max-polytopes", "2", "traverse", "--net", &net, "--region", SQUARE]);
    assert_eq!(code(&out), 4);
    assert_eq!(report(&out)["result"]["truncated"], true);

    let out = run(&[
        "traverse", "--net", &net, "--region", SQUARE, "--models", "--start", "0.5,-0.5",
    ]);
    let r = report(&out);
    assert_eq!(r["result"]["codes"][0], "10");
    assert_eq!(r["result"]["models"].as_array().unwrap().len(), 4);
}

#[test]
fn traversal_is_deterministic() {
    let net = path("two_layer.json");
    let codes = |workers: &str| {
        let out = bin()
            .env("POLYTRAVERSE_WORKERS", workers)
            .args(["traverse", "--net", &net, "--region", SQUARE])
            .output()
            .unwrap();
        let r = report(&out);
        assert_eq!(r["stats"]["workers"].as_u64().unwrap().to_string(), workers);
        r["result"]["codes"].clone()
    };
    let first = codes("1");
    assert_eq!(first, codes("1"));
    assert_eq!(first, codes("3"));
}

#[test]
fn robustness_exit_codes() {
    let net = path("two_output.json");
    let ok = run(&["verify", "--net", &net, "--robust", "0.3,0", "0.1"]);
    assert_eq!(code(&ok), 0);
    assert_eq!(report(&ok)["result"]["verdict"]["status"], "verified");
    let bad = run(&["verify", "--net", &net, "--robust", "0.3,0", "0.5"]);
    assert_eq!(code(&bad), 1);
    let r = report(&bad);
    assert_eq!(r["result"]["verdict"]["status"], "violated");
    assert_ne!(r["result"]["witness_class"], r["result"]["origin_class"]);
}

#[test]
fn property_exit_codes() {
    let net = path("two_output.json");
    let out = run(&["verify", "--net", &net, "--property", &path("o1_le_o2.json")]);
    assert_eq!(code(&out), 1);
    let dir = tempfile::tempdir().unwrap();
    let prop = dir.path().join("small.json");
    std::fs::write(
        &prop,
        r#"{"region": {"type": "box", "lower": [-1, -1], "upper": [0.4, 0.4]}, "inequalities": [{"a": [1, -1], "beta": 0}]}"#,
    )
    .unwrap();
    let out = run(&["verify", "--net", &net, "--property", prop.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn other_verifications() {
    let net = path("identity.json");
    let out = run(&[
        "verify",
        "--net",
        &net,
        "--monotone",
        "0",
        "increasing",
        "--region",
        SQUARE,
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "verify",
        "--net",
        &net,
        "--monotone",
        "0",
        "decreasing",
        "--region",
        SQUARE,
    ]);
    assert_eq!(code(&out), 1);

    let out = run(&["verify", "--net", &net, "--range", "--region", SQUARE]);
    let r = report(&out);
    assert_eq!(r["result"]["min"], 0.0);
    assert_eq!(r["result"]["max"], 2.0);

    let out = run(&[
        "verify",
        "--net",
        &net,
        "--counterfactual",
        "0.3,0.3",
        "linf",
        "--threshold",
        "0.5",
    ]);
    assert_eq!(code(&out), 0);
    let d = report(&out)["result"]["distance"].as_f64().unwrap();
    assert!((d - 0.05).abs() < 1e-6, "{d}");
}

#[test]
fn input_errors_exit_2() {
    let net = path("identity.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["traverse", "--net", "/nonexistent.json", "--region", SQUARE],
        vec!["traverse", "--net", &net, "--region", "{\"type\": \"box\""],
        vec![
            "traverse",
            "--net",
            &net,
            "--region",
            r#"{"type": "box", "lower": [1, 1], "upper": [0, 0]}"#,
        ],
        vec![
            "traverse",
            "--net",
            &net,
            "--region",
            r#"{"type": "box", "lower": [0], "upper": [1]}"#,
        ],
        vec!["verify", "--net", &net, "--counterfactual", "0,0", "l3"],
        vec!["verify", "--net", &net, "--robust", "0,x", "0.1"],
        vec!["verify", "--net", &net, "--range"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "), "{args:?}");
    }
}

#[test]
fn convert_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let nnet = dir.path().join("net.nnet");
    let back = dir.path().join("back.json");
    let src = fixture("two_layer.json");
    assert_eq!(
        code(&run(&[
            "convert",
            "--in",
            src.to_str().unwrap(),
            "--out",
            nnet.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "convert",
            "--in",
            nnet.to_str().unwrap(),
            "--out",
            back.to_str().unwrap()
        ])),
        0
    );
    let a = load_network(&std::fs::read(&src).unwrap(), NetworkFormat::Json).unwrap();
    let b = load_network(&std::fs::read(&back).unwrap(), NetworkFormat::Json).unwrap();
    assert_eq!(a, b);
}

#[test]
fn nnet_header_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let nnet = dir.path().join("net.nnet");
    let src = fixture("two_layer.json");
    run(&[
        "convert",
        "--in",
        src.to_str().unwrap(),
        "--out",
        nnet.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&nnet)
        .unwrap()
        .replacen("2,1,1,1,", "2,2,1,1,", 1);
    std::fs::write(&nnet, text).unwrap();
    let out = run(&["traverse", "--net", nnet.to_str().unwrap(), "--region", SQUARE]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
}

#[test]
fn dump_csv_and_json() {
    let net = path("identity.json");
    let out = run(&["dump-polytopes", "--net", &net, "--region", SQUARE, "--csv"]);
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "kind,code,level,neuron,index,x1,x2");
    assert_eq!(lines.iter().filter(|l| l.starts_with("cell,")).count(), 16);
    assert_eq!(lines.iter().filter(|l| l.starts_with("segment,")).count(), 4);
    assert!(!csv.contains("-0,") && !csv.contains(",-0\n"));

    let out = run(&["dump-polytopes", "--net", &net, "--region", SQUARE]);
    let d: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(d["cells"].as_array().unwrap().len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let three = dir.path().join("three.json");
    std::fs::write(
        &three,
        r#"{"input_dim": 3, "hidden": [{"weights": [[1, 0, 0]], "bias": [0]}], "output": {"weights": [[1]], "bias": [0]}}"#,
    )
    .unwrap();
    let out = run(&["dump-polytopes", "--net", three.to_str().unwrap(), "--region", SQUARE]);
    assert_eq!(code(&out), 2);
}
