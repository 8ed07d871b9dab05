//! Exit codes, output structure and help text of the command-line runner.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reprsim::consensus::EpisodeRecord;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> String {
    root().join("configs").join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reprsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn representativity_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["representativity", "--config", &config("representativity_g1.json")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&dir.path().join("representativity.csv"));
    assert_eq!(header, ["candidate", "value", "mechanism", "q", "mode"]);
    let value = |label: &str| -> f64 {
        rows.iter().find(|r| r[0] == label).unwrap()[1].parse().unwrap()
    };
    assert_eq!(value("target"), 0.0);
    // Staying forever never reaches the rewarding state, which the target
    // reaches with probability 0.3.
    assert!((value("always-stay") - 0.3).abs() < 1e-15);
    assert!((value("always-move") - 0.7).abs() < 1e-15);
    assert!(rows.iter().all(|r| r[4] == "fixed-payoff"));
}

#[test]
fn representativity_without_config_uses_the_two_state_game() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["representativity"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = csv_rows(&dir.path().join("representativity.csv"));
    assert_eq!(rows[0][1], "0.0");
    assert!((rows[1][1].parse::<f64>().unwrap() - 0.3).abs() < 1e-15);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = run(&["representativity", "--config", &config("representativity_empty_family.json")], dir.path());
    assert_eq!(empty.status.code(), Some(2));

    let missing = run(&["verify-prop1", "--config", "/nonexistent/config.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    let bad_ref = dir.path().join("ref.json");
    fs::write(&bad_ref, r#"{"instance_files": ["no_such_process.json"], "n_instances": 1}"#).unwrap();
    let out = run(&["verify-prop1", "--config", bad_ref.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"experiment": {"n_positions": 5, "typo": 1}}"#).unwrap();
    let out = run(&["consensus", "--config", unknown.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let infeasible = dir.path().join("infeasible.json");
    fs::write(&infeasible, r#"{"experiment": {"n_participants": 61}}"#).unwrap();
    assert_eq!(run(&["consensus", "--config", infeasible.to_str().unwrap()], dir.path()).status.code(), Some(2));

    assert_eq!(run(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["consensus", "--threads", "many"], dir.path()).status.code(), Some(2));
}

#[test]
fn over_tight_tolerance_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify-prop1", "--config", &config("verify_prop1_overtight.json")], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let (header, rows) = csv_rows(&dir.path().join("prop1_candidates.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let broken: Vec<_> = rows.iter().filter(|r| r[col("chain_holds")] == "false").collect();
    assert!(!broken.is_empty());
    // Rounding-level conditional agreement with a larger operator difference.
    for r in broken {
        assert_eq!(r[col("conditional_equal")], "true");
        assert_eq!(r[col("transition_equal")], "false");
        assert!(r[col("conditional_deviation")].parse::<f64>().unwrap() <= 1e-15);
    }
}

#[test]
fn small_verification_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, r#"{"n_instances": 5, "seed": 3}"#).unwrap();
    let out = run(&["verify-prop1", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = csv_rows(&dir.path().join("prop1_candidates.csv"));
    let instances: std::collections::BTreeSet<_> = rows.iter().map(|r| r[0].clone()).collect();
    assert_eq!(instances.len(), 6);
    assert!(instances.contains("g2"));
    let (header, strict) = csv_rows(&dir.path().join("prop1_strictness.csv"));
    assert_eq!(header.len(), 8);
    assert!(strict.iter().any(|r| r[0] == "g2" && r[7] == "true"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("prop1_report.json")).unwrap()).unwrap();
    assert_eq!(report["chain_violations"], 0);
    assert_eq!(report["config"]["seed"], 3);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    fs::write(&cfg, r#"{"n_instances": 2, "include_g2": false, "seed": 3}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["verify-prop1", "--config", cfg.to_str().unwrap(), "--seed", "99"], &a);
    run(&["verify-prop1", "--config", cfg.to_str().unwrap()], &b);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("prop1_report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 99);
    assert_ne!(
        fs::read(a.join("prop1_candidates.csv")).unwrap(),
        fs::read(b.join("prop1_candidates.csv")).unwrap()
    );
}

#[test]
fn consensus_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["consensus", "--config", &config("consensus.json")], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let (header, rows) = csv_rows(&dir.path().join("consensus_metrics.csv"));
    assert_eq!(header, ["model", "metric", "value", "std_error", "n"]);
    assert_eq!(rows.len(), 12);
    for model in ["population", "personal", "uniform"] {
        for metric in ["loglik", "winrate", "discrepancy-single", "discrepancy-all"] {
            assert_eq!(rows.iter().filter(|r| r[0] == model && r[1] == metric).count(), 1, "{model}/{metric}");
        }
    }
    let uniform_ll: f64 = rows.iter().find(|r| r[0] == "uniform" && r[1] == "loglik").unwrap()[2]
        .parse()
        .unwrap();
    assert!((uniform_ll - (1.0f64 / 6.0).ln()).abs() < 1e-12);

    for svg in ["consensus_loglik.svg", "consensus_winrate.svg", "consensus_discrepancy.svg"] {
        let text = fs::read_to_string(dir.path().join(svg)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{svg}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let bars = doc
            .descendants()
            .filter(|n| n.tag_name().name() == "rect" && n.has_children())
            .count();
        let expected = if svg == "consensus_discrepancy.svg" { 6 } else { 3 };
        assert_eq!(bars, expected, "{svg}");
    }

    let lines = fs::read_to_string(dir.path().join("consensus_dataset.jsonl")).unwrap();
    let records: Vec<EpisodeRecord> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 200);
    assert!(records.iter().all(|r| r.split.is_some() && r.participants.len() == 3));

    let again = tempfile::tempdir().unwrap();
    run(&["consensus", "--config", &config("consensus.json"), "--threads", "2"], again.path());
    for f in ["consensus_metrics.csv", "consensus_dataset.jsonl", "consensus_discrepancy.svg"] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn help_documents_csv_columns() {
    let help = |cmd: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_reprsim")).args([cmd, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        String::from_utf8(out.stdout).unwrap()
    };
    assert!(help("verify-prop1").contains("instance,candidate,conditional_equal,transition_equal,"));
    assert!(help("consensus").contains("model,metric,value,std_error,n"));
    assert!(help("representativity").contains("candidate,value,mechanism,q,mode"));
    let top = Command::new(env!("CARGO_BIN_EXE_reprsim")).arg("--help").output().unwrap();
    assert!(String::from_utf8(top.stdout).unwrap().contains("Exit codes"));
}
