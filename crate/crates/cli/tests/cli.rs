//! End-to-end tests of the `semaff` binary against the bundled toy dataset.
//!
//! The golden files under `tests/golden/` were produced by a reviewed
//! reference run of `semaff run-all --config data/toy/toy.toml`; regenerate
//! them after any intentional output or version change.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn semaff() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semaff"))
}

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/toy.toml")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run_ok(args: &[&str]) -> Output {
    let output = semaff().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn run_all_matches_golden_outputs() {
    let out = tempfile::tempdir().unwrap();
    let out_str = out.path().to_str().unwrap();
    run_ok(&[
        "run-all",
        "--config",
        toy_config().to_str().unwrap(),
        "--out",
        out_str,
    ]);

    for name in ["affinity.tsv", "manifest.json", "domain_summary.tsv"] {
        let got = std::fs::read(out.path().join(name)).unwrap();
        let want = std::fs::read(golden(name)).unwrap();
        assert_eq!(got, want, "{name} differs from the golden file");
    }
}

#[test]
fn affinity_subcommand_matches_golden_tsv() {
    let out = tempfile::tempdir().unwrap();
    run_ok(&[
        "affinity",
        "--config",
        toy_config().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    let got = std::fs::read(out.path().join("affinity.tsv")).unwrap();
    let want = std::fs::read(golden("affinity.tsv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let output = semaff().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Usage"), "no usage text: {stderr}");
}

#[test]
fn missing_config_exits_1_with_json_error() {
    let out = tempfile::tempdir().unwrap();
    let output = semaff()
        .args([
            "affinity",
            "--config",
            "/nonexistent/toy.toml",
            "--out",
            out.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value =
        serde_json::from_str(stderr.trim()).expect("stderr is machine-readable JSON");
    assert!(parsed["error"].as_str().unwrap().contains("/nonexistent/toy.toml"));
}

/// Minimal well-formedness check for our own SVG output.
fn assert_well_formed_xml(doc: &str) {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = doc;
    while let Some(start) = rest.find('<') {
        rest = &rest[start + 1..];
        let end = rest.find('>').expect("unterminated tag");
        let tag = &rest[..end];
        rest = &rest[end + 1..];
        if tag.starts_with('?') || tag.starts_with("!--") {
            continue;
        }
        if let Some(name) = tag.strip_prefix('/') {
            assert_eq!(stack.pop().as_deref(), Some(name), "mismatched tag");
        } else if !tag.ends_with('/') {
            stack.push(tag.split_whitespace().next().unwrap().to_string());
        }
    }
    assert!(stack.is_empty(), "unclosed tags {stack:?}");
}

#[test]
fn report_domain_bars_emits_valid_svg() {
    let out = tempfile::tempdir().unwrap();
    run_ok(&[
        "report",
        "--kind",
        "domain-bars",
        "--config",
        toy_config().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    let svg = std::fs::read_to_string(out.path().join("domain_bars.svg")).unwrap();
    assert_well_formed_xml(&svg);
    // one bar per kept domain group (environment is omitted below size 5)
    assert_eq!(svg.matches("<rect").count(), 4);
    let tsv = std::fs::read_to_string(out.path().join("domain_bars.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 4);
}

#[test]
fn every_documented_report_kind_is_accepted() {
    let out = tempfile::tempdir().unwrap();
    for kind in [
        "affinity-table",
        "domain-bars",
        "kinship-profile",
        "partial-corr-bars",
        "scatter-2d",
    ] {
        run_ok(&[
            "report",
            "--kind",
            kind,
            "--config",
            toy_config().to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ]);
    }
    assert!(out.path().join("scatter.svg").exists());
    assert!(out.path().join("affinity.tsv").exists());
}

#[test]
fn build_space_then_run_all_reuses_the_cache() {
    let out = tempfile::tempdir().unwrap();
    let out_str = out.path().to_str().unwrap();
    let config = toy_config();
    run_ok(&["build-space", "--config", config.to_str().unwrap(), "--out", out_str]);
    let cache = out.path().join("space.cache.json");
    assert!(cache.exists());
    let before = std::fs::read(&cache).unwrap();
    run_ok(&["run-all", "--config", config.to_str().unwrap(), "--out", out_str]);
    let after = std::fs::read(&cache).unwrap();
    assert_eq!(before, after, "cache rewritten with different bytes");
}

#[test]
fn mode_override_changes_the_manifest_digest() {
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    let config = toy_config();
    run_ok(&[
        "build-space",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_a.path().to_str().unwrap(),
    ]);
    run_ok(&[
        "build-space",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.path().to_str().unwrap(),
        "--mode",
        "ls",
    ]);
    let digest_of = |dir: &Path| {
        let text = std::fs::read_to_string(dir.join("alignment_quality.tsv")).unwrap();
        text.lines().next().unwrap().to_string()
    };
    assert_ne!(
        digest_of(out_a.path()),
        digest_of(out_b.path()),
        "a mode override must change the provenance digest"
    );
}

#[test]
fn two_language_config_refuses_language_regression() {
    // generate a fresh 2-language dataset; 1 pair cannot support the
    // 3-factor regression
    let data = tempfile::tempdir().unwrap();
    let gen = Command::new(env!("CARGO_BIN_EXE_toygen"))
        .args([
            "--out",
            data.path().to_str().unwrap(),
            "--seed",
            "7",
            "--languages",
            "2",
        ])
        .output()
        .unwrap();
    assert!(gen.status.success());

    let out = tempfile::tempdir().unwrap();
    let output = semaff()
        .args([
            "pcorr",
            "--config",
            data.path().join("toy.toml").to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    let message = parsed["error"].as_str().unwrap();
    assert!(
        message.contains("regression"),
        "unexpected message: {message}"
    );
    let chain = parsed["chain"].as_array().unwrap();
    assert!(
        chain
            .iter()
            .any(|c| c.as_str().unwrap().contains("n = 1")),
        "chain should name the single pair: {chain:?}"
    );
}

#[test]
fn sdist_and_factors_subcommands_write_matrices() {
    let out = tempfile::tempdir().unwrap();
    let out_str = out.path().to_str().unwrap();
    let config = toy_config();
    run_ok(&["sdist", "--config", config.to_str().unwrap(), "--out", out_str]);
    run_ok(&["factors", "--config", config.to_str().unwrap(), "--out", out_str]);
    for name in ["sdist.tsv", "phy.tsv", "geo.tsv", "clm.tsv"] {
        let text = std::fs::read_to_string(out.path().join(name)).unwrap();
        let rows = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("language"))
            .count();
        assert_eq!(rows, 5, "{name}");
    }
}

#[test]
fn regress_and_pcorr_write_reports() {
    let out = tempfile::tempdir().unwrap();
    let out_str = out.path().to_str().unwrap();
    let config = toy_config();
    run_ok(&["regress", "--config", config.to_str().unwrap(), "--out", out_str]);
    assert!(out.path().join("concept_regression.tsv").exists());
    assert!(out.path().join("concept_regression.json").exists());
    assert!(out.path().join("sdist_regression.tsv").exists());

    run_ok(&["pcorr", "--config", config.to_str().unwrap(), "--out", out_str]);
    let text = std::fs::read_to_string(out.path().join("partial_correlations.tsv")).unwrap();
    // (all) + 5 domains with >= 1 concept, 3 factors each; environment has
    // only 3 concepts but still yields a matrix, so it is tested too
    let rows = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("domain"))
        .count();
    assert_eq!(rows % 3, 0);
    assert!(text.contains("(all)\tPHY"));
}
