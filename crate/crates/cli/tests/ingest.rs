use std::path::{Path, PathBuf};
use std::process::Command;

use trendscope_cli::RunReport;
use trendscope_core::{Manifest, VectorBlock};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ingest").join(name)
}

fn ingest(manifest: &str, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_trendscope"))
        .arg("ingest")
        .arg("--manifest")
        .arg(fixture(manifest))
        .arg("--vectors")
        .arg(fixture("vectors.tlvb"))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn report(out: &Path) -> RunReport {
    serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn valid_fixture_lands_in_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let status = ingest("valid.jsonl", dir.path());
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let (manifest, block) =
        Manifest::load(&dir.path().join("manifest.jsonl"), &dir.path().join("vectors.tlvb")).unwrap();
    assert_eq!(manifest.len(), 3);
    assert_eq!(block, VectorBlock::load(&fixture("vectors.tlvb")).unwrap());
    let r = report(dir.path());
    assert_eq!(r.counts.records_loaded, 3);
    assert_eq!(r.counts.lines_rejected, 0);
    assert!(r.output("manifest.jsonl").is_some());
    assert!(r.output("vectors.tlvb").is_some());
}

#[test]
fn out_of_range_latitude_is_rejected_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let status = ingest("bad_lat.jsonl", dir.path());
    assert!(status.status.success());
    let r = report(dir.path());
    assert_eq!(r.counts.records_loaded, 3);
    assert_eq!(r.counts.lines_rejected, 1);
    assert!(r.warnings.iter().any(|w| w.contains("line 4") && w.contains("bad-1")), "{:?}", r.warnings);
    let written = std::fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
    assert!(!written.contains("bad-1"));
}

#[test]
fn duplicate_id_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = ingest("duplicate.jsonl", dir.path());
    assert_eq!(status.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("par-1"), "{stderr}");
    assert!(!dir.path().join("manifest.jsonl").exists());
}

#[test]
fn malformed_line_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let status = ingest("malformed.jsonl", dir.path());
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("line 2"));
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = ingest("nope.jsonl", dir.path());
    assert_eq!(status.status.code(), Some(2));
}
