use std::path::{Path, PathBuf};
use std::time::Instant;

use facetrank_core::pipeline::{Pipeline, PipelineConfig, PipelineError, Stage};
use facetrank_core::synthetic::{write_pipeline_fixture, FixtureConfig, FIXTURE_CONFIG};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/pipeline")
}

fn config(out: &Path, extra: &[&str]) -> PipelineConfig {
    let mut overrides = vec![format!("out_dir=\"{}\"", out.display())];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    PipelineConfig::load(&fixture_dir().join(FIXTURE_CONFIG), &overrides).unwrap()
}

#[test]
fn committed_fixture_matches_generator() {
    let tmp = tempfile::tempdir().unwrap();
    write_pipeline_fixture(tmp.path(), &FixtureConfig::default(), "../agreement").unwrap();
    for f in ["papers.jsonl", "pools.jsonl", "replay.jsonl", "benchmark/queries.jsonl", FIXTURE_CONFIG] {
        let fresh = std::fs::read(tmp.path().join(f)).unwrap();
        let committed = std::fs::read(fixture_dir().join(f)).unwrap();
        assert!(fresh == committed, "{f} is stale; run `cargo run -p facetrank-core --example write_fixture`");
    }
}

#[test]
fn stages_need_upstream_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(tmp.path(), &[]));
    let err = p.run_stage(Stage::Triplets, false).unwrap_err();
    assert!(matches!(err, PipelineError::MissingUpstream { stage: Stage::Annotate, .. }));
    assert!(err.to_string().contains("run `pipeline run annotate` first"));
    let err = p.run_stage(Stage::Bench, false).unwrap_err();
    assert!(matches!(err, PipelineError::MissingUpstream { stage: Stage::Corpus, .. }));
}

#[test]
fn full_run_writes_manifests_and_skips_when_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline::new(config(tmp.path(), &["bench.ablation=false", "train.epochs=1"]));
    let t0 = Instant::now();
    let (runs, summary) = p.run_all(false).unwrap();
    eprintln!("first run {:?}", t0.elapsed());
    assert!(runs.iter().all(|r| !r.skipped));
    for s in Stage::ALL {
        assert!(p.paths().manifest(s).is_file(), "manifest for {s}");
    }
    assert!(summary.reports.contains_key("reports/bench-background.json"));

    // Provenance chain: recorded inputs hash to the upstream outputs.
    let annotate = &runs[1].manifest;
    let corpus_out = &runs[0].manifest.outputs;
    for (path, hash) in &annotate.inputs {
        if let Some(h) = corpus_out.get(path) {
            assert_eq!(h, hash);
        }
    }

    let (again, summary2) = p.run_all(false).unwrap();
    assert!(again.iter().all(|r| r.skipped));
    assert_eq!(summary, summary2);

    let forced = p.run_stage(Stage::Triplets, true).unwrap();
    assert!(!forced.skipped);
    assert_eq!(forced.manifest.outputs, runs[3].manifest.outputs);

    let changed = Pipeline::new(config(tmp.path(), &["bench.ablation=false", "train.epochs=1", "rng_seed=5"]));
    assert!(!changed.run_stage(Stage::Triplets, false).unwrap().skipped);
}
