use std::fs;
use std::path::Path;

use topicflow::influence::write_followers;
use topicflow::ingest::write_records;
use topicflow::pipeline::{run_pipeline, Manifest, PipelineConfig, Stage, StageOutcome, StageState};
use topicflow::synth::{gen_corpus, GeneratorConfig};

fn small_generator() -> GeneratorConfig {
    GeneratorConfig {
        seed: 11,
        n_agents: 300,
        n_emergent: 150,
        n_late: 10,
        ..GeneratorConfig::default()
    }
}

fn setup(dir: &Path) -> PipelineConfig {
    let corpus = gen_corpus(&small_generator()).unwrap();
    let corpus_path = dir.join("corpus.ndjson");
    let followers_path = dir.join("followers.tsv");
    write_records(&corpus.records, fs::File::create(&corpus_path).unwrap()).unwrap();
    write_followers(&corpus.followers, &followers_path).unwrap();
    PipelineConfig::new(corpus_path, Some(followers_path), corpus.ledger.split, dir.join("out"))
}

fn outcomes(report: &topicflow::pipeline::RunReport) -> Vec<StageOutcome> {
    report.stages.iter().map(|(_, o)| *o).collect()
}

#[test]
fn full_run_then_cache_hits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    let first = run_pipeline(&cfg, None).unwrap();
    assert_eq!(first.computed(), 7);
    let manifest = Manifest::read(&cfg.output_dir).unwrap();
    assert_eq!(manifest.stages.len(), 7);
    for record in &manifest.stages {
        assert_eq!(record.state, StageState::Completed);
        assert!(!record.outputs.is_empty(), "{} has no outputs", record.stage);
        for (path, hash) in &record.outputs {
            assert_eq!(&topicflow::pipeline::sha256_file(&cfg.output_dir.join(path)).unwrap(), hash);
        }
    }
    assert!(manifest.stage(Stage::Ingest).unwrap().inputs.contains_key("input.corpus"));

    let second = run_pipeline(&cfg, None).unwrap();
    assert!(outcomes(&second).iter().all(|o| *o == StageOutcome::Cached));
    assert_eq!(Manifest::read(&cfg.output_dir).unwrap(), manifest);
}

#[test]
fn corrupted_intermediate_recomputes_descendants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path());
    run_pipeline(&cfg, None).unwrap();
    let emergent = cfg.output_dir.join("emergent/emergent.tsv");
    let original = fs::read(&emergent).unwrap();
    fs::write(&emergent, b"garbage\n").unwrap();
    let report = run_pipeline(&cfg, None).unwrap();
    use StageOutcome::*;
    assert_eq!(outcomes(&report), vec![Cached, Cached, Cached, Cached, Computed, Computed, Cached]);
    assert_eq!(fs::read(&emergent).unwrap(), original);
}

#[test]
fn changed_setting_and_from_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path());
    run_pipeline(&cfg, None).unwrap();
    cfg.influence.sample_frac = 0.5;
    let report = run_pipeline(&cfg, None).unwrap();
    assert_eq!(report.outcome(Stage::Influence), Some(StageOutcome::Computed));
    assert_eq!(report.computed(), 1);

    let report = run_pipeline(&cfg, Some(Stage::Diversity)).unwrap();
    use StageOutcome::*;
    assert_eq!(outcomes(&report), vec![Cached, Cached, Cached, Computed, Computed, Computed, Computed]);
}

#[test]
fn failure_is_recorded_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = setup(tmp.path());
    cfg.input.followers = Some(tmp.path().join("missing.tsv"));
    let (err, report) = run_pipeline(&cfg, None).unwrap_err();
    assert!(err.to_string().contains("diversity"), "{err}");
    use StageOutcome::*;
    assert_eq!(outcomes(&report), vec![Computed, Computed, Computed, Failed, NotRun, NotRun, NotRun]);
    let manifest = Manifest::read(&cfg.output_dir).unwrap();
    let states: Vec<StageState> = manifest.stages.iter().map(|r| r.state).collect();
    assert_eq!(&states[..3], &[StageState::Completed; 3]);
    assert_eq!(states[3], StageState::Failed);
    assert!(manifest.stages[3].error.is_some());
    assert_eq!(&states[4..], &[StageState::NotRun; 3]);
}
