use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn topicflow(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_topicflow"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "topicflow {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn subcommands_reproduce_pipeline_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("gen.toml"), "seed = 9\nn_agents = 300\nn_emergent = 150\nn_late = 10\n").unwrap();
    topicflow(
        d,
        &[
            "synth", "--config", "gen.toml", "--out", "corpus.ndjson", "--ledger", "ledger.json", "--followers",
            "followers.tsv", "--split-out", "split.toml",
        ],
    );
    let split = fs::read_to_string(d.join("split.toml")).unwrap();
    fs::write(
        d.join("pipe.toml"),
        format!("output_dir = \"out\"\n[input]\ncorpus = \"corpus.ndjson\"\nfollowers = \"followers.tsv\"\n[split]\n{split}"),
    )
    .unwrap();
    let run = topicflow(d, &["--threads", "2", "run", "--config", "pipe.toml"]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(stdout.matches("computed").count(), 7, "{stdout}");
    let again = topicflow(d, &["run", "--config", "pipe.toml"]);
    assert_eq!(String::from_utf8_lossy(&again.stdout).matches("cached").count(), 7);

    topicflow(
        d,
        &[
            "ingest", "--input", "corpus.ndjson", "--split", "split.toml", "--stats", "stats.tsv", "--obs-out",
            "obs.ndjson", "--test-out", "test.ndjson",
        ],
    );
    topicflow(d, &["graph", "--input", "obs.ndjson", "--min-users", "3", "--min-edge", "3", "--out", "graph"]);
    topicflow(d, &["topics", "--graph", "graph", "--seed", "42", "--level", "2", "--out", "topics.tsv"]);
    topicflow(
        d,
        &[
            "diversity", "--topics", "topics.tsv", "--input", "obs.ndjson", "--users", "users.tsv", "--followers",
            "followers.tsv", "--profiles", "profiles.tsv",
        ],
    );
    topicflow(
        d,
        &["emergent", "--obs", "obs.ndjson", "--test", "test.ndjson", "--split", "split.toml", "--out", "emergent.tsv"],
    );
    topicflow(
        d,
        &[
            "predict", "--emergent", "emergent.tsv", "--topics", "topics.tsv", "--profiles", "profiles.tsv", "--obs",
            "obs.ndjson", "--test", "test.ndjson", "--out", "table.tsv",
        ],
    );
    fs::create_dir(d.join("heat")).unwrap();
    topicflow(
        d,
        &[
            "influence", "--profiles", "profiles.tsv", "--regression", "reg.tsv", "--binned-by", "twt", "--corr",
            "fol,H1", "--heatmaps", "heat",
        ],
    );

    let same = |a: &str, b: &str| {
        assert_eq!(fs::read(d.join(a)).unwrap(), fs::read(d.join(b)).unwrap(), "{a} vs {b}");
    };
    same("stats.tsv", "out/ingest/stats.tsv");
    same("obs.ndjson", "out/ingest/observation.ndjson");
    same("graph/edges.tsv", "out/graph/edges.tsv");
    same("topics.tsv", "out/topics/topics.tsv");
    same("users.tsv", "out/diversity/users.tsv");
    same("profiles.tsv", "out/diversity/profiles.tsv");
    same("emergent.tsv", "out/emergent/emergent.tsv");
    same("table.tsv", "out/predict/table.tsv");
    same("reg.tsv", "out/influence/regression.tsv");
    same("heat/binned_twt_fol_H1.tsv", "out/influence/binned_twt_fol_H1.tsv");
    same("heat/heatmap_count.tsv", "out/influence/heatmap_count.tsv");

    let header = fs::read_to_string(d.join("table.tsv")).unwrap();
    assert!(header.starts_with("feature\twindow_h\tthreshold_pct\tauc\tn_pos\tn_neg\n"));
}

#[test]
fn print_config_applies_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("pipe.toml"),
        "output_dir = \"out\"\n[input]\ncorpus = \"c.ndjson\"\n[split]\nobservation_start = 0\nobservation_end = 10\ntest_start = 10\nfirst_week_end = 20\ntest_end = 30\n",
    )
    .unwrap();
    let out = topicflow(d, &["run", "--config", "pipe.toml", "--level", "1", "--in-sample", "--print-config"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("level = 1"), "{text}");
    assert!(text.contains("in_sample = true"), "{text}");
}

#[test]
fn oracle_subcommand_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = topicflow(tmp.path(), &["oracle", "--cases", "5"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("FAIL"), "{text}");
    assert_eq!(text.matches("PASS").count(), 5);
}

#[test]
fn failing_run_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("pipe.toml"),
        "output_dir = \"out\"\n[input]\ncorpus = \"missing.ndjson\"\n[split]\nobservation_start = 0\nobservation_end = 10\ntest_start = 10\nfirst_week_end = 20\ntest_end = 30\n",
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_topicflow"))
        .current_dir(d)
        .args(["run", "--config", "pipe.toml"])
        .output()
        .unwrap()
        .status;
    assert!(!status.success());
    assert!(d.join("out/manifest.json").exists());
}
