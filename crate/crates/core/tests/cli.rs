use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use affinity_kg::config::KEYS;

const SMALL: &[&str] = &[
    "--set", "split.valid=100", "--set", "split.test=100", "--set", "train.epochs=3", "--set", "train.d_e=8",
    "--set", "train.d_r=2",
];

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affinity-kg")).args(args).args(SMALL).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen-synthetic → build-network → split → train inside `root`.
fn prepare(root: &Path) {
    ok(&["gen-synthetic", "--out", s(&root.join("synth"))]);
    ok(&["build-network", "--records", s(&root.join("synth/records.csv")), "--out", s(&root.join("net"))]);
    ok(&["split", "--triples", s(&root.join("net/triples.tsv")), "--out", s(&root.join("data"))]);
    ok(&["train", "--data", s(&root.join("data")), "--out", s(&root.join("model"))]);
}

#[test]
fn pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    prepare(root);
    let (data, ck) = (root.join("data"), root.join("model/checkpoint"));
    ok(&["evaluate", "--data", s(&data), "--checkpoint", s(&ck), "--fold", "valid", "--out", s(&root.join("eval"))]);
    ok(&["analyze", "--data", s(&data), "--checkpoint", s(&ck), "--out", s(&root.join("snn"))]);
    ok(&["export-heatmaps", "--data", s(&data), "--checkpoint", s(&ck), "--out", s(&root.join("maps"))]);
    for f in [
        "synth/planted_truth.json",
        "net/build_report.json",
        "data/split_report.json",
        "model/train_log.jsonl",
        "model/train_summary.json",
        "model/checkpoint/meta.json",
        "eval/metrics.json",
        "eval/metrics_per_relation.csv",
        "eval/rank_hits.csv",
        "eval/ranks.csv",
        "snn/snn_report.json",
        "snn/snn_per_decile.csv",
        "maps/asymmetry.csv",
        "maps/effective_config_export-heatmaps.txt",
    ] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("eval/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["fold"], "valid");
    assert_eq!(metrics["overall"]["n"], 200);

    // One heatmap per decile relation, listed in decile order.
    let maps: Vec<String> = fs::read_dir(root.join("maps"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("relmat_"))
        .collect();
    assert_eq!(maps.len(), 10);
    let asym = fs::read_to_string(root.join("maps/asymmetry.csv")).unwrap();
    let order: Vec<&str> = asym.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    let want: Vec<String> = (1..=10).map(|d| format!("d{d}")).collect();
    assert_eq!(order, want);
}

#[test]
fn malformed_records_report_line_and_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let records = tmp.path().join("records.csv");
    fs::write(&records, "paternal,maternal,ses,block\na,b,1.0,x\nc,d,not-a-number,y\n").unwrap();
    let out = cli(&["build-network", "--records", s(&records), "--out", s(&tmp.path().join("net"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn checkpoint_for_other_vocabulary_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    prepare(root);
    // Rename one entity everywhere so the fold files no longer match the checkpoint.
    let data = root.join("data");
    let victim = fs::read_to_string(data.join("train.tsv")).unwrap().split('\t').next().unwrap().to_owned();
    for f in ["train.tsv", "valid.tsv", "test.tsv"] {
        let text = fs::read_to_string(data.join(f)).unwrap();
        let renamed: String = text
            .lines()
            .map(|l| l.split('\t').map(|x| if x == victim { "zz_renamed" } else { x }).collect::<Vec<_>>().join("\t") + "\n")
            .collect();
        fs::write(data.join(f), renamed).unwrap();
    }
    let out = cli(&[
        "evaluate",
        "--data",
        s(&data),
        "--checkpoint",
        s(&root.join("model/checkpoint")),
        "--out",
        s(&root.join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_lists_every_config_key() {
    let out = Command::new(env!("CARGO_BIN_EXE_affinity-kg")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for (k, _, _) in KEYS {
        assert!(text.contains(k), "--help misses {k}");
    }
}

#[test]
fn unknown_key_and_missing_input_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cli(&["--set", "train.nonsense=1", "gen-synthetic", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.nonsense"));

    let out = cli(&["split", "--triples", s(&tmp.path().join("absent.tsv")), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_is_applied_and_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# small population\nsynth.individuals = 3000\nseed = 4\n").unwrap();
    ok(&["--config", s(&cfg), "gen-synthetic", "--out", s(&tmp.path().join("synth"))]);
    let echoed = fs::read_to_string(tmp.path().join("synth/effective_config_gen-synthetic.txt")).unwrap();
    assert!(echoed.contains("synth.individuals = 3000\n"));
    assert!(echoed.contains("seed = 4\n"));
    let rows = fs::read_to_string(tmp.path().join("synth/records.csv")).unwrap().lines().count();
    assert_eq!(rows, 3001);
}

#[test]
fn overrides_on_both_sides_of_the_subcommand_apply_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    let run = Command::new(env!("CARGO_BIN_EXE_affinity-kg"))
        .args(["--set", "synth.individuals=500", "--set", "seed=1", "gen-synthetic", "--out", s(&out)])
        .args(["--set", "seed=2"])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let echoed = fs::read_to_string(out.join("effective_config_gen-synthetic.txt")).unwrap();
    assert!(echoed.contains("synth.individuals = 500\n"));
    assert!(echoed.contains("seed = 2\n"));
}
