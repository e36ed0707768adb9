use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use gripnet::graph::CategoryId;
use gripnet::harness::{
    self, Checkpoint, HarnessError, PreparedTask, RunConfig, SyntheticSpec, TaskKind, CHECKPOINT_FILE, HISTORY_FILE,
    REPORT_FILE,
};
use gripnet::heads::Model;
use gripnet::supergraph::SupergraphError;

fn synth(spec: SyntheticSpec, dir: &Path, epochs: usize) -> RunConfig {
    let mut cfg = harness::generate_synthetic(&spec, &dir.join("data")).unwrap();
    cfg.training.epochs = epochs;
    cfg.output = dir.join("out");
    cfg
}

#[test]
fn link_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(SyntheticSpec::default_lp(), dir.path(), 30);
    let trained = harness::cmd_train(&cfg).unwrap();
    let history = fs::read_to_string(cfg.output.join(HISTORY_FILE)).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,loss,test_metric"));
    assert_eq!(history.lines().count(), 31);

    let report = harness::cmd_eval(&cfg, &cfg.output.join(CHECKPOINT_FILE)).unwrap();
    let prepared = harness::prepare(&cfg).unwrap();
    assert_eq!(report, harness::evaluate(&prepared, &trained.model).unwrap());
    assert_eq!(report["task"], "lp");
    assert_eq!(report["per_label"].as_object().unwrap().len(), 3);
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.output.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, report);

    let exported = harness::cmd_export(&cfg.output.join(CHECKPOINT_FILE), &dir.path().join("emb")).unwrap();
    let z = trained.model.embeddings().unwrap();
    let sg = prepared.message_graph();
    assert_eq!(exported.len(), sg.num_supervertices());
    for (c, path) in exported.iter().enumerate() {
        let rows = harness::read_embeddings(path).unwrap();
        let sv = sg.supervertex(CategoryId(c));
        assert_eq!(rows.len(), sv.len());
        for (r, (name, values)) in rows.iter().enumerate() {
            assert_eq!(name, prepared.graph.node_name(sv.global_id(r)));
            for (a, b) in values.iter().zip(z[c].row(r)) {
                assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn node_classification_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(SyntheticSpec::default_nc(), dir.path(), 20);
    harness::cmd_train(&cfg).unwrap();
    let report = harness::cmd_eval(&cfg, &cfg.output.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(report["task"], "nc");
    assert_eq!(report["classes"], serde_json::json!(["class_0", "class_1", "class_2", "class_3"]));
    let micro = report["micro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&micro));
    let ck = Checkpoint::load(&cfg.output.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.classes.len(), 4);
}

#[test]
fn zero_epochs_keeps_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(SyntheticSpec::default_lp(), dir.path(), 0);
    let prepared = harness::prepare(&cfg).unwrap();
    let out = harness::train(&cfg, &prepared).unwrap();
    assert!(out.history.is_empty());
    let fresh = harness::build_model(&cfg, &prepared).unwrap();
    for (a, b) in out.model.store().iter().zip(fresh.store().iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn seed_override_changes_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth(SyntheticSpec::default_lp(), dir.path(), 0);
    let prepared = harness::prepare(&cfg).unwrap();
    let a = harness::train(&cfg, &prepared).unwrap().checkpoint.to_json();
    cfg.training.seed += 1;
    let b = harness::train(&cfg, &prepared).unwrap().checkpoint.to_json();
    assert_ne!(a, b);
}

#[test]
fn checkpoint_task_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let lp = synth(SyntheticSpec::default_lp(), &dir.path().join("lp"), 1);
    let nc = synth(SyntheticSpec::default_nc(), &dir.path().join("nc"), 1);
    harness::cmd_train(&lp).unwrap();
    let err = harness::cmd_eval(&nc, &lp.output.join(CHECKPOINT_FILE)).unwrap_err();
    assert!(matches!(err, HarnessError::ShapeMismatch(_)), "{err}");
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(SyntheticSpec::default_lp(), dir.path(), 1);
    let err = harness::cmd_eval(&cfg, &dir.path().join("nope.json")).unwrap_err();
    assert!(matches!(err, HarnessError::MissingFile(_)), "{err}");
}

#[test]
fn held_out_edges_do_not_reach_message_passing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(SyntheticSpec::default_lp(), dir.path(), 1);
    let prepared = harness::prepare(&cfg).unwrap();
    let PreparedTask::Link { task, message } = &prepared.task else { panic!("link task expected") };
    let sv = message.supervertex(message.task());
    let kept: HashSet<_> = sv
        .edges()
        .iter()
        .map(|e| (e.label, e.src.min(e.dst), e.src.max(e.dst)))
        .collect();
    let full = prepared.supergraph.supervertex(message.task()).edges().len();
    let mut held_out = 0;
    for &l in task.labels() {
        for e in task.test_positives(l) {
            assert!(!kept.contains(&(l, e.src.min(e.dst), e.src.max(e.dst))));
            held_out += 1;
        }
    }
    assert!(held_out > 0);
    assert_eq!(sv.edges().len() + held_out, full);
}

fn read_table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn noiseless_generator_plants_edges_within_communities() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        noise: 0.0,
        ..SyntheticSpec::default_lp()
    };
    harness::generate_synthetic(&spec, dir.path()).unwrap();
    let community: BTreeMap<String, String> = read_table(&dir.path().join("truth.tsv"))
        .into_iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect();
    let edges = read_table(&dir.path().join("edges.tsv"));
    assert!(!edges.is_empty());
    for e in &edges {
        assert_eq!(community[&e[0]], community[&e[1]], "{e:?}");
    }
    assert!(read_table(&dir.path().join("noise_edges.tsv")).is_empty());
}

#[test]
fn generator_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        harness::generate_synthetic(&SyntheticSpec::default_nc(), &dir.path().join(name)).unwrap();
    }
    for file in ["nodes.tsv", "edges.tsv", "labels.tsv", "truth.tsv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

/// Writes a four-type graph grouped into three categories.
fn write_colour_graph(dir: &Path, directions: &str, task: &str) -> PathBuf {
    fs::write(
        dir.join("nodes.tsv"),
        "l1\tlocation\no1\torganization\nb1\tbusiness\nk1\tbook\nk2\tbook\n",
    )
    .unwrap();
    fs::write(
        dir.join("edges.tsv"),
        "l1\to1\tbased_in\nl1\tk1\tsetting\no1\tk2\tpublisher\nb1\tk1\tsells\nk1\tk2\tsequel\nb1\tl1\tlocated\n",
    )
    .unwrap();
    fs::write(
        dir.join("partition.json"),
        r#"{"location": "green", "organization": "green", "business": "orange", "book": "blue"}"#,
    )
    .unwrap();
    let config = format!(
        r#"{{
  "data": {{"nodes": "nodes.tsv", "edges": "edges.tsv"}},
  "partition": "partition.json",
  "supergraph": {{"directions": {directions}, "task": "{task}"}},
  "encoder": {{"default": {{"internal_feature_dim": 4, "sublayer_dims": [4]}}}},
  "task": {{"kind": "lp"}}
}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn check_reports_schedule_and_dropped_edges() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_colour_graph(dir.path(), r#"[["green", "blue"], ["orange", "blue"]]"#, "blue");
    let cfg = harness::parse_config(&path).unwrap();
    let summary = harness::cmd_check(&cfg).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("valid: 3 supervertices, 2 superedges, order [green, orange, blue]"));
    assert!(summary.contains("blue (task): 2 nodes, 1 internal edges, labels [sequel], parents [green, orange]"));
    assert!(summary.contains("dropped 1 edges between green and orange"));
}

#[test]
fn cycles_and_non_leaf_tasks_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_colour_graph(
        dir.path(),
        r#"[["green", "blue"], ["blue", "orange"], ["orange", "green"]]"#,
        "blue",
    );
    let cfg = harness::parse_config(&path).unwrap();
    let err = harness::cmd_check(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Supergraph(SupergraphError::CycleDetected { .. })), "{err}");

    let path = write_colour_graph(dir.path(), r#"[["green", "blue"], ["blue", "orange"]]"#, "blue");
    let cfg = harness::parse_config(&path).unwrap();
    let err = harness::cmd_check(&cfg).unwrap_err();
    assert!(matches!(err, HarnessError::Supergraph(SupergraphError::TaskNotLeaf { .. })), "{err}");
}

#[test]
fn unknown_task_label_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_colour_graph(dir.path(), r#"[["green", "blue"], ["orange", "blue"]]"#, "blue");
    let mut cfg = harness::parse_config(&path).unwrap();
    cfg.task.labels = vec!["sells".into()];
    assert!(matches!(harness::prepare(&cfg), Err(HarnessError::Config(_))));
}

#[test]
fn preset_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = RunConfig::from_json_str(&text, &root)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(cfg.data.nodes.starts_with(&root));
        if cfg.task.kind == TaskKind::Nc {
            assert!(cfg.data.labels.is_some());
        }
        seen += 1;
    }
    assert_eq!(seen, 6);
}

#[test]
fn model_rejects_wrong_config_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(SyntheticSpec::default_lp(), dir.path(), 0);
    let prepared = harness::prepare(&cfg).unwrap();
    let mut configs = harness::encoder_configs(&cfg, prepared.message_graph());
    configs.pop();
    assert!(Model::classifier(prepared.message_graph(), configs, 2, 0).is_err());
}
