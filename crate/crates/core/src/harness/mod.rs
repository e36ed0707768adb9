//! Config-driven pipeline: loading, the `check`, `train`, `eval` and
//! `export` commands, checkpoints and synthetic data.

mod checkpoint;
mod config;
mod synthetic;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{
    parse_config, DataPaths, EncoderSpec, PartitionSpec, RunConfig, SupergraphSpec, TaskKind, TaskSpec,
};
pub use synthetic::{generate_synthetic, SyntheticMode, SyntheticSpec};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::encoder::SupervertexConfig;
use crate::graph::{load_edge_list, CategoricalPartition, CategoryId, GraphError, HeteroGraph};
use crate::heads::{
    evaluate_class, evaluate_link, train_class, train_link, EpochRecord, LinkTask, Model, NodeTask, TaskError,
};
use crate::metrics::round_significant;
use crate::supergraph::{build_supergraph, topological_order, Supergraph, SupergraphError};
use crate::tensor::Matrix;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot access {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error: {0}")]
    Config(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {reason}", path.display())]
    Labels { path: PathBuf, line: usize, reason: String },
    #[error("synthetic spec: {0}")]
    Synthetic(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config/checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Supergraph(#[from] SupergraphError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Task data ready for training.
#[derive(Debug, Clone)]
pub enum PreparedTask {
    /// Link prediction; `message` is the supergraph without test edges.
    Link { task: LinkTask, message: Supergraph },
    Node { task: NodeTask },
}

/// Everything derived from a config before any parameters exist.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: HeteroGraph,
    pub supergraph: Supergraph,
    pub task: PreparedTask,
}

impl Prepared {
    /// The supergraph message passing runs on.
    pub fn message_graph(&self) -> &Supergraph {
        match &self.task {
            PreparedTask::Link { message, .. } => message,
            PreparedTask::Node { .. } => &self.supergraph,
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match &self.task {
            PreparedTask::Link { .. } => Vec::new(),
            PreparedTask::Node { task } => task.classes().to_vec(),
        }
    }
}

/// Loads the graph and partition and builds the validated supergraph.
pub fn load_supergraph(cfg: &RunConfig) -> Result<(HeteroGraph, Supergraph), HarnessError> {
    let (graph, _) = load_edge_list(&cfg.data.nodes, &cfg.data.edges)?;
    let partition = match &cfg.partition {
        None => CategoricalPartition::identity(&graph),
        Some(PartitionSpec::Inline(map)) => CategoricalPartition::from_map(&graph, map)?,
        Some(PartitionSpec::File(path)) => CategoricalPartition::load(&graph, path)?,
    };
    let directions = cfg
        .supergraph
        .directions
        .iter()
        .map(|(p, c)| Ok((partition.by_name(p)?, partition.by_name(c)?)))
        .collect::<Result<Vec<_>, GraphError>>()?;
    let task = match &cfg.supergraph.task {
        Some(name) => partition.by_name(name)?,
        None if partition.num_categories() == 1 => CategoryId(0),
        None => {
            return Err(HarnessError::Config(format!(
                "supergraph.task is required with {} categories",
                partition.num_categories()
            )))
        }
    };
    for name in cfg.encoder.supervertices.keys() {
        partition.by_name(name)?;
    }
    let sg = build_supergraph(&graph, &partition, &directions, task, cfg.symmetrize)?;
    Ok((graph, sg))
}

fn read_class_labels(
    path: &Path,
    graph: &HeteroGraph,
    sg: &Supergraph,
) -> Result<Vec<(usize, String)>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let sv = sg.supervertex(sg.task());
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| HarnessError::Labels {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(err("expected `node_id<TAB>class`".into()));
        }
        let node = graph
            .node_by_name(fields[0])
            .ok_or_else(|| err(format!("unknown node `{}`", fields[0])))?;
        let local = sv
            .local_index(node)
            .ok_or_else(|| err(format!("node `{}` is not in the task supervertex", fields[0])))?;
        out.push((local, fields[1].to_string()));
    }
    if out.is_empty() {
        return Err(HarnessError::Labels {
            path: path.to_path_buf(),
            line: 0,
            reason: "no labelled nodes".into(),
        });
    }
    Ok(out)
}

/// Loads data, builds the supergraph and splits the task.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, HarnessError> {
    let (graph, sg) = load_supergraph(cfg)?;
    let task = match cfg.task.kind {
        TaskKind::Lp => {
            let labels = cfg
                .task
                .labels
                .iter()
                .map(|name| {
                    graph
                        .label_by_name(name)
                        .filter(|l| sg.supervertex(sg.task()).labels().contains(l))
                        .ok_or_else(|| {
                            HarnessError::Config(format!(
                                "task label `{name}` has no edges inside the task supervertex"
                            ))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let task = LinkTask::prepare(&sg, &labels, &cfg.split)?;
            let message = task.message_graph(&sg);
            PreparedTask::Link { task, message }
        }
        TaskKind::Nc => {
            let path = cfg.data.labels.as_ref().expect("validated");
            let labelled = read_class_labels(path, &graph, &sg)?;
            let n = sg.supervertex(sg.task()).len();
            PreparedTask::Node {
                task: NodeTask::prepare(sg.task(), n, &labelled, &cfg.split)?,
            }
        }
    };
    Ok(Prepared {
        graph,
        supergraph: sg,
        task,
    })
}

/// Per-category encoder configs in category order.
pub fn encoder_configs(cfg: &RunConfig, sg: &Supergraph) -> Vec<SupervertexConfig> {
    sg.category_names()
        .iter()
        .map(|name| cfg.encoder.for_category(name))
        .collect()
}

/// Freshly initialized model for the prepared task.
pub fn build_model(cfg: &RunConfig, prepared: &Prepared) -> Result<Model, HarnessError> {
    let sg = prepared.message_graph();
    let configs = encoder_configs(cfg, sg);
    let seed = cfg.training.seed;
    Ok(match &prepared.task {
        PreparedTask::Link { task, .. } => Model::link(sg, configs, task.labels(), seed)?,
        PreparedTask::Node { task } => Model::classifier(sg, configs, task.classes().len(), seed)?,
    })
}

/// `valid: N supervertices, M superedges, order [..]` plus one line per
/// supervertex.
pub fn cmd_check(cfg: &RunConfig) -> Result<String, HarnessError> {
    let (_, sg) = load_supergraph(cfg)?;
    let order = topological_order(&sg);
    let names: Vec<&str> = order.order.iter().map(|&c| sg.category_name(c)).collect();
    let mut out = format!(
        "valid: {} supervertices, {} superedges, order [{}]\n",
        sg.num_supervertices(),
        sg.num_superedges(),
        names.join(", ")
    );
    for &c in &order.order {
        let sv = sg.supervertex(c);
        let role = if c == sg.task() {
            "task"
        } else if sg.is_root(c) {
            "root"
        } else {
            "inner"
        };
        let labels: Vec<&str> = sv.labels().iter().map(|&l| sg.label_name(l)).collect();
        let parents: Vec<&str> = sg.parents_of(c).iter().map(|&p| sg.category_name(p)).collect();
        writeln!(
            out,
            "  {} ({role}): {} nodes, {} internal edges, labels [{}], parents [{}]",
            sg.category_name(c),
            sv.len(),
            sv.edges().len(),
            labels.join(", "),
            parents.join(", ")
        )
        .unwrap();
    }
    for d in sg.dropped_edges() {
        writeln!(
            out,
            "  dropped {} edges between {} and {} (no declared direction)",
            d.count,
            sg.category_name(d.between.0),
            sg.category_name(d.between.1)
        )
        .unwrap();
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    fs::write(path, body).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,test_metric\n");
    for r in history {
        let metric = r.test_metric.map(|m| m.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{metric}", r.epoch, r.loss).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub checkpoint: Checkpoint,
}

/// Trains without touching the filesystem beyond reading inputs.
pub fn train(cfg: &RunConfig, prepared: &Prepared) -> Result<TrainOutput, HarnessError> {
    let mut model = build_model(cfg, prepared)?;
    let history = match &prepared.task {
        PreparedTask::Link { task, .. } => train_link(&mut model, task, &cfg.training)?,
        PreparedTask::Node { task } => train_class(&mut model, task, &cfg.training)?,
    };
    if let Some(last) = history.last() {
        log::info!("trained {} epochs, final loss {:.6}", last.epoch, last.loss);
    }
    let checkpoint = Checkpoint::new(cfg, prepared.classes(), model.store());
    Ok(TrainOutput {
        model,
        history,
        checkpoint,
    })
}

/// Writes `checkpoint.json` and `history.csv` into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput, HarnessError> {
    let prepared = prepare(cfg)?;
    let out = train(cfg, &prepared)?;
    create_dir(&cfg.output)?;
    out.checkpoint.save(&cfg.output.join(CHECKPOINT_FILE))?;
    write_file(&cfg.output.join(HISTORY_FILE), &history_csv(&out.history))?;
    Ok(out)
}

/// Model for `prepared` carrying the checkpoint's parameters.
pub fn restore_model(cfg: &RunConfig, prepared: &Prepared, ck: &Checkpoint) -> Result<Model, HarnessError> {
    if ck.task != cfg.task.kind {
        return Err(HarnessError::ShapeMismatch(format!(
            "checkpoint is for task `{}`, config for `{}`",
            ck.task.as_str(),
            cfg.task.kind.as_str()
        )));
    }
    if !ck.classes.is_empty() && ck.classes != prepared.classes() {
        return Err(HarnessError::ShapeMismatch("class names differ from the checkpoint".into()));
    }
    let mut model = build_model(cfg, prepared)?;
    ck.apply(model.store_mut())?;
    Ok(model)
}

fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_significant(n.as_f64().expect("f64"), 10);
            serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

/// Test-split report as JSON with values at 10 significant digits.
pub fn evaluate(prepared: &Prepared, model: &Model) -> Result<Value, HarnessError> {
    let mut report = match &prepared.task {
        PreparedTask::Link { task, .. } => serde_json::to_value(evaluate_link(model, task)?),
        PreparedTask::Node { task } => {
            let f1 = evaluate_class(model, task)?;
            let mut v = serde_json::to_value(f1).expect("report serializes");
            v["classes"] = serde_json::to_value(task.classes()).expect("names serialize");
            Ok(v)
        }
    }
    .expect("report serializes");
    let kind = match prepared.task {
        PreparedTask::Link { .. } => "lp",
        PreparedTask::Node { .. } => "nc",
    };
    report["task"] = Value::String(kind.into());
    Ok(rounded(report))
}

/// Evaluates a checkpoint on the config's test split and writes
/// `report.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<Value, HarnessError> {
    let ck = Checkpoint::load(checkpoint)?;
    let prepared = prepare(cfg)?;
    let model = restore_model(cfg, &prepared, &ck)?;
    let report = evaluate(&prepared, &model)?;
    create_dir(&cfg.output)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&cfg.output.join(REPORT_FILE), &text)?;
    Ok(report)
}

/// `node_id<TAB>f1..fd` rows of one embedding matrix.
pub fn embeddings_tsv(names: &[&str], z: &Matrix) -> String {
    let mut out = String::new();
    for (r, name) in names.iter().enumerate() {
        out.push_str(name);
        for v in z.row(r) {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a file written by [`embeddings_tsv`].
pub fn read_embeddings(path: &Path) -> Result<Vec<(String, Vec<f64>)>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let mut fields = line.split('\t');
            let name = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Labels {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            Ok((name, values))
        })
        .collect()
}

/// Writes `embeddings_<category>.tsv` for every supervertex into `out_dir`
/// and returns the written paths.
pub fn cmd_export(checkpoint: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg = &ck.config;
    let prepared = prepare(cfg)?;
    let model = restore_model(cfg, &prepared, &ck)?;
    let sg = prepared.message_graph();
    create_dir(out_dir)?;
    let mut written = Vec::new();
    for (ci, z) in model.embeddings()?.iter().enumerate() {
        let c = CategoryId(ci);
        let sv = sg.supervertex(c);
        let names: Vec<&str> = sv.nodes().iter().map(|&g| prepared.graph.node_name(g)).collect();
        let path = out_dir.join(format!("embeddings_{}.tsv", sg.category_name(c)));
        write_file(&path, &embeddings_tsv(&names, z))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_rounding() {
        let v = rounded(serde_json::json!({"a": [0.12345678901234, 1], "b": {"c": 2.0}}));
        assert_eq!(v["a"][0], serde_json::json!(0.123456789));
        assert_eq!(v["a"][1], serde_json::json!(1));
        assert_eq!(v["b"]["c"], serde_json::json!(2.0));
    }

    #[test]
    fn history_format() {
        let h = vec![
            EpochRecord { epoch: 1, loss: 2.5, test_metric: None },
            EpochRecord { epoch: 2, loss: 1.0, test_metric: Some(0.75) },
        ];
        assert_eq!(history_csv(&h), "epoch,loss,test_metric\n1,2.5,\n2,1,0.75\n");
    }

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let z = Matrix::from_vec(2, 2, vec![0.1, -1.0 / 3.0, 2.0f64.sqrt(), 0.0]).unwrap();
        let path = dir.path().join("e.tsv");
        fs::write(&path, embeddings_tsv(&["a", "b"], &z)).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back[0].0, "a");
        assert_eq!(back[1].1, z.row(1).to_vec());
        assert_eq!(back[0].1, z.row(0).to_vec());
    }
}
