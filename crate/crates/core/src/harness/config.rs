//! Run configuration (JSON).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::encoder::SupervertexConfig;
use crate::heads::TrainConfig;
use crate::metrics::SplitSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    /// `node_id<TAB>class`, node classification only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

/// Node type to category map, inline or in a separate JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionSpec {
    Inline(BTreeMap<String, String>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupergraphSpec {
    /// `[parent, child]` category pairs.
    pub directions: Vec<(String, String)>,
    /// Required when there is more than one category.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSpec {
    /// Used for every category without its own entry.
    pub default: SupervertexConfig,
    pub supervertices: BTreeMap<String, SupervertexConfig>,
}

impl EncoderSpec {
    pub fn for_category(&self, name: &str) -> SupervertexConfig {
        self.supervertices.get(name).unwrap_or(&self.default).clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[default]
    Lp,
    Nc,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Lp => "lp",
            TaskKind::Nc => "nc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Edge labels to predict (link prediction); empty means every label
    /// of the task supervertex.
    pub labels: Vec<String>,
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    #[serde(default)]
    pub supergraph: SupergraphSpec,
    /// Add the reverse of every within-category edge.
    #[serde(default = "default_true")]
    pub symmetrize: bool,
    #[serde(default)]
    pub encoder: EncoderSpec,
    #[serde(default)]
    pub task: TaskSpec,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl RunConfig {
    /// Parses and validates a config; relative paths are resolved against
    /// `base_dir`. File existence is not checked.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.data.nodes);
        join(&mut self.data.edges);
        if let Some(l) = &mut self.data.labels {
            join(l);
        }
        if let Some(PartitionSpec::File(p)) = &mut self.partition {
            join(p);
        }
        join(&mut self.output);
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        match (self.task.kind, &self.data.labels) {
            (TaskKind::Nc, None) => return bad("task.kind `nc` needs data.labels".into()),
            (TaskKind::Lp, Some(_)) => {
                return bad("data.labels is only used with task.kind `nc`".into())
            }
            _ => {}
        }
        if self.task.kind == TaskKind::Nc && !self.task.labels.is_empty() {
            return bad("task.labels lists edge labels and only applies to task.kind `lp`".into());
        }
        self.split
            .validate()
            .map_err(|e| HarnessError::Config(format!("split.train_fraction: {e}")))?;
        self.training
            .validate()
            .map_err(|e| HarnessError::Config(format!("training: {e}")))?;
        let all = std::iter::once(("default", &self.encoder.default)).chain(
            self.encoder
                .supervertices
                .iter()
                .map(|(k, v)| (k.as_str(), v)),
        );
        for (name, cfg) in all {
            cfg.validate()
                .map_err(|e| HarnessError::Config(format!("encoder `{name}`: {e}")))?;
        }
        Ok(())
    }

    /// Errors unless every referenced input file exists.
    pub fn check_files(&self) -> Result<(), HarnessError> {
        let mut files = vec![&self.data.nodes, &self.data.edges];
        files.extend(&self.data.labels);
        if let Some(PartitionSpec::File(p)) = &self.partition {
            files.push(p);
        }
        for f in files {
            if !f.is_file() {
                return Err(HarnessError::MissingFile(f.clone()));
            }
        }
        Ok(())
    }
}

/// Reads, validates and checks the files of a config at `path`.
pub fn parse_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    // Absolute paths keep checkpoints independent of the working directory.
    let base = fs::canonicalize(parent).map_err(|source| HarnessError::Io {
        path: parent.to_path_buf(),
        source,
    })?;
    let cfg = RunConfig::from_json_str(&text, &base)?;
    cfg.check_files()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::CombineMode;

    const MINIMAL: &str = r#"{"data": {"nodes": "n.tsv", "edges": "e.tsv"}}"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = RunConfig::from_json_str(MINIMAL, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.training.epochs, 100);
        assert_eq!(cfg.training.lr, 0.01);
        assert_eq!(cfg.split.train_fraction, 0.9);
        assert_eq!(cfg.encoder.default.combine_mode, CombineMode::Concat);
        assert_eq!(cfg.task.kind, TaskKind::Lp);
        assert!(cfg.symmetrize);
        assert_eq!(cfg.data.nodes, PathBuf::from("/tmp/x/n.tsv"));
        assert_eq!(cfg.output, PathBuf::from("/tmp/x/out"));
    }

    #[test]
    fn unknown_key_is_named() {
        let text = r#"{"data": {"nodes": "n", "edges": "e"}, "training": {"dropout": 0.5}}"#;
        let err = RunConfig::from_json_str(text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("dropout"), "{err}");
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{"data": {"nodes": "n", "edges": "e"},
            "partition": {"location": "green", "organization": "green"},
            "supergraph": {"directions": [["green", "blue"]], "task": "blue"},
            "encoder": {"supervertices": {"blue": {"sublayer_dims": [8, 4]}}}}"#;
        let a = RunConfig::from_json_str(text, Path::new("/d")).unwrap();
        let b = RunConfig::from_json_str(&a.to_json(), Path::new("/elsewhere")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.encoder.for_category("blue").sublayer_dims, vec![8, 4]);
        assert_eq!(a.encoder.for_category("green").sublayer_dims, vec![16]);
    }

    #[test]
    fn task_and_labels_must_agree() {
        let nc = r#"{"data": {"nodes": "n", "edges": "e"}, "task": {"kind": "nc"}}"#;
        assert!(RunConfig::from_json_str(nc, Path::new(".")).is_err());
        let lp = r#"{"data": {"nodes": "n", "edges": "e", "labels": "l"}}"#;
        assert!(RunConfig::from_json_str(lp, Path::new(".")).is_err());
        let bad_dims = r#"{"data": {"nodes": "n", "edges": "e"},
            "encoder": {"default": {"combine_mode": "sum", "external_dim": 3}}}"#;
        assert!(RunConfig::from_json_str(bad_dims, Path::new(".")).is_err());
    }

    #[test]
    fn missing_files_reported() {
        let cfg = RunConfig::from_json_str(MINIMAL, Path::new("/nonexistent")).unwrap();
        assert!(matches!(cfg.check_files(), Err(HarnessError::MissingFile(_))));
    }
}
