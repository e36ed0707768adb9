//! Versioned JSON checkpoints of trained parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, TaskKind};
use super::HarnessError;
use crate::tensor::{Matrix, ParamStore};

pub const CHECKPOINT_FORMAT: &str = "gripnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub task: TaskKind,
    /// The resolved config the parameters were trained with.
    pub config: RunConfig,
    /// Class names in class-id order (node classification).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, classes: Vec<String>, store: &ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            task: config.task.kind,
            config: config.clone(),
            classes,
            params: store
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_json()).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        if !path.is_file() {
            return Err(HarnessError::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Copies the stored values into `store`; names, order and shapes must
    /// match exactly.
    pub fn apply(&self, store: &mut ParamStore) -> Result<(), HarnessError> {
        if self.params.len() != store.len() {
            return Err(HarnessError::ShapeMismatch(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        let ids: Vec<_> = store.ids().collect();
        for (rec, id) in self.params.iter().zip(ids) {
            let expected = store.value(id).shape();
            if rec.name != store.name(id) || (rec.rows, rec.cols) != expected {
                return Err(HarnessError::ShapeMismatch(format!(
                    "checkpoint `{}` {}x{} vs model `{}` {}x{}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    store.name(id),
                    expected.0,
                    expected.1
                )));
            }
            let value = Matrix::from_vec(rec.rows, rec.cols, rec.values.clone())
                .map_err(|e| HarnessError::Checkpoint(format!("`{}`: {e}", rec.name)))?;
            store.set_value(id, value).expect("shape checked");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> RunConfig {
        RunConfig::from_json_str(r#"{"data": {"nodes": "n", "edges": "e"}}"#, Path::new("/d")).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::from_vec(1, 3, vec![0.1, -1.0 / 3.0, 1e-300]).unwrap());
        let ck = Checkpoint::new(&config(), vec![], &store);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(ck, back);
        let mut other = ParamStore::new();
        other.add("w", Matrix::zeros(1, 3));
        back.apply(&mut other).unwrap();
        assert_eq!(other.value(other.find("w").unwrap()), store.value(store.find("w").unwrap()));
    }

    #[test]
    fn mismatches_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::zeros(2, 2));
        let ck = Checkpoint::new(&config(), vec![], &store);
        let mut wrong = ParamStore::new();
        wrong.add("w", Matrix::zeros(2, 3));
        assert!(matches!(ck.apply(&mut wrong), Err(HarnessError::ShapeMismatch(_))));
        let mut renamed = ParamStore::new();
        renamed.add("v", Matrix::zeros(2, 2));
        assert!(ck.apply(&mut renamed).is_err());
        let mut bad = ck.clone();
        bad.version = 9;
        assert!(Checkpoint::from_json(&bad.to_json()).is_err());
        assert!(matches!(Checkpoint::load(Path::new("/no/such")), Err(HarnessError::MissingFile(_))));
    }
}
