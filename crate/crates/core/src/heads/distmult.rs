//! DistMult link decoder: `p(i, l, j) = sigmoid(Σ_k z_i[k] d_l[k] z_j[k])`.

use std::sync::Arc;

use rand::Rng;

use crate::graph::{LabelId, LocalEdge};
use crate::supergraph::Supergraph;
use crate::tensor::{sigmoid, xavier_init_with, Matrix, ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone)]
pub struct DistMult {
    relations: Vec<(LabelId, ParamId)>,
}

impl DistMult {
    /// Registers one `1 x width` diagonal per label, named `distmult.<label>`.
    pub fn new<R: Rng + ?Sized>(
        sg: &Supergraph,
        labels: &[LabelId],
        width: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let relations = labels
            .iter()
            .map(|&l| {
                let name = format!("distmult.{}", sg.label_name(l));
                Ok((l, store.add(name, xavier_init_with(1, width, rng)?)))
            })
            .collect::<Result<_, TensorError>>()?;
        Ok(Self { relations })
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.relations.iter().map(|&(l, _)| l)
    }

    pub fn relation(&self, label: LabelId) -> Option<ParamId> {
        self.relations.iter().find(|(l, _)| *l == label).map(|&(_, p)| p)
    }

    /// Pre-sigmoid scores (`n x 1`) of `pairs` under `label`.
    pub fn logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        z: Var,
        label: LabelId,
        pairs: &[LocalEdge],
    ) -> Result<Var, TensorError> {
        let d = self.relation(label).ok_or(TensorError::IndexOutOfRange {
            index: label.0,
            bound: self.relations.len(),
        })?;
        let src: Arc<[usize]> = pairs.iter().map(|e| e.src).collect();
        let dst: Arc<[usize]> = pairs.iter().map(|e| e.dst).collect();
        let zi = tape.gather_rows(z, src)?;
        let zj = tape.gather_rows(z, dst)?;
        let d = tape.param(store, d);
        let zid = tape.mul_row(zi, d)?;
        let prod = tape.mul(zid, zj)?;
        Ok(tape.row_sum(prod))
    }

    /// Probabilities for `pairs` computed directly from embeddings.
    pub fn probabilities(&self, store: &ParamStore, z: &Matrix, label: LabelId, pairs: &[LocalEdge]) -> Vec<f64> {
        let d = store.value(self.relation(label).expect("known label"));
        pairs
            .iter()
            .map(|e| distmult_score(z.row(e.src), d.data(), z.row(e.dst)))
            .collect()
    }
}

pub fn distmult_score(zi: &[f64], d: &[f64], zj: &[f64]) -> f64 {
    sigmoid(zi.iter().zip(d).zip(zj).map(|((a, b), c)| a * b * c).sum())
}
