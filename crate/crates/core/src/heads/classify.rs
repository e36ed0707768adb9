//! Softmax node classifier over task-supervertex embeddings.

use std::sync::Arc;

use rand::Rng;

use crate::tensor::{softmax_rows, xavier_init_with, Matrix, ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Clone)]
pub struct Classifier {
    weight: ParamId,
    num_classes: usize,
}

impl Classifier {
    /// Registers `classifier.weight` with shape `width x num_classes`.
    pub fn new<R: Rng + ?Sized>(
        width: usize,
        num_classes: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let weight = store.add("classifier.weight", xavier_init_with(width, num_classes, rng)?);
        Ok(Self { weight, num_classes })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Logits of the selected rows of `z`.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, z: Var, nodes: Arc<[usize]>) -> Result<Var, TensorError> {
        let rows = tape.gather_rows(z, nodes)?;
        let w = tape.param(store, self.weight);
        tape.matmul(rows, w)
    }

    /// Class probabilities for every row of `z`.
    pub fn probabilities(&self, store: &ParamStore, z: &Matrix) -> Result<Matrix, TensorError> {
        Ok(softmax_rows(&z.matmul(store.value(self.weight))?))
    }
}

/// Index of the largest entry per row, lowest index on ties.
pub fn argmax_rows(p: &Matrix) -> Vec<usize> {
    (0..p.rows())
        .map(|r| {
            p.row(r)
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// `-Σ ln p[i, class_i]` with probabilities clipped away from zero.
pub fn nc_loss(probs: &Matrix, classes: &[usize]) -> f64 {
    classes
        .iter()
        .enumerate()
        .map(|(r, &a)| -probs.get(r, a).max(crate::tensor::PROB_CLIP).ln())
        .sum()
}
