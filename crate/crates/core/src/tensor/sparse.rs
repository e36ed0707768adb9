use super::{Matrix, TensorError};

/// Per-label neighbour lists used for mean aggregation.
///
/// Row `i` holds the sorted, duplicate-free list of source rows whose
/// features are averaged into target row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelAdjacency {
    num_sources: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl LabelAdjacency {
    /// Builds the adjacency from `(target, source)` pairs.
    pub fn from_pairs(
        num_targets: usize,
        num_sources: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, TensorError> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); num_targets];
        for (t, s) in pairs {
            if t >= num_targets {
                return Err(TensorError::IndexOutOfRange {
                    index: t,
                    bound: num_targets,
                });
            }
            if s >= num_sources {
                return Err(TensorError::IndexOutOfRange {
                    index: s,
                    bound: num_sources,
                });
            }
            lists[t].push(s);
        }
        let mut offsets = Vec::with_capacity(num_targets + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            num_sources,
            offsets,
            neighbors,
        })
    }

    pub fn num_targets(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn neighbors(&self, target: usize) -> &[usize] {
        &self.neighbors[self.offsets[target]..self.offsets[target + 1]]
    }

    /// Mean of neighbour rows; rows without neighbours are zero.
    pub fn spmm_mean(&self, x: &Matrix) -> Result<Matrix, TensorError> {
        if x.rows() != self.num_sources {
            return Err(TensorError::shape(
                "spmm_mean",
                (self.num_targets(), self.num_sources),
                x.shape(),
            ));
        }
        let mut out = Matrix::zeros(self.num_targets(), x.cols());
        for i in 0..self.num_targets() {
            let nbrs = self.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            let inv = 1.0 / nbrs.len() as f64;
            let row = out.row_mut(i);
            for &j in nbrs {
                for (o, &v) in row.iter_mut().zip(x.row(j)) {
                    *o += v;
                }
            }
            row.iter_mut().for_each(|o| *o *= inv);
        }
        Ok(out)
    }

    /// Adjoint of [`LabelAdjacency::spmm_mean`]: scatters `grad` rows back to sources.
    pub(crate) fn spmm_mean_transpose(&self, grad: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(self.num_sources, grad.cols());
        for i in 0..self.num_targets() {
            let nbrs = self.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            let inv = 1.0 / nbrs.len() as f64;
            let g = grad.row(i);
            for &j in nbrs {
                for (o, &v) in out.row_mut(j).iter_mut().zip(g) {
                    *o += v * inv;
                }
            }
        }
        out
    }
}
