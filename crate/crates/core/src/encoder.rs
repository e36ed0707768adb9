//! Supervertex-by-supervertex node encoder.
//!
//! Each supervertex `c` is encoded by three layers:
//!
//! * external aggregation: for every parent `c'`, per-label neighbour means
//!   of the parent embeddings, each transformed by its own weight and summed
//!   over labels; the per-parent results are averaged and passed through the
//!   configured activation. Roots get no external features.
//! * internal feature: `ReLU(W_in)` row `i` for node `i` (one-hot input
//!   realized as row selection).
//! * internal aggregation: `n` relational convolution sublayers
//!   `u' = ReLU(Σ_l mean_l(u) W_l + u W_self)`.
//!
//! Supervertices are processed in [`topological_order`] so that parents are
//! always encoded before their children. Matrices are row-per-node, so every
//! weight has shape `in_dim x out_dim`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CategoryId, LabelId};
use crate::supergraph::{topological_order, Supergraph, TopoSchedule};
use crate::tensor::{xavier_init_with, LabelAdjacency, Matrix, ParamId, ParamStore, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid encoder config for `{category}`: {reason}")]
    InvalidConfig { category: String, reason: String },
    #[error("expected {expected} supervertex configs, got {got}")]
    ConfigCount { expected: usize, got: usize },
    #[error("supervertex `{0}` encoded before its parents")]
    ScheduleViolation(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How external and internal features are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    #[default]
    Concat,
    Sum,
}

/// Activation applied to the averaged external features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterActivation {
    #[default]
    Relu,
    Linear,
}

/// Layer sizes for one supervertex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervertexConfig {
    /// Output width of the internal feature layer.
    pub internal_feature_dim: usize,
    /// Output width of each external weight. Ignored for roots.
    pub external_dim: usize,
    pub combine_mode: CombineMode,
    pub inter_activation: InterActivation,
    /// Output width of each internal aggregation sublayer.
    pub sublayer_dims: Vec<usize>,
}

impl Default for SupervertexConfig {
    fn default() -> Self {
        Self {
            internal_feature_dim: 32,
            external_dim: 16,
            combine_mode: CombineMode::Concat,
            inter_activation: InterActivation::Relu,
            sublayer_dims: vec![16],
        }
    }
}

impl SupervertexConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.sublayer_dims.is_empty() {
            return Err("sublayer_dims needs at least one sublayer".into());
        }
        if self.internal_feature_dim == 0
            || self.external_dim == 0
            || self.sublayer_dims.contains(&0)
        {
            return Err("all dimensions must be at least 1".into());
        }
        if self.combine_mode == CombineMode::Sum && self.internal_feature_dim != self.external_dim
        {
            return Err(format!(
                "sum combine needs internal_feature_dim == external_dim, got {} and {}",
                self.internal_feature_dim, self.external_dim
            ));
        }
        Ok(())
    }

    /// Width of the combined features fed to the first sublayer.
    pub fn combined_dim(&self, is_root: bool) -> usize {
        match (self.combine_mode, is_root) {
            (CombineMode::Concat, false) => self.external_dim + self.internal_feature_dim,
            _ => self.internal_feature_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        *self.sublayer_dims.last().expect("validated")
    }
}

/// Graph structure needed by the forward pass, built once per supergraph.
#[derive(Debug, Clone)]
pub struct PropagationPlan {
    schedule: TopoSchedule,
    sizes: Vec<usize>,
    parents: Vec<Vec<CategoryId>>,
    internal: Vec<Vec<(LabelId, Arc<LabelAdjacency>)>>,
    external: BTreeMap<(CategoryId, CategoryId), Vec<(LabelId, Arc<LabelAdjacency>)>>,
}

impl PropagationPlan {
    pub fn new(sg: &Supergraph) -> Result<Self, TensorError> {
        let internal = sg
            .supervertices()
            .iter()
            .map(|sv| {
                sv.labels()
                    .iter()
                    .map(|&l| Ok((l, Arc::new(sv.adjacency(l)?))))
                    .collect::<Result<Vec<_>, TensorError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let external = sg
            .superedges()
            .map(|se| {
                let adjs = se
                    .labels()
                    .iter()
                    .map(|&l| Ok((l, Arc::new(se.adjacency(l)?))))
                    .collect::<Result<Vec<_>, TensorError>>()?;
                Ok(((se.parent(), se.child()), adjs))
            })
            .collect::<Result<BTreeMap<_, _>, TensorError>>()?;
        Ok(Self {
            schedule: topological_order(sg),
            sizes: sg.supervertices().iter().map(|sv| sv.len()).collect(),
            parents: (0..sg.num_supervertices())
                .map(|c| sg.parents_of(CategoryId(c)).to_vec())
                .collect(),
            internal,
            external,
        })
    }

    pub fn schedule(&self) -> &TopoSchedule {
        &self.schedule
    }
}

#[derive(Debug, Clone)]
struct Sublayer {
    self_weight: ParamId,
    label_weights: Vec<(LabelId, ParamId)>,
}

#[derive(Debug, Clone)]
struct SupervertexLayers {
    internal_feature: ParamId,
    external: Vec<(CategoryId, Vec<(LabelId, ParamId)>)>,
    sublayers: Vec<Sublayer>,
}

/// Final embeddings, one tape value per supervertex.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vars: Vec<Var>,
}

impl EmbeddingTable {
    pub fn get(&self, c: CategoryId) -> Var {
        self.vars[c.0]
    }

    pub fn matrices(&self, tape: &Tape) -> Vec<Matrix> {
        self.vars.iter().map(|&v| tape.value(v).clone()).collect()
    }
}

/// Encoder parameters and layout for one supergraph.
#[derive(Debug, Clone)]
pub struct Encoder {
    configs: Vec<SupervertexConfig>,
    roots: Vec<bool>,
    layers: Vec<SupervertexLayers>,
}

impl Encoder {
    /// Registers all encoder weights in `store`, Xavier-initialized from `rng`
    /// in ascending category order.
    pub fn new<R: Rng + ?Sized>(
        sg: &Supergraph,
        configs: Vec<SupervertexConfig>,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, EncoderError> {
        if configs.len() != sg.num_supervertices() {
            return Err(EncoderError::ConfigCount {
                expected: sg.num_supervertices(),
                got: configs.len(),
            });
        }
        for (c, cfg) in configs.iter().enumerate() {
            cfg.validate().map_err(|reason| EncoderError::InvalidConfig {
                category: sg.category_name(CategoryId(c)).to_string(),
                reason,
            })?;
        }
        let mut layers = Vec::with_capacity(configs.len());
        let mut roots = Vec::with_capacity(configs.len());
        for (ci, cfg) in configs.iter().enumerate() {
            let c = CategoryId(ci);
            let cname = sg.category_name(c);
            let sv = sg.supervertex(c);
            let is_root = sg.is_root(c);
            roots.push(is_root);

            let mut add = |name: String, rows: usize, cols: usize, store: &mut ParamStore| {
                Ok::<_, EncoderError>(store.add(name, xavier_init_with(rows, cols, rng)?))
            };

            let internal_feature = add(
                format!("{cname}.internal_feature"),
                sv.len(),
                cfg.internal_feature_dim,
                store,
            )?;
            let mut external = Vec::new();
            for &p in sg.parents_of(c) {
                let se = sg.superedge(p, c).expect("parent has a superedge");
                let in_dim = configs[p.0].output_dim();
                let mut weights = Vec::new();
                for &l in se.labels() {
                    let name = format!(
                        "{}->{cname}.external.{}",
                        sg.category_name(p),
                        sg.label_name(l)
                    );
                    weights.push((l, add(name, in_dim, cfg.external_dim, store)?));
                }
                external.push((p, weights));
            }
            let mut sublayers = Vec::new();
            let mut in_dim = cfg.combined_dim(is_root);
            for (m, &out_dim) in cfg.sublayer_dims.iter().enumerate() {
                let self_weight = add(
                    format!("{cname}.aggregation.{m}.self"),
                    in_dim,
                    out_dim,
                    store,
                )?;
                let mut label_weights = Vec::new();
                for &l in sv.labels() {
                    let name = format!("{cname}.aggregation.{m}.{}", sg.label_name(l));
                    label_weights.push((l, add(name, in_dim, out_dim, store)?));
                }
                sublayers.push(Sublayer {
                    self_weight,
                    label_weights,
                });
                in_dim = out_dim;
            }
            layers.push(SupervertexLayers {
                internal_feature,
                external,
                sublayers,
            });
        }
        Ok(Self {
            configs,
            roots,
            layers,
        })
    }

    pub fn config(&self, c: CategoryId) -> &SupervertexConfig {
        &self.configs[c.0]
    }

    pub fn configs(&self) -> &[SupervertexConfig] {
        &self.configs
    }

    pub fn output_dim(&self, c: CategoryId) -> usize {
        self.configs[c.0].output_dim()
    }

    pub fn internal_feature_weight(&self, c: CategoryId) -> ParamId {
        self.layers[c.0].internal_feature
    }

    pub fn external_weight(&self, parent: CategoryId, child: CategoryId, label: LabelId) -> Option<ParamId> {
        let (_, weights) = self.layers[child.0].external.iter().find(|(p, _)| *p == parent)?;
        weights.iter().find(|(l, _)| *l == label).map(|&(_, w)| w)
    }

    pub fn self_weight(&self, c: CategoryId, sublayer: usize) -> ParamId {
        self.layers[c.0].sublayers[sublayer].self_weight
    }

    pub fn label_weight(&self, c: CategoryId, sublayer: usize, label: LabelId) -> Option<ParamId> {
        self.layers[c.0].sublayers[sublayer]
            .label_weights
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(_, w)| w)
    }

    /// Contribution of one parent: `Σ_l mean_l(Z_parent) W_l`, before
    /// averaging over parents.
    pub fn external_contribution(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        plan: &PropagationPlan,
        parent: CategoryId,
        child: CategoryId,
        z_parent: Var,
    ) -> Result<Var, EncoderError> {
        let (_, weights) = self.layers[child.0]
            .external
            .iter()
            .find(|(p, _)| *p == parent)
            .expect("parent registered");
        let adjs = &plan.external[&(parent, child)];
        let mut total: Option<Var> = None;
        for ((l, adj), &(wl, w)) in adjs.iter().zip(weights) {
            debug_assert_eq!(*l, wl);
            let mean = tape.spmm_mean(adj, z_parent)?;
            let wv = tape.param(store, w);
            let term = tape.matmul(mean, wv)?;
            total = Some(match total {
                Some(t) => tape.add(t, term)?,
                None => term,
            });
        }
        Ok(total.expect("superedges are non-empty"))
    }

    /// External features of `c`; `None` for a root supervertex.
    pub fn external_aggregation(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        plan: &PropagationPlan,
        c: CategoryId,
        encoded: &[Option<Var>],
    ) -> Result<Option<Var>, EncoderError> {
        let parents = &plan.parents[c.0];
        if parents.is_empty() {
            return Ok(None);
        }
        let mut total: Option<Var> = None;
        for &p in parents {
            let z = encoded[p.0].ok_or_else(|| EncoderError::ScheduleViolation(format!("{}", c.0)))?;
            let r = self.external_contribution(tape, store, plan, p, c, z)?;
            total = Some(match total {
                Some(t) => tape.add(t, r)?,
                None => r,
            });
        }
        let mean = tape.scale(total.expect("non-root"), 1.0 / parents.len() as f64);
        Ok(Some(match self.configs[c.0].inter_activation {
            InterActivation::Relu => tape.relu(mean),
            InterActivation::Linear => mean,
        }))
    }

    pub fn internal_feature(&self, tape: &mut Tape, store: &ParamStore, c: CategoryId) -> Var {
        let w = tape.param(store, self.layers[c.0].internal_feature);
        tape.relu(w)
    }

    /// Stacked relational convolution sublayers over the internal edges.
    pub fn internal_aggregation(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        plan: &PropagationPlan,
        c: CategoryId,
        combined: Var,
    ) -> Result<Var, EncoderError> {
        let mut u = combined;
        for sub in &self.layers[c.0].sublayers {
            u = relational_sublayer(tape, store, &plan.internal[c.0], sub, u)?;
        }
        Ok(u)
    }

    /// Runs every supervertex in schedule order.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        plan: &PropagationPlan,
    ) -> Result<EmbeddingTable, EncoderError> {
        let mut encoded: Vec<Option<Var>> = vec![None; self.layers.len()];
        for &c in &plan.schedule.order {
            debug_assert_eq!(plan.sizes[c.0], store.value(self.layers[c.0].internal_feature).rows());
            let r_ex = self.external_aggregation(tape, store, plan, c, &encoded)?;
            let r_in = self.internal_feature(tape, store, c);
            let r = combine_features(tape, r_ex, r_in, self.configs[c.0].combine_mode)?;
            encoded[c.0] = Some(self.internal_aggregation(tape, store, plan, c, r)?);
        }
        Ok(EmbeddingTable {
            vars: encoded.into_iter().map(|v| v.expect("all encoded")).collect(),
        })
    }

    pub fn is_root(&self, c: CategoryId) -> bool {
        self.roots[c.0]
    }
}

fn relational_sublayer(
    tape: &mut Tape,
    store: &ParamStore,
    adjs: &[(LabelId, Arc<LabelAdjacency>)],
    sub: &Sublayer,
    u: Var,
) -> Result<Var, EncoderError> {
    let ws = tape.param(store, sub.self_weight);
    let mut total = tape.matmul(u, ws)?;
    for ((l, adj), &(wl, w)) in adjs.iter().zip(&sub.label_weights) {
        debug_assert_eq!(*l, wl);
        let mean = tape.spmm_mean(adj, u)?;
        let wv = tape.param(store, w);
        let term = tape.matmul(mean, wv)?;
        total = tape.add(total, term)?;
    }
    Ok(tape.relu(total))
}

/// `r_ex ⊕ r_in` or `r_ex + r_in`; a missing `r_ex` (root) contributes nothing.
pub fn combine_features(
    tape: &mut Tape,
    r_ex: Option<Var>,
    r_in: Var,
    mode: CombineMode,
) -> Result<Var, TensorError> {
    match (r_ex, mode) {
        (None, _) => Ok(r_in),
        (Some(ex), CombineMode::Concat) => tape.concat_cols(ex, r_in),
        (Some(ex), CombineMode::Sum) => tape.add(ex, r_in),
    }
}
