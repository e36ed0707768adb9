//! Task data, the model and full-batch Adam training.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{cns_sample, corrupt_sample, pair_key, SamplerKind};
use super::{argmax_rows, Classifier, DistMult, TaskError};
use crate::encoder::{Encoder, PropagationPlan, SupervertexConfig};
use crate::graph::{CategoryId, LabelId, LocalEdge};
use crate::metrics::{f1_metrics, stratified_split, F1Report, RankingReport, SplitSpec};
use crate::supergraph::Supergraph;
use crate::tensor::{Adam, Matrix, ParamStore, Tape, Var};

const TRAIN_NEG_STREAM: u64 = 1;
const TEST_NEG_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Draw fresh training negatives every epoch instead of once.
    pub resample_negatives: bool,
    pub sampler: SamplerKind,
    /// Evaluate on the test split every this many epochs (0 disables).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            seed: 0,
            resample_negatives: true,
            sampler: SamplerKind::Cns,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TaskError::BadTrainConfig(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub test_metric: Option<f64>,
}

/// Link prediction data on the task supervertex: per-label positives split
/// into train and test, fixed test negatives and the forbidden pair sets.
#[derive(Debug, Clone)]
pub struct LinkTask {
    task: CategoryId,
    num_nodes: usize,
    symmetric: bool,
    labels: Vec<LabelId>,
    label_names: Vec<String>,
    train: BTreeMap<LabelId, Vec<LocalEdge>>,
    test_pos: BTreeMap<LabelId, Vec<LocalEdge>>,
    test_neg: BTreeMap<LabelId, Vec<LocalEdge>>,
    forbidden: BTreeMap<LabelId, HashSet<(usize, usize)>>,
}

impl LinkTask {
    /// Splits the task supervertex edges of `labels` (all of its labels when
    /// empty). Under symmetrization positives are unordered pairs.
    pub fn prepare(sg: &Supergraph, labels: &[LabelId], split: &SplitSpec) -> Result<Self, TaskError> {
        let task = sg.task();
        let sv = sg.supervertex(task);
        let symmetric = sv.is_symmetric();
        let labels: Vec<LabelId> = if labels.is_empty() {
            sv.labels().to_vec()
        } else {
            let mut l = labels.to_vec();
            l.sort();
            l.dedup();
            l
        };

        let mut positives: BTreeMap<LabelId, Vec<LocalEdge>> = BTreeMap::new();
        let mut forbidden: BTreeMap<LabelId, HashSet<(usize, usize)>> = BTreeMap::new();
        for &l in &labels {
            positives.insert(l, Vec::new());
            forbidden.insert(l, HashSet::new());
        }
        for e in sv.edges() {
            let Some(seen) = forbidden.get_mut(&e.label) else { continue };
            let (src, dst) = pair_key(e.src, e.dst, symmetric);
            if seen.insert((src, dst)) {
                positives.get_mut(&e.label).expect("label registered").push(LocalEdge { src, dst, label: e.label });
            }
        }
        for (l, pos) in &positives {
            if pos.is_empty() {
                return Err(TaskError::NoPositives(sg.label_name(*l).to_string()));
            }
        }

        let flat: Vec<LocalEdge> = positives.values().flatten().copied().collect();
        let keys: Vec<LabelId> = flat.iter().map(|e| e.label).collect();
        let (train_idx, test_idx) = stratified_split(&keys, split)?;
        let group = |idx: &[usize]| {
            let mut out: BTreeMap<LabelId, Vec<LocalEdge>> = labels.iter().map(|&l| (l, Vec::new())).collect();
            for &i in idx {
                out.get_mut(&flat[i].label).expect("label registered").push(flat[i]);
            }
            out
        };
        let train = group(&train_idx);
        let test_pos = group(&test_idx);
        for (l, t) in &train {
            if t.is_empty() {
                log::warn!("label `{}` has no training positives", sg.label_name(*l));
            }
        }

        let mut rng = stream_rng(split.seed, TEST_NEG_STREAM);
        let mut test_neg = BTreeMap::new();
        for (&l, pos) in &test_pos {
            test_neg.insert(l, cns_sample(sv.len(), l, pos.len(), &forbidden[&l], symmetric, &mut rng)?);
        }
        log::info!(
            "link task: {} labels, {} train / {} test positives",
            labels.len(),
            train_idx.len(),
            test_idx.len()
        );
        Ok(Self {
            task,
            num_nodes: sv.len(),
            symmetric,
            label_names: labels.iter().map(|&l| sg.label_name(l).to_string()).collect(),
            labels,
            train,
            test_pos,
            test_neg,
            forbidden,
        })
    }

    /// The supergraph used for message passing: test positives are removed
    /// from the task supervertex so they cannot leak into the embeddings.
    pub fn message_graph(&self, sg: &Supergraph) -> Supergraph {
        let held_out: HashSet<(LabelId, (usize, usize))> = self
            .test_pos
            .values()
            .flatten()
            .map(|e| (e.label, (e.src, e.dst)))
            .collect();
        let symmetric = self.symmetric;
        let sv = sg
            .supervertex(self.task)
            .retain_edges(|e| !held_out.contains(&(e.label, pair_key(e.src, e.dst, symmetric))));
        sg.with_supervertex(self.task, sv)
    }

    pub fn task(&self) -> CategoryId {
        self.task
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn train_positives(&self, l: LabelId) -> &[LocalEdge] {
        &self.train[&l]
    }

    pub fn test_positives(&self, l: LabelId) -> &[LocalEdge] {
        &self.test_pos[&l]
    }

    pub fn test_negatives(&self, l: LabelId) -> &[LocalEdge] {
        &self.test_neg[&l]
    }

    /// All positive pair keys of `l`, train and test.
    pub fn forbidden(&self, l: LabelId) -> &HashSet<(usize, usize)> {
        &self.forbidden[&l]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Training negatives for one epoch, `#train positives` per label.
    pub fn sample_negatives(
        &self,
        kind: SamplerKind,
        rng: &mut ChaCha8Rng,
    ) -> Result<BTreeMap<LabelId, Vec<LocalEdge>>, TaskError> {
        let mut out = BTreeMap::new();
        for (&l, pos) in &self.train {
            let neg = match kind {
                SamplerKind::Cns => cns_sample(self.num_nodes, l, pos.len(), &self.forbidden[&l], self.symmetric, rng)?,
                SamplerKind::Corrupt => corrupt_sample(self.num_nodes, pos, rng)?,
            };
            out.insert(l, neg);
        }
        Ok(out)
    }
}

/// Node classification data: labelled task-supervertex nodes split
/// stratified by class.
#[derive(Debug, Clone)]
pub struct NodeTask {
    task: CategoryId,
    classes: Vec<String>,
    nodes: Vec<usize>,
    targets: Vec<usize>,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl NodeTask {
    /// `labelled` holds `(local node index, class name)`; class ids follow
    /// sorted class names. Repeated identical entries are ignored.
    pub fn prepare(
        task: CategoryId,
        num_nodes: usize,
        labelled: &[(usize, String)],
        split: &SplitSpec,
    ) -> Result<Self, TaskError> {
        let mut by_node: BTreeMap<usize, &str> = BTreeMap::new();
        for (node, class) in labelled {
            if *node >= num_nodes {
                return Err(TaskError::NodeOutOfRange { node: *node, len: num_nodes });
            }
            if let Some(prev) = by_node.insert(*node, class) {
                if prev != class {
                    return Err(TaskError::ConflictingClass {
                        node: *node,
                        first: prev.to_string(),
                        second: class.clone(),
                    });
                }
            }
        }
        let mut classes: Vec<String> = by_node.values().map(|c| c.to_string()).collect();
        classes.sort();
        classes.dedup();
        if classes.len() < 2 {
            return Err(TaskError::TooFewClasses(classes.len()));
        }
        let nodes: Vec<usize> = by_node.keys().copied().collect();
        let targets: Vec<usize> = by_node
            .values()
            .map(|c| classes.binary_search_by(|x| x.as_str().cmp(c)).expect("class listed"))
            .collect();
        let (train, test) = stratified_split(&targets, split)?;
        log::info!(
            "node task: {} classes, {} train / {} test nodes",
            classes.len(),
            train.len(),
            test.len()
        );
        Ok(Self {
            task,
            classes,
            nodes,
            targets,
            train,
            test,
        })
    }

    pub fn task(&self) -> CategoryId {
        self.task
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Local node indices and class ids of the training split.
    pub fn train_set(&self) -> (Vec<usize>, Vec<usize>) {
        self.subset(&self.train)
    }

    pub fn test_set(&self) -> (Vec<usize>, Vec<usize>) {
        self.subset(&self.test)
    }

    fn subset(&self, idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
        idx.iter().map(|&i| (self.nodes[i], self.targets[i])).unzip()
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    Link(DistMult),
    Class(Classifier),
}

/// Encoder plus task head with their parameters.
#[derive(Debug, Clone)]
pub struct Model {
    encoder: Encoder,
    head: Head,
    store: ParamStore,
    plan: PropagationPlan,
    task: CategoryId,
}

impl Model {
    /// Encoder and DistMult weights, Xavier-initialized from `seed`.
    pub fn link(sg: &Supergraph, configs: Vec<SupervertexConfig>, labels: &[LabelId], seed: u64) -> Result<Self, TaskError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(sg, configs, &mut store, &mut rng)?;
        let width = encoder.output_dim(sg.task());
        let head = DistMult::new(sg, labels, width, &mut store, &mut rng)?;
        Self::assemble(sg, encoder, Head::Link(head), store)
    }

    /// Encoder and softmax classifier weights, Xavier-initialized from `seed`.
    pub fn classifier(
        sg: &Supergraph,
        configs: Vec<SupervertexConfig>,
        num_classes: usize,
        seed: u64,
    ) -> Result<Self, TaskError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(sg, configs, &mut store, &mut rng)?;
        let width = encoder.output_dim(sg.task());
        let head = Classifier::new(width, num_classes, &mut store, &mut rng)?;
        Self::assemble(sg, encoder, Head::Class(head), store)
    }

    fn assemble(sg: &Supergraph, encoder: Encoder, head: Head, store: ParamStore) -> Result<Self, TaskError> {
        Ok(Self {
            encoder,
            head,
            store,
            plan: PropagationPlan::new(sg)?,
            task: sg.task(),
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn plan(&self) -> &PropagationPlan {
        &self.plan
    }

    pub fn task(&self) -> CategoryId {
        self.task
    }

    /// Forward pass over every supervertex.
    pub fn embeddings(&self) -> Result<Vec<Matrix>, TaskError> {
        let mut tape = Tape::new();
        let table = self.encoder.encode(&mut tape, &self.store, &self.plan)?;
        Ok(table.matrices(&tape))
    }
}

/// Pairs of one label with their 0/1 targets.
#[derive(Debug, Clone)]
pub struct LinkBatch {
    pub label: LabelId,
    pub pairs: Vec<LocalEdge>,
    pub targets: Arc<[f64]>,
}

impl LinkBatch {
    pub fn new(label: LabelId, positives: &[LocalEdge], negatives: &[LocalEdge]) -> Self {
        let pairs: Vec<LocalEdge> = positives.iter().chain(negatives).copied().collect();
        let targets = positives.iter().map(|_| 1.0).chain(negatives.iter().map(|_| 0.0)).collect();
        Self { label, pairs, targets }
    }
}

/// Summed DistMult cross-entropy over `batches`, recorded on `tape`.
pub fn link_loss(model: &Model, tape: &mut Tape, batches: &[LinkBatch]) -> Result<Var, TaskError> {
    let Head::Link(head) = &model.head else {
        return Err(TaskError::WrongHead);
    };
    let table = model.encoder.encode(tape, &model.store, &model.plan)?;
    let z = table.get(model.task);
    let mut total: Option<Var> = None;
    for b in batches.iter().filter(|b| !b.pairs.is_empty()) {
        let logits = head.logits(tape, &model.store, z, b.label, &b.pairs)?;
        let loss = tape.bce_with_logits(logits, b.targets.clone())?;
        total = Some(match total {
            Some(t) => tape.add(t, loss)?,
            None => loss,
        });
    }
    Ok(total.unwrap_or_else(|| tape.constant(Matrix::scalar(0.0))))
}

/// Summed softmax cross-entropy of `nodes` against `classes`.
pub fn class_loss(model: &Model, tape: &mut Tape, nodes: Arc<[usize]>, classes: Arc<[usize]>) -> Result<Var, TaskError> {
    let Head::Class(head) = &model.head else {
        return Err(TaskError::WrongHead);
    };
    let table = model.encoder.encode(tape, &model.store, &model.plan)?;
    let logits = head.logits(tape, &model.store, table.get(model.task), nodes)?;
    Ok(tape.softmax_cross_entropy(logits, classes)?)
}

/// Per-label ranking metrics of test positives against test negatives.
pub fn evaluate_link(model: &Model, task: &LinkTask) -> Result<RankingReport, TaskError> {
    let Head::Link(head) = &model.head else {
        return Err(TaskError::WrongHead);
    };
    let z = &model.embeddings()?[model.task.0];
    let groups: Vec<(String, Vec<f64>, Vec<bool>)> = task
        .labels
        .iter()
        .zip(&task.label_names)
        .map(|(&l, name)| {
            let pos = task.test_positives(l);
            let neg = task.test_negatives(l);
            let mut scores = head.probabilities(&model.store, z, l, pos);
            scores.extend(head.probabilities(&model.store, z, l, neg));
            let labels = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
            (name.clone(), scores, labels)
        })
        .collect();
    Ok(RankingReport::from_groups(
        groups.iter().map(|(n, s, l)| (n.clone(), s.as_slice(), l.as_slice())),
    )?)
}

/// Micro and macro F1 on the test split.
pub fn evaluate_class(model: &Model, task: &NodeTask) -> Result<F1Report, TaskError> {
    let Head::Class(head) = &model.head else {
        return Err(TaskError::WrongHead);
    };
    let z = &model.embeddings()?[model.task.0];
    let (nodes, truth) = task.test_set();
    let probs = head.probabilities(&model.store, &z.gather_rows(&nodes)?)?;
    Ok(f1_metrics(&argmax_rows(&probs), &truth, task.classes().len())?)
}

fn run_epochs(
    model: &mut Model,
    cfg: &TrainConfig,
    mut loss_of: impl FnMut(&Model, &mut Tape, usize) -> Result<Var, TaskError>,
    mut metric: impl FnMut(&Model) -> Result<f64, TaskError>,
) -> Result<Vec<EpochRecord>, TaskError> {
    cfg.validate()?;
    let mut adam = Adam::new(cfg.lr, &model.store);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let loss_var = loss_of(model, &mut tape, epoch)?;
        let loss = tape.value(loss_var).data()[0];
        if !loss.is_finite() {
            return Err(TaskError::NonFiniteLoss(epoch));
        }
        tape.backward(loss_var, &mut model.store)?;
        adam.step(&mut model.store)?;
        let test_metric = if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            Some(metric(model)?)
        } else {
            None
        };
        log::debug!("epoch {epoch}: loss {loss:.6}");
        history.push(EpochRecord { epoch, loss, test_metric });
    }
    Ok(history)
}

/// Full-batch training of a link model; the recorded test metric is the
/// macro AUROC.
pub fn train_link(model: &mut Model, task: &LinkTask, cfg: &TrainConfig) -> Result<Vec<EpochRecord>, TaskError> {
    let mut rng = stream_rng(cfg.seed, TRAIN_NEG_STREAM);
    let mut negatives = BTreeMap::new();
    run_epochs(
        model,
        cfg,
        |model, tape, epoch| {
            if epoch == 1 || cfg.resample_negatives {
                negatives = task.sample_negatives(cfg.sampler, &mut rng)?;
            }
            let batches: Vec<LinkBatch> = task
                .labels
                .iter()
                .map(|&l| LinkBatch::new(l, task.train_positives(l), &negatives[&l]))
                .collect();
            link_loss(model, tape, &batches)
        },
        |model| Ok(evaluate_link(model, task)?.macro_avg.auroc),
    )
}

/// Full-batch training of a classifier; the recorded test metric is the
/// micro F1.
pub fn train_class(model: &mut Model, task: &NodeTask, cfg: &TrainConfig) -> Result<Vec<EpochRecord>, TaskError> {
    let (nodes, classes) = task.train_set();
    let (nodes, classes): (Arc<[usize]>, Arc<[usize]>) = (nodes.into(), classes.into());
    run_epochs(
        model,
        cfg,
        |model, tape, _| class_loss(model, tape, nodes.clone(), classes.clone()),
        |model| Ok(evaluate_class(model, task)?.micro_f1),
    )
}
