//! Shared fixtures and independent reference implementations.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use gripnet::encoder::{CombineMode, InterActivation, SupervertexConfig};
use gripnet::graph::{CategoricalPartition, CategoryId, HeteroGraph};
use gripnet::supergraph::{build_supergraph, Supergraph};
use gripnet::heads::Model;
use gripnet::tensor::{ParamStore, Tape, Var};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

/// A small random heterogeneous graph with a valid supergraph.
pub struct Toy {
    pub graph: HeteroGraph,
    pub partition: CategoricalPartition,
    pub directions: Vec<(CategoryId, CategoryId)>,
    pub task: CategoryId,
    pub symmetrize: bool,
    pub sg: Supergraph,
    pub configs: Vec<SupervertexConfig>,
}

pub fn random_config<R: Rng>(rng: &mut R) -> SupervertexConfig {
    let combine_mode = if rng.gen_bool(0.5) { CombineMode::Concat } else { CombineMode::Sum };
    let internal_feature_dim = rng.gen_range(1..=3);
    let external_dim = match combine_mode {
        CombineMode::Sum => internal_feature_dim,
        CombineMode::Concat => rng.gen_range(1..=3),
    };
    let inter_activation = if rng.gen_bool(0.5) { InterActivation::Relu } else { InterActivation::Linear };
    let sublayer_dims = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=3)).collect();
    SupervertexConfig {
        internal_feature_dim,
        external_dim,
        combine_mode,
        inter_activation,
        sublayer_dims,
    }
}

/// Up to 3 categories and 12 nodes. Categories may hold two node types;
/// the task category is last in a random order and has internal edges.
pub fn random_toy(rng: &mut ChaCha8Rng) -> Toy {
    let n_cat = rng.gen_range(1..=3);
    let mut b = HeteroGraph::builder();
    let mut type_to_cat = BTreeMap::new();
    let mut members: Vec<Vec<String>> = Vec::new();
    for c in 0..n_cat {
        let types = if rng.gen_bool(0.3) { 2 } else { 1 };
        for t in 0..types {
            type_to_cat.insert(format!("t{c}{t}"), format!("c{c}"));
        }
        let size = rng.gen_range(2..=4);
        let mut names = Vec::new();
        for i in 0..size {
            let name = format!("n{c}_{i}");
            b.add_node(&name, &format!("t{c}{}", i % types)).unwrap();
            names.push(name);
        }
        members.push(names);
    }
    let internal_labels = ["a", "b"];
    let cross_labels = ["x", "y"];
    for (c, names) in members.iter().enumerate() {
        let target = if c == n_cat - 1 { rng.gen_range(1..=5) } else { rng.gen_range(0..=5) };
        let mut added = 0;
        while added < target {
            let (i, j) = (rng.gen_range(0..names.len()), rng.gen_range(0..names.len()));
            if i == j {
                continue;
            }
            b.add_edge(&names[i], &names[j], internal_labels.choose(rng).unwrap()).unwrap();
            added += 1;
        }
    }

    // Category ids follow sorted names, which match creation order here.
    let mut order: Vec<usize> = (0..n_cat - 1).collect();
    order.shuffle(rng);
    order.push(n_cat - 1);
    let mut directions = Vec::new();
    for a in 0..n_cat {
        for bpos in a + 1..n_cat {
            if rng.gen_bool(0.6) || (bpos == n_cat - 1 && a == n_cat - 2) {
                directions.push((order[a], order[bpos]));
            }
        }
    }
    for &(p, c) in &directions {
        for _ in 0..rng.gen_range(1..=4) {
            let (u, v) = (members[p].choose(rng).unwrap(), members[c].choose(rng).unwrap());
            let label = cross_labels.choose(rng).unwrap();
            if rng.gen_bool(0.5) {
                b.add_edge(u, v, label).unwrap();
            } else {
                b.add_edge(v, u, label).unwrap();
            }
        }
    }
    let (graph, _) = b.build();
    let partition = CategoricalPartition::from_map(&graph, &type_to_cat).unwrap();
    let directions: Vec<(CategoryId, CategoryId)> =
        directions.into_iter().map(|(p, c)| (CategoryId(p), CategoryId(c))).collect();
    let task = CategoryId(n_cat - 1);
    let symmetrize = rng.gen_bool(0.5);
    let sg = build_supergraph(&graph, &partition, &directions, task, symmetrize).unwrap();
    let configs = (0..n_cat).map(|_| random_config(rng)).collect();
    Toy {
        graph,
        partition,
        directions,
        task,
        symmetrize,
        sg,
        configs,
    }
}

pub fn dense_of(m: &gripnet::tensor::Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn relu(a: &Dense) -> Dense {
    a.iter().map(|r| r.iter().map(|&x| x.max(0.0)).collect()).collect()
}

pub fn zeros(rows: usize, cols: usize) -> Dense {
    vec![vec![0.0; cols]; rows]
}

/// `D^-1 A X` with a binary `A`; rows without neighbours stay zero.
pub fn mean_aggregate(a: &Dense, x: &Dense, cols: usize) -> Dense {
    let ax = if x.is_empty() { zeros(a.len(), cols) } else { matmul(a, x) };
    a.iter()
        .zip(ax)
        .map(|(row, axr)| {
            let deg: f64 = row.iter().sum();
            if deg == 0.0 {
                vec![0.0; cols]
            } else {
                axr.iter().map(|v| v / deg).collect()
            }
        })
        .collect()
}

/// Per-category node lists (global ids ascending) and local positions.
pub fn local_layout(toy: &Toy) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n_cat = toy.partition.num_categories();
    let mut nodes = vec![Vec::new(); n_cat];
    for v in 0..toy.graph.num_nodes() {
        nodes[toy.partition.category_of(toy.graph.type_of(v)).0].push(v);
    }
    let mut local = vec![0; toy.graph.num_nodes()];
    for list in &nodes {
        for (i, &v) in list.iter().enumerate() {
            local[v] = i;
        }
    }
    (nodes, local)
}

/// Binary adjacency per label inside category `c`: `A[i][j] = 1` when an
/// edge runs from `j` to `i` (either way when symmetrized).
pub fn internal_adjacency(toy: &Toy, c: usize) -> BTreeMap<String, Dense> {
    let (nodes, local) = local_layout(toy);
    let cat = |v: usize| toy.partition.category_of(toy.graph.type_of(v)).0;
    let mut out: BTreeMap<String, Dense> = BTreeMap::new();
    let n = nodes[c].len();
    for e in toy.graph.edges() {
        if cat(e.src) != c || cat(e.dst) != c {
            continue;
        }
        let a = out
            .entry(toy.graph.label_name(e.label).to_string())
            .or_insert_with(|| zeros(n, n));
        a[local[e.dst]][local[e.src]] = 1.0;
        if toy.symmetrize {
            a[local[e.src]][local[e.dst]] = 1.0;
        }
    }
    out
}

/// Binary child-by-parent adjacency per label between `parent` and `child`,
/// regardless of the stored edge orientation.
pub fn cross_adjacency(toy: &Toy, parent: usize, child: usize) -> BTreeMap<String, Dense> {
    let (nodes, local) = local_layout(toy);
    let cat = |v: usize| toy.partition.category_of(toy.graph.type_of(v)).0;
    let mut out: BTreeMap<String, Dense> = BTreeMap::new();
    for e in toy.graph.edges() {
        let (p, ch) = match (cat(e.src), cat(e.dst)) {
            (s, d) if s == parent && d == child => (e.src, e.dst),
            (s, d) if s == child && d == parent => (e.dst, e.src),
            _ => continue,
        };
        let a = out
            .entry(toy.graph.label_name(e.label).to_string())
            .or_insert_with(|| zeros(nodes[child].len(), nodes[parent].len()));
        a[local[ch]][local[p]] = 1.0;
    }
    out
}

fn param(store: &ParamStore, name: &str) -> Dense {
    let id = store
        .find(name)
        .unwrap_or_else(|| panic!("missing parameter `{name}`"));
    dense_of(store.value(id))
}

/// Monolithic dense forward pass over the whole supergraph, reading
/// weights by name and graph structure straight from the edge list.
pub fn dense_encode(toy: &Toy, store: &ParamStore) -> Vec<Dense> {
    let n_cat = toy.partition.num_categories();
    let mut memo: HashMap<usize, Dense> = HashMap::new();
    fn go(toy: &Toy, store: &ParamStore, c: usize, memo: &mut HashMap<usize, Dense>) -> Dense {
        if let Some(z) = memo.get(&c) {
            return z.clone();
        }
        let name = toy.partition.name(CategoryId(c)).to_string();
        let cfg = &toy.configs[c];
        let r_in = relu(&param(store, &format!("{name}.internal_feature")));
        let n = r_in.len();
        let parents: BTreeSet<usize> = toy
            .directions
            .iter()
            .filter(|(_, ch)| ch.0 == c)
            .map(|(p, _)| p.0)
            .collect();
        let combined = if parents.is_empty() {
            r_in
        } else {
            let mut total = zeros(n, cfg.external_dim);
            for &p in &parents {
                let z_p = go(toy, store, p, memo);
                let pname = toy.partition.name(CategoryId(p)).to_string();
                let width = toy.configs[p].sublayer_dims.last().copied().unwrap();
                for (label, a) in cross_adjacency(toy, p, c) {
                    let w = param(store, &format!("{pname}->{name}.external.{label}"));
                    total = add(&total, &matmul(&mean_aggregate(&a, &z_p, width), &w));
                }
            }
            let k = parents.len() as f64;
            let mut r_ex: Dense = total.iter().map(|r| r.iter().map(|v| v / k).collect()).collect();
            if cfg.inter_activation == InterActivation::Relu {
                r_ex = relu(&r_ex);
            }
            match cfg.combine_mode {
                CombineMode::Sum => add(&r_ex, &r_in),
                CombineMode::Concat => r_ex
                    .into_iter()
                    .zip(r_in)
                    .map(|(mut a, b)| {
                        a.extend(b);
                        a
                    })
                    .collect(),
            }
        };
        let adjs = internal_adjacency(toy, c);
        let mut u = combined;
        for m in 0..cfg.sublayer_dims.len() {
            let width = u[0].len();
            let mut acc = matmul(&u, &param(store, &format!("{name}.aggregation.{m}.self")));
            for (label, a) in &adjs {
                let w = param(store, &format!("{name}.aggregation.{m}.{label}"));
                acc = add(&acc, &matmul(&mean_aggregate(a, &u, width), &w));
            }
            u = relu(&acc);
        }
        memo.insert(c, u.clone());
        u
    }
    (0..n_cat).map(|c| go(toy, store, c, &mut memo)).collect()
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len(), "column count");
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

/// Gradients smaller than this are compared absolutely; finite differences
/// of an O(1) loss carry round-off near 1e-10 at the step used here.
pub const REL_FLOOR: f64 = 1e-4;

/// Relative error used by the gradient checks.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest relative error between tape gradients and five-point central
/// differences with step `h`, over every scalar parameter of `model`.
pub fn gradient_check(model: &mut Model, h: f64, loss: &dyn Fn(&Model, &mut Tape) -> Var) -> f64 {
    model.store_mut().zero_grad();
    let mut tape = Tape::new();
    let l = loss(model, &mut tape);
    tape.backward(l, model.store_mut()).unwrap();
    let ids: Vec<_> = model.store().ids().collect();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| model.store().grad(id).data().to_vec()).collect();
    let mut worst = 0.0f64;
    for (k, &id) in ids.iter().enumerate() {
        for i in 0..analytic[k].len() {
            let orig = model.store().value(id).data()[i];
            let mut at = |offset: f64| {
                model.store_mut().value_mut(id).data_mut()[i] = orig + offset;
                let mut tape = Tape::new();
                let l = loss(model, &mut tape);
                tape.value(l).data()[0]
            };
            let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            model.store_mut().value_mut(id).data_mut()[i] = orig;
            worst = worst.max(relative_error(analytic[k][i], numeric));
        }
    }
    worst
}

/// Item order for rankings: higher score first, lower id first on ties.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = Vec::new();
    for i in 0..scores.len() {
        let pos = idx
            .iter()
            .position(|&j| scores[i] > scores[j] || (scores[i] == scores[j] && i < j))
            .unwrap_or(idx.len());
        idx.insert(pos, i);
    }
    idx
}

/// Fraction of positive/negative pairs ordered correctly, ties one half.
pub fn auroc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// `Σ_k (R_k - R_{k-1}) P_k` over the full ranked sweep.
pub fn auprc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let total = labels.iter().filter(|&&l| l).count() as f64;
    let order = ranked(scores);
    let (mut prev_recall, mut area) = (0.0, 0.0);
    for k in 1..=order.len() {
        let hits = order[..k].iter().filter(|&&i| labels[i]).count() as f64;
        let (precision, recall) = (hits / k as f64, hits / total);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

pub fn ap_at_oracle(scores: &[f64], labels: &[bool], k: usize) -> f64 {
    let total = labels.iter().filter(|&&l| l).count();
    let order = ranked(scores);
    let mut sum = 0.0;
    for p in 1..=k.min(order.len()) {
        if labels[order[p - 1]] {
            let hits = order[..p].iter().filter(|&&i| labels[i]).count();
            sum += hits as f64 / p as f64;
        }
    }
    sum / k.min(total) as f64
}

/// `(micro F1, macro F1)` from a full confusion matrix.
pub fn f1_oracle(predicted: &[usize], truth: &[usize], classes: usize) -> (f64, f64) {
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[t][p] += 1;
    }
    let f1 = |tp: f64, fp: f64, fn_: f64| {
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    };
    let (mut stp, mut sfp, mut sfn, mut macro_sum) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let fp = (0..classes).filter(|&t| t != c).map(|t| confusion[t][c]).sum::<usize>() as f64;
        let fn_ = (0..classes).filter(|&p| p != c).map(|p| confusion[c][p]).sum::<usize>() as f64;
        stp += tp;
        sfp += fp;
        sfn += fn_;
        macro_sum += f1(tp, fp, fn_);
    }
    (f1(stp, sfp, sfn), macro_sum / classes as f64)
}
