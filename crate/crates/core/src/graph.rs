//! Typed, labelled graphs and their category-induced pieces.
//!
//! A [`HeteroGraph`] interns string node ids, node types and edge labels to
//! dense indices. A [`CategoricalPartition`] groups node types into
//! categories; from those, [`induce_supervertex`] extracts the subgraph of
//! one category and [`induce_superedge`] the bipartite edges between two.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{LabelAdjacency, TensorError};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

id_type!(
    /// Dense node-type index.
    NodeTypeId
);
id_type!(
    /// Dense edge-label index.
    LabelId
);
id_type!(
    /// Category index; categories are numbered in ascending name order.
    CategoryId
);

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: edge references unknown node `{id}`")]
    UnknownNodeAt { path: PathBuf, line: usize, id: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("{0}: file contains no records")]
    EmptyFile(PathBuf),
    #[error("node `{id}` declared with type `{first}` and again with type `{second}`")]
    ConflictingNodeType {
        id: String,
        first: String,
        second: String,
    },
    #[error("node type `{0}` is not assigned to any category")]
    UnpartitionedType(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown category id {0}")]
    UnknownCategoryId(usize),
    #[error("a superedge needs two different categories, got `{0}` twice")]
    SameCategory(String),
    #[error("invalid partition file {path}: {reason}")]
    BadPartition { path: PathBuf, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A labelled directed edge between global node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub label: LabelId,
}

/// Heterogeneous graph: typed nodes and labelled edges.
///
/// Node indices are contiguous `0..num_nodes()` in first-declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeteroGraph {
    node_names: Vec<String>,
    node_index: HashMap<String, usize>,
    node_types: Vec<NodeTypeId>,
    type_names: Vec<String>,
    label_names: Vec<String>,
    edges: Vec<Edge>,
}

/// Counts gathered while building a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub nodes: usize,
    pub edges: usize,
    pub node_types: usize,
    pub labels: usize,
    pub duplicate_nodes: usize,
    pub duplicate_edges: usize,
}

/// Incremental [`HeteroGraph`] construction with edge deduplication.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: HeteroGraph,
    type_index: HashMap<String, NodeTypeId>,
    label_index: HashMap<String, LabelId>,
    seen_edges: HashSet<Edge>,
    duplicate_nodes: usize,
    duplicate_edges: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a node; re-declaring it with the same type is a no-op.
    pub fn add_node(&mut self, id: &str, node_type: &str) -> Result<usize, GraphError> {
        if let Some(&existing) = self.graph.node_index.get(id) {
            let t = self.graph.node_types[existing];
            if self.graph.type_names[t.0] != node_type {
                return Err(GraphError::ConflictingNodeType {
                    id: id.to_string(),
                    first: self.graph.type_names[t.0].clone(),
                    second: node_type.to_string(),
                });
            }
            self.duplicate_nodes += 1;
            return Ok(existing);
        }
        let next_type = NodeTypeId(self.type_index.len());
        let t = *self.type_index.entry(node_type.to_string()).or_insert_with(|| {
            self.graph.type_names.push(node_type.to_string());
            next_type
        });
        let index = self.graph.node_names.len();
        self.graph.node_names.push(id.to_string());
        self.graph.node_index.insert(id.to_string(), index);
        self.graph.node_types.push(t);
        Ok(index)
    }

    /// Adds an edge between declared nodes. Returns `false` for a duplicate.
    pub fn add_edge(&mut self, src: &str, dst: &str, label: &str) -> Result<bool, GraphError> {
        let s = self.node(src)?;
        let d = self.node(dst)?;
        let next_label = LabelId(self.label_index.len());
        let l = *self.label_index.entry(label.to_string()).or_insert_with(|| {
            self.graph.label_names.push(label.to_string());
            next_label
        });
        let edge = Edge {
            src: s,
            dst: d,
            label: l,
        };
        if !self.seen_edges.insert(edge) {
            self.duplicate_edges += 1;
            return Ok(false);
        }
        self.graph.edges.push(edge);
        Ok(true)
    }

    fn node(&self, id: &str) -> Result<usize, GraphError> {
        self.graph
            .node_index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn build(self) -> (HeteroGraph, LoadReport) {
        let g = self.graph;
        let report = LoadReport {
            nodes: g.num_nodes(),
            edges: g.num_edges(),
            node_types: g.type_names.len(),
            labels: g.label_names.len(),
            duplicate_nodes: self.duplicate_nodes,
            duplicate_edges: self.duplicate_edges,
        };
        (g, report)
    }
}

impl HeteroGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.node_names[node]
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_by_name(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    /// The node-type function τ.
    pub fn type_of(&self, node: usize) -> NodeTypeId {
        self.node_types[node]
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn type_name(&self, t: NodeTypeId) -> &str {
        &self.type_names[t.0]
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_name(&self, l: LabelId) -> &str {
        &self.label_names[l.0]
    }

    pub fn label_by_name(&self, name: &str) -> Option<LabelId> {
        self.label_names.iter().position(|n| n == name).map(LabelId)
    }
}

fn read_records(path: &Path) -> Result<Vec<(usize, Vec<String>)>, GraphError> {
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records: Vec<_> = text
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim_end_matches('\r')))
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(n, line)| (n, line.split('\t').map(str::to_string).collect()))
        .collect();
    if records.is_empty() {
        return Err(GraphError::EmptyFile(path.to_path_buf()));
    }
    Ok(records)
}

fn check_fields(
    path: &Path,
    line: usize,
    fields: &[String],
    expected: usize,
    form: &str,
) -> Result<(), GraphError> {
    if fields.len() != expected || fields.iter().any(|f| f.is_empty()) {
        return Err(GraphError::Malformed {
            path: path.to_path_buf(),
            line,
            reason: format!("expected `{form}`, found {} field(s)", fields.len()),
        });
    }
    Ok(())
}

/// Loads `nodes.tsv` (`node_id<TAB>node_type`) and `edges.tsv`
/// (`src_id<TAB>dst_id<TAB>edge_label`).
pub fn load_edge_list(
    nodes_path: &Path,
    edges_path: &Path,
) -> Result<(HeteroGraph, LoadReport), GraphError> {
    let mut builder = GraphBuilder::new();
    for (line, fields) in read_records(nodes_path)? {
        check_fields(nodes_path, line, &fields, 2, "node_id<TAB>node_type")?;
        builder
            .add_node(&fields[0], &fields[1])
            .map_err(|e| match e {
                GraphError::ConflictingNodeType { .. } => GraphError::Malformed {
                    path: nodes_path.to_path_buf(),
                    line,
                    reason: e.to_string(),
                },
                other => other,
            })?;
    }
    for (line, fields) in read_records(edges_path)? {
        check_fields(edges_path, line, &fields, 3, "src_id<TAB>dst_id<TAB>edge_label")?;
        builder
            .add_edge(&fields[0], &fields[1], &fields[2])
            .map_err(|e| match e {
                GraphError::UnknownNode(id) => GraphError::UnknownNodeAt {
                    path: edges_path.to_path_buf(),
                    line,
                    id,
                },
                other => other,
            })?;
    }
    let (graph, report) = builder.build();
    log::info!(
        "loaded graph: |V|={} |E|={} |T|={} |L|={} ({} duplicate edges dropped)",
        report.nodes,
        report.edges,
        report.node_types,
        report.labels,
        report.duplicate_edges
    );
    Ok((graph, report))
}

/// Assignment of node types to categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalPartition {
    category_of: Vec<CategoryId>,
    names: Vec<String>,
}

impl CategoricalPartition {
    /// Builds a partition from a `node_type -> category` map. Every type in
    /// `graph` must be mapped; extra entries are ignored.
    pub fn from_map(
        graph: &HeteroGraph,
        map: &BTreeMap<String, String>,
    ) -> Result<Self, GraphError> {
        let mut used = BTreeSet::new();
        for t in graph.type_names() {
            let c = map
                .get(t)
                .ok_or_else(|| GraphError::UnpartitionedType(t.clone()))?;
            used.insert(c.clone());
        }
        let names: Vec<String> = used.into_iter().collect();
        let category_of = graph
            .type_names()
            .iter()
            .map(|t| {
                let c = &map[t];
                CategoryId(names.binary_search(c).expect("category registered"))
            })
            .collect();
        Ok(Self { category_of, names })
    }

    /// One category per node type, named after the type.
    pub fn identity(graph: &HeteroGraph) -> Self {
        let map = graph
            .type_names()
            .iter()
            .map(|t| (t.clone(), t.clone()))
            .collect();
        Self::from_map(graph, &map).expect("identity partition is total")
    }

    /// Reads `partition.json`: an object mapping node type to category.
    pub fn load(graph: &HeteroGraph, path: &Path) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let map: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| GraphError::BadPartition {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        Self::from_map(graph, &map)
    }

    pub fn category_of(&self, t: NodeTypeId) -> CategoryId {
        self.category_of[t.0]
    }

    pub fn categories(&self) -> impl Iterator<Item = CategoryId> {
        (0..self.names.len()).map(CategoryId)
    }

    pub fn num_categories(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, c: CategoryId) -> &str {
        &self.names[c.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn by_name(&self, name: &str) -> Result<CategoryId, GraphError> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .map(CategoryId)
            .map_err(|_| GraphError::UnknownCategory(name.to_string()))
    }

    fn check(&self, c: CategoryId) -> Result<(), GraphError> {
        if c.0 < self.names.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownCategoryId(c.0))
        }
    }

    /// Category of each node in `graph`.
    pub fn node_categories(&self, graph: &HeteroGraph) -> Vec<CategoryId> {
        (0..graph.num_nodes())
            .map(|v| self.category_of(graph.type_of(v)))
            .collect()
    }

    /// For each node, its index among the nodes of its own category
    /// (ascending global order).
    pub fn local_indices(&self, graph: &HeteroGraph) -> Vec<usize> {
        let mut counters = vec![0usize; self.names.len()];
        self.node_categories(graph)
            .into_iter()
            .map(|c| {
                let i = counters[c.0];
                counters[c.0] += 1;
                i
            })
            .collect()
    }
}

/// Edge in category-local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalEdge {
    pub src: usize,
    pub dst: usize,
    pub label: LabelId,
}

/// Induced subgraph of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervertexGraph {
    category: CategoryId,
    nodes: Vec<usize>,
    local: HashMap<usize, usize>,
    edges: Vec<LocalEdge>,
    labels: Vec<LabelId>,
    symmetric: bool,
}

impl SupervertexGraph {
    pub fn category(&self) -> CategoryId {
        self.category
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Global node ids, ascending; position is the local index.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn global_id(&self, local: usize) -> usize {
        self.nodes[local]
    }

    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.local.get(&global).copied()
    }

    /// Internal edges as they appear in the graph (before symmetrization).
    pub fn edges(&self) -> &[LocalEdge] {
        &self.edges
    }

    /// Labels occurring on internal edges, ascending.
    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Edges used for message passing: the internal edges plus, when
    /// symmetrized, each edge reversed.
    pub fn propagation_edges(&self) -> Vec<LocalEdge> {
        let mut out = self.edges.clone();
        if self.symmetric {
            out.extend(self.edges.iter().map(|e| LocalEdge {
                src: e.dst,
                dst: e.src,
                label: e.label,
            }));
        }
        out
    }

    /// Neighbour lists for `label`: node `i` aggregates the sources of
    /// propagation edges pointing at it.
    pub fn adjacency(&self, label: LabelId) -> Result<LabelAdjacency, TensorError> {
        let pairs = self
            .propagation_edges()
            .into_iter()
            .filter(|e| e.label == label)
            .map(|e| (e.dst, e.src));
        LabelAdjacency::from_pairs(self.len(), self.len(), pairs)
    }

    /// Copy with only the internal edges satisfying `keep`; the label set is
    /// left unchanged so parameter layouts stay stable.
    pub fn retain_edges(&self, keep: impl Fn(&LocalEdge) -> bool) -> Self {
        let mut out = self.clone();
        out.edges.retain(|e| keep(e));
        out
    }
}

/// Builds the supervertex of category `c`.
pub fn induce_supervertex(
    graph: &HeteroGraph,
    partition: &CategoricalPartition,
    c: CategoryId,
    symmetrize: bool,
) -> Result<SupervertexGraph, GraphError> {
    partition.check(c)?;
    let cats = partition.node_categories(graph);
    let nodes: Vec<usize> = (0..graph.num_nodes()).filter(|&v| cats[v] == c).collect();
    let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let edges: Vec<LocalEdge> = graph
        .edges()
        .iter()
        .filter_map(|e| {
            Some(LocalEdge {
                src: *local.get(&e.src)?,
                dst: *local.get(&e.dst)?,
                label: e.label,
            })
        })
        .collect();
    let labels = edges
        .iter()
        .map(|e| e.label)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(SupervertexGraph {
        category: c,
        nodes,
        local,
        edges,
        labels,
        symmetric: symmetrize,
    })
}

/// Bipartite edges between two categories, oriented parent → child.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperedgeGraph {
    parent: CategoryId,
    child: CategoryId,
    parent_len: usize,
    child_len: usize,
    edges: Vec<LocalEdge>,
    labels: Vec<LabelId>,
}

impl SuperedgeGraph {
    pub fn parent(&self) -> CategoryId {
        self.parent
    }

    pub fn child(&self) -> CategoryId {
        self.child
    }

    /// Edges with `src` local to the parent and `dst` local to the child.
    pub fn edges(&self) -> &[LocalEdge] {
        &self.edges
    }

    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    /// Child node `i` aggregates the parent nodes linked to it by `label`.
    pub fn adjacency(&self, label: LabelId) -> Result<LabelAdjacency, TensorError> {
        let pairs = self
            .edges
            .iter()
            .filter(|e| e.label == label)
            .map(|e| (e.dst, e.src));
        LabelAdjacency::from_pairs(self.child_len, self.parent_len, pairs)
    }
}

/// All edges between `parent` and `child` in either raw direction, stored
/// parent → child. `None` when there are none.
pub fn induce_superedge(
    graph: &HeteroGraph,
    partition: &CategoricalPartition,
    parent: CategoryId,
    child: CategoryId,
) -> Result<Option<SuperedgeGraph>, GraphError> {
    partition.check(parent)?;
    partition.check(child)?;
    if parent == child {
        return Err(GraphError::SameCategory(partition.name(parent).to_string()));
    }
    let cats = partition.node_categories(graph);
    let local = partition.local_indices(graph);
    let mut edges = Vec::new();
    for e in graph.edges() {
        let (cs, cd) = (cats[e.src], cats[e.dst]);
        let (p, c) = if cs == parent && cd == child {
            (e.src, e.dst)
        } else if cs == child && cd == parent {
            (e.dst, e.src)
        } else {
            continue;
        };
        edges.push(LocalEdge {
            src: local[p],
            dst: local[c],
            label: e.label,
        });
    }
    if edges.is_empty() {
        return Ok(None);
    }
    let labels = edges
        .iter()
        .map(|e| e.label)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let count = |c: CategoryId| cats.iter().filter(|&&x| x == c).count();
    Ok(Some(SuperedgeGraph {
        parent,
        child,
        parent_len: count(parent),
        child_len: count(child),
        edges,
        labels,
    }))
}
