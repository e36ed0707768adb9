//! The supergraph: supervertices joined by user-directed superedges.
//!
//! Directions must form a DAG and the task supervertex must be a leaf so
//! that every propagation path ends in it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{
    induce_superedge, induce_supervertex, CategoricalPartition, CategoryId, GraphError,
    HeteroGraph, LabelId, SuperedgeGraph, SupervertexGraph,
};

#[derive(Debug, Error)]
pub enum SupergraphError {
    #[error("superedge directions contain a cycle: {}", cycle.join(" -> "))]
    CycleDetected { cycle: Vec<String> },
    #[error("task supervertex `{task}` is not a leaf: it has an outgoing superedge to `{child}`")]
    TaskNotLeaf { task: String, child: String },
    #[error("declared superedge {parent} -> {child} has no edges")]
    EmptySuperedge { parent: String, child: String },
    #[error("supervertex `{0}` has no nodes")]
    EmptySupervertex(String),
    #[error("superedge direction from `{0}` to itself")]
    SelfDirection(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Cross-category edges not covered by any declared direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedEdges {
    pub between: (CategoryId, CategoryId),
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supergraph {
    category_names: Vec<String>,
    label_names: Vec<String>,
    supervertices: Vec<SupervertexGraph>,
    superedges: BTreeMap<(CategoryId, CategoryId), SuperedgeGraph>,
    parents_of: Vec<Vec<CategoryId>>,
    task: CategoryId,
    dropped: Vec<DroppedEdges>,
}

/// Order in which supervertices are encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoSchedule {
    pub order: Vec<CategoryId>,
}

impl TopoSchedule {
    pub fn position(&self, c: CategoryId) -> Option<usize> {
        self.order.iter().position(|&x| x == c)
    }
}

/// Validates the declared directions and materializes the supergraph.
///
/// Checks run in a fixed order: unknown categories, self-directions, cycles,
/// the task-leaf rule, then empty superedges and supervertices.
pub fn build_supergraph(
    graph: &HeteroGraph,
    partition: &CategoricalPartition,
    directions: &[(CategoryId, CategoryId)],
    task: CategoryId,
    symmetrize: bool,
) -> Result<Supergraph, SupergraphError> {
    let n = partition.num_categories();
    let name = |c: CategoryId| partition.name(c).to_string();
    for &c in directions.iter().flat_map(|(a, b)| [a, b]).chain([&task]) {
        if c.0 >= n {
            return Err(GraphError::UnknownCategoryId(c.0).into());
        }
    }
    let directions: BTreeSet<(CategoryId, CategoryId)> = directions.iter().copied().collect();
    if let Some((a, _)) = directions.iter().find(|(a, b)| a == b) {
        return Err(SupergraphError::SelfDirection(name(*a)));
    }
    if let Some(cycle) = find_cycle(n, &directions) {
        return Err(SupergraphError::CycleDetected {
            cycle: cycle.into_iter().map(name).collect(),
        });
    }
    if let Some(&(_, child)) = directions.iter().find(|(p, _)| *p == task) {
        return Err(SupergraphError::TaskNotLeaf {
            task: name(task),
            child: name(child),
        });
    }

    let mut superedges = BTreeMap::new();
    let mut parents_of = vec![Vec::new(); n];
    for &(p, c) in &directions {
        let se = induce_superedge(graph, partition, p, c)?.ok_or_else(|| {
            SupergraphError::EmptySuperedge {
                parent: name(p),
                child: name(c),
            }
        })?;
        superedges.insert((p, c), se);
        parents_of[c.0].push(p);
    }
    parents_of.iter_mut().for_each(|ps| ps.sort());

    let supervertices = partition
        .categories()
        .map(|c| induce_supervertex(graph, partition, c, symmetrize))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(sv) = supervertices.iter().find(|sv| sv.is_empty()) {
        return Err(SupergraphError::EmptySupervertex(name(sv.category())));
    }

    let mut dropped = Vec::new();
    for a in partition.categories() {
        for b in partition.categories().filter(|&b| b > a) {
            if directions.contains(&(a, b)) || directions.contains(&(b, a)) {
                continue;
            }
            if let Some(se) = induce_superedge(graph, partition, a, b)? {
                log::warn!(
                    "dropping {} edges between `{}` and `{}`: no superedge direction declared",
                    se.edges().len(),
                    name(a),
                    name(b)
                );
                dropped.push(DroppedEdges {
                    between: (a, b),
                    count: se.edges().len(),
                });
            }
        }
    }

    Ok(Supergraph {
        category_names: partition.names().to_vec(),
        label_names: graph.label_names().to_vec(),
        supervertices,
        superedges,
        parents_of,
        task,
        dropped,
    })
}

/// Returns one directed cycle (first node not repeated) if any exists.
fn find_cycle(n: usize, edges: &BTreeSet<(CategoryId, CategoryId)>) -> Option<Vec<CategoryId>> {
    let mut indeg = vec![0usize; n];
    for &(_, c) in edges {
        indeg[c.0] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&c| indeg[c] == 0).collect();
    let mut removed = vec![false; n];
    while let Some(v) = ready.pop() {
        removed[v] = true;
        for &(p, c) in edges {
            if p.0 == v {
                indeg[c.0] -= 1;
                if indeg[c.0] == 0 {
                    ready.push(c.0);
                }
            }
        }
    }
    let start = (0..n).find(|&v| !removed[v])?;
    // Every remaining node has a remaining predecessor; walk back until a repeat.
    let mut seen = vec![None; n];
    let mut path = Vec::new();
    let mut v = start;
    loop {
        if let Some(pos) = seen[v] {
            let mut cycle: Vec<CategoryId> = path[pos..].iter().map(|&x| CategoryId(x)).collect();
            cycle.reverse();
            return Some(cycle);
        }
        seen[v] = Some(path.len());
        path.push(v);
        v = edges
            .iter()
            .find(|(p, c)| c.0 == v && !removed[p.0])
            .map(|(p, _)| p.0)
            .expect("remaining node has a remaining predecessor");
    }
}

/// Kahn's algorithm, always taking the smallest ready category id.
pub fn topological_order(sg: &Supergraph) -> TopoSchedule {
    let n = sg.num_supervertices();
    let mut indeg: Vec<usize> = sg.parents_of.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<CategoryId> = (0..n)
        .map(CategoryId)
        .filter(|c| indeg[c.0] == 0)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(c) = ready.pop_first() {
        order.push(c);
        for child in sg.children_of(c) {
            indeg[child.0] -= 1;
            if indeg[child.0] == 0 {
                ready.insert(child);
            }
        }
    }
    debug_assert_eq!(order.len(), n, "supergraph is acyclic");
    TopoSchedule { order }
}

impl Supergraph {
    pub fn num_supervertices(&self) -> usize {
        self.supervertices.len()
    }

    pub fn num_superedges(&self) -> usize {
        self.superedges.len()
    }

    pub fn supervertex(&self, c: CategoryId) -> &SupervertexGraph {
        &self.supervertices[c.0]
    }

    pub fn supervertices(&self) -> &[SupervertexGraph] {
        &self.supervertices
    }

    pub fn superedge(&self, parent: CategoryId, child: CategoryId) -> Option<&SuperedgeGraph> {
        self.superedges.get(&(parent, child))
    }

    pub fn superedges(&self) -> impl Iterator<Item = &SuperedgeGraph> {
        self.superedges.values()
    }

    /// Parent supervertices of `c`, ascending.
    pub fn parents_of(&self, c: CategoryId) -> &[CategoryId] {
        &self.parents_of[c.0]
    }

    pub fn children_of(&self, c: CategoryId) -> Vec<CategoryId> {
        self.superedges
            .keys()
            .filter(|(p, _)| *p == c)
            .map(|&(_, ch)| ch)
            .collect()
    }

    pub fn is_root(&self, c: CategoryId) -> bool {
        self.parents_of[c.0].is_empty()
    }

    pub fn task(&self) -> CategoryId {
        self.task
    }

    pub fn category_name(&self, c: CategoryId) -> &str {
        &self.category_names[c.0]
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn category_by_name(&self, name: &str) -> Option<CategoryId> {
        self.category_names.iter().position(|n| n == name).map(CategoryId)
    }

    pub fn label_name(&self, l: LabelId) -> &str {
        &self.label_names[l.0]
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn dropped_edges(&self) -> &[DroppedEdges] {
        &self.dropped
    }

    /// Copy with supervertex `c` replaced, e.g. by one with edges withheld.
    pub fn with_supervertex(&self, c: CategoryId, sv: SupervertexGraph) -> Self {
        let mut out = self.clone();
        out.supervertices[c.0] = sv;
        out
    }
}
