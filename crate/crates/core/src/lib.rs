//! Heterogeneous graph representation learning over supergraphs.
//!
//! A typed, labelled graph is split into supervertices (one per node-type
//! category) joined by directed superedges. Node embeddings are learned one
//! supervertex at a time in topological order, each supervertex aggregating
//! the embeddings of its parents before running relational convolutions over
//! its own edges. The embeddings of the task supervertex feed a DistMult
//! link predictor or a softmax node classifier.

pub mod graph;
pub mod supergraph;
pub mod tensor;
pub mod encoder;
pub mod metrics;
pub mod heads;
pub mod harness;
