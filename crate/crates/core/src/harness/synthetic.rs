//! Planted-community synthetic datasets.
//!
//! Both modes build a root category and a leaf (task) category. Every node
//! belongs to one latent community; leaf nodes link to root nodes of their
//! own community, and within-category edges join nodes of the same
//! community. A `noise` fraction of the leaf-internal and cross edges is
//! replaced by uniformly random pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataPaths, EncoderSpec, PartitionSpec, RunConfig, SupergraphSpec, TaskKind, TaskSpec};
use super::HarnessError;
use crate::encoder::SupervertexConfig;
use crate::heads::TrainConfig;
use crate::metrics::SplitSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticMode {
    Lp,
    Nc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub mode: SyntheticMode,
    pub root_name: String,
    pub leaf_name: String,
    pub root_size: usize,
    pub leaf_size: usize,
    /// Planted communities; in node classification mode these are the classes.
    pub communities: usize,
    /// Leaf-internal edge labels.
    pub num_labels: usize,
    /// Leaf-internal edges per label.
    pub leaf_edges_per_label: usize,
    /// Root-internal edges (single label).
    pub root_edges: usize,
    /// Cross edges from each leaf node to root nodes.
    pub cross_per_leaf: usize,
    /// Fraction of leaf-internal and cross edges that are random, in `[0, 1)`.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 60 root and 40 leaf nodes, 3 leaf labels, 5% noise.
    pub fn default_lp() -> Self {
        Self {
            mode: SyntheticMode::Lp,
            root_name: "gene".into(),
            leaf_name: "drug".into(),
            root_size: 60,
            leaf_size: 40,
            communities: 8,
            num_labels: 3,
            leaf_edges_per_label: 78,
            root_edges: 180,
            cross_per_leaf: 5,
            noise: 0.05,
            seed: 1,
        }
    }

    /// 100 root nodes and 200 labelled leaf nodes in 4 classes.
    pub fn default_nc() -> Self {
        Self {
            mode: SyntheticMode::Nc,
            root_name: "paper".into(),
            leaf_name: "author".into(),
            root_size: 100,
            leaf_size: 200,
            communities: 4,
            num_labels: 1,
            leaf_edges_per_label: 400,
            root_edges: 200,
            cross_per_leaf: 2,
            noise: 0.05,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Synthetic(m));
        if self.root_size == 0 || self.leaf_size < 2 || self.communities == 0 || self.num_labels == 0 {
            return bad("sizes, communities and labels must be positive (leaf needs 2 nodes)".into());
        }
        if self.communities > self.root_size.min(self.leaf_size) {
            return bad(format!("{} communities do not fit the smaller category", self.communities));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        if self.root_name == self.leaf_name {
            return bad("root and leaf names must differ".into());
        }
        Ok(())
    }
}

/// Community of node `i` among `n` nodes: contiguous, near-equal blocks.
fn community(i: usize, n: usize, k: usize) -> usize {
    i * k / n
}

/// Unordered same-community pairs `(i, j)`, `i < j`.
fn within_pairs(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| community(i, n, k) == community(j, n, k))
        .collect()
}

/// `count` distinct pairs from `pool`, then a `noise` share of them swapped
/// for random non-self pairs not already present. Returns (edges, noisy).
fn planted_edges(
    pool: &[(usize, usize)],
    count: usize,
    noise: f64,
    random_pair: &mut dyn FnMut(&mut ChaCha8Rng) -> (usize, usize),
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>), HarnessError> {
    let n_noise = (noise * count as f64).round() as usize;
    let n_planted = count - n_noise;
    if n_planted > pool.len() {
        return Err(HarnessError::Synthetic(format!(
            "{what}: {n_planted} planted edges requested but only {} same-community pairs exist",
            pool.len()
        )));
    }
    let mut edges: Vec<(usize, usize)> = index::sample(rng, pool.len(), n_planted)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let mut seen: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    let mut noisy = Vec::with_capacity(n_noise);
    let mut attempts = 0;
    while noisy.len() < n_noise {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(HarnessError::Synthetic(format!("{what}: cannot place {n_noise} noise edges")));
        }
        let p = random_pair(rng);
        if seen.insert(p) {
            noisy.push(p);
        }
    }
    edges.extend_from_slice(&noisy);
    Ok((edges, noisy))
}

/// Writes `nodes.tsv`, `edges.tsv`, `truth.tsv`, `noise_edges.tsv`,
/// `labels.tsv` (node classification) and a ready-to-run `config.json`.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<RunConfig, HarnessError> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (nr, nl, k) = (spec.root_size, spec.leaf_size, spec.communities);
    let rname = |i: usize| format!("{}{i:03}", &spec.root_name[..1]);
    let lname = |i: usize| format!("{}{i:03}", &spec.leaf_name[..1]);

    let mut nodes = String::new();
    let mut truth = String::new();
    for i in 0..nr {
        writeln!(nodes, "{}\t{}", rname(i), spec.root_name).unwrap();
        writeln!(truth, "{}\t{}", rname(i), community(i, nr, k)).unwrap();
    }
    for i in 0..nl {
        writeln!(nodes, "{}\t{}", lname(i), spec.leaf_name).unwrap();
        writeln!(truth, "{}\t{}", lname(i), community(i, nl, k)).unwrap();
    }

    let mut edges = String::new();
    let mut noise_out = String::new();

    let leaf_pool = within_pairs(nl, k);
    let mut leaf_random = |rng: &mut ChaCha8Rng| loop {
        let (a, b) = (rng.gen_range(0..nl), rng.gen_range(0..nl));
        if a != b {
            break (a.min(b), a.max(b));
        }
    };
    for l in 0..spec.num_labels {
        let label = format!("{}_{}_{l}", spec.leaf_name, spec.leaf_name);
        let (es, noisy) = planted_edges(
            &leaf_pool,
            spec.leaf_edges_per_label,
            spec.noise,
            &mut leaf_random,
            &mut rng,
            &label,
        )?;
        for (a, b) in es {
            writeln!(edges, "{}\t{}\t{label}", lname(a), lname(b)).unwrap();
        }
        for (a, b) in noisy {
            writeln!(noise_out, "{}\t{}\t{label}", lname(a), lname(b)).unwrap();
        }
    }

    let root_label = format!("{}_{}", spec.root_name, spec.root_name);
    let root_pool = within_pairs(nr, k);
    let (es, _) = planted_edges(&root_pool, spec.root_edges, 0.0, &mut |_| unreachable!(), &mut rng, &root_label)?;
    for (a, b) in es {
        writeln!(edges, "{}\t{}\t{root_label}", rname(a), rname(b)).unwrap();
    }

    let cross_label = format!("{}_{}", spec.root_name, spec.leaf_name);
    let cross_pool: Vec<(usize, usize)> = (0..nr)
        .flat_map(|r| (0..nl).map(move |l| (r, l)))
        .filter(|&(r, l)| community(r, nr, k) == community(l, nl, k))
        .collect();
    let mut cross_random = |rng: &mut ChaCha8Rng| (rng.gen_range(0..nr), rng.gen_range(0..nl));
    let (es, noisy) = planted_edges(
        &cross_pool,
        spec.cross_per_leaf * nl,
        spec.noise,
        &mut cross_random,
        &mut rng,
        &cross_label,
    )?;
    for (r, l) in es {
        writeln!(edges, "{}\t{}\t{cross_label}", rname(r), lname(l)).unwrap();
    }
    for (r, l) in noisy {
        writeln!(noise_out, "{}\t{}\t{cross_label}", rname(r), lname(l)).unwrap();
    }

    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|source| HarnessError::Io { path, source })
    };
    write("nodes.tsv", &nodes)?;
    write("edges.tsv", &edges)?;
    write("truth.tsv", &truth)?;
    write("noise_edges.tsv", &noise_out)?;

    let labels = if spec.mode == SyntheticMode::Nc {
        let mut body = String::new();
        for i in 0..nl {
            writeln!(body, "{}\tclass_{}", lname(i), community(i, nl, k)).unwrap();
        }
        write("labels.tsv", &body)?;
        Some("labels.tsv".into())
    } else {
        None
    };

    let root_cfg = SupervertexConfig {
        internal_feature_dim: 32,
        sublayer_dims: vec![16, 16],
        ..Default::default()
    };
    let leaf_cfg = SupervertexConfig {
        internal_feature_dim: 32,
        external_dim: 16,
        sublayer_dims: vec![16],
        ..Default::default()
    };
    let partition: BTreeMap<String, String> = [&spec.root_name, &spec.leaf_name]
        .into_iter()
        .map(|n| (n.clone(), n.clone()))
        .collect();
    let cfg = RunConfig {
        data: DataPaths {
            nodes: "nodes.tsv".into(),
            edges: "edges.tsv".into(),
            labels,
        },
        partition: Some(PartitionSpec::Inline(partition)),
        supergraph: SupergraphSpec {
            directions: vec![(spec.root_name.clone(), spec.leaf_name.clone())],
            task: Some(spec.leaf_name.clone()),
        },
        symmetrize: true,
        encoder: EncoderSpec {
            default: leaf_cfg.clone(),
            supervertices: [(spec.root_name.clone(), root_cfg), (spec.leaf_name.clone(), leaf_cfg)]
                .into_iter()
                .collect(),
        },
        task: TaskSpec {
            kind: match spec.mode {
                SyntheticMode::Lp => TaskKind::Lp,
                SyntheticMode::Nc => TaskKind::Nc,
            },
            labels: Vec::new(),
        },
        training: TrainConfig {
            seed: spec.seed,
            ..Default::default()
        },
        split: SplitSpec {
            train_fraction: 0.9,
            seed: spec.seed,
        },
        output: "out".into(),
    };
    write("config.json", &cfg.to_json())?;
    log::info!("synthetic {:?} dataset written to {}", spec.mode, dir.display());
    RunConfig::from_json_str(&cfg.to_json(), dir)
}
