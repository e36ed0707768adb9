mod common;

use common::*;
use gripnet::graph::CategoryId;
use gripnet::heads::distmult_score;
use gripnet::metrics::{rank_metrics, stratified_split, SplitSpec};
use gripnet::supergraph::topological_order;
use gripnet::tensor::{softmax_rows, LabelAdjacency, Matrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy(seed: u64) -> Toy {
    random_toy(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_node_lands_in_exactly_one_supervertex(seed in any::<u64>()) {
        let t = toy(seed);
        let mut seen = vec![0usize; t.graph.num_nodes()];
        for sv in t.sg.supervertices() {
            for &g in sv.nodes() {
                seen[g] += 1;
                prop_assert_eq!(t.partition.category_of(t.graph.type_of(g)), sv.category());
            }
        }
        prop_assert!(seen.iter().all(|&k| k == 1));
    }

    #[test]
    fn edges_are_conserved(seed in any::<u64>()) {
        let t = toy(seed);
        let internal: usize = t.sg.supervertices().iter().map(|sv| sv.edges().len()).sum();
        let cross: usize = t.sg.superedges().map(|se| se.edges().len()).sum();
        let dropped: usize = t.sg.dropped_edges().iter().map(|d| d.count).sum();
        prop_assert_eq!(internal + cross + dropped, t.graph.num_edges());
    }

    #[test]
    fn schedule_respects_every_superedge(seed in any::<u64>()) {
        let t = toy(seed);
        let schedule = topological_order(&t.sg);
        prop_assert_eq!(schedule.order.len(), t.sg.num_supervertices());
        for se in t.sg.superedges() {
            prop_assert!(schedule.position(se.parent()).unwrap() < schedule.position(se.child()).unwrap());
        }
        prop_assert_eq!(*schedule.order.last().unwrap(), t.sg.task());
        prop_assert!(t.sg.children_of(t.sg.task()).is_empty());
    }

    #[test]
    fn spmm_mean_matches_dense(seed in any::<u64>(), x in matrix(4, 3)) {
        let t = toy(seed);
        let sv = t.sg.supervertex(CategoryId(0));
        let rows = sv.len();
        let x = Matrix::from_vec(rows, 3, x.data()[..rows * 3].to_vec()).unwrap();
        let oracle = internal_adjacency(&t, 0);
        for &l in sv.labels() {
            let got = sv.adjacency(l).unwrap().spmm_mean(&x).unwrap();
            let want = mean_aggregate(&oracle[t.graph.label_name(l)], &dense_of(&x), 3);
            prop_assert!(max_abs_diff(&dense_of(&got), &want) <= 1e-12);
        }
    }

    #[test]
    fn empty_adjacency_aggregates_to_zero(x in matrix(3, 2)) {
        let adj = LabelAdjacency::from_pairs(3, 3, []).unwrap();
        prop_assert_eq!(adj.spmm_mean(&x).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn softmax_rows_are_distributions(x in matrix(5, 4)) {
        let p = softmax_rows(&x.scale(40.0));
        for r in 0..p.rows() {
            prop_assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn concat_then_split_is_identity(a in matrix(3, 2), b in matrix(3, 4)) {
        let joined = a.concat_cols(&b).unwrap();
        let (l, r) = joined.split_cols(2).unwrap();
        prop_assert_eq!(l, a);
        prop_assert_eq!(r, b);
    }

    #[test]
    fn distmult_is_symmetric(z in prop::collection::vec(-2.0f64..2.0, 12)) {
        let (zi, rest) = z.split_at(4);
        let (d, zj) = rest.split_at(4);
        prop_assert!((distmult_score(zi, d, zj) - distmult_score(zj, d, zi)).abs() <= 1e-12);
    }

    #[test]
    fn ranking_metrics_ignore_monotone_rescaling(
        scores in prop::collection::vec(-3.0f64..3.0, 2..60),
        flips in prop::collection::vec(any::<bool>(), 60),
    ) {
        let mut labels: Vec<bool> = flips[..scores.len()].to_vec();
        labels[0] = true;
        labels[1] = false;
        let before = rank_metrics(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
        let after = rank_metrics(&warped, &labels).unwrap();
        prop_assert!((before.auroc - after.auroc).abs() <= 1e-12);
        prop_assert!((before.auprc - after.auprc).abs() <= 1e-12);
        prop_assert!((before.ap50 - after.ap50).abs() <= 1e-12);
        prop_assert!((before.auroc - auroc_oracle(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn split_partitions_every_stratum(
        keys in prop::collection::vec(0u8..4, 1..80),
        fraction in 0.1f64..0.95,
        seed in any::<u64>(),
    ) {
        let spec = SplitSpec { train_fraction: fraction, seed };
        let (train, test) = stratified_split(&keys, &spec).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..keys.len()).collect::<Vec<_>>());
        for k in 0..4u8 {
            let n = keys.iter().filter(|&&x| x == k).count();
            let n_test = test.iter().filter(|&&i| keys[i] == k).count();
            if n > 0 {
                let exact = (1.0 - fraction) * n as f64;
                prop_assert!(n_test >= 1 && n_test <= n);
                prop_assert!(n_test == 1 || (n_test as f64 >= exact - 1e-6 && (n_test as f64) < exact + 1.0));
            }
        }
    }
}
