use proptest::prelude::*;
use slate_core::graph::{load_edge_list, write_edge_list, GraphMeta};
use slate_core::spectral::dense::symmetric_eigen;
use slate_core::spectral::{canonicalize_signs, normalized_laplacian, smallest_eigenpairs, EigenOptions};
use slate_core::supra::{build_supra, RowKind};
use slate_core::train::{auc, average_precision};
use slate_core::{DynamicGraph, SupraConfig};

/// Random edge lists over `n` nodes and `t` snapshots.
fn dtdg(max_n: usize, max_t: usize) -> impl Strategy<Value = DynamicGraph> {
    (3..=max_n, 1..=max_t).prop_flat_map(|(n, t)| {
        let edge = (0..n, 0..n).prop_filter_map("self-loop", |(u, v)| (u != v).then_some((u.min(v), u.max(v))));
        prop::collection::vec(prop::collection::vec(edge, 1..=2 * n), t)
            .prop_map(move |lists| DynamicGraph::from_edge_lists(n, &lists).unwrap())
    })
}

fn fallback() -> SupraConfig {
    SupraConfig { vn_fallback_link: true }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn supra_structure(g in dtdg(12, 4)) {
        let t = g.num_snapshots();
        let window = g.window_of(t - 1, t);
        let snaps = g.window_snapshots(&window);
        let sg = build_supra(snaps, window, &fallback()).unwrap();

        let expected: usize = snaps.iter().map(|s| s.active_count() + 1).sum();
        prop_assert_eq!(sg.size(), expected);
        prop_assert!(sg.verify_connected());

        // the index map is a bijection onto the node rows
        let mut hit = vec![false; sg.size()];
        for (tau, s) in snaps.iter().enumerate() {
            for u in 0..g.num_nodes() {
                match sg.row_of(u, tau) {
                    Some(r) => {
                        prop_assert!(s.degree(u) > 0);
                        prop_assert_eq!(sg.rows()[r], RowKind::Node { node: u, tau });
                        prop_assert!(!hit[r]);
                        hit[r] = true;
                    }
                    None => prop_assert_eq!(s.degree(u), 0),
                }
            }
        }
        prop_assert_eq!(hit.iter().filter(|&&h| h).count(), sg.size() - t);

        for r in 0..sg.size() {
            for &c in sg.neighbors(r) {
                match (sg.rows()[r], sg.rows()[c]) {
                    (RowKind::Virtual { tau: a }, RowKind::Virtual { tau: b }) => {
                        // only the fallback link across a gap may join two virtual nodes
                        let (lo, hi) = (a.min(b), a.max(b));
                        prop_assert_eq!(hi, lo + 1);
                        let shared = (0..g.num_nodes()).any(|u| snaps[lo].degree(u) > 0 && snaps[hi].degree(u) > 0);
                        prop_assert!(!shared);
                    }
                    (RowKind::Node { node: u, tau: a }, RowKind::Node { node: v, tau: b }) if a != b => {
                        prop_assert_eq!(u, v);
                        prop_assert_eq!(a.abs_diff(b), 1);
                    }
                    (RowKind::Node { node: u, tau: a }, RowKind::Node { node: v, .. }) => {
                        prop_assert!(snaps[a].has_edge(u, v));
                    }
                    (RowKind::Node { tau: a, .. }, RowKind::Virtual { tau: b })
                    | (RowKind::Virtual { tau: b }, RowKind::Node { tau: a, .. }) => prop_assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn edge_list_round_trip(g in dtdg(15, 5)) {
        let meta = GraphMeta::of("p", &g);
        let back = load_edge_list(write_edge_list(&g).as_bytes(), meta.format()).unwrap().graph;
        prop_assert_eq!(back, g);
    }

    #[test]
    fn sign_canonicalization_is_idempotent(
        rows in 1usize..8,
        cols in 1usize..4,
        seed in prop::collection::vec(-3i32..=3, 32),
    ) {
        let mut v: Vec<f64> = (0..rows * cols).map(|i| seed[i % seed.len()] as f64 * 0.5).collect();
        canonicalize_signs(&mut v, rows, cols);
        let once = v.clone();
        canonicalize_signs(&mut v, rows, cols);
        prop_assert_eq!(&v, &once);
        // flipping any column first changes nothing after canonicalization
        let mut flipped = once.clone();
        for r in 0..rows {
            flipped[r * cols] = -flipped[r * cols];
        }
        canonicalize_signs(&mut flipped, rows, cols);
        prop_assert_eq!(flipped, once);
    }

    #[test]
    fn spectrum_ignores_node_relabeling(g in dtdg(10, 3), shift in 1usize..10) {
        let n = g.num_nodes();
        let perm = |u: usize| (u + shift) % n;
        let lists: Vec<Vec<(usize, usize)>> = g
            .snapshots()
            .iter()
            .map(|s| s.edges().iter().map(|&(a, b)| (perm(a).min(perm(b)), perm(a).max(perm(b)))).collect())
            .collect();
        let h = DynamicGraph::from_edge_lists(n, &lists).unwrap();
        let t = g.num_snapshots();
        let spectrum = |g: &DynamicGraph| {
            let window = g.window_of(t - 1, t);
            let sg = build_supra(g.window_snapshots(&window), window, &fallback()).unwrap();
            let l = normalized_laplacian::<f64>(&sg).unwrap();
            symmetric_eigen(&l.to_dense(), sg.size()).0
        };
        for (a, b) in spectrum(&g).iter().zip(spectrum(&h)) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn laplacian_spectrum_in_unit_band(g in dtdg(12, 4)) {
        let t = g.num_snapshots();
        let window = g.window_of(t - 1, t);
        let sg = build_supra(g.window_snapshots(&window), window, &fallback()).unwrap();
        let l = normalized_laplacian::<f64>(&sg).unwrap();
        let k = 2.min(sg.size() - 1);
        let basis = smallest_eigenpairs(&l, k, &EigenOptions::default()).unwrap();
        prop_assert!(basis.lambda0().abs() < 1e-8);
        for &v in basis.eigenvalues() {
            prop_assert!(v > 1e-8 && v <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn reversed_scores_complement_auc(
        scores in prop::collection::vec(0u8..6, 2..40),
        labels in prop::collection::vec(any::<bool>(), 40),
    ) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = auc(&s, labels).unwrap();
        prop_assert!((a + auc(&neg, labels).unwrap() - 1.0).abs() < 1e-12);
        let ap = average_precision(&s, labels).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }
}
