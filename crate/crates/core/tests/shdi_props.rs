mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use psnl_core::ShdiMatrix;

fn arb_entries() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (1usize..100).prop_flat_map(|n| {
        let entry = (0..n, 0..n, 0.0f64..10.0);
        (Just(n), prop::collection::vec(entry, 0..300))
    })
}

/// Keeps the first weight of every unordered pair, in both orientations.
fn dedup(entries: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &(a, b, y) in entries {
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            out.push((a, b, y));
            if a != b {
                out.push((b, a, y));
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn adjacency_matches_edge_set((n, raw) in arb_entries()) {
        let entries = dedup(&raw);
        let mat = ShdiMatrix::from_edges(n, entries.iter().copied()).unwrap();
        let canonical: BTreeSet<(usize, usize)> =
            entries.iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect();
        prop_assert_eq!(mat.edge_count(), canonical.len());
        for e in mat.edges() {
            prop_assert!(e.m <= e.n && e.n < n && e.y >= 0.0);
        }
        for u in 0..n {
            let expected: Vec<usize> = (0..n)
                .filter(|&v| canonical.contains(&(u.min(v), u.max(v))))
                .collect();
            let got: Vec<usize> = mat.neighbors(u).unwrap().iter().map(|nb| nb.node).collect();
            prop_assert_eq!(&got, &expected);
            for nb in mat.neighbors(u).unwrap() {
                let back = mat.neighbors(nb.node).unwrap().iter().find(|x| x.node == u).unwrap();
                prop_assert_eq!(back.weight, nb.weight);
                prop_assert_eq!(mat.weight(u, nb.node), Some(nb.weight));
            }
        }
        prop_assert!(mat.neighbors(n).is_err());
    }

    #[test]
    fn folds_partition_the_edges((n, raw) in arb_entries(), k in 4usize..12, seed in any::<u64>()) {
        let mat = ShdiMatrix::from_edges(n, dedup(&raw)).unwrap();
        prop_assume!(mat.edge_count() >= k);
        let split = mat.kfold_split(k, seed).unwrap();
        let sizes: Vec<usize> = split.folds().iter().map(Vec::len).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), mat.edge_count());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen = vec![false; mat.edge_count()];
        for (f, fold) in split.folds().iter().enumerate() {
            for &e in fold {
                prop_assert!(!seen[e]);
                prop_assert_eq!(split.assignment()[e], f);
                seen[e] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        for r in 0..k {
            let rot = split.rotation(r).unwrap();
            let (tr, va, te): (BTreeSet<_>, BTreeSet<_>, BTreeSet<_>) = (
                rot.train.iter().copied().collect(),
                rot.validation.iter().copied().collect(),
                rot.test.iter().copied().collect(),
            );
            prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
            prop_assert_eq!(tr.len() + va.len() + te.len(), mat.edge_count());
        }
        prop_assert_eq!(mat.kfold_split(k, seed).unwrap(), split);
    }
}

#[test]
fn random_twenty_node_degrees() {
    let mat = common::random_matrix(20, 0.3, 17);
    for u in 0..20 {
        let brute = mat.edges().iter().filter(|e| e.m == u || e.n == u).count();
        assert_eq!(mat.neighbors(u).unwrap().len(), brute);
    }
}
