use std::fs;

use ginit::datasets::{cold_start, load_node_bundle, random_masks, save_node_bundle, NodeBundle};
use ginit::graph::sbm_generate;
use ginit::linalg::{DenseMatrix, RngStream};
use ginit::model::Masks;
use proptest::prelude::*;

fn random_bundle(seed: u64, c: usize, npc: usize) -> NodeBundle {
    let mut rng = RngStream::new(seed, 0);
    let (g, x, mut labels) = sbm_generate(&mut rng, c, npc, 0.5, 0.1, c + 1, 0.3).unwrap();
    let masks = random_masks(labels.len(), 0.3, 0.3, &mut rng).unwrap();
    // Unlabeled nodes outside every split.
    for i in 0..labels.len() {
        if !masks.train[i] && !masks.val[i] && !masks.test[i] {
            labels[i] = -1;
        }
    }
    NodeBundle::new(g, x, labels, masks).unwrap()
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn permute(b: &NodeBundle, perm: &[usize]) -> NodeBundle {
    let n = perm.len();
    let mut x = DenseMatrix::zeros(n, b.features.cols());
    let mut labels = vec![0; n];
    let mut m = Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    for (i, &p) in perm.iter().enumerate() {
        x.row_mut(p).copy_from_slice(b.features.row(i));
        labels[p] = b.labels[i];
        m.train[p] = b.masks.train[i];
        m.val[p] = b.masks.val[i];
        m.test[p] = b.masks.test[i];
    }
    NodeBundle::new(b.graph.relabel(perm).unwrap(), x, labels, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn save_load_save_is_byte_identical(seed in any::<u64>(), c in 1usize..4, npc in 1usize..12) {
        let b = random_bundle(seed, c, npc);
        let first = tempfile::tempdir().unwrap();
        let second = tempfile::tempdir().unwrap();
        save_node_bundle(&b, first.path()).unwrap();
        let loaded = load_node_bundle(first.path()).unwrap();
        prop_assert_eq!(&loaded.labels, &b.labels);
        prop_assert_eq!(&loaded.features, &b.features);
        save_node_bundle(&loaded, second.path()).unwrap();
        prop_assert_eq!(files(first.path()), files(second.path()));
    }

    #[test]
    fn cold_start_idempotent_and_equivariant(seed in any::<u64>(), c in 1usize..4, npc in 1usize..12) {
        let b = random_bundle(seed, c, npc);
        let once = cold_start(&b);
        prop_assert_eq!(&cold_start(&once).features, &once.features);
        let mut perm: Vec<usize> = (0..b.labels.len()).collect();
        RngStream::new(seed, 1).shuffle(&mut perm);
        let a = cold_start(&permute(&b, &perm));
        let p = permute(&once, &perm);
        prop_assert_eq!(&a.features, &p.features);
        prop_assert_eq!(a.graph.edges(), p.graph.edges());
    }
}
