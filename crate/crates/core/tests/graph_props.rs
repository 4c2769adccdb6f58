use ginit::graph::{build_graph, circular_ladder, normalize, sbm_generate, spectral_gap, Graph, Normalization};
use ginit::linalg::{jacobi_eigh, RngStream};
use proptest::prelude::*;

fn random_graph(seed: u64, n: usize, p: f64) -> Graph {
    let mut rng = RngStream::new(seed, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.bernoulli(p) {
                edges.push((u, v, 1.0));
            }
        }
    }
    build_graph(n, &edges).unwrap()
}

fn random_permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    RngStream::new(seed, 9).shuffle(&mut p);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_spectrum_in_unit_interval(seed in any::<u64>(), n in 1usize..40, p in 0.0f64..0.5) {
        let g = random_graph(seed, n, p);
        let na = normalize(&g, Normalization::Symmetric).unwrap();
        let e = jacobi_eigh(&na.matrix.to_dense(), 1e-10).unwrap();
        prop_assert!(e.values.iter().all(|&l| (-1.0 - 1e-10..=1.0 + 1e-10).contains(&l)));
        prop_assert!((e.values.last().unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_gap_ignores_relabeling(seed in any::<u64>(), n in 2usize..30) {
        let g = random_graph(seed, n, 0.3);
        let h = g.relabel(&random_permutation(seed, n)).unwrap();
        let a = spectral_gap(&normalize(&g, Normalization::Symmetric).unwrap());
        let b = spectral_gap(&normalize(&h, Normalization::Symmetric).unwrap());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn row_normalized_rows_sum_to_one(seed in any::<u64>(), c in 1usize..5, npc in 1usize..20, p_in in 0.31f64..1.0, p_out in 0.0f64..0.3) {
        let mut rng = RngStream::new(seed, 0);
        let (g, _, _) = sbm_generate(&mut rng, c, npc, p_in, p_out, c, 0.1).unwrap();
        let na = normalize(&g, Normalization::Row).unwrap();
        for s in na.matrix.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn ladder_is_three_regular() {
    let g = circular_ladder(30).unwrap();
    assert_eq!(g.num_nodes(), 60);
    assert!((0..60).all(|i| g.neighbors(i).count() == 3));
}

#[test]
fn two_disjoint_triangles() {
    let mut rng = RngStream::new(0, 0);
    let (g, _, labels) = sbm_generate(&mut rng, 2, 3, 1.0, 0.0, 2, 0.0).unwrap();
    assert_eq!(g.num_edges(), 6);
    assert_eq!(g.components().1, 2);
    assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
}
