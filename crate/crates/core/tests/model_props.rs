mod common;

use ginit::datasets::random_masks;
use ginit::graph::{build_graph, normalize, sbm_generate, Graph, Normalization};
use ginit::init::InitScheme;
use ginit::linalg::{sample_gaussian, DenseMatrix, RngStream};
use ginit::model::{train, GraphBatch, LayerSpec, Metric, ModelConfig, ModelState};
use proptest::prelude::*;

fn permute_rows(x: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for (i, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(x.row(i));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_input_gives_zero_preactivations(seed in any::<u64>(), n in 1usize..12, depth in 1usize..6) {
        let g = common::random_graph(&mut RngStream::new(seed, 0), n, 0.3);
        let na = normalize(&g, Normalization::Symmetric).unwrap();
        let cfg = ModelConfig::gcn(4, 8, 3, depth, InitScheme::GInit { d: 2.0 });
        let mut state = ModelState::new(&cfg, &RngStream::new(seed, 1)).unwrap();
        prop_assert!(state.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        state.forward(&cfg, &na, &DenseMatrix::zeros(n, 4), None).unwrap();
        let cache = state.cache().unwrap();
        prop_assert!(cache.preactivations.iter().all(|y| y.max_abs() == 0.0));
    }

    #[test]
    fn relabeling_permutes_logits(seed in any::<u64>(), case in 0usize..5) {
        let inst = common::random_instance(seed, case);
        prop_assume!(inst.batch.is_none());
        let n = inst.graph.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        RngStream::new(seed, 5).shuffle(&mut perm);
        let h = inst.graph.relabel(&perm).unwrap();
        let na_h = normalize(&h, Normalization::Symmetric).unwrap();
        let mut s = inst.state.clone();
        let a = s.forward(&inst.config, &inst.na, &inst.x0, None).unwrap();
        let b = s.forward(&inst.config, &na_h, &permute_rows(&inst.x0, &perm), None).unwrap();
        let pa = permute_rows(&a, &perm);
        for (u, v) in pa.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn weight_free_layers_ignore_w(seed in any::<u64>(), n in 1usize..12, depth in 1usize..5) {
        let mut rng = RngStream::new(seed, 0);
        let g = common::random_graph(&mut rng, n, 0.4);
        let na = normalize(&g, Normalization::Symmetric).unwrap();
        let mut cfg = ModelConfig::gcn(5, 5, 5, depth, InitScheme::KaimingNormal);
        for l in &mut cfg.layers {
            *l = LayerSpec::gcn(5, 5).with_coefficients(1.0, 0.0, 0.0, 0.0, 1.0);
        }
        let x0 = sample_gaussian(&mut rng, n, 5, 0.0, 1.0).unwrap();
        let mut a = ModelState::new(&cfg, &RngStream::new(seed, 1)).unwrap();
        let mut b = ModelState::new(&cfg, &RngStream::new(seed, 2)).unwrap();
        prop_assert_ne!(a.weights[0].as_slice(), b.weights[0].as_slice());
        let ya = a.forward(&cfg, &na, &x0, None).unwrap();
        let yb = b.forward(&cfg, &na, &x0, None).unwrap();
        prop_assert_eq!(ya.as_slice(), yb.as_slice());
    }

    #[test]
    fn mean_readout_ignores_duplication(seed in any::<u64>(), n in 1usize..10, convs in 0usize..3) {
        let mut rng = RngStream::new(seed, 0);
        let g = common::random_graph(&mut rng, n, 0.4);
        let (double, _) = Graph::disjoint_union(&[&g, &g]).unwrap();
        let x0 = sample_gaussian(&mut rng, n, 3, 0.0, 1.0).unwrap();
        let x2 = DenseMatrix::from_fn(2 * n, 3, |i, j| x0[(i % n, j)]);
        let cfg = ModelConfig::gcn_graph(3, 6, 2, convs, InitScheme::XavierNormal);
        let mut state = ModelState::new(&cfg, &RngStream::new(seed, 1)).unwrap();
        let single = state
            .forward(&cfg, &normalize(&g, Normalization::Symmetric).unwrap(), &x0, Some(&GraphBatch::from_sizes(&[n]).unwrap()))
            .unwrap();
        let dup = state
            .forward(&cfg, &normalize(&double, Normalization::Symmetric).unwrap(), &x2, Some(&GraphBatch::from_sizes(&[2 * n]).unwrap()))
            .unwrap();
        for (u, v) in single.as_slice().iter().zip(dup.as_slice()) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
    }
}

#[test]
fn isolated_node_identity_pipeline() {
    let g = build_graph(1, &[]).unwrap();
    let na = normalize(&g, Normalization::Symmetric).unwrap();
    let cfg = ModelConfig::gcn(3, 3, 3, 1, InitScheme::Identity);
    let mut state = ModelState::new(&cfg, &RngStream::new(0, 0)).unwrap();
    let x0 = DenseMatrix::from_rows(&[vec![0.5, -1.0, 2.0]]).unwrap();
    assert_eq!(state.forward(&cfg, &na, &x0, None).unwrap(), x0);
}

fn separable_sbm(seed: u64) -> (Graph, DenseMatrix, Vec<i64>, ginit::model::Masks) {
    let mut rng = RngStream::new(seed, 0);
    let (g, x, labels) = sbm_generate(&mut rng, 2, 20, 1.0, 0.0, 4, 0.0).unwrap();
    let masks = random_masks(40, 0.2, 0.2, &mut rng).unwrap();
    (g, x, labels, masks)
}

#[test]
fn separable_sbm_is_learned() {
    for scheme in [InitScheme::XavierNormal, InitScheme::KaimingUniform, InitScheme::GInit { d: 2.0 }] {
        let (g, x, labels, masks) = separable_sbm(3);
        let na = normalize(&g, Normalization::Symmetric).unwrap();
        let mut cfg = ModelConfig::gcn(4, 16, 2, 2, scheme);
        cfg.learning_rate = 1e-2;
        let (report, _) = train(&cfg, &na, &x, None, &labels, &masks, Metric::Accuracy, &RngStream::new(1, 1)).unwrap();
        assert_eq!(report.final_test, Some(1.0), "{scheme}");
    }
}

#[test]
fn zero_epochs_reports_init_only() {
    let (g, x, labels, masks) = separable_sbm(4);
    let na = normalize(&g, Normalization::Symmetric).unwrap();
    let mut cfg = ModelConfig::gcn(4, 8, 2, 2, InitScheme::KaimingNormal);
    cfg.epochs = 0;
    let rng = RngStream::new(2, 2);
    let (report, state) = train(&cfg, &na, &x, None, &labels, &masks, Metric::Accuracy, &rng).unwrap();
    assert_eq!(report.epochs.len(), 1);
    assert_eq!(report.best_epoch, 0);
    assert_eq!(state.weights, ModelState::new(&cfg, &rng).unwrap().weights);
}

#[test]
fn training_is_deterministic() {
    let (g, x, labels, masks) = separable_sbm(5);
    let na = normalize(&g, Normalization::Symmetric).unwrap();
    let mut cfg = ModelConfig::gcn(4, 8, 2, 3, InitScheme::GInit { d: 2.0 });
    cfg.epochs = 20;
    let run = || train(&cfg, &na, &x, None, &labels, &masks, Metric::Accuracy, &RngStream::new(7, 3)).unwrap();
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    assert_eq!(sa.weights, sb.weights);
}
