mod common;

use common::{max_gradient_error, random_instance};

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut kinds = std::collections::BTreeSet::new();
    for case in 0..20 {
        let inst = random_instance(7, case);
        kinds.insert(inst.kind);
        let err = max_gradient_error(&inst);
        assert!(err <= 1e-5, "case {case} ({}): relative error {err:e}", inst.kind);
    }
    assert_eq!(kinds.len(), 4);
}

#[test]
fn l2_only_instance_gradient_is_lambda_w() {
    let mut inst = random_instance(11, 0);
    inst.mask.iter_mut().for_each(|m| *m = false);
    inst.config.l2_penalty = 0.25;
    let mut state = inst.state.clone();
    state.forward(&inst.config, &inst.na, &inst.x0, None).unwrap();
    let (_, g) = state.loss_and_grad(&inst.config, &inst.na, &inst.labels, &inst.mask).unwrap();
    for (gw, w) in g.weights.iter().zip(&inst.state.weights) {
        for (a, b) in gw.as_slice().iter().zip(w.as_slice()) {
            assert!((a - 0.25 * b).abs() < 1e-15);
        }
    }
}

mod prop {
    use super::common::{max_gradient_error, random_instance};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn gradient_check_random(seed in 0u64..10_000, case in 0usize..5) {
            let inst = random_instance(seed, case);
            let err = max_gradient_error(&inst);
            prop_assert!(err <= 1e-5, "{} relative error {:e}", inst.kind, err);
        }
    }
}
