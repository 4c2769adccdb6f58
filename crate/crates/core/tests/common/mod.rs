#![allow(dead_code)]

use ginit::graph::{build_graph, normalize, Graph, Normalization, NormalizedAdjacency};
use ginit::init::InitScheme;
use ginit::linalg::{sample_gaussian, DenseMatrix, RngStream};
use ginit::model::{cross_entropy, GraphBatch, LayerKind, LayerSpec, ModelConfig, ModelState, Task};

pub const FD_STEP: f64 = 1e-5;

/// A random graph with a model and parameters to differentiate.
pub struct Instance {
    pub graph: Graph,
    pub na: NormalizedAdjacency,
    pub config: ModelConfig,
    pub state: ModelState,
    pub x0: DenseMatrix,
    pub labels: Vec<i64>,
    pub mask: Vec<bool>,
    pub batch: Option<GraphBatch>,
    pub kind: &'static str,
}

pub fn random_graph(rng: &mut RngStream, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.bernoulli(p) {
                edges.push((u, v, 0.5 + rng.next_f64()));
            }
        }
    }
    build_graph(n, &edges).unwrap()
}

fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

/// Instance `case` of the gradient-check family. Cases cycle through a
/// plain GCN, a GCNII stack, all-nonzero coefficients, graph
/// classification and bias-free all-nonzero layers.
pub fn random_instance(seed: u64, case: usize) -> Instance {
    let mut rng = RngStream::new(seed, case as u64);
    let n = 3 + rng.below(8);
    let graph = random_graph(&mut rng, n, 0.4);
    let width = 2 + rng.below(3);
    let classes = 2 + rng.below(2);
    let depth = 1 + rng.below(4);
    let init = InitScheme::KaimingNormal;
    let (kind, mut config) = match case % 5 {
        0 => ("gcn", ModelConfig::gcn(width, width + 1, classes, depth, init)),
        1 => ("gcnii", ModelConfig::gcnii(width, width, classes, depth.max(3) - 2, 0.5, init)),
        2 | 4 => {
            let mut layers = Vec::new();
            for l in 0..depth {
                let out = if l + 1 == depth { classes.max(width) } else { width };
                let spec = LayerSpec::gcn(width, out);
                let eps = if out == width { uniform(&mut rng, 0.1, 0.6) } else { 0.0 };
                layers.push(spec.with_coefficients(
                    uniform(&mut rng, 0.3, 1.2),
                    uniform(&mut rng, 0.1, 0.5),
                    uniform(&mut rng, 0.1, 0.5),
                    uniform(&mut rng, 0.3, 1.0),
                    eps,
                ));
            }
            if case % 5 == 4 {
                for l in &mut layers {
                    l.has_bias = false;
                }
            }
            let classes_out = layers.last().unwrap().width_out;
            let mut cfg = ModelConfig::gcn(width, width, classes_out, depth, init);
            cfg.layers = layers;
            ("coefficients", cfg)
        }
        _ => ("graph", ModelConfig::gcn_graph(width, width + 1, classes, depth.min(3), init)),
    };
    config.l2_penalty = uniform(&mut rng, 0.0, 1e-2);
    config.validate().unwrap();
    let classes = config.num_classes();

    let x0 = sample_gaussian(&mut rng, n, width, 0.0, 1.0).unwrap();
    let weights: Vec<DenseMatrix> = config
        .layers
        .iter()
        .map(|l| sample_gaussian(&mut rng, l.width_in, l.width_out, 0.0, 0.8).unwrap())
        .collect();
    let biases: Vec<Vec<f64>> = config
        .layers
        .iter()
        .map(|l| {
            if l.has_bias {
                (0..l.width_out).map(|_| 0.3 * rng.normal()).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let state = ModelState::from_parameters(&config, weights, biases).unwrap();

    let (batch, rows) = if config.task == Task::GraphClassification {
        // Split the nodes into two graphs; the edges between them do not
        // matter to the gradient check.
        let cut = n / 2;
        let assignment = (0..n).map(|i| usize::from(i >= cut)).collect();
        (Some(GraphBatch::new(assignment, 2).unwrap()), 2)
    } else {
        (None, n)
    };
    let labels: Vec<i64> = (0..rows).map(|_| rng.below(classes) as i64).collect();
    let mut mask: Vec<bool> = (0..rows).map(|_| rng.bernoulli(0.7)).collect();
    mask[0] = true;
    let na = normalize(&graph, Normalization::Symmetric).unwrap();
    Instance {
        graph,
        na,
        config,
        state,
        x0,
        labels,
        mask,
        batch,
        kind,
    }
}

/// Loss computed directly from a forward pass.
pub fn loss_value(inst: &Instance, state: &mut ModelState) -> f64 {
    let logits = state.forward(&inst.config, &inst.na, &inst.x0, inst.batch.as_ref()).unwrap();
    let (ce, _) = cross_entropy(&logits, &inst.labels, &inst.mask).unwrap();
    let l2: f64 = state.weights.iter().map(|w| w.sum_of_squares()).sum();
    ce + 0.5 * inst.config.l2_penalty * l2
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative difference between analytic and central-difference
/// gradients over every weight and bias entry.
pub fn max_gradient_error(inst: &Instance) -> f64 {
    let mut state = inst.state.clone();
    state.forward(&inst.config, &inst.na, &inst.x0, inst.batch.as_ref()).unwrap();
    let (_, grads) = state
        .loss_and_grad(&inst.config, &inst.na, &inst.labels, &inst.mask)
        .unwrap();
    let mut worst = 0.0f64;
    for l in 0..inst.config.depth() {
        for idx in 0..state.weights[l].as_slice().len() {
            let orig = state.weights[l].as_slice()[idx];
            state.weights[l].as_mut_slice()[idx] = orig + FD_STEP;
            let up = loss_value(inst, &mut state);
            state.weights[l].as_mut_slice()[idx] = orig - FD_STEP;
            let down = loss_value(inst, &mut state);
            state.weights[l].as_mut_slice()[idx] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.weights[l].as_slice()[idx], numeric));
        }
        for idx in 0..state.biases[l].len() {
            let orig = state.biases[l][idx];
            state.biases[l][idx] = orig + FD_STEP;
            let up = loss_value(inst, &mut state);
            state.biases[l][idx] = orig - FD_STEP;
            let down = loss_value(inst, &mut state);
            state.biases[l][idx] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads.biases[l][idx], numeric));
        }
    }
    worst
}

pub fn uses_kind(config: &ModelConfig, kind: LayerKind) -> bool {
    config.layers.iter().any(|l| l.kind == kind)
}
