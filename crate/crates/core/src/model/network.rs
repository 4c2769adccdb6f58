use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::init::sample_weight;
use crate::linalg::{gemm, gemm_new, DenseMatrix, Op, RngStream};
use crate::model::{cross_entropy, LayerKind, ModelConfig, Task};

/// Node-to-graph assignment of a block-diagonal batch of graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
}

impl GraphBatch {
    pub fn new(assignment: Vec<usize>, num_graphs: usize) -> Result<Self> {
        let mut sizes = vec![0usize; num_graphs];
        for &g in &assignment {
            if g >= num_graphs {
                return Err(Error::param(format!("node assigned to graph {g} of {num_graphs}")));
            }
            sizes[g] += 1;
        }
        if let Some(g) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::param(format!("graph {g} has no nodes to pool")));
        }
        Ok(Self { assignment, sizes })
    }

    /// Consecutive blocks of the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let assignment = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
            .collect();
        Self::new(assignment, sizes.len())
    }

    pub fn num_graphs(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Mean of each graph's node rows.
    pub fn pool(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.rows() != self.assignment.len() {
            return Err(Error::shape("pooling input rows differ from batch node count"));
        }
        let mut out = DenseMatrix::zeros(self.num_graphs(), h.cols());
        for (i, &g) in self.assignment.iter().enumerate() {
            let w = 1.0 / self.sizes[g] as f64;
            for (o, x) in out.row_mut(g).iter_mut().zip(h.row(i)) {
                *o += w * x;
            }
        }
        Ok(out)
    }

    /// Adjoint of [`GraphBatch::pool`].
    fn unpool(&self, dp: &DenseMatrix, dh: &mut DenseMatrix) {
        for (i, &g) in self.assignment.iter().enumerate() {
            let w = 1.0 / self.sizes[g] as f64;
            for (o, x) in dh.row_mut(i).iter_mut().zip(dp.row(g)) {
                *o += w * x;
            }
        }
    }
}

/// Intermediates of the last forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `H^0 .. H^L`; `H^0` is the input and `H^L` the logits.
    pub activations: Vec<DenseMatrix>,
    /// Input to each layer's linear map: `a A_hat H + b H0 + c H_prev`,
    /// or the (pooled) input of a linear layer.
    pub aggregated: Vec<DenseMatrix>,
    /// Pre-activations `Y` of each layer.
    pub preactivations: Vec<DenseMatrix>,
    batch: Option<GraphBatch>,
    nodes: usize,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    /// Loss gradient with respect to each layer's aggregated input.
    pub aggregated: Vec<DenseMatrix>,
    /// Loss gradient with respect to `H^0 .. H^L`.
    pub activations: Vec<DenseMatrix>,
}

#[derive(Clone, Debug)]
pub struct ModelState {
    pub weights: Vec<DenseMatrix>,
    /// Empty for layers without bias.
    pub biases: Vec<Vec<f64>>,
    cache: Option<ForwardCache>,
}

impl ModelState {
    /// Fresh weights from the configured initializers; layer `l` draws from
    /// `rng.substream(l)`. Biases start at zero.
    pub fn new(config: &ModelConfig, rng: &RngStream) -> Result<Self> {
        config.validate()?;
        let mut weights = Vec::with_capacity(config.depth());
        let mut biases = Vec::with_capacity(config.depth());
        for (l, spec) in config.layers.iter().enumerate() {
            let mut stream = rng.substream(l as u64);
            weights.push(sample_weight(
                &mut stream,
                config.layer_init(l),
                spec.width_in,
                spec.width_out,
            )?);
            biases.push(if spec.has_bias { vec![0.0; spec.width_out] } else { Vec::new() });
        }
        Ok(Self {
            weights,
            biases,
            cache: None,
        })
    }

    pub fn from_parameters(config: &ModelConfig, weights: Vec<DenseMatrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.depth() || biases.len() != config.depth() {
            return Err(Error::shape("parameter count differs from layer count"));
        }
        for (l, spec) in config.layers.iter().enumerate() {
            if weights[l].shape() != (spec.width_in, spec.width_out) {
                return Err(Error::shape(format!("layer {l} weight has shape {:?}", weights[l].shape())));
            }
            let want = if spec.has_bias { spec.width_out } else { 0 };
            if biases[l].len() != want {
                return Err(Error::shape(format!("layer {l} bias has length {}", biases[l].len())));
            }
        }
        Ok(Self {
            weights,
            biases,
            cache: None,
        })
    }

    pub fn cache(&self) -> Option<&ForwardCache> {
        self.cache.as_ref()
    }

    pub fn take_cache(&mut self) -> Option<ForwardCache> {
        self.cache.take()
    }

    /// Runs every layer and caches the intermediates. Graph-classification
    /// models need `batch` and pool right before their final layer.
    pub fn forward(
        &mut self,
        config: &ModelConfig,
        na: &NormalizedAdjacency,
        x0: &DenseMatrix,
        batch: Option<&GraphBatch>,
    ) -> Result<DenseMatrix> {
        self.cache = None;
        let n = na.num_nodes();
        if x0.rows() != n {
            return Err(Error::shape(format!("features have {} rows for {n} nodes", x0.rows())));
        }
        if x0.cols() != config.input_width() {
            return Err(Error::shape(format!(
                "features have {} columns, model expects {}",
                x0.cols(),
                config.input_width()
            )));
        }
        let pooled = config.task == Task::GraphClassification;
        match (pooled, batch) {
            (true, None) => return Err(Error::param("graph classification needs a graph batch")),
            (true, Some(b)) if b.num_nodes() != n => {
                return Err(Error::shape("graph batch node count differs from the adjacency"));
            }
            _ => {}
        }
        let depth = config.depth();
        let base = config.residual_base();
        let mut activations = Vec::with_capacity(depth + 1);
        let mut aggregated = Vec::with_capacity(depth);
        let mut preactivations = Vec::with_capacity(depth);
        activations.push(x0.clone());

        for (l, spec) in config.layers.iter().enumerate() {
            let h = &activations[l];
            let last = l + 1 == depth;
            let z = match spec.kind {
                LayerKind::Linear if pooled && last => batch.expect("checked above").pool(h)?,
                LayerKind::Linear => h.clone(),
                LayerKind::Conv => {
                    let mut z = DenseMatrix::zeros(n, spec.width_in);
                    if spec.alpha != 0.0 {
                        na.matrix.spmm_acc(spec.alpha, h, &mut z)?;
                    }
                    if spec.beta != 0.0 {
                        z.axpy(spec.beta, &activations[base])?;
                    }
                    if spec.gamma != 0.0 && l > 0 {
                        z.axpy(spec.gamma, &activations[l - 1])?;
                    }
                    z
                }
            };
            let (delta, epsilon) = match spec.kind {
                LayerKind::Linear => (1.0, 0.0),
                LayerKind::Conv => (spec.delta, spec.epsilon),
            };
            let mut y = DenseMatrix::zeros(z.rows(), spec.width_out);
            if delta != 0.0 {
                gemm(delta, &z, Op::N, &self.weights[l], Op::N, 0.0, &mut y)
                    .map_err(|_| Error::NonFiniteActivation(l + 1))?;
            }
            if epsilon != 0.0 {
                y.axpy(epsilon, &z)?;
            }
            if spec.has_bias {
                y.add_row_vector(&self.biases[l])?;
            }
            if !y.is_finite() {
                return Err(Error::NonFiniteActivation(l + 1));
            }
            let next = if last { y.clone() } else { y.map(|v| v.max(0.0)) };
            aggregated.push(z);
            preactivations.push(y);
            activations.push(next);
        }
        let logits = activations[depth].clone();
        self.cache = Some(ForwardCache {
            activations,
            aggregated,
            preactivations,
            batch: batch.filter(|_| pooled).cloned(),
            nodes: n,
        });
        Ok(logits)
    }

    /// Reverse accumulation from `dlogits` through the cached pass. Consumes
    /// the cache. The L2 term is not included.
    pub fn backward(
        &mut self,
        config: &ModelConfig,
        na: &NormalizedAdjacency,
        dlogits: &DenseMatrix,
    ) -> Result<Gradients> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        if cache.nodes != na.num_nodes() {
            return Err(Error::shape("adjacency differs from the cached forward pass"));
        }
        let depth = config.depth();
        if dlogits.shape() != cache.activations[depth].shape() {
            return Err(Error::shape("logit gradient shape differs from the logits"));
        }
        let base = config.residual_base();
        let transpose = na.matrix.transpose();
        let mut d_act: Vec<DenseMatrix> = cache
            .activations
            .iter()
            .map(|h| DenseMatrix::zeros(h.rows(), h.cols()))
            .collect();
        d_act[depth] = dlogits.clone();
        let mut d_weights = vec![DenseMatrix::zeros(0, 0); depth];
        let mut d_biases = vec![Vec::new(); depth];
        let mut d_agg = vec![DenseMatrix::zeros(0, 0); depth];

        for l in (0..depth).rev() {
            let spec = &config.layers[l];
            let y = &cache.preactivations[l];
            let mut dy = d_act[l + 1].clone();
            if l + 1 < depth {
                for (g, &v) in dy.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    if v <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            if spec.has_bias {
                d_biases[l] = dy.column_sums();
            }
            let z = &cache.aggregated[l];
            let (delta, epsilon) = match spec.kind {
                LayerKind::Linear => (1.0, 0.0),
                LayerKind::Conv => (spec.delta, spec.epsilon),
            };
            d_weights[l] = if delta != 0.0 {
                gemm_new(delta, z, Op::T, &dy, Op::N)?
            } else {
                DenseMatrix::zeros(spec.width_in, spec.width_out)
            };
            let mut dz = if delta != 0.0 {
                gemm_new(delta, &dy, Op::N, &self.weights[l], Op::T)?
            } else {
                DenseMatrix::zeros(z.rows(), z.cols())
            };
            if epsilon != 0.0 {
                dz.axpy(epsilon, &dy)?;
            }
            match spec.kind {
                LayerKind::Linear => match &cache.batch {
                    Some(b) if l + 1 == depth => b.unpool(&dz, &mut d_act[l]),
                    _ => d_act[l].axpy(1.0, &dz)?,
                },
                LayerKind::Conv => {
                    if spec.alpha != 0.0 {
                        transpose.spmm_acc(spec.alpha, &dz, &mut d_act[l])?;
                    }
                    if spec.beta != 0.0 {
                        d_act[base].axpy(spec.beta, &dz)?;
                    }
                    if spec.gamma != 0.0 && l > 0 {
                        d_act[l - 1].axpy(spec.gamma, &dz)?;
                    }
                }
            }
            d_agg[l] = dz;
        }
        Ok(Gradients {
            weights: d_weights,
            biases: d_biases,
            aggregated: d_agg,
            activations: d_act,
        })
    }

    /// Masked softmax cross-entropy plus `l2/2 * sum ||W||^2`, and its
    /// gradients. Needs a cached forward pass, which it consumes.
    pub fn loss_and_grad(
        &mut self,
        config: &ModelConfig,
        na: &NormalizedAdjacency,
        labels: &[i64],
        mask: &[bool],
    ) -> Result<(f64, Gradients)> {
        let logits = &self.cache.as_ref().ok_or(Error::NoForwardCache)?.activations[config.depth()];
        let (ce, dlogits) = cross_entropy(logits, labels, mask)?;
        let mut grads = self.backward(config, na, &dlogits)?;
        let lambda = config.l2_penalty;
        let mut penalty = 0.0;
        if lambda != 0.0 {
            for (g, w) in grads.weights.iter_mut().zip(&self.weights) {
                penalty += w.sum_of_squares();
                g.axpy(lambda, w)?;
            }
        }
        Ok((ce + 0.5 * lambda * penalty, grads))
    }
}
