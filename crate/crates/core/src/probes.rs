//! Variance probes, the forward and backward variance bounds, the
//! oversmoothing distance and spectral diagnostics of the weights.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::init::{predicted_disk_radius, sample_weight, InitScheme};
use crate::linalg::{general_eig, top_singular_value, DenseMatrix, RngStream};
use crate::model::{LayerKind, LayerSpec, ModelConfig, ModelState};

pub const SINGULAR_VALUE_TOL: f64 = 1e-10;
pub const SINGULAR_VALUE_ITERATIONS: usize = 100_000;

/// Scalar summaries of the data-dependent terms of the bounds, averaged
/// over nodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasuredTerms {
    /// `E[x^2]` of the layer input.
    pub input_sq: f64,
    /// Neighbor sum of `E[x^2]`, self excluded.
    pub k: f64,
    /// `alpha^2 k / d^2 + beta^2 E[x0^2]`.
    pub j_term: f64,
    /// Neighbor sum of the second moment of the next layer's gradient.
    pub o_term: f64,
    /// `alpha^2 o / d^2`.
    pub q_term: f64,
}

/// Per-layer measurements averaged over re-initializations.
///
/// Variances are average node variances: the variance across channels of
/// each node's vector, averaged over nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    /// 1-based layer index.
    pub layer: usize,
    /// Of the pre-activation `Y`.
    pub forward_var: f64,
    /// Of the gradient with respect to the layer's aggregated input.
    pub backward_var: Option<f64>,
    /// Variance over all nodes and channels together.
    pub pooled_forward_var: f64,
    pub pooled_backward_var: Option<f64>,
    pub measured_terms: MeasuredTerms,
    pub node_forward_var: Vec<f64>,
    /// `E[x^2]` per node of the layer input `H^(l-1)`.
    pub node_input_sq: Vec<f64>,
    pub node_backward_var: Vec<f64>,
    pub node_backward_sq: Vec<f64>,
}

/// Per-row (variance, second moment) across columns.
fn row_moments(m: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let c = m.cols() as f64;
    m.iter_rows()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / c;
            let sq = r.iter().map(|v| v * v).sum::<f64>() / c;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            (var, sq)
        })
        .unzip()
}

fn pooled_var(m: &DenseMatrix) -> f64 {
    let s = m.as_slice();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

/// Probes `n_trials` fresh initializations; trial `t` uses
/// `rng.substream(t)`. Backward quantities need `targets`.
fn probe(
    config: &ModelConfig,
    na: &NormalizedAdjacency,
    x0: &DenseMatrix,
    targets: Option<(&[i64], &[bool])>,
    n_trials: usize,
    rng: &RngStream,
) -> Result<Vec<VarianceRecord>> {
    if n_trials == 0 {
        return Err(Error::param("n_trials must be >= 1"));
    }
    if config.task != crate::model::Task::NodeClassification {
        return Err(Error::param("variance probes run on node-level models"));
    }
    let depth = config.depth();
    let n = na.num_nodes();
    let zero = || vec![vec![0.0; n]; depth];
    let (mut fvar, mut insq, mut bvar, mut bsq) = (zero(), zero(), zero(), zero());
    let mut pooled_f = vec![0.0; depth];
    let mut pooled_b = vec![0.0; depth];
    for t in 0..n_trials {
        let mut state = ModelState::new(config, &rng.substream(t as u64))?;
        state.forward(config, na, x0, None)?;
        let cache = state.cache().expect("forward caches");
        for l in 0..depth {
            let (v, _) = row_moments(&cache.preactivations[l]);
            add_into(&mut fvar[l], &v);
            let (_, s) = row_moments(&cache.activations[l]);
            add_into(&mut insq[l], &s);
            pooled_f[l] += pooled_var(&cache.preactivations[l]);
        }
        if let Some((labels, mask)) = targets {
            let (_, grads) = state.loss_and_grad(config, na, labels, mask)?;
            for l in 0..depth {
                let (v, s) = row_moments(&grads.aggregated[l]);
                add_into(&mut bvar[l], &v);
                add_into(&mut bsq[l], &s);
                pooled_b[l] += pooled_var(&grads.aggregated[l]);
            }
        }
    }
    let scale = 1.0 / n_trials as f64;
    let norm = |v: &mut Vec<Vec<f64>>| {
        for row in v.iter_mut() {
            for x in row.iter_mut() {
                *x *= scale;
            }
        }
    };
    norm(&mut fvar);
    norm(&mut insq);
    norm(&mut bvar);
    norm(&mut bsq);
    let has_back = targets.is_some();
    Ok((0..depth)
        .map(|l| VarianceRecord {
            layer: l + 1,
            forward_var: mean(&fvar[l]),
            backward_var: has_back.then(|| mean(&bvar[l])),
            pooled_forward_var: pooled_f[l] * scale,
            pooled_backward_var: has_back.then(|| pooled_b[l] * scale),
            measured_terms: MeasuredTerms {
                input_sq: mean(&insq[l]),
                ..MeasuredTerms::default()
            },
            node_forward_var: std::mem::take(&mut fvar[l]),
            node_input_sq: std::mem::take(&mut insq[l]),
            node_backward_var: if has_back { std::mem::take(&mut bvar[l]) } else { Vec::new() },
            node_backward_sq: if has_back { std::mem::take(&mut bsq[l]) } else { Vec::new() },
        })
        .collect())
}

/// Forward-pass variances of `n_trials` fresh initializations.
pub fn probe_forward_variance(
    config: &ModelConfig,
    na: &NormalizedAdjacency,
    x0: &DenseMatrix,
    n_trials: usize,
    rng: &RngStream,
) -> Result<Vec<VarianceRecord>> {
    probe(config, na, x0, None, n_trials, rng)
}

/// Forward and backward variances of `n_trials` fresh initializations,
/// using the task loss over `mask`.
pub fn probe_backward_variance(
    config: &ModelConfig,
    na: &NormalizedAdjacency,
    x0: &DenseMatrix,
    labels: &[i64],
    mask: &[bool],
    n_trials: usize,
    rng: &RngStream,
) -> Result<Vec<VarianceRecord>> {
    probe(config, na, x0, Some((labels, mask)), n_trials, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

/// Node-level inputs of [`forward_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardTerms {
    /// `Var[y_{l-1}]`
    pub prev_var: f64,
    /// `Var[y_{l-2}]`
    pub prev2_var: f64,
    /// Neighbor sum of `E[x^2]`, self excluded.
    pub k: f64,
    /// `E[x0^2]`
    pub x0_sq: f64,
}

fn indicator(x: f64) -> f64 {
    f64::from(u8::from(x != 0.0))
}

/// `j = alpha^2 k / d^2 + beta^2 E[x0^2]`.
pub fn j_term(spec: &LayerSpec, k: f64, x0_sq: f64, d_i: f64) -> f64 {
    spec.alpha.powi(2) * k / (d_i * d_i) + spec.beta.powi(2) * x0_sq
}

/// Upper and lower bound on the forward variance of a node with augmented
/// degree `d_i` in a layer summing over `n_l` inputs.
pub fn forward_bound(terms: &ForwardTerms, spec: &LayerSpec, var_w: f64, d_i: f64, n_l: usize) -> Bounds {
    let inner = spec.alpha.powi(2) / (2.0 * d_i * d_i) * terms.prev_var
        + spec.gamma.powi(2) / 2.0 * terms.prev2_var
        + j_term(spec, terms.k, terms.x0_sq, d_i);
    let lower = n_l as f64 * inner * (spec.delta.powi(2) * var_w + spec.epsilon.powi(2));
    let factor = d_i + indicator(spec.beta) + indicator(spec.gamma);
    Bounds {
        lower,
        upper: factor * lower,
    }
}

/// Node-level inputs of [`backward_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackwardTerms {
    /// `Var[dx_{l+1}]`
    pub next_var: f64,
    /// Neighbor sum of the next layer's gradient second moment.
    pub o: f64,
}

/// `m_w = n_l (d_i + 1[gamma != 0]) (delta^2 var_w + epsilon^2) / 2`.
pub fn backward_m_w(spec: &LayerSpec, var_w: f64, d_i: f64, n_l: usize) -> f64 {
    0.5 * n_l as f64 * (d_i + indicator(spec.gamma)) * (spec.delta.powi(2) * var_w + spec.epsilon.powi(2))
}

/// Upper and lower bound on the backward variance. When `gamma^2 m_w > 1`
/// the two expressions trade places.
pub fn backward_bound(
    terms: &BackwardTerms,
    spec: &LayerSpec,
    var_w: f64,
    d_i: f64,
    n_l: usize,
) -> Result<Bounds> {
    let m = backward_m_w(spec, var_w, d_i, n_l);
    let m_low = m / (d_i + indicator(spec.gamma));
    let g2 = spec.gamma.powi(2);
    let q = spec.alpha.powi(2) * terms.o / (d_i * d_i);
    let tail = spec.alpha.powi(2) / (d_i * d_i) * terms.next_var + q;
    let expr = |mw: f64| -> Result<f64> {
        let denom = 1.0 - g2 * mw;
        if denom == 0.0 {
            return Err(Error::BoundSingularity(mw));
        }
        Ok(mw / denom * tail)
    };
    let (from_m, from_low) = (expr(m)?, expr(m_low)?);
    Ok(if g2 * m > 1.0 {
        Bounds {
            lower: from_m,
            upper: from_low,
        }
    } else {
        Bounds {
            lower: from_low,
            upper: from_m,
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub layer: usize,
    pub lower: f64,
    pub upper: f64,
    pub measured: f64,
    pub satisfied: bool,
}

impl BoundRecord {
    fn new(layer: usize, lower: f64, upper: f64, measured: f64) -> Self {
        Self {
            layer,
            lower,
            upper,
            measured,
            satisfied: lower <= measured && measured <= upper,
        }
    }
}

fn neighbor_sum(g: &Graph, values: &[f64]) -> Vec<f64> {
    (0..g.num_nodes())
        .map(|i| g.neighbors(i).map(|(j, w)| w * values[j]).sum())
        .collect()
}

fn check_inputs(records: &[VarianceRecord], config: &ModelConfig, g: &Graph, var_w: &[f64]) -> Result<()> {
    if records.len() != config.depth() || var_w.len() != config.depth() {
        return Err(Error::shape("one record and one weight variance per layer are required"));
    }
    if records.iter().any(|r| r.node_forward_var.len() != g.num_nodes()) {
        return Err(Error::shape("records were measured on a different graph"));
    }
    if config.layers.iter().any(|l| l.kind != LayerKind::Conv) {
        return Err(Error::param("bound checks cover convolution-only models"));
    }
    Ok(())
}

/// Node-averaged forward bounds per layer with the measured terms
/// substituted. `var_w[l]` is the entry variance of layer `l`'s weight.
/// Fills the measured-term summaries of `records` as a side effect.
pub fn check_forward_bounds(
    records: &mut [VarianceRecord],
    config: &ModelConfig,
    g: &Graph,
    var_w: &[f64],
) -> Result<Vec<BoundRecord>> {
    check_inputs(records, config, g, var_w)?;
    let d = g.augmented_degrees();
    let n = g.num_nodes();
    let base = config.residual_base();
    // The input layer has no pre-activation; its stand-in doubles E[x0^2],
    // matching the halving a ReLU applies to a symmetric pre-activation.
    let x0_stand_in: Vec<f64> = records[0].node_input_sq.iter().map(|s| 2.0 * s).collect();
    let x0_sq = records[base].node_input_sq.clone();
    let mut out = Vec::with_capacity(records.len());
    for l in 0..records.len() {
        let spec = &config.layers[l];
        let prev: &[f64] = if l == 0 { &x0_stand_in } else { &records[l - 1].node_forward_var };
        let prev2: Vec<f64> = match l {
            0 => vec![0.0; n],
            1 => x0_stand_in.clone(),
            _ => records[l - 2].node_forward_var.clone(),
        };
        let k = neighbor_sum(g, &records[l].node_input_sq);
        let (mut lo, mut up, mut j) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let terms = ForwardTerms {
                prev_var: prev[i],
                prev2_var: prev2[i],
                k: k[i],
                x0_sq: x0_sq[i],
            };
            let b = forward_bound(&terms, spec, var_w[l], d[i], spec.width_in);
            lo += b.lower;
            up += b.upper;
            j += j_term(spec, k[i], x0_sq[i], d[i]);
        }
        let nf = n as f64;
        records[l].measured_terms.k = mean(&k);
        records[l].measured_terms.j_term = j / nf;
        out.push(BoundRecord::new(l + 1, lo / nf, up / nf, records[l].forward_var));
    }
    Ok(out)
}

/// Node-averaged backward bounds for layers `1..L-1`; the last layer has no
/// next-layer gradient to bound against. Needs backward records.
pub fn check_backward_bounds(
    records: &mut [VarianceRecord],
    config: &ModelConfig,
    g: &Graph,
    var_w: &[f64],
) -> Result<Vec<BoundRecord>> {
    check_inputs(records, config, g, var_w)?;
    if records.iter().any(|r| r.backward_var.is_none()) {
        return Err(Error::param("backward bounds need backward variance records"));
    }
    let d = g.augmented_degrees();
    let n = g.num_nodes();
    let mut out = Vec::with_capacity(records.len().saturating_sub(1));
    for l in 0..records.len().saturating_sub(1) {
        let spec = &config.layers[l];
        let next = &records[l + 1];
        let o = neighbor_sum(g, &next.node_backward_sq);
        let (mut lo, mut up, mut q) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let terms = BackwardTerms {
                next_var: next.node_backward_var[i],
                o: o[i],
            };
            let b = backward_bound(&terms, spec, var_w[l], d[i], spec.width_out)?;
            lo += b.lower;
            up += b.upper;
            q += spec.alpha.powi(2) * o[i] / (d[i] * d[i]);
        }
        let nf = n as f64;
        records[l].measured_terms.o_term = mean(&o);
        records[l].measured_terms.q_term = q / nf;
        let measured = records[l].backward_var.expect("checked above");
        out.push(BoundRecord::new(l + 1, lo / nf, up / nf, measured));
    }
    Ok(out)
}

/// Unit vectors `D^1/2 1` restricted to each connected component.
fn oversmoothing_basis(g: &Graph) -> (Vec<usize>, Vec<f64>) {
    let (comp, count) = g.components();
    let d = g.augmented_degrees();
    let mut norms = vec![0.0; count];
    for (i, &c) in comp.iter().enumerate() {
        norms[c] += d[i];
    }
    let u = comp
        .iter()
        .enumerate()
        .map(|(i, &c)| (d[i] / norms[c]).sqrt())
        .collect();
    (comp, u)
}

/// Frobenius distance of `h` from the subspace spanned, per column, by
/// `D^1/2 1` on each connected component.
pub fn oversmoothing_distance(h: &DenseMatrix, g: &Graph) -> Result<f64> {
    if h.rows() != g.num_nodes() {
        return Err(Error::shape(format!("{} rows for {} nodes", h.rows(), g.num_nodes())));
    }
    let (comp, u) = oversmoothing_basis(g);
    let count = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut coef = DenseMatrix::zeros(count, h.cols());
    for i in 0..h.rows() {
        for (c, x) in coef.row_mut(comp[i]).iter_mut().zip(h.row(i)) {
            *c += u[i] * x;
        }
    }
    let mut acc = 0.0;
    for i in 0..h.rows() {
        for (x, c) in h.row(i).iter().zip(coef.row(comp[i])) {
            let r = x - u[i] * c;
            acc += r * r;
        }
    }
    Ok(acc.sqrt())
}

/// `d_M(H^l)` for each cached activation `H^0 .. H^L`.
pub fn oversmoothing_profile(state: &ModelState, g: &Graph) -> Result<Vec<f64>> {
    let cache = state.cache().ok_or(Error::NoForwardCache)?;
    cache
        .activations
        .iter()
        .map(|h| oversmoothing_distance(h, g))
        .collect()
}

/// Geometric mean of `d[l+1] / d[l]` for `l` in `from..to`.
pub fn geometric_decay_rate(distances: &[f64], from: usize, to: usize) -> Result<f64> {
    if from >= to || to >= distances.len() {
        return Err(Error::param(format!(
            "decay window {from}..{to} does not fit {} distances",
            distances.len()
        )));
    }
    let (a, b) = (distances[from], distances[to]);
    if !(a > 0.0) || !(b > 0.0) {
        return Ok(0.0);
    }
    // The ratios telescope.
    Ok((b / a).powf(1.0 / (to - from) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub layer: usize,
    pub sigma_max: f64,
    /// Running product of `sigma_max` up to this layer.
    pub product_s: f64,
    pub s_lambda: f64,
}

/// Largest singular value of each weight, the running product and its
/// product with the spectral gap `lambda`.
pub fn weight_spectrum(state: &ModelState, lambda: f64) -> Result<Vec<SpectrumRecord>> {
    let mut product = 1.0;
    state
        .weights
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let sigma = top_singular_value(w, SINGULAR_VALUE_TOL, SINGULAR_VALUE_ITERATIONS)?;
            product *= sigma;
            Ok(SpectrumRecord {
                layer: l + 1,
                sigma_max: sigma,
                product_s: product,
                s_lambda: product * lambda,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularLawReport {
    pub n: usize,
    pub empirical_radius: f64,
    pub predicted_radius: f64,
    /// KS statistic of `(|lambda| / R)^2` against `U[0, 1]`; absent when
    /// the predicted radius is zero.
    pub radial_ks: Option<f64>,
}

/// Kolmogorov-Smirnov distance of a sample from `U[0, 1]`.
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Eigenvalues of one freshly drawn `n x n` weight against the predicted
/// uniform disk.
pub fn circular_law_check(scheme: InitScheme, n: usize, rng: &mut RngStream) -> Result<CircularLawReport> {
    let w = sample_weight(rng, scheme, n, n)?;
    let eig: Vec<Complex64> = general_eig(&w)?;
    let empirical_radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let predicted_radius = predicted_disk_radius(scheme, n);
    let radial_ks = (predicted_radius > 0.0).then(|| {
        let radial: Vec<f64> = eig.iter().map(|z| (z.norm() / predicted_radius).powi(2)).collect();
        ks_uniform(&radial)
    });
    Ok(CircularLawReport {
        n,
        empirical_radius,
        predicted_radius,
        radial_ks,
    })
}
