//! Experiment pipelines shared by the command line, the Python module and
//! the acceptance suite.
//!
//! A seed `s` drives three independent streams: `(s, STREAM_DATA)` for
//! synthetic graphs and features, `(s, STREAM_SPLIT)` for random splits and
//! `(s, STREAM_INIT)` for weights. Schemes compared under the same seed
//! therefore draw from identical Gaussian sequences.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::datasets::{cold_start, load_graph_set, load_node_bundle, random_masks, triangles_vs_squares, NodeBundle};
use crate::error::{Error, Result};
use crate::graph::{circular_ladder, normalize, sbm_generate, spectral_gap, Normalization};
use crate::init::{sample_weight, target_std, target_variance, InitScheme, DEFAULT_GINIT_D};
use crate::linalg::{DenseMatrix, RngStream};
use crate::model::{train, LayerSpec, Metric, ModelConfig, ModelState, DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_L2, DEFAULT_LR};
use crate::probes::{
    check_backward_bounds, check_forward_bounds, circular_law_check, geometric_decay_rate, oversmoothing_profile,
    probe_backward_variance, weight_spectrum, BoundRecord, CircularLawReport,
};

pub const STREAM_DATA: u64 = 1;
pub const STREAM_SPLIT: u64 = 2;
pub const STREAM_INIT: u64 = 3;

/// Passing rate required of bound checks for a probe run to succeed.
pub const BOUND_PASS_RATE: f64 = 0.95;

/// Mean and standard deviation over seeds (sample std, zero for one seed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_seeds: usize,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n_seeds: 0,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { n_seeds: n, mean, std }
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmParams {
    pub communities: usize,
    pub nodes_per_community: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    /// Multiplies the generated features.
    #[serde(default = "one")]
    pub feature_scale: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

fn one() -> f64 {
    1.0
}

fn default_train_fraction() -> f64 {
    0.1
}

fn default_val_fraction() -> f64 {
    0.2
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            communities: 4,
            nodes_per_community: 60,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 16,
            feature_noise: 1.0,
            feature_scale: 1.0,
            train_fraction: default_train_fraction(),
            val_fraction: default_val_fraction(),
        }
    }
}

/// Circular ladder graph on `2k` nodes with labels by arc:
/// node `i` gets class `(i mod k) * classes / k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderParams {
    pub k: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub feature_noise: f64,
    #[serde(default = "one")]
    pub feature_scale: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Sbm(SbmParams),
    CircularLadder(LadderParams),
    /// Node bundle directory; the same data is used for every seed.
    Bundle { path: PathBuf },
    /// JSON-lines graph set.
    GraphSet { path: PathBuf },
    TrianglesVsSquares {
        count: usize,
        #[serde(default = "default_tvs_noise")]
        noise: f64,
    },
}

fn default_tvs_noise() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum Preset {
    Gcn,
    Gcnii { lambda_h: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_l2")]
    pub l2_penalty: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_true")]
    pub bias: bool,
    /// Explicit layer list; replaces the preset and depth when given.
    #[serde(default)]
    pub layers: Option<Vec<LayerSpec>>,
}

fn default_preset() -> Preset {
    Preset::Gcn
}
fn default_depth() -> usize {
    2
}
fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_l2() -> f64 {
    DEFAULT_L2
}
fn default_lr() -> f64 {
    DEFAULT_LR
}
fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}
fn default_true() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: default_preset(),
            depth: default_depth(),
            hidden: default_hidden(),
            l2_penalty: default_l2(),
            learning_rate: default_lr(),
            epochs: default_epochs(),
            bias: true,
            layers: None,
        }
    }
}

impl ModelSection {
    /// Node-level model of the given depth.
    pub fn node_config(&self, in_dim: usize, classes: usize, depth: usize, init: InitScheme) -> Result<ModelConfig> {
        let mut cfg = match (&self.layers, self.preset) {
            (Some(layers), _) => ModelConfig {
                layers: layers.clone(),
                ..ModelConfig::gcn(in_dim, self.hidden, classes, 1, init)
            },
            (None, Preset::Gcn) => ModelConfig::gcn(in_dim, self.hidden, classes, depth, init),
            (None, Preset::Gcnii { lambda_h }) => {
                ModelConfig::gcnii(in_dim, self.hidden, classes, depth, lambda_h, init)
            }
        };
        self.finish(&mut cfg);
        cfg.validate()?;
        if cfg.input_width() != in_dim || cfg.num_classes() != classes {
            return Err(Error::shape(format!(
                "model maps {} -> {} but the data has {in_dim} features and {classes} classes",
                cfg.input_width(),
                cfg.num_classes()
            )));
        }
        Ok(cfg)
    }

    /// `depth` convolutions, mean readout and a linear head.
    pub fn graph_config(&self, in_dim: usize, classes: usize, depth: usize, init: InitScheme) -> Result<ModelConfig> {
        if self.layers.is_some() || self.preset != Preset::Gcn {
            return Err(Error::param("graph classification supports the gcn preset only"));
        }
        let mut cfg = ModelConfig::gcn_graph(in_dim, self.hidden, classes, depth, init);
        self.finish(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn finish(&self, cfg: &mut ModelConfig) {
        cfg.l2_penalty = self.l2_penalty;
        cfg.learning_rate = self.learning_rate;
        cfg.epochs = self.epochs;
        if !self.bias {
            for l in &mut cfg.layers {
                l.has_bias = false;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_probe_norm")]
    pub normalization: Normalization,
    #[serde(default = "default_true")]
    pub check_bounds: bool,
    /// Nodes whose loss drives the backward probe.
    #[serde(default = "default_probe_mask")]
    pub loss_mask: LossMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMask {
    All,
    Train,
}

fn default_trials() -> usize {
    32
}
fn default_probe_norm() -> Normalization {
    Normalization::Row
}
fn default_probe_mask() -> LossMask {
    LossMask::All
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            n_trials: default_trials(),
            normalization: default_probe_norm(),
            check_bounds: true,
            loss_mask: default_probe_mask(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default)]
    pub after_training: bool,
    /// Matrix order of the circular-law check; 0 disables it.
    #[serde(default = "default_circular_n")]
    pub circular_law_n: usize,
}

fn default_circular_n() -> usize {
    256
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            after_training: false,
            circular_law_n: default_circular_n(),
        }
    }
}

/// Strictly parsed experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<InitScheme>,
    /// Replaces `d` of every g-init scheme when set.
    #[serde(default)]
    pub ginit_d: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub depths: Option<Vec<usize>>,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub cold_start: bool,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
}

fn default_schemes() -> Vec<InitScheme> {
    vec![InitScheme::KaimingNormal, InitScheme::GInit { d: DEFAULT_GINIT_D }]
}

impl RunConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            model: ModelSection::default(),
            schemes: default_schemes(),
            ginit_d: None,
            seeds: default_seeds(),
            depths: None,
            metric: None,
            cold_start: false,
            probe: ProbeSection::default(),
            spectrum: SpectrumSection::default(),
        }
    }

    /// Parses JSON, reporting the location of the first offending key.
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            path: json_pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate().map_err(|e| ConfigError {
            path: String::new(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::param("seed list must not be empty"));
        }
        if self.schemes.is_empty() {
            return Err(Error::param("scheme list must not be empty"));
        }
        if let Some(d) = self.depths.as_ref() {
            if d.is_empty() || d.contains(&0) {
                return Err(Error::param("depths must be a nonempty list of positive counts"));
            }
        }
        if let Some(d) = self.ginit_d {
            InitScheme::g_init(d)?;
        }
        Ok(())
    }

    /// Schemes with the `ginit_d` override applied.
    pub fn resolved_schemes(&self) -> Vec<InitScheme> {
        self.schemes
            .iter()
            .map(|&s| match (s, self.ginit_d) {
                (InitScheme::GInit { .. }, Some(d)) => InitScheme::GInit { d },
                _ => s,
            })
            .collect()
    }

    fn depth_list(&self) -> Vec<usize> {
        self.depths.clone().unwrap_or_else(|| vec![self.model.depth])
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// JSON pointer to the offending value; empty for the whole document.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at {}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn scale_features(mut x: DenseMatrix, scale: f64) -> DenseMatrix {
    if scale != 1.0 {
        x.scale_in_place(scale);
    }
    x
}

/// The node-classification problem for `seed`.
pub fn node_problem(source: &DataSource, seed: u64) -> Result<NodeBundle> {
    let mut split_rng = RngStream::new(seed, STREAM_SPLIT);
    match source {
        DataSource::Sbm(p) => {
            let mut rng = RngStream::new(seed, STREAM_DATA);
            let (graph, x, labels) = sbm_generate(
                &mut rng,
                p.communities,
                p.nodes_per_community,
                p.p_in,
                p.p_out,
                p.feature_dim,
                p.feature_noise,
            )?;
            let masks = random_masks(labels.len(), p.train_fraction, p.val_fraction, &mut split_rng)?;
            NodeBundle::new(graph, scale_features(x, p.feature_scale), labels, masks)
        }
        DataSource::CircularLadder(p) => {
            if p.feature_dim < p.classes || p.classes == 0 {
                return Err(Error::param("ladder feature_dim must hold one-hot class centroids"));
            }
            let graph = circular_ladder(p.k)?;
            let n = graph.num_nodes();
            let labels: Vec<i64> = (0..n).map(|i| ((i % p.k) * p.classes / p.k) as i64).collect();
            let mut rng = RngStream::new(seed, STREAM_DATA);
            let mut x = DenseMatrix::zeros(n, p.feature_dim);
            for i in 0..n {
                let row = x.row_mut(i);
                for v in row.iter_mut() {
                    *v = p.feature_noise * rng.normal();
                }
                row[labels[i] as usize] += 1.0;
            }
            let masks = random_masks(n, p.train_fraction, p.val_fraction, &mut split_rng)?;
            NodeBundle::new(graph, scale_features(x, p.feature_scale), labels, masks)
        }
        DataSource::Bundle { path } => load_node_bundle(path),
        DataSource::GraphSet { .. } | DataSource::TrianglesVsSquares { .. } => {
            Err(Error::param("this experiment needs node-level data, not a graph set"))
        }
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_bool(v: Option<bool>) -> String {
    v.map_or_else(String::new, |b| u8::from(b).to_string())
}

// ---------------------------------------------------------------- init-stats

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitStatsReport {
    pub scheme: InitScheme,
    pub fan: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_std: f64,
    pub empirical_mean: f64,
    pub empirical_std: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const MIN_INIT_SAMPLES: usize = 10_000;

/// Empirical std of `samples` entries drawn for a layer with fan-in `fan`.
pub fn init_stats(scheme: InitScheme, fan: usize, samples: usize, seed: u64, tolerance: f64) -> Result<InitStatsReport> {
    if samples < MIN_INIT_SAMPLES {
        return Err(Error::param(format!("samples must be >= {MIN_INIT_SAMPLES}, got {samples}")));
    }
    let target = target_std(scheme, fan)?;
    let cols = samples.div_ceil(fan);
    let w = sample_weight(&mut RngStream::new(seed, STREAM_INIT), scheme, fan, cols)?;
    let s = &w.as_slice()[..samples];
    let n = samples as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let relative_error = if target > 0.0 { (std - target).abs() / target } else { std };
    Ok(InitStatsReport {
        scheme,
        fan,
        samples,
        seed,
        target_std: target,
        empirical_mean: mean,
        empirical_std: std,
        relative_error,
        tolerance,
        passed: relative_error <= tolerance,
    })
}

impl InitStatsReport {
    pub fn to_csv(&self) -> String {
        format!(
            "scheme,fan,samples,seed,target_std,empirical_mean,empirical_std,relative_error,tolerance,passed\n\
             {},{},{},{},{},{},{},{},{},{}\n",
            self.scheme,
            self.fan,
            self.samples,
            self.seed,
            self.target_std,
            self.empirical_mean,
            self.empirical_std,
            self.relative_error,
            self.tolerance,
            u8::from(self.passed)
        )
    }
}

// --------------------------------------------------------------------- probe

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub layer: usize,
    pub scheme: InitScheme,
    pub seed: u64,
    pub forward_var: f64,
    pub backward_var: f64,
    pub forward_bound: Option<BoundRecord>,
    pub backward_bound: Option<BoundRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeAggregate {
    pub layer: usize,
    pub scheme: InitScheme,
    pub forward_var: Summary,
    pub backward_var: Summary,
    pub forward_satisfied: Option<f64>,
    pub backward_satisfied: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Variances are average node variances.
    pub pooling: String,
    pub normalization: Normalization,
    pub n_trials: usize,
    pub rows: Vec<ProbeRow>,
    pub aggregates: Vec<ProbeAggregate>,
    /// Fraction of checked (layer, seed, scheme) bounds that hold.
    pub forward_pass_rate: Option<f64>,
    pub backward_pass_rate: Option<f64>,
}

impl ProbeReport {
    pub fn bounds_ok(&self) -> bool {
        [self.forward_pass_rate, self.backward_pass_rate]
            .iter()
            .all(|r| r.is_none_or(|r| r >= BOUND_PASS_RATE))
    }

    pub fn aggregate(&self, scheme: InitScheme, layer: usize) -> Option<&ProbeAggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.layer == layer)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "layer,scheme,seed,forward_var,backward_var,forward_lower,forward_upper,forward_satisfied,\
             backward_lower,backward_upper,backward_satisfied\n",
        );
        for r in &self.rows {
            let f = r.forward_bound.as_ref();
            let b = r.backward_bound.as_ref();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.layer,
                r.scheme,
                r.seed,
                r.forward_var,
                r.backward_var,
                csv_opt(f.map(|b| b.lower)),
                csv_opt(f.map(|b| b.upper)),
                csv_bool(f.map(|b| b.satisfied)),
                csv_opt(b.map(|b| b.lower)),
                csv_opt(b.map(|b| b.upper)),
                csv_bool(b.map(|b| b.satisfied)),
            )
            .expect("write to string");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "layer,scheme,n_seeds,forward_var_mean,forward_var_std,backward_var_mean,backward_var_std,\
             forward_satisfied_rate,backward_satisfied_rate\n",
        );
        for a in &self.aggregates {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                a.layer,
                a.scheme,
                a.forward_var.n_seeds,
                a.forward_var.mean,
                a.forward_var.std,
                a.backward_var.mean,
                a.backward_var.std,
                csv_opt(a.forward_satisfied),
                csv_opt(a.backward_satisfied),
            )
            .expect("write to string");
        }
        out
    }
}

fn pass_rate(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut ok, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        ok += usize::from(f);
    }
    (total > 0).then(|| ok as f64 / total as f64)
}

/// Per-layer forward and backward variances at initialization, with the
/// variance bounds checked against them.
pub fn run_probe(cfg: &RunConfig) -> Result<ProbeReport> {
    cfg.validate()?;
    let schemes = cfg.resolved_schemes();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let bundle = node_problem(&cfg.data, seed)?;
        let na = normalize(&bundle.graph, cfg.probe.normalization)?;
        let classes = bundle.num_classes();
        let mask: Vec<bool> = match cfg.probe.loss_mask {
            LossMask::All => bundle.labels.iter().map(|&y| y >= 0).collect(),
            LossMask::Train => bundle.masks.train.clone(),
        };
        for &scheme in &schemes {
            let model = cfg.model.node_config(bundle.features.cols(), classes, cfg.model.depth, scheme)?;
            let rng = RngStream::new(seed, STREAM_INIT);
            let mut records = probe_backward_variance(
                &model,
                &na,
                &bundle.features,
                &bundle.labels,
                &mask,
                cfg.probe.n_trials,
                &rng,
            )?;
            let var_w: Option<Vec<f64>> = model
                .layers
                .iter()
                .enumerate()
                .map(|(l, spec)| target_variance(model.layer_init(l), spec.width_in).ok())
                .collect();
            let (fwd, bwd) = match (&var_w, cfg.probe.check_bounds) {
                (Some(v), true) => (
                    Some(check_forward_bounds(&mut records, &model, &bundle.graph, v)?),
                    Some(check_backward_bounds(&mut records, &model, &bundle.graph, v)?),
                ),
                _ => (None, None),
            };
            for (l, rec) in records.iter().enumerate() {
                rows.push(ProbeRow {
                    layer: rec.layer,
                    scheme,
                    seed,
                    forward_var: rec.forward_var,
                    backward_var: rec.backward_var.unwrap_or(0.0),
                    forward_bound: fwd.as_ref().map(|f| f[l].clone()),
                    backward_bound: bwd.as_ref().and_then(|b| b.get(l).cloned()),
                });
            }
        }
    }
    let depth = rows.iter().map(|r| r.layer).max().unwrap_or(0);
    let mut aggregates = Vec::new();
    for &scheme in &schemes {
        for layer in 1..=depth {
            let sel: Vec<&ProbeRow> = rows.iter().filter(|r| r.scheme == scheme && r.layer == layer).collect();
            let fv: Vec<f64> = sel.iter().map(|r| r.forward_var).collect();
            let bv: Vec<f64> = sel.iter().map(|r| r.backward_var).collect();
            aggregates.push(ProbeAggregate {
                layer,
                scheme,
                forward_var: Summary::of(&fv),
                backward_var: Summary::of(&bv),
                forward_satisfied: pass_rate(sel.iter().filter_map(|r| r.forward_bound.as_ref().map(|b| b.satisfied))),
                backward_satisfied: pass_rate(sel.iter().filter_map(|r| r.backward_bound.as_ref().map(|b| b.satisfied))),
            });
        }
    }
    Ok(ProbeReport {
        pooling: "average node variance".into(),
        normalization: cfg.probe.normalization,
        n_trials: cfg.probe.n_trials,
        forward_pass_rate: pass_rate(rows.iter().filter_map(|r| r.forward_bound.as_ref().map(|b| b.satisfied))),
        backward_pass_rate: pass_rate(rows.iter().filter_map(|r| r.backward_bound.as_ref().map(|b| b.satisfied))),
        rows,
        aggregates,
    })
}

// ------------------------------------------------------- sweep and coldstart

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub scheme: InitScheme,
    pub seed: u64,
    /// Test score at the epoch with the best validation score.
    pub test: f64,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthAggregate {
    pub depth: usize,
    pub scheme: InitScheme,
    pub test: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub metric: Metric,
    pub cold_start: bool,
    pub rows: Vec<DepthRow>,
    pub aggregates: Vec<DepthAggregate>,
}

impl SweepReport {
    pub fn aggregate(&self, scheme: InitScheme, depth: usize) -> Option<&DepthAggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.depth == depth)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,scheme,seed,test,best_epoch\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.depth, r.scheme, r.seed, r.test, r.best_epoch).expect("write to string");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("depth,scheme,n_seeds,mean,std\n");
        for a in &self.aggregates {
            writeln!(out, "{},{},{},{},{}", a.depth, a.scheme, a.test.n_seeds, a.test.mean, a.test.std)
                .expect("write to string");
        }
        out
    }
}

/// Trains every (depth, scheme, seed) cell and reports the test score at
/// the best validation epoch.
pub fn run_sweep_depth(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let schemes = cfg.resolved_schemes();
    let depths = cfg.depth_list();
    let metric = cfg.metric.unwrap_or(Metric::Accuracy);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let mut bundle = node_problem(&cfg.data, seed)?;
        if cfg.cold_start {
            bundle = cold_start(&bundle);
        }
        let na = normalize(&bundle.graph, Normalization::Symmetric)?;
        let classes = bundle.num_classes();
        for &depth in &depths {
            for &scheme in &schemes {
                let model = cfg.model.node_config(bundle.features.cols(), classes, depth, scheme)?;
                let (report, _) = train(
                    &model,
                    &na,
                    &bundle.features,
                    None,
                    &bundle.labels,
                    &bundle.masks,
                    metric,
                    &RngStream::new(seed, STREAM_INIT),
                )?;
                log::info!(
                    "depth {depth} {scheme} seed {seed}: test {:?}",
                    report.test_at_best_val
                );
                rows.push(DepthRow {
                    depth,
                    scheme,
                    seed,
                    test: report.test_at_best_val.ok_or_else(|| Error::param("no test split"))?,
                    best_epoch: report.best_epoch,
                });
            }
        }
    }
    let mut aggregates = Vec::new();
    for &depth in &depths {
        for &scheme in &schemes {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.depth == depth && r.scheme == scheme)
                .map(|r| r.test)
                .collect();
            aggregates.push(DepthAggregate {
                depth,
                scheme,
                test: Summary::of(&v),
            });
        }
    }
    Ok(SweepReport {
        metric,
        cold_start: cfg.cold_start,
        rows,
        aggregates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdStartSummary {
    pub scheme: InitScheme,
    /// Depth with the highest mean test score; the shallower one on ties.
    pub best_depth: usize,
    pub best: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdStartReport {
    pub sweep: SweepReport,
    pub best: Vec<ColdStartSummary>,
}

impl ColdStartReport {
    pub fn best_for(&self, scheme: InitScheme) -> Option<&ColdStartSummary> {
        self.best.iter().find(|b| b.scheme == scheme)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scheme,best_depth,n_seeds,mean,std\n");
        for b in &self.best {
            writeln!(out, "{},{},{},{},{}", b.scheme, b.best_depth, b.best.n_seeds, b.best.mean, b.best.std)
                .expect("write to string");
        }
        out
    }
}

/// Depth sweep on cold-start data. Refuses configs without `cold_start`.
pub fn run_coldstart(cfg: &RunConfig) -> Result<ColdStartReport> {
    if !cfg.cold_start {
        return Err(Error::param("coldstart requires \"cold_start\": true in the config"));
    }
    let sweep = run_sweep_depth(cfg)?;
    let mut best = Vec::new();
    for scheme in cfg.resolved_schemes() {
        let top = sweep
            .aggregates
            .iter()
            .filter(|a| a.scheme == scheme)
            .fold(None::<&DepthAggregate>, |acc, a| match acc {
                Some(b) if b.test.mean >= a.test.mean => Some(b),
                _ => Some(a),
            })
            .expect("at least one depth");
        best.push(ColdStartSummary {
            scheme,
            best_depth: top.depth,
            best: top.test,
        });
    }
    Ok(ColdStartReport { sweep, best })
}

// ------------------------------------------------------------------ graphcls

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphClsRow {
    pub scheme: InitScheme,
    pub seed: u64,
    pub test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphClsReport {
    pub metric: Metric,
    pub rows: Vec<GraphClsRow>,
    pub aggregates: Vec<(InitScheme, Summary)>,
}

impl GraphClsReport {
    pub fn aggregate(&self, scheme: InitScheme) -> Option<Summary> {
        self.aggregates.iter().find(|a| a.0 == scheme).map(|a| a.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,seed,test\n");
        for r in &self.rows {
            writeln!(out, "{},{},{}", r.scheme, r.seed, r.test).expect("write to string");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("scheme,n_seeds,mean,std\n");
        for (s, a) in &self.aggregates {
            writeln!(out, "{s},{},{},{}", a.n_seeds, a.mean, a.std).expect("write to string");
        }
        out
    }
}

/// Graph classification with mean readout; `model.depth` counts the
/// convolutions before the linear head.
pub fn run_graphcls(cfg: &RunConfig) -> Result<GraphClsReport> {
    cfg.validate()?;
    let metric = cfg.metric.unwrap_or(Metric::Accuracy);
    let mut rows = Vec::new();
    let fixed = match &cfg.data {
        DataSource::GraphSet { path } => Some(load_graph_set(path)?),
        DataSource::TrianglesVsSquares { .. } => None,
        _ => return Err(Error::param("graphcls needs a graph-set or triangles-vs-squares data source")),
    };
    for &seed in &cfg.seeds {
        let set = match (&fixed, &cfg.data) {
            (Some(s), _) => s.clone(),
            (None, DataSource::TrianglesVsSquares { count, noise }) => {
                triangles_vs_squares(*count, *noise, &mut RngStream::new(seed, STREAM_DATA))?
            }
            _ => unreachable!("checked above"),
        };
        let batched = set.batch()?;
        let masks = set.masks(&mut RngStream::new(seed, STREAM_SPLIT))?;
        let na = normalize(&batched.graph, Normalization::Symmetric)?;
        for scheme in cfg.resolved_schemes() {
            let model = cfg.model.graph_config(set.feature_dim(), set.num_classes(), cfg.model.depth, scheme)?;
            let (report, _) = train(
                &model,
                &na,
                &batched.features,
                Some(&batched.batch),
                &set.labels,
                &masks,
                metric,
                &RngStream::new(seed, STREAM_INIT),
            )?;
            rows.push(GraphClsRow {
                scheme,
                seed,
                test: report.test_at_best_val.ok_or_else(|| Error::param("no test split"))?,
            });
        }
    }
    let aggregates = cfg
        .resolved_schemes()
        .into_iter()
        .map(|s| {
            let v: Vec<f64> = rows.iter().filter(|r| r.scheme == s).map(|r| r.test).collect();
            (s, Summary::of(&v))
        })
        .collect();
    Ok(GraphClsReport { metric, rows, aggregates })
}

// ------------------------------------------------------------------ spectrum

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Trained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub scheme: InitScheme,
    pub seed: u64,
    pub stage: Stage,
    pub layer: usize,
    pub sigma_max: f64,
    pub product_s: f64,
    /// Absent when the spectral gap is unavailable.
    pub s_lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularRow {
    pub scheme: InitScheme,
    pub seed: u64,
    pub report: CircularLawReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Spectral gap of each seed's graph; absent above the eigensolver cap.
    pub lambda: Vec<(u64, Option<f64>)>,
    pub rows: Vec<SpectrumRow>,
    /// Mean and std of `sigma_max` per (scheme, stage, layer).
    pub aggregates: Vec<(InitScheme, Stage, usize, Summary)>,
    pub circular: Vec<CircularRow>,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,seed,stage,layer,sigma_max,product_s,s_lambda\n");
        for r in &self.rows {
            let stage = match r.stage {
                Stage::Init => "init",
                Stage::Trained => "trained",
            };
            writeln!(
                out,
                "{},{},{stage},{},{},{},{}",
                r.scheme,
                r.seed,
                r.layer,
                r.sigma_max,
                r.product_s,
                csv_opt(r.s_lambda)
            )
            .expect("write to string");
        }
        out
    }

    pub fn circular_csv(&self) -> String {
        let mut out = String::from("scheme,seed,n,empirical_radius,predicted_radius,radial_ks\n");
        for c in &self.circular {
            let r = &c.report;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.scheme,
                c.seed,
                r.n,
                r.empirical_radius,
                r.predicted_radius,
                csv_opt(r.radial_ks)
            )
            .expect("write to string");
        }
        out
    }
}

/// Largest singular values of every layer at init (and optionally after
/// training), the `s * lambda` products and circular-law checks.
pub fn run_spectrum(cfg: &RunConfig) -> Result<SpectrumReport> {
    cfg.validate()?;
    let schemes = cfg.resolved_schemes();
    let mut lambda = Vec::new();
    let mut rows = Vec::new();
    let mut circular = Vec::new();
    for &seed in &cfg.seeds {
        let bundle = node_problem(&cfg.data, seed)?;
        let na = normalize(&bundle.graph, Normalization::Symmetric)?;
        let gap = match spectral_gap(&na) {
            Ok(g) => Some(g),
            Err(Error::SizeCap { .. }) => {
                log::warn!("spectral gap unavailable: graph exceeds the dense eigensolver cap");
                None
            }
            Err(e) => return Err(e),
        };
        lambda.push((seed, gap));
        for &scheme in &schemes {
            let model = cfg.model.node_config(bundle.features.cols(), bundle.num_classes(), cfg.model.depth, scheme)?;
            let rng = RngStream::new(seed, STREAM_INIT);
            let state = ModelState::new(&model, &rng)?;
            let mut push = |state: &ModelState, stage: Stage| -> Result<()> {
                for rec in weight_spectrum(state, gap.unwrap_or(f64::NAN))? {
                    rows.push(SpectrumRow {
                        scheme,
                        seed,
                        stage,
                        layer: rec.layer,
                        sigma_max: rec.sigma_max,
                        product_s: rec.product_s,
                        s_lambda: gap.map(|_| rec.s_lambda),
                    });
                }
                Ok(())
            };
            push(&state, Stage::Init)?;
            if cfg.spectrum.after_training {
                let (_, trained) = train(
                    &model,
                    &na,
                    &bundle.features,
                    None,
                    &bundle.labels,
                    &bundle.masks,
                    cfg.metric.unwrap_or(Metric::Accuracy),
                    &rng,
                )?;
                push(&trained, Stage::Trained)?;
            }
            if cfg.spectrum.circular_law_n > 0 {
                let mut crng = rng.substream(u64::MAX);
                circular.push(CircularRow {
                    scheme,
                    seed,
                    report: circular_law_check(scheme, cfg.spectrum.circular_law_n, &mut crng)?,
                });
            }
        }
    }
    let mut aggregates = Vec::new();
    let max_layer = rows.iter().map(|r| r.layer).max().unwrap_or(0);
    for &scheme in &schemes {
        for stage in [Stage::Init, Stage::Trained] {
            for layer in 1..=max_layer {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.scheme == scheme && r.stage == stage && r.layer == layer)
                    .map(|r| r.sigma_max)
                    .collect();
                if !v.is_empty() {
                    aggregates.push((scheme, stage, layer, Summary::of(&v)));
                }
            }
        }
    }
    Ok(SpectrumReport {
        lambda,
        rows,
        aggregates,
        circular,
    })
}

// -------------------------------------------------------------- oversmoothing

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OversmoothingRow {
    pub scheme: InitScheme,
    pub seed: u64,
    /// `d_M(H^l)` for `l = 0..=L`.
    pub distances: Vec<f64>,
    /// Geometric-mean ratio of consecutive distances over the window.
    pub decay_rate: f64,
}

/// `d_M` profiles of untrained models and their decay rates over layers
/// `from..to`.
pub fn run_oversmoothing(cfg: &RunConfig, from: usize, to: usize) -> Result<Vec<OversmoothingRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let bundle = node_problem(&cfg.data, seed)?;
        let na = normalize(&bundle.graph, Normalization::Symmetric)?;
        for scheme in cfg.resolved_schemes() {
            let model = cfg.model.node_config(bundle.features.cols(), bundle.num_classes(), cfg.model.depth, scheme)?;
            let mut state = ModelState::new(&model, &RngStream::new(seed, STREAM_INIT))?;
            state.forward(&model, &na, &bundle.features, None)?;
            let distances = oversmoothing_profile(&state, &bundle.graph)?;
            let decay_rate = geometric_decay_rate(&distances, from, to)?;
            rows.push(OversmoothingRow {
                scheme,
                seed,
                distances,
                decay_rate,
            });
        }
    }
    Ok(rows)
}
