//! Plain-text dataset bundles, the cold-start transform and embedding export.
//!
//! A node bundle is a directory holding `edges.tsv`, `features.csv`,
//! `labels.csv` and `masks.csv`. A graph set is a JSON-lines file with one
//! graph per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::linalg::{DenseMatrix, RngStream};
use crate::model::{GraphBatch, Masks, ModelState};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MASKS_FILE: &str = "masks.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct NodeBundle {
    pub graph: Graph,
    pub features: DenseMatrix,
    /// `-1` marks an unlabeled node.
    pub labels: Vec<i64>,
    pub masks: Masks,
}

impl NodeBundle {
    pub fn new(graph: Graph, features: DenseMatrix, labels: Vec<i64>, masks: Masks) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n || labels.len() != n {
            return Err(Error::shape(format!(
                "{} feature rows and {} labels for {n} nodes",
                features.rows(),
                labels.len()
            )));
        }
        let classes = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
        masks.validate(&labels, classes)?;
        Ok(Self {
            graph,
            features,
            labels,
            masks,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lines with their 1-based numbers, trailing blank lines dropped.
fn lines(text: &str) -> Vec<(usize, &str)> {
    let mut out: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).collect();
    while out.last().is_some_and(|(_, l)| l.trim().is_empty()) {
        out.pop();
    }
    out
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(file: &str, line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("{s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(file, line, format!("{s:?} is not finite")));
    }
    Ok(v)
}

fn parse_index(file: &str, line: usize, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("{s:?} is not a node index")))
}

pub fn load_node_bundle(dir: impl AsRef<Path>) -> Result<NodeBundle> {
    let dir = dir.as_ref();
    let labels_text = read(&dir.join(LABELS_FILE))?;
    let features_text = read(&dir.join(FEATURES_FILE))?;
    let masks_text = read(&dir.join(MASKS_FILE))?;
    let edges_text = read(&dir.join(EDGES_FILE))?;

    let mut labels = Vec::new();
    for (line, l) in lines(&labels_text) {
        let y: i64 = l
            .trim()
            .parse()
            .map_err(|_| parse_err(LABELS_FILE, line, format!("{l:?} is not an integer label")))?;
        if y < -1 {
            return Err(parse_err(LABELS_FILE, line, "labels must be >= -1"));
        }
        labels.push(y);
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyDataset(format!("{} has no nodes", dir.display())));
    }

    let feature_lines = lines(&features_text);
    if feature_lines.len() != n {
        return Err(Error::Ragged {
            file: FEATURES_FILE.into(),
            message: format!("{} rows for {n} nodes", feature_lines.len()),
        });
    }
    let mut data = Vec::new();
    let mut width = None;
    for (line, l) in feature_lines {
        let row: Vec<f64> = l
            .split(',')
            .map(|s| parse_f64(FEATURES_FILE, line, s))
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Ragged {
                    file: FEATURES_FILE.into(),
                    message: format!("line {line} has {} columns, expected {w}", row.len()),
                });
            }
            _ => {}
        }
        data.extend(row);
    }
    let features = DenseMatrix::from_vec(n, width.unwrap_or(0), data)?;

    let mask_lines = lines(&masks_text);
    if mask_lines.len() != n {
        return Err(Error::Ragged {
            file: MASKS_FILE.into(),
            message: format!("{} rows for {n} nodes", mask_lines.len()),
        });
    }
    let mut masks = Masks {
        train: Vec::with_capacity(n),
        val: Vec::with_capacity(n),
        test: Vec::with_capacity(n),
    };
    for (line, l) in mask_lines {
        let flags: Vec<&str> = l.split(',').map(str::trim).collect();
        if flags.len() != 3 {
            return Err(Error::Ragged {
                file: MASKS_FILE.into(),
                message: format!("line {line} has {} flags, expected 3", flags.len()),
            });
        }
        let mut parsed = [false; 3];
        for (p, f) in parsed.iter_mut().zip(&flags) {
            *p = match *f {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(MASKS_FILE, line, format!("{other:?} is not 0 or 1"))),
            };
        }
        masks.train.push(parsed[0]);
        masks.val.push(parsed[1]);
        masks.test.push(parsed[2]);
    }

    let mut edges = Vec::new();
    for (line, l) in lines(&edges_text) {
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(EDGES_FILE, line, "expected u<TAB>v[<TAB>weight]"));
        }
        let u = parse_index(EDGES_FILE, line, fields[0])?;
        let v = parse_index(EDGES_FILE, line, fields[1])?;
        for index in [u, v] {
            if index >= n {
                return Err(Error::NodeOutOfRange { index, n });
            }
        }
        let w = match fields.get(2) {
            Some(s) => parse_f64(EDGES_FILE, line, s)?,
            None => 1.0,
        };
        edges.push((u, v, w));
    }
    let graph = build_graph(n, &edges)?;
    NodeBundle::new(graph, features, labels, masks)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the canonical form: one line per undirected edge with `u < v`,
/// shortest round-trip float formatting.
pub fn save_node_bundle(bundle: &NodeBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    for &(u, v, w) in bundle.graph.edges() {
        writeln!(edges, "{u}\t{v}\t{w}").expect("write to string");
    }
    write(&dir.join(EDGES_FILE), &edges)?;
    write(&dir.join(FEATURES_FILE), &matrix_csv(&bundle.features))?;
    let labels: String = bundle.labels.iter().map(|y| format!("{y}\n")).collect();
    write(&dir.join(LABELS_FILE), &labels)?;
    let m = &bundle.masks;
    let masks: String = (0..bundle.labels.len())
        .map(|i| format!("{},{},{}\n", u8::from(m.train[i]), u8::from(m.val[i]), u8::from(m.test[i])))
        .collect();
    write(&dir.join(MASKS_FILE), &masks)
}

fn matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Zeroes the features of every node outside the train mask.
pub fn cold_start(bundle: &NodeBundle) -> NodeBundle {
    let mut out = bundle.clone();
    for (i, &keep) in bundle.masks.train.iter().enumerate() {
        if !keep {
            out.features.row_mut(i).fill(0.0);
        }
    }
    out
}

/// Random train/val/test split with the given fractions of `n` entries.
pub fn random_masks(n: usize, train: f64, val: f64, rng: &mut RngStream) -> Result<Masks> {
    if !(train >= 0.0 && val >= 0.0 && train + val <= 1.0) {
        return Err(Error::param(format!("split fractions {train} + {val} must lie in [0, 1]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = (train * n as f64).round() as usize;
    let n_val = ((val * n as f64).round() as usize).min(n - n_train);
    let mut masks = Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    for (k, &i) in order.iter().enumerate() {
        if k < n_train {
            masks.train[i] = true;
        } else if k < n_train + n_val {
            masks.val[i] = true;
        } else {
            masks.test[i] = true;
        }
    }
    Ok(masks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphRecord {
    pub graph: Graph,
    pub features: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSetBundle {
    pub graphs: Vec<GraphRecord>,
    pub labels: Vec<i64>,
    /// Per-graph split when every record names one.
    pub splits: Option<Vec<Split>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphLine {
    num_nodes: usize,
    edges: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
    label: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

/// A block-diagonal batch of several graphs.
#[derive(Clone, Debug)]
pub struct Batched {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub batch: GraphBatch,
}

impl GraphSetBundle {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.features.cols())
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    /// The recorded split, or a seeded 80/10/10 split otherwise.
    pub fn masks(&self, rng: &mut RngStream) -> Result<Masks> {
        match &self.splits {
            Some(s) => Ok(Masks {
                train: s.iter().map(|&x| x == Split::Train).collect(),
                val: s.iter().map(|&x| x == Split::Val).collect(),
                test: s.iter().map(|&x| x == Split::Test).collect(),
            }),
            None => random_masks(self.len(), 0.8, 0.1, rng),
        }
    }

    /// All graphs as one disjoint union.
    pub fn batch(&self) -> Result<Batched> {
        if self.is_empty() {
            return Err(Error::EmptyDataset("graph set has no graphs".into()));
        }
        let parts: Vec<&Graph> = self.graphs.iter().map(|g| &g.graph).collect();
        let (graph, _) = Graph::disjoint_union(&parts)?;
        let width = self.feature_dim();
        let mut data = Vec::with_capacity(graph.num_nodes() * width);
        for g in &self.graphs {
            data.extend_from_slice(g.features.as_slice());
        }
        let features = DenseMatrix::from_vec(graph.num_nodes(), width, data)?;
        let sizes: Vec<usize> = self.graphs.iter().map(|g| g.graph.num_nodes()).collect();
        Ok(Batched {
            graph,
            features,
            batch: GraphBatch::from_sizes(&sizes)?,
        })
    }
}

fn graph_from_line(rec: GraphLine, file: &str, line: usize) -> Result<GraphRecord> {
    let n = rec.num_nodes;
    if n == 0 {
        return Err(parse_err(file, line, "num_nodes must be >= 1"));
    }
    let mut edges = Vec::with_capacity(rec.edges.len());
    for e in &rec.edges {
        if !(2..=3).contains(&e.len()) {
            return Err(parse_err(file, line, "edges are [u, v] or [u, v, weight]"));
        }
        let index = |x: f64| -> Result<usize> {
            if x < 0.0 || x.fract() != 0.0 {
                return Err(parse_err(file, line, format!("{x} is not a node index")));
            }
            if x as usize >= n {
                return Err(parse_err(file, line, format!("edge index {x} >= num_nodes {n}")));
            }
            Ok(x as usize)
        };
        edges.push((index(e[0])?, index(e[1])?, e.get(2).copied().unwrap_or(1.0)));
    }
    let graph = build_graph(n, &edges).map_err(|e| parse_err(file, line, e.to_string()))?;
    if rec.features.len() != n {
        return Err(parse_err(file, line, format!("{} feature rows for {n} nodes", rec.features.len())));
    }
    let width = rec.features[0].len();
    if rec.features.iter().any(|r| r.len() != width) {
        return Err(parse_err(file, line, "ragged feature rows"));
    }
    let features = DenseMatrix::from_rows(&rec.features).map_err(|e| parse_err(file, line, e.to_string()))?;
    Ok(GraphRecord { graph, features })
}

pub fn load_graph_set(path: impl AsRef<Path>) -> Result<GraphSetBundle> {
    let path = path.as_ref();
    let text = read(path)?;
    let file = path.display().to_string();
    let mut set = GraphSetBundle {
        graphs: Vec::new(),
        labels: Vec::new(),
        splits: Some(Vec::new()),
    };
    let mut all_split = true;
    for (line, l) in lines(&text) {
        if l.trim().is_empty() {
            continue;
        }
        let rec: GraphLine = serde_json::from_str(l).map_err(|e| parse_err(&file, line, e.to_string()))?;
        if rec.label < 0 {
            return Err(parse_err(&file, line, "graph labels must be >= 0"));
        }
        let label = rec.label;
        let split = rec.split;
        let g = graph_from_line(rec, &file, line)?;
        if let Some(first) = set.graphs.first() {
            if first.features.cols() != g.features.cols() {
                return Err(parse_err(&file, line, "feature width differs from the first graph"));
            }
        }
        match (split, set.splits.as_mut()) {
            (Some(s), Some(v)) => v.push(s),
            _ => all_split = false,
        }
        set.graphs.push(g);
        set.labels.push(label);
    }
    if set.graphs.is_empty() {
        return Err(Error::EmptyDataset(format!("{file} has no graphs")));
    }
    if !all_split {
        set.splits = None;
    }
    Ok(set)
}

pub fn save_graph_set(set: &GraphSetBundle, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (k, g) in set.graphs.iter().enumerate() {
        let rec = GraphLine {
            num_nodes: g.graph.num_nodes(),
            edges: g
                .graph
                .edges()
                .iter()
                .map(|&(u, v, w)| vec![u as f64, v as f64, w])
                .collect(),
            features: g.features.to_rows(),
            label: set.labels[k],
            split: set.splits.as_ref().map(|s| s[k]),
        };
        out.push_str(&serde_json::to_string(&rec).expect("serializable record"));
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

/// Writes `H^layer` of the cached forward pass as CSV with a
/// `node,label,h0,...` header.
pub fn export_embeddings(state: &ModelState, labels: &[i64], layer: usize, path: impl AsRef<Path>) -> Result<()> {
    let cache = state.cache().ok_or(Error::NoForwardCache)?;
    let h = cache.activations.get(layer).ok_or_else(|| {
        Error::param(format!(
            "layer {layer} out of range 0..={}",
            cache.activations.len() - 1
        ))
    })?;
    if h.rows() != labels.len() {
        return Err(Error::shape(format!(
            "layer {layer} has {} rows for {} labels",
            h.rows(),
            labels.len()
        )));
    }
    let mut out = String::from("node,label");
    for k in 0..h.cols() {
        write!(out, ",h{k}").expect("write to string");
    }
    out.push('\n');
    for (i, row) in h.iter_rows().enumerate() {
        write!(out, "{i},{}", labels[i]).expect("write to string");
        for v in row {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    write(path.as_ref(), &out)
}

/// Local clustering coefficient of every node.
pub fn clustering_coefficients(g: &Graph) -> Vec<f64> {
    (0..g.num_nodes())
        .map(|i| {
            let nb: Vec<usize> = g.neighbors(i).map(|(j, _)| j).collect();
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for a in 0..k {
                for b in (a + 1)..k {
                    if g.adjacency().get(nb[a], nb[b]) != 0.0 {
                        links += 1;
                    }
                }
            }
            links as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

/// Two-class set: a triangle (label 0) or a 4-cycle (label 1), each with a
/// pendant path of 0 to 3 extra nodes. Node features are
/// `[1, clustering coefficient, degree / 4]` plus Gaussian noise of scale
/// `noise`; constant features alone cannot separate 2-regular motifs.
pub fn triangles_vs_squares(count: usize, noise: f64, rng: &mut RngStream) -> Result<GraphSetBundle> {
    if count == 0 {
        return Err(Error::EmptyDataset("triangles_vs_squares needs count >= 1".into()));
    }
    let mut set = GraphSetBundle {
        graphs: Vec::with_capacity(count),
        labels: Vec::with_capacity(count),
        splits: None,
    };
    for k in 0..count {
        let label = (k % 2) as i64;
        let motif = 3 + label as usize;
        let tail = rng.below(4);
        let n = motif + tail;
        let mut edges: Vec<(usize, usize, f64)> = (0..motif).map(|i| (i, (i + 1) % motif, 1.0)).collect();
        for t in 0..tail {
            let prev = if t == 0 { 0 } else { motif + t - 1 };
            edges.push((prev, motif + t, 1.0));
        }
        let graph = build_graph(n, &edges)?;
        let cc = clustering_coefficients(&graph);
        let deg = graph.augmented_degrees();
        let features = DenseMatrix::from_fn(n, 3, |i, j| {
            let base = match j {
                0 => 1.0,
                1 => cc[i],
                _ => (deg[i] - 1.0) / 4.0,
            };
            base + noise * rng.normal()
        });
        set.graphs.push(GraphRecord { graph, features });
        set.labels.push(label);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NodeBundle {
        let graph = build_graph(2, &[(0, 1, 1.0)]).unwrap();
        let features = DenseMatrix::from_rows(&[vec![0.1, -2.5], vec![3.0, 1e-300]]).unwrap();
        let masks = Masks {
            train: vec![true, false],
            val: vec![false, false],
            test: vec![false, true],
        };
        NodeBundle::new(graph, features, vec![0, 1], masks).unwrap()
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        save_node_bundle(&tiny(), dir.path()).unwrap();
        assert_eq!(load_node_bundle(dir.path()).unwrap(), tiny());
    }

    #[test]
    fn cold_start_zeroes_unlabeled_rows() {
        let c = cold_start(&tiny());
        assert_eq!(c.features.row(0), tiny().features.row(0));
        assert_eq!(c.features.row(1), &[0.0, 0.0]);
        assert_eq!(cold_start(&c), c);
    }

    #[test]
    fn clustering_of_motifs() {
        let tri = build_graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(clustering_coefficients(&tri), vec![1.0; 3]);
        let sq = build_graph(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap();
        assert_eq!(clustering_coefficients(&sq), vec![0.0; 4]);
    }

    #[test]
    fn synthetic_set_shape() {
        let set = triangles_vs_squares(10, 0.1, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(set.labels.iter().filter(|&&y| y == 1).count(), 5);
        let b = set.batch().unwrap();
        assert_eq!(b.batch.num_graphs(), 10);
        assert_eq!(b.features.rows(), b.graph.num_nodes());
    }
}
