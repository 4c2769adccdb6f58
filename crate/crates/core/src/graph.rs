//! Undirected graphs, self-loop augmented adjacency normalizations and the
//! spectral gap of `I - A_hat`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, DenseMatrix, RngStream, SparseMatrix, DENSE_EIG_CAP};

/// Eigenvalues of `I - A_hat` below this count as zero.
pub const ZERO_EIGENVALUE_THRESHOLD: f64 = 1e-8;

/// Undirected weighted graph without explicit self-loops.
///
/// Edges are stored once as `(u, v, w)` with `u < v`, sorted. The self-loop of
/// the augmented adjacency `A + I` is implicit and has weight one.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    adjacency: SparseMatrix,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Plain adjacency `A` (symmetric, zero diagonal).
    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    /// `(neighbor, weight)` pairs of node `i`, self excluded.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency.row(i)
    }

    /// Degrees of `A + I`: incident weight plus one for the self-loop.
    pub fn augmented_degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums().into_iter().map(|d| d + 1.0).collect()
    }

    /// Graph with node `i` renamed to `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::shape("permutation length differs from node count"));
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || seen[p] {
                return Err(Error::param("relabel needs a permutation of 0..n"));
            }
            seen[p] = true;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v, w)| (perm[u], perm[v], w))
            .collect();
        build_graph(self.n, &edges)
    }

    /// Disjoint union; returns the graph and the node offset of each part.
    pub fn disjoint_union(parts: &[&Graph]) -> Result<(Graph, Vec<usize>)> {
        let mut offsets = Vec::with_capacity(parts.len());
        let mut edges = Vec::new();
        let mut n = 0;
        for g in parts {
            offsets.push(n);
            edges.extend(g.edges.iter().map(|&(u, v, w)| (u + n, v + n, w)));
            n += g.n;
        }
        Ok((build_graph(n, &edges)?, offsets))
    }

    /// Connected component id of every node and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for (v, _) in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }
}

/// Builds a canonical undirected graph.
///
/// `(u, v)` and `(v, u)` are merged by summing weights. Self-pairs are
/// dropped since augmentation supplies every node's self-loop.
pub fn build_graph(n: usize, edge_list: &[(usize, usize, f64)]) -> Result<Graph> {
    let mut canon = Vec::with_capacity(edge_list.len());
    for &(u, v, w) in edge_list {
        for index in [u, v] {
            if index >= n {
                return Err(Error::NodeOutOfRange { index, n });
            }
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::param(format!("edge ({u}, {v}) has weight {w}, expected > 0")));
        }
        if u != v {
            canon.push((u.min(v), u.max(v), w));
        }
    }
    canon.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(canon.len());
    for (u, v, w) in canon {
        match edges.last_mut() {
            Some(last) if (last.0, last.1) == (u, v) => last.2 += w,
            _ => edges.push((u, v, w)),
        }
    }
    let triplets: Vec<_> = edges
        .iter()
        .flat_map(|&(u, v, w)| [(u, v, w), (v, u, w)])
        .collect();
    let adjacency = SparseMatrix::from_triplets(n, n, &triplets)?;
    Ok(Graph { n, edges, adjacency })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `D^-1/2 (A + I) D^-1/2`
    Symmetric,
    /// `D^-1 (A + I)`
    Row,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    pub variant: Normalization,
    pub matrix: SparseMatrix,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn normalize(g: &Graph, variant: Normalization) -> Result<NormalizedAdjacency> {
    if g.n == 0 {
        return Err(Error::DegenerateGraph("graph has no nodes".into()));
    }
    let deg = g.augmented_degrees();
    let mut triplets = Vec::with_capacity(g.adjacency.nnz() + g.n);
    for i in 0..g.n {
        let scale = |j: usize| match variant {
            Normalization::Symmetric => 1.0 / (deg[i] * deg[j]).sqrt(),
            Normalization::Row => 1.0 / deg[i],
        };
        triplets.push((i, i, scale(i)));
        for (j, w) in g.neighbors(i) {
            triplets.push((i, j, w * scale(j)));
        }
    }
    Ok(NormalizedAdjacency {
        variant,
        matrix: SparseMatrix::from_triplets(g.n, g.n, &triplets)?,
    })
}

/// Smallest eigenvalue of `I - A_hat` above [`ZERO_EIGENVALUE_THRESHOLD`].
pub fn spectral_gap(na: &NormalizedAdjacency) -> Result<f64> {
    if na.variant != Normalization::Symmetric {
        return Err(Error::param("spectral_gap needs the symmetric normalization"));
    }
    let n = na.num_nodes();
    if n > DENSE_EIG_CAP {
        return Err(Error::SizeCap {
            size: n,
            cap: DENSE_EIG_CAP,
        });
    }
    let a = na.matrix.to_dense();
    let laplacian = DenseMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - a[(i, j)]);
    let eig = jacobi_eigh(&laplacian, 1e-10)?;
    eig.values
        .into_iter()
        .find(|&v| v > ZERO_EIGENVALUE_THRESHOLD)
        .ok_or_else(|| Error::DegenerateGraph("I - A_hat has no nonzero eigenvalue".into()))
}

/// Stochastic block model with one-hot community features plus Gaussian noise.
///
/// Node `i` belongs to community `i / nodes_per_community`.
pub fn sbm_generate(
    rng: &mut RngStream,
    communities: usize,
    nodes_per_community: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
) -> Result<(Graph, DenseMatrix, Vec<i64>)> {
    if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
        return Err(Error::param(format!(
            "SBM needs 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if communities == 0 || nodes_per_community == 0 {
        return Err(Error::param("SBM needs at least one community and node"));
    }
    if feature_dim < communities {
        return Err(Error::param(format!(
            "feature_dim {feature_dim} cannot hold {communities} one-hot centroids"
        )));
    }
    if !(feature_noise >= 0.0) || !feature_noise.is_finite() {
        return Err(Error::param(format!("feature noise must be >= 0, got {feature_noise}")));
    }
    let n = communities * nodes_per_community;
    let labels: Vec<i64> = (0..n).map(|i| (i / nodes_per_community) as i64).collect();
    let mut edge_rng = rng.substream(0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if edge_rng.bernoulli(p) {
                edges.push((u, v, 1.0));
            }
        }
    }
    let graph = build_graph(n, &edges)?;
    let mut feature_rng = rng.substream(1);
    let mut features = DenseMatrix::zeros(n, feature_dim);
    for i in 0..n {
        let row = features.row_mut(i);
        for x in row.iter_mut() {
            *x = feature_noise * feature_rng.normal();
        }
        row[labels[i] as usize] += 1.0;
    }
    Ok((graph, features, labels))
}

/// Circular ladder (prism) graph on `2k` nodes: two `k`-cycles joined by
/// rungs. Every node has degree 3.
pub fn circular_ladder(k: usize) -> Result<Graph> {
    if k < 3 {
        return Err(Error::param("circular ladder needs k >= 3"));
    }
    let mut edges = Vec::with_capacity(3 * k);
    for i in 0..k {
        let j = (i + 1) % k;
        edges.push((i, j, 1.0));
        edges.push((k + i, k + j, 1.0));
        edges.push((i, k + i, 1.0));
    }
    build_graph(2 * k, &edges)
}
