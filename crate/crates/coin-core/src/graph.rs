//! Sparse weighted graphs in compressed-row form.
//!
//! Home of the pieces the diffusion layer needs: edge weights `w_ij`, cached
//! degrees `d_i = sum_j w_ij`, and the Laplacian action
//! `(L u)_i = sum_j w_ij (u_i - u_j)` computed in one sparse pass without
//! materializing `L = D - W`. Also provides GCN-style normalization
//! `D^{-1/2} (W + I) D^{-1/2}` for citation graphs and Gaussian k-NN graph
//! construction with per-point bandwidths for feature tables.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::tensor::Tensor;

pub const GRAPH_MAGIC: &[u8; 8] = b"COINGR1\0";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge ({src}, {dst}, {weight}) references a node id >= n_nodes = {n_nodes}")]
    NodeIdOutOfRange { src: usize, dst: usize, weight: f64, n_nodes: usize },
    #[error("edge ({src}, {dst}) carries negative weight {weight}")]
    NegativeWeight { src: usize, dst: usize, weight: f64 },
    #[error("matrix has {got} rows but graph has {expected} nodes")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("k-NN graph needs n > max(n_top, sigma_k): n = {n}, n_top = {n_top}, sigma_k = {sigma_k}")]
    TooFewPoints { n: usize, n_top: usize, sigma_k: usize },
    #[error("k-NN parameters must be >= 1 (n_top = {n_top}, sigma_k = {sigma_k})")]
    BadKnnParams { n_top: usize, sigma_k: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad graph cache: {0}")]
    BadCache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Edge list staging structure; node ids are dense non-negative integers.
#[derive(Debug, Clone, Default)]
pub struct EdgeList {
    pub edges: Vec<(usize, usize, f64)>,
}

impl EdgeList {
    pub fn new() -> Self {
        EdgeList { edges: Vec::new() }
    }

    pub fn push(&mut self, src: usize, dst: usize, weight: f64) {
        self.edges.push((src, dst, weight));
    }

    /// Parse the text format: one `src<TAB>dst` or `src<TAB>dst<TAB>weight`
    /// per line, `#` starts a comment, blank lines ignored. Whitespace other
    /// than tabs is tolerated as a separator.
    pub fn parse_text(text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let src = it.next().and_then(|t| t.parse::<usize>().ok());
            let dst = it.next().and_then(|t| t.parse::<usize>().ok());
            let (src, dst) = match (src, dst) {
                (Some(s), Some(d)) => (s, d),
                _ => {
                    return Err(GraphError::Parse {
                        line: lineno + 1,
                        msg: format!("expected `src\\tdst[\\tweight]`, got {raw:?}"),
                    })
                }
            };
            let weight = match it.next() {
                Some(tok) => tok.parse::<f64>().map_err(|_| GraphError::Parse {
                    line: lineno + 1,
                    msg: format!("bad weight {tok:?}"),
                })?,
                None => 1.0,
            };
            if it.next().is_some() {
                return Err(GraphError::Parse {
                    line: lineno + 1,
                    msg: "trailing fields after weight".into(),
                });
            }
            edges.push((src, dst, weight));
        }
        Ok(EdgeList { edges })
    }
}

/// Symmetric (after [`SparseGraph::symmetrize`]) weighted adjacency in
/// compressed row form, with cached row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
}

impl SparseGraph {
    /// Build from an edge list. Duplicate `(i, j)` entries are summed, rows
    /// end up sorted by column, degrees are cached.
    pub fn from_edge_list(edges: &EdgeList, n_nodes: usize) -> Result<Self, GraphError> {
        for &(src, dst, weight) in &edges.edges {
            if src >= n_nodes || dst >= n_nodes {
                return Err(GraphError::NodeIdOutOfRange { src, dst, weight, n_nodes });
            }
            if weight < 0.0 {
                return Err(GraphError::NegativeWeight { src, dst, weight });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = edges.edges.clone();
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (src, dst, w) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == src && last.1 == dst => last.2 += w,
                _ => merged.push((src, dst, w)),
            }
        }
        let mut row_offsets = vec![0usize; n_nodes + 1];
        for &(src, _, _) in &merged {
            row_offsets[src + 1] += 1;
        }
        for i in 0..n_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = merged.iter().map(|e| e.1).collect();
        let weights = merged.iter().map(|e| e.2).collect();
        let mut g = SparseGraph {
            n_nodes,
            row_offsets,
            col_indices,
            weights,
            degree: Vec::new(),
        };
        g.recompute_degree();
        Ok(g)
    }

    fn recompute_degree(&mut self) {
        self.degree = (0..self.n_nodes)
            .map(|i| {
                self.weights[self.row_offsets[i]..self.row_offsets[i + 1]]
                    .iter()
                    .sum()
            })
            .collect();
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored (directed) entries.
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Undirected edge count of a structurally symmetric graph: off-diagonal
    /// entries count in pairs, self-loops count once.
    pub fn undirected_edge_count(&self) -> usize {
        let self_loops = self.iter_row_all().filter(|&(i, j, _)| i == j).count();
        (self.nnz() - self_loops) / 2 + self_loops
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn max_degree(&self) -> f64 {
        self.degree.iter().fold(0.0, |m, &d| m.max(d))
    }

    /// Entries of row `i` as `(column, weight)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    fn iter_row_all(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn to_edge_list(&self) -> EdgeList {
        EdgeList { edges: self.iter_row_all().collect() }
    }

    /// Structural symmetrization with `w'_ij = max(w_ij, w_ji)`; preserves
    /// 0/1 citation graphs exactly.
    pub fn symmetrize(&self) -> SparseGraph {
        let mut edges = EdgeList::new();
        for (i, j, w) in self.iter_row_all() {
            let w_ji = self.weight_of(j, i).unwrap_or(0.0);
            let m = w.max(w_ji);
            edges.push(i, j, m);
            if i != j {
                edges.push(j, i, m);
            }
        }
        // duplicates collapse through a max-merge rather than the summing
        // construction
        let mut sorted = edges.edges;
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        sorted.dedup_by(|a, b| {
            if a.0 == b.0 && a.1 == b.1 {
                b.2 = b.2.max(a.2);
                true
            } else {
                false
            }
        });
        SparseGraph::from_edge_list(&EdgeList { edges: sorted }, self.n_nodes)
            .expect("symmetrize preserves node range")
    }

    fn weight_of(&self, i: usize, j: usize) -> Option<f64> {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        let cols = &self.col_indices[span.clone()];
        cols.binary_search(&j).ok().map(|pos| self.weights[span.start + pos])
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        self.iter_row_all()
            .all(|(i, j, w)| self.weight_of(j, i) == Some(w))
    }

    /// Induced subgraph on the largest connected component, ties broken by
    /// the component containing the smallest node id. Returns the subgraph
    /// and the old-id -> new-id map (`None` for dropped nodes).
    pub fn largest_connected_component(&self) -> (SparseGraph, Vec<Option<usize>>) {
        let n = self.n_nodes;
        if n == 0 {
            return (self.clone(), Vec::new());
        }
        let mut component = vec![usize::MAX; n];
        let mut n_components = 0usize;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let id = n_components;
            n_components += 1;
            let mut queue = VecDeque::from([start]);
            component[start] = id;
            while let Some(u) = queue.pop_front() {
                for (v, _) in self.row(u) {
                    if component[v] == usize::MAX {
                        component[v] = id;
                        queue.push_back(v);
                    }
                }
            }
        }
        let mut sizes = vec![0usize; n_components];
        for &c in &component {
            sizes[c] += 1;
        }
        // components are discovered in order of their minimum node id, so the
        // first maximal one wins the tie-break
        let best = sizes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut old_to_new = vec![None; n];
        let mut new_to_old = Vec::new();
        for old in 0..n {
            if component[old] == best {
                old_to_new[old] = Some(new_to_old.len());
                new_to_old.push(old);
            }
        }
        let mut edges = EdgeList::new();
        for &old in &new_to_old {
            for (j, w) in self.row(old) {
                if let Some(nj) = old_to_new[j] {
                    edges.push(old_to_new[old].unwrap(), nj, w);
                }
            }
        }
        let sub = SparseGraph::from_edge_list(&edges, new_to_old.len())
            .expect("lcc indices are in range");
        (sub, old_to_new)
    }

    /// GCN normalization `D~^{-1/2} (W + I) D~^{-1/2}` with
    /// `D~ = diag(rowsum(W + I))`; the self-loop guarantees positive degrees.
    pub fn gcn_normalize(&self) -> SparseGraph {
        let mut edges = self.to_edge_list();
        for i in 0..self.n_nodes {
            edges.push(i, i, 1.0);
        }
        let with_loops = SparseGraph::from_edge_list(&edges, self.n_nodes)
            .expect("self-loops stay in range");
        with_loops.sym_normalize()
    }

    /// Symmetric normalization `D^{-1/2} W D^{-1/2}` of the graph as stored
    /// (no self-loop added); zero-degree rows are left untouched.
    pub fn sym_normalize(&self) -> SparseGraph {
        let inv_sqrt: Vec<f64> = self
            .degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut out = self.clone();
        for i in 0..self.n_nodes {
            let span = self.row_offsets[i]..self.row_offsets[i + 1];
            for (k, &j) in self.col_indices[span.clone()].iter().enumerate() {
                out.weights[span.start + k] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        out.recompute_degree();
        out
    }

    /// Apply the graph Laplacian `L = D - W` to each column of `u`:
    /// `(L u)_i = sum_j w_ij (u_i - u_j)`, one sparse pass, no dense `L`.
    pub fn laplacian_apply(&self, u: &Tensor) -> Result<Tensor, GraphError> {
        if u.rows() != self.n_nodes {
            return Err(GraphError::DimensionMismatch { got: u.rows(), expected: self.n_nodes });
        }
        let c = u.cols();
        let mut out = Tensor::zeros(self.n_nodes, c);
        for i in 0..self.n_nodes {
            let d_i = self.degree[i];
            let u_i = u.row(i);
            let out_i = out.row_mut(i);
            for (o, &ui) in out_i.iter_mut().zip(u_i) {
                *o = d_i * ui;
            }
        }
        for i in 0..self.n_nodes {
            let span = self.row_offsets[i]..self.row_offsets[i + 1];
            let out_i = out.row_mut(i);
            for (pos, &j) in self.col_indices[span.clone()].iter().enumerate() {
                let w = self.weights[span.start + pos];
                let u_j = u.row(j);
                for (o, &uj) in out_i.iter_mut().zip(u_j) {
                    *o -= w * uj;
                }
            }
        }
        Ok(out)
    }

    // ---- binary cache ----

    pub fn write_cache<W: Write>(&self, w: &mut W) -> Result<(), GraphError> {
        w.write_all(GRAPH_MAGIC)?;
        w.write_all(&(self.n_nodes as u64).to_le_bytes())?;
        write_usize_array(w, &self.row_offsets)?;
        write_usize_array(w, &self.col_indices)?;
        write_f64_array(w, &self.weights)?;
        Ok(())
    }

    pub fn read_cache<R: Read>(r: &mut R) -> Result<Self, GraphError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != GRAPH_MAGIC {
            return Err(GraphError::BadCache(format!("bad magic {magic:?}")));
        }
        let n_nodes = read_u64(r)? as usize;
        let row_offsets = read_usize_array(r)?;
        let col_indices = read_usize_array(r)?;
        let weights = read_f64_array(r)?;
        if row_offsets.len() != n_nodes + 1
            || col_indices.len() != weights.len()
            || row_offsets.last().copied().unwrap_or(0) != col_indices.len()
        {
            return Err(GraphError::BadCache("inconsistent array lengths".into()));
        }
        let mut g = SparseGraph { n_nodes, row_offsets, col_indices, weights, degree: Vec::new() };
        g.recompute_degree();
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_cache(&mut f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_cache(&mut f)
    }
}

/// Gaussian k-NN graph: keep each point's `n_top` nearest neighbors
/// (excluding self), weight `w_ij = exp(-||x_i - x_j||^2 / sigma(x_i)^2)`
/// where `sigma(x_i)` is the distance to the `sigma_k`-th closest other
/// point, symmetrize by max, then normalize `D^{-1/2} W D^{-1/2}` without an
/// added self-loop. Returns the graph and the number of points whose
/// bandwidth was floored at 1e-12 (duplicate rows).
pub fn build_knn_gaussian(
    x: &Tensor,
    n_top: usize,
    sigma_k: usize,
) -> Result<(SparseGraph, usize), GraphError> {
    if n_top < 1 || sigma_k < 1 {
        return Err(GraphError::BadKnnParams { n_top, sigma_k });
    }
    let n = x.rows();
    if n <= n_top.max(sigma_k) {
        return Err(GraphError::TooFewPoints { n, n_top, sigma_k });
    }
    let mut floored = 0usize;
    let mut edges = EdgeList::new();
    let mut dist2 = vec![0.0f64; n];
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = x.row(j);
            let mut d2 = 0.0;
            for (a, b) in xi.iter().zip(xj) {
                let t = a - b;
                d2 += t * t;
            }
            dist2[j] = d2;
        }
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_unstable_by(|&a, &b| {
            dist2[a].partial_cmp(&dist2[b]).unwrap().then(a.cmp(&b))
        });
        let mut sigma = dist2[order[sigma_k - 1]].sqrt();
        if sigma < 1e-12 {
            sigma = 1e-12;
            floored += 1;
        }
        let inv_s2 = 1.0 / (sigma * sigma);
        for &j in order.iter().take(n_top) {
            edges.push(i, j, (-dist2[j] * inv_s2).exp());
        }
    }
    let g = SparseGraph::from_edge_list(&edges, n)?;
    Ok((g.symmetrize().sym_normalize(), floored))
}

fn write_usize_array<W: Write>(w: &mut W, a: &[usize]) -> std::io::Result<()> {
    w.write_all(&(a.len() as u64).to_le_bytes())?;
    for &v in a {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    Ok(())
}

fn write_f64_array<W: Write>(w: &mut W, a: &[f64]) -> std::io::Result<()> {
    w.write_all(&(a.len() as u64).to_le_bytes())?;
    for &v in a {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_usize_array<R: Read>(r: &mut R) -> Result<Vec<usize>, GraphError> {
    let len = read_u64(r)? as usize;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(read_u64(r)? as usize);
    }
    Ok(out)
}

fn read_f64_array<R: Read>(r: &mut R) -> Result<Vec<f64>, GraphError> {
    let len = read_u64(r)? as usize;
    let mut buf = [0u8; 8];
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(list: &[(usize, usize, f64)]) -> EdgeList {
        EdgeList { edges: list.to_vec() }
    }

    #[test]
    fn from_edge_list_single_edge() {
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 1.0)]), 2).unwrap();
        assert_eq!(g.nnz(), 1);
        assert_eq!(g.degrees(), &[1.0, 0.0]);
    }

    #[test]
    fn from_edge_list_sums_duplicates() {
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 1.0), (0, 1, 2.0)]), 2).unwrap();
        assert_eq!(g.nnz(), 1);
        assert_eq!(g.row(0).collect::<Vec<_>>(), vec![(1, 3.0)]);
    }

    #[test]
    fn from_edge_list_empty() {
        let g = SparseGraph::from_edge_list(&EdgeList::new(), 3).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.degrees(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn from_edge_list_rejects_out_of_range() {
        let err = SparseGraph::from_edge_list(&edges(&[(0, 5, 1.0)]), 2).unwrap_err();
        match err {
            GraphError::NodeIdOutOfRange { src, dst, .. } => {
                assert_eq!((src, dst), (0, 5));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn symmetrize_mirrors_single_edge() {
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 1.0)]), 2).unwrap();
        let s = g.symmetrize();
        assert_eq!(s.row(0).collect::<Vec<_>>(), vec![(1, 1.0)]);
        assert_eq!(s.row(1).collect::<Vec<_>>(), vec![(0, 1.0)]);
        assert!(s.is_structurally_symmetric());
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let g = SparseGraph::from_edge_list(
            &edges(&[(0, 1, 2.0), (1, 0, 5.0), (1, 2, 1.0)]),
            3,
        )
        .unwrap();
        let s1 = g.symmetrize();
        let s2 = s1.symmetrize();
        assert_eq!(s1, s2);
    }

    #[test]
    fn symmetrize_takes_max_of_antiparallel_weights() {
        // dense max(W, W^T) oracle on the 2-node case
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 2.0), (1, 0, 5.0)]), 2).unwrap();
        let s = g.symmetrize();
        assert_eq!(s.row(0).collect::<Vec<_>>(), vec![(1, 5.0)]);
        assert_eq!(s.row(1).collect::<Vec<_>>(), vec![(0, 5.0)]);
    }

    #[test]
    fn lcc_breaks_ties_by_smallest_id() {
        // two disjoint triangles, the one containing node 0 wins; node 6 isolated
        let g = SparseGraph::from_edge_list(
            &edges(&[
                (0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0), (2, 0, 1.0), (0, 2, 1.0),
                (3, 4, 1.0), (4, 3, 1.0), (4, 5, 1.0), (5, 4, 1.0), (5, 3, 1.0), (3, 5, 1.0),
            ]),
            7,
        )
        .unwrap();
        let (sub, remap) = g.largest_connected_component();
        assert_eq!(sub.n_nodes(), 3);
        assert_eq!(remap[0], Some(0));
        assert_eq!(remap[3], None);
        assert_eq!(remap[6], None);
    }

    #[test]
    fn lcc_keeps_connected_path() {
        let g = SparseGraph::from_edge_list(
            &edges(&[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0),
                     (2, 3, 1.0), (3, 2, 1.0), (3, 4, 1.0), (4, 3, 1.0)]),
            5,
        )
        .unwrap();
        let (sub, remap) = g.largest_connected_component();
        assert_eq!(sub.n_nodes(), 5);
        assert!(remap.iter().all(|m| m.is_some()));
    }

    #[test]
    fn lcc_of_empty_graph_is_empty() {
        let g = SparseGraph::from_edge_list(&EdgeList::new(), 0).unwrap();
        let (sub, remap) = g.largest_connected_component();
        assert_eq!(sub.n_nodes(), 0);
        assert!(remap.is_empty());
    }

    #[test]
    fn gcn_normalize_isolated_node() {
        let g = SparseGraph::from_edge_list(&EdgeList::new(), 1).unwrap();
        let norm = g.gcn_normalize();
        assert_eq!(norm.row(0).collect::<Vec<_>>(), vec![(0, 1.0)]);
    }

    #[test]
    fn gcn_normalize_two_nodes_unit_edge() {
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 1.0), (1, 0, 1.0)]), 2).unwrap();
        let norm = g.gcn_normalize();
        for i in 0..2 {
            for (j, w) in norm.row(i) {
                assert!((w - 0.5).abs() < 1e-15, "entry ({i},{j}) = {w}");
            }
        }
    }

    /// Dense oracle for D~^{-1/2} (W+I) D~^{-1/2} used by the 3-node path and
    /// randomized property tests.
    fn dense_gcn_oracle(g: &SparseGraph) -> Vec<Vec<f64>> {
        let n = g.n_nodes();
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            for (j, wij) in g.row(i) {
                w[i][j] += wij;
            }
            w[i][i] += 1.0;
        }
        let deg: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = w[i][j] / (deg[i].sqrt() * deg[j].sqrt());
            }
        }
        out
    }

    #[test]
    fn gcn_normalize_matches_dense_oracle_on_path() {
        let g = SparseGraph::from_edge_list(
            &edges(&[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]),
            3,
        )
        .unwrap();
        let norm = g.gcn_normalize();
        let oracle = dense_gcn_oracle(&g);
        for i in 0..3 {
            for (j, w) in norm.row(i) {
                assert!((w - oracle[i][j]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = SparseGraph::from_edge_list(
            &edges(&[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 0.5), (2, 1, 0.5)]),
            3,
        )
        .unwrap();
        let u = Tensor::filled(3, 2, 1.0);
        let lu = g.laplacian_apply(&u).unwrap();
        assert!(lu.max_abs() < 1e-15);
    }

    #[test]
    fn laplacian_two_node_hand_value() {
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 1.0), (1, 0, 1.0)]), 2).unwrap();
        let u = Tensor::from_rows(&[vec![1.0], vec![0.0]]);
        let lu = g.laplacian_apply(&u).unwrap();
        assert_eq!(lu.get(0, 0), 1.0);
        assert_eq!(lu.get(1, 0), -1.0);
    }

    #[test]
    fn laplacian_rejects_row_mismatch() {
        let g = SparseGraph::from_edge_list(&edges(&[(0, 1, 1.0)]), 2).unwrap();
        let u = Tensor::zeros(3, 1);
        assert!(g.laplacian_apply(&u).is_err());
    }

    #[test]
    fn knn_gaussian_collinear_oracle() {
        // points at 0, 1, 3 with n_top=2, sigma_k=1:
        //   sigma(0) = 1, raw w(0->1) = exp(-1), w(0->3) = exp(-9)
        //   sigma(1) = 1, raw w(1->0) = exp(-1), w(1->3) = exp(-4)
        //   sigma(3) = 2, raw w(3->1) = exp(-4/4) = exp(-1), w(3->0) = exp(-9/4)
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]);
        let (g, floored) = build_knn_gaussian(&x, 2, 1).unwrap();
        assert_eq!(floored, 0);
        // dense oracle: raw weights, symmetrize max, D^{-1/2} W D^{-1/2}
        let raw = [
            [0.0, (-1.0f64).exp(), (-9.0f64).exp()],
            [(-1.0f64).exp(), 0.0, (-4.0f64).exp()],
            [(-9.0f64 / 4.0).exp(), (-1.0f64).exp(), 0.0],
        ];
        let mut sym = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                sym[i][j] = raw[i][j].max(raw[j][i]);
            }
        }
        let deg: Vec<f64> = sym.iter().map(|r| r.iter().sum()).collect();
        for i in 0..3 {
            for (j, w) in g.row(i) {
                let expect = sym[i][j] / (deg[i].sqrt() * deg[j].sqrt());
                assert!((w - expect).abs() < 1e-14, "({i},{j}): {w} vs {expect}");
            }
        }
        assert!(g.is_structurally_symmetric());
    }

    #[test]
    fn knn_gaussian_floors_duplicate_points() {
        let x = Tensor::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![2.0]]);
        let (g, floored) = build_knn_gaussian(&x, 2, 1).unwrap();
        // sigma(0) and sigma(1) hit the duplicate at distance 0
        assert_eq!(floored, 2);
        assert!(g.is_structurally_symmetric());
        assert!(g.to_edge_list().edges.iter().all(|e| e.2 >= 0.0));
    }

    #[test]
    fn knn_gaussian_rejects_small_n() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0]]);
        assert!(build_knn_gaussian(&x, 2, 1).is_err());
    }

    #[test]
    fn edge_list_text_roundtrip() {
        let text = "# comment line\n0\t1\n1\t2\t0.25\n\n2\t0 # trailing comment\n";
        let list = EdgeList::parse_text(text).unwrap();
        assert_eq!(
            list.edges,
            vec![(0, 1, 1.0), (1, 2, 0.25), (2, 0, 1.0)]
        );
        let bad = EdgeList::parse_text("0\tx\n");
        assert!(bad.is_err());
    }

    #[test]
    fn binary_cache_roundtrip_is_bit_exact() {
        let g = SparseGraph::from_edge_list(
            &edges(&[(0, 1, 0.12345678901234567), (1, 0, 0.12345678901234567), (2, 2, 3.5)]),
            4,
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_cache(&mut buf).unwrap();
        let back = SparseGraph::read_cache(&mut buf.as_slice()).unwrap();
        assert_eq!(g, back);
        let mut buf2 = Vec::new();
        back.write_cache(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
