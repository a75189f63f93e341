//! Dataset ingestion and persistence.
//!
//! Citation networks arrive as the two-file content/cites text distribution:
//! content lines are `id<TAB>f1..fd<TAB>label`, cites lines are
//! `cited<TAB>citing`. Pubmed ships in its own tab variant (two header lines,
//! then sparse `name=value` pairs per node and `paper:` qualified edge
//! endpoints) and gets a dedicated branch. Loading always symmetrizes, takes
//! the largest connected component, row-normalizes features, and
//! GCN-normalizes the adjacency; bundles round-trip through a little-endian
//! binary cache.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::{EdgeList, GraphError, SparseGraph};
use crate::tensor::Tensor;

pub const BUNDLE_MAGIC: &[u8; 8] = b"COINDS1\0";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}: inconsistent feature width: row {line} has {got}, expected {expected}")]
    FeatureWidth { path: String, line: usize, got: usize, expected: usize },
    #[error("row count mismatch: features {features} vs labels {labels}")]
    RowCountMismatch { features: usize, labels: usize },
    #[error("no labeled nodes")]
    NoLabeledNodes,
    #[error("bad bundle cache: {0}")]
    BadCache(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ingestion counters kept alongside the data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub flags: Vec<String>,
    pub dangling_edges_dropped: usize,
    pub self_loops_dropped: usize,
    pub zero_feature_rows: usize,
}

/// Features, labels, normalized graph, and bookkeeping for one dataset.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    /// Row-normalized features, one row per node of the final graph.
    pub x: Tensor,
    /// Class ids, `None` where the source had no label (NaN rows in CSVs).
    pub y: Vec<Option<usize>>,
    /// GCN-normalized adjacency over the same nodes.
    pub graph: SparseGraph,
    /// Undirected edge count of the un-normalized LCC graph (reporting).
    pub n_edges: usize,
    pub class_names: Vec<String>,
    pub provenance: Provenance,
}

impl DatasetBundle {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn labeled_ids(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&i| self.y[i].is_some()).collect()
    }

    /// Labels with unlabeled rows mapped to class 0; callers must mask.
    pub fn labels_dense(&self) -> Vec<usize> {
        self.y.iter().map(|l| l.unwrap_or(0)).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinqsOptions {
    /// Collapse nonzero feature values to 1.0 before row normalization
    /// (the usual treatment of Pubmed's TF-IDF values).
    pub binarize: bool,
}

/// Divide each row by its sum; all-zero rows stay zero. Returns how many
/// rows were zero.
pub fn row_normalize(x: &mut Tensor) -> usize {
    let mut zero_rows = 0;
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            zero_rows += 1;
        } else {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    zero_rows
}

/// Load a content/cites citation dataset (or the Pubmed tab variant, detected
/// from the content header).
pub fn load_linqs(
    content_path: impl AsRef<Path>,
    cites_path: impl AsRef<Path>,
) -> Result<DatasetBundle, DataError> {
    load_linqs_with(content_path, cites_path, &LinqsOptions::default())
}

pub fn load_linqs_with(
    content_path: impl AsRef<Path>,
    cites_path: impl AsRef<Path>,
    options: &LinqsOptions,
) -> Result<DatasetBundle, DataError> {
    let content_path = content_path.as_ref();
    let cites_path = cites_path.as_ref();
    let content_file = std::fs::File::open(content_path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", content_path.display()))
    })?;
    let mut reader = std::io::BufReader::new(content_file);
    let mut first_line = String::new();
    reader.read_line(&mut first_line)?;
    let pubmed_variant = first_line.trim_end().starts_with("NODE\t")
        || first_line.trim_end() == "NODE";

    let raw = if pubmed_variant {
        parse_pubmed_tab(content_path, cites_path)?
    } else {
        parse_classic_linqs(content_path, cites_path)?
    };
    build_bundle(raw, options, &[content_path, cites_path])
}

struct RawDataset {
    ids: Vec<String>,
    features: Vec<Vec<f64>>,
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
    dangling: usize,
    self_loops: usize,
}

fn parse_classic_linqs(content_path: &Path, cites_path: &Path) -> Result<RawDataset, DataError> {
    let content = std::fs::read_to_string(content_path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", content_path.display()))
    })?;
    let mut ids = Vec::new();
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() < 3 {
            return Err(DataError::Malformed {
                path: content_path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected id, features, label; got {} fields", toks.len()),
            });
        }
        let d = toks.len() - 2;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(DataError::FeatureWidth {
                    path: content_path.display().to_string(),
                    line: lineno + 1,
                    got: d,
                    expected: w,
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(d);
        for tok in &toks[1..=d] {
            let v: f64 = tok.parse().map_err(|_| DataError::Malformed {
                path: content_path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad feature value {tok:?}"),
            })?;
            row.push(v);
        }
        ids.push(toks[0].to_string());
        features.push(row);
        labels.push(toks[d + 1].to_string());
    }
    let index: HashMap<&str, usize> =
        ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let cites = std::fs::read_to_string(cites_path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", cites_path.display()))
    })?;
    let mut edges = Vec::new();
    let mut dangling = 0usize;
    let mut self_loops = 0usize;
    for (lineno, line) in cites.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(DataError::Malformed {
                    path: cites_path.display().to_string(),
                    line: lineno + 1,
                    msg: "expected two paper ids".into(),
                })
            }
        };
        match (index.get(a), index.get(b)) {
            (Some(&ia), Some(&ib)) => {
                if ia == ib {
                    self_loops += 1;
                } else {
                    edges.push((ia, ib));
                }
            }
            _ => dangling += 1,
        }
    }
    Ok(RawDataset { ids, features, labels, edges, dangling, self_loops })
}

fn parse_pubmed_tab(node_path: &Path, cites_path: &Path) -> Result<RawDataset, DataError> {
    let content = std::fs::read_to_string(node_path)?;
    let mut lines = content.lines().enumerate();
    let _banner = lines.next();
    let (_, header) = lines.next().ok_or_else(|| DataError::Malformed {
        path: node_path.display().to_string(),
        line: 2,
        msg: "missing attribute header".into(),
    })?;
    let mut vocab: HashMap<String, usize> = HashMap::new();
    for tok in header.split('\t') {
        if let Some(rest) = tok.strip_prefix("numeric:") {
            let name = rest.split(':').next().unwrap_or(rest);
            let next = vocab.len();
            vocab.insert(name.to_string(), next);
        }
    }
    let d = vocab.len();
    let mut ids = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split('\t');
        let id = toks.next().unwrap_or("");
        let mut row = vec![0.0f64; d];
        let mut label: Option<String> = None;
        for tok in toks {
            if tok == "|" || tok.is_empty() {
                continue;
            }
            let Some((key, val)) = tok.split_once('=') else {
                return Err(DataError::Malformed {
                    path: node_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected name=value, got {tok:?}"),
                });
            };
            if key == "label" {
                label = Some(val.to_string());
            } else if key == "summary" {
                // free-text trailer, ignored
            } else if let Some(&k) = vocab.get(key) {
                row[k] = val.parse().map_err(|_| DataError::Malformed {
                    path: node_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("bad numeric value in {tok:?}"),
                })?;
            } else {
                return Err(DataError::Malformed {
                    path: node_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("undeclared attribute {key:?}"),
                });
            }
        }
        let label = label.ok_or_else(|| DataError::Malformed {
            path: node_path.display().to_string(),
            line: lineno + 1,
            msg: "missing label= field".into(),
        })?;
        ids.push(id.to_string());
        features.push(row);
        labels.push(label);
    }
    let index: HashMap<&str, usize> =
        ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let cites = std::fs::read_to_string(cites_path)?;
    let mut edges = Vec::new();
    let mut dangling = 0usize;
    let mut self_loops = 0usize;
    for (lineno, line) in cites.lines().enumerate().skip(2) {
        if line.trim().is_empty() {
            continue;
        }
        let endpoints: Vec<&str> = line
            .split('\t')
            .filter_map(|t| t.strip_prefix("paper:"))
            .collect();
        if endpoints.len() != 2 {
            return Err(DataError::Malformed {
                path: cites_path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected two `paper:` endpoints, got {}", endpoints.len()),
            });
        }
        match (index.get(endpoints[0]), index.get(endpoints[1])) {
            (Some(&ia), Some(&ib)) => {
                if ia == ib {
                    self_loops += 1;
                } else {
                    edges.push((ia, ib));
                }
            }
            _ => dangling += 1,
        }
    }
    Ok(RawDataset { ids, features, labels, edges, dangling, self_loops })
}

fn build_bundle(
    raw: RawDataset,
    options: &LinqsOptions,
    sources: &[&Path],
) -> Result<DatasetBundle, DataError> {
    let n = raw.ids.len();
    let mut edge_list = EdgeList::new();
    for &(a, b) in &raw.edges {
        edge_list.push(a, b, 1.0);
    }
    let g = SparseGraph::from_edge_list(&edge_list, n)?;
    let sym = g.symmetrize();
    let (lcc, old_to_new) = sym.largest_connected_component();

    let n_kept = lcc.n_nodes();
    let d = raw.features.first().map_or(0, |r| r.len());
    let mut x = Tensor::zeros(n_kept, d);
    let mut kept_labels: Vec<String> = vec![String::new(); n_kept];
    for (old, new) in old_to_new.iter().enumerate() {
        if let Some(new) = *new {
            let row = x.row_mut(new);
            for (dst, &src) in row.iter_mut().zip(&raw.features[old]) {
                *dst = if options.binarize && src != 0.0 { 1.0 } else { src };
            }
            kept_labels[new] = raw.labels[old].clone();
        }
    }
    let zero_feature_rows = row_normalize(&mut x);

    let mut class_names: Vec<String> = kept_labels.to_vec();
    class_names.sort();
    class_names.dedup();
    let class_index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let y: Vec<Option<usize>> = kept_labels
        .iter()
        .map(|l| Some(class_index[l.as_str()]))
        .collect();

    let n_edges = lcc.undirected_edge_count();
    let normalized = lcc.gcn_normalize();

    let mut flags = vec!["symmetrize=max".into(), "lcc".into(), "row_normalize".into(), "gcn_normalize".into()];
    if options.binarize {
        flags.insert(0, "binarize".into());
    }
    Ok(DatasetBundle {
        x,
        y,
        graph: normalized,
        n_edges,
        class_names,
        provenance: Provenance {
            sources: sources.iter().map(|p| p.display().to_string()).collect(),
            flags,
            dangling_edges_dropped: raw.dangling,
            self_loops_dropped: raw.self_loops,
            zero_feature_rows,
        },
    })
}

/// Load a feature/label table from CSV files (header rows required). Labels
/// may be blank or `NaN`; those rows stay in the table but carry no label.
/// Without an edge file the bundle gets an edgeless graph; build one later
/// with [`crate::graph::build_knn_gaussian`].
pub fn load_csv(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    edges_path: Option<&Path>,
) -> Result<DatasetBundle, DataError> {
    let features_path = features_path.as_ref();
    let labels_path = labels_path.as_ref();
    let feats = read_csv_numeric(features_path)?;
    let label_strings = read_csv_single_column(labels_path)?;
    if feats.len() != label_strings.len() {
        return Err(DataError::RowCountMismatch {
            features: feats.len(),
            labels: label_strings.len(),
        });
    }
    let mut class_names: Vec<String> = label_strings
        .iter()
        .filter(|s| !is_unlabeled(s))
        .cloned()
        .collect();
    class_names.sort();
    class_names.dedup();
    if class_names.is_empty() {
        return Err(DataError::NoLabeledNodes);
    }
    let class_index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let y: Vec<Option<usize>> = label_strings
        .iter()
        .map(|s| {
            if is_unlabeled(s) {
                None
            } else {
                Some(class_index[s.as_str()])
            }
        })
        .collect();

    let n = feats.len();
    let d = feats.first().map_or(0, |r| r.len());
    let mut x = Tensor::zeros(n, d);
    for (i, row) in feats.iter().enumerate() {
        x.row_mut(i).copy_from_slice(row);
    }
    let zero_feature_rows = row_normalize(&mut x);

    let (graph, n_edges, flags) = match edges_path {
        Some(ep) => {
            let text = std::fs::read_to_string(ep)?;
            let edges = EdgeList::parse_text(&text)?;
            let g = SparseGraph::from_edge_list(&edges, n)?.symmetrize();
            let n_edges = g.undirected_edge_count();
            (g.gcn_normalize(), n_edges, vec!["row_normalize".into(), "gcn_normalize".into()])
        }
        None => (
            SparseGraph::from_edge_list(&EdgeList::new(), n)?,
            0,
            vec!["row_normalize".into(), "no_graph".into()],
        ),
    };

    let mut sources = vec![
        features_path.display().to_string(),
        labels_path.display().to_string(),
    ];
    if let Some(ep) = edges_path {
        sources.push(ep.display().to_string());
    }
    Ok(DatasetBundle {
        x,
        y,
        graph,
        n_edges,
        class_names,
        provenance: Provenance {
            sources,
            flags,
            dangling_edges_dropped: 0,
            self_loops_dropped: 0,
            zero_feature_rows,
        },
    })
}

fn is_unlabeled(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("nan")
}

fn read_csv_numeric(path: &Path) -> Result<Vec<Vec<f64>>, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| DataError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad numeric value {tok:?}"),
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(DataError::FeatureWidth {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    got: row.len(),
                    expected: w,
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_csv_single_column(path: &Path) -> Result<Vec<String>, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').next().unwrap_or("").trim().to_string())
        .collect())
}

// ---- binary bundle cache ----

pub fn save_bundle(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(BUNDLE_MAGIC)?;
    w.write_all(&BUNDLE_VERSION.to_le_bytes())?;

    // features
    w.write_all(&(bundle.x.rows() as u64).to_le_bytes())?;
    w.write_all(&(bundle.x.cols() as u64).to_le_bytes())?;
    for &v in bundle.x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    // labels: i64, -1 = unlabeled
    w.write_all(&(bundle.y.len() as u64).to_le_bytes())?;
    for l in &bundle.y {
        let v: i64 = l.map_or(-1, |c| c as i64);
        w.write_all(&v.to_le_bytes())?;
    }
    // graph
    bundle.graph.write_cache(&mut w)?;
    w.write_all(&(bundle.n_edges as u64).to_le_bytes())?;
    // names + provenance strings
    write_strings(&mut w, &bundle.class_names)?;
    write_strings(&mut w, &bundle.provenance.sources)?;
    write_strings(&mut w, &bundle.provenance.flags)?;
    w.write_all(&(bundle.provenance.dangling_edges_dropped as u64).to_le_bytes())?;
    w.write_all(&(bundle.provenance.self_loops_dropped as u64).to_le_bytes())?;
    w.write_all(&(bundle.provenance.zero_feature_rows as u64).to_le_bytes())?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<DatasetBundle, DataError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path.as_ref()).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.as_ref().display()))
    })?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BUNDLE_MAGIC {
        return Err(DataError::BadCache(format!("bad magic {magic:?}")));
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)?;
    let version = u32::from_le_bytes(vbuf);
    if version != BUNDLE_VERSION {
        return Err(DataError::BadCache(format!("unsupported version {version}")));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    let x = Tensor::from_vec(rows, cols, data)
        .map_err(|e| DataError::BadCache(e.to_string()))?;
    let n_labels = read_u64(&mut r)? as usize;
    let mut y = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        r.read_exact(&mut buf)?;
        let v = i64::from_le_bytes(buf);
        y.push(if v < 0 { None } else { Some(v as usize) });
    }
    let graph = SparseGraph::read_cache(&mut r)?;
    let n_edges = read_u64(&mut r)? as usize;
    let class_names = read_strings(&mut r)?;
    let sources = read_strings(&mut r)?;
    let flags = read_strings(&mut r)?;
    let dangling = read_u64(&mut r)? as usize;
    let self_loops = read_u64(&mut r)? as usize;
    let zero_rows = read_u64(&mut r)? as usize;
    Ok(DatasetBundle {
        x,
        y,
        graph,
        n_edges,
        class_names,
        provenance: Provenance {
            sources,
            flags,
            dangling_edges_dropped: dangling,
            self_loops_dropped: self_loops,
            zero_feature_rows: zero_rows,
        },
    })
}

fn write_strings<W: Write>(w: &mut W, strings: &[String]) -> std::io::Result<()> {
    w.write_all(&(strings.len() as u64).to_le_bytes())?;
    for s in strings {
        let bytes = s.as_bytes();
        w.write_all(&(bytes.len() as u64).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    Ok(())
}

fn read_strings<R: Read>(r: &mut R) -> Result<Vec<String>, DataError> {
    let n = read_u64(r)? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u64(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        out.push(String::from_utf8(buf).map_err(|e| DataError::BadCache(e.to_string()))?);
    }
    Ok(out)
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
