//! On-disk dataset directory.
//!
//! ```text
//! meta.json            {name, n_nodes, n_features, n_classes, class_split: {train, dev, test}}
//! edges.tsv            u v                one undirected edge per line
//! labels.tsv           node class
//! features.tsv         node x_0 .. x_{d-1}    (dense)
//! features.sparse.tsv  node dim value         (sparse, one nonzero per line)
//! ```
//!
//! Fields are separated by tabs or spaces. Blank lines and lines starting
//! with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{adjacency_from_edges, EdgeListStats, Features, Graph};
use crate::nn::Csr;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const DENSE_FEATURES_FILE: &str = "features.tsv";
pub const SPARSE_FEATURES_FILE: &str = "features.sparse.tsv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplitIds {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub class_split: ClassSplitIds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub graph: Graph,
    /// Counts from reading `edges.tsv`.
    pub edge_stats: EdgeListStats,
}

/// Numbered, non-comment lines of a text file, split on whitespace.
pub(crate) fn records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#'))
                .then(|| (i + 1, t.split_whitespace().map(str::to_owned).collect()))
        })
        .collect())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::data(path, line, format!("cannot parse {what} from {s:?}")))
}

fn node_field(path: &Path, line: usize, s: &str, n: usize) -> Result<usize> {
    let id: usize = parse_field(path, line, s, "node id")?;
    if id >= n {
        return Err(Error::data(path, line, format!("node id {id} out of range 0..{n}")));
    }
    Ok(id)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(&path, e.line(), e.to_string()))
}

fn read_edges(path: &Path, n: usize) -> Result<(Csr, EdgeListStats)> {
    let mut edges = Vec::new();
    for (line, f) in records(path)? {
        if f.len() != 2 {
            return Err(Error::data(path, line, format!("expected 2 fields, got {}", f.len())));
        }
        edges.push((node_field(path, line, &f[0], n)?, node_field(path, line, &f[1], n)?));
    }
    adjacency_from_edges(n, &edges).map_err(|e| Error::data(path, 0, e.to_string()))
}

fn read_labels(path: &Path, n: usize, n_classes: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (line, f) in records(path)? {
        if f.len() != 2 {
            return Err(Error::data(path, line, format!("expected 2 fields, got {}", f.len())));
        }
        let node = node_field(path, line, &f[0], n)?;
        let class: usize = parse_field(path, line, &f[1], "class id")?;
        if class >= n_classes {
            return Err(Error::data(
                path,
                line,
                format!("label {class} out of range 0..{n_classes}"),
            ));
        }
        if labels[node].replace(class).is_some() {
            return Err(Error::data(path, line, format!("node {node} labelled twice")));
        }
    }
    let missing = labels.iter().filter(|l| l.is_none()).count();
    if missing > 0 {
        return Err(Error::data(
            path,
            0,
            format!("{} label lines but manifest declares {n} nodes", n - missing),
        ));
    }
    Ok(labels.into_iter().map(Option::unwrap).collect())
}

fn read_dense_features(path: &Path, n: usize, d: usize) -> Result<Csr> {
    let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; n];
    for (line, f) in records(path)? {
        if f.len() != d + 1 {
            return Err(Error::data(
                path,
                line,
                format!("expected node id + {d} values, got {} fields", f.len()),
            ));
        }
        let node = node_field(path, line, &f[0], n)?;
        let mut row = Vec::new();
        for (j, s) in f[1..].iter().enumerate() {
            let v: f64 = parse_field(path, line, s, "feature value")?;
            if !v.is_finite() {
                return Err(Error::data(path, line, "non-finite feature value"));
            }
            if v != 0.0 {
                row.push((j, v));
            }
        }
        if rows[node].replace(row).is_some() {
            return Err(Error::data(path, line, format!("node {node} listed twice")));
        }
    }
    let missing = rows.iter().filter(|r| r.is_none()).count();
    if missing > 0 {
        return Err(Error::data(
            path,
            0,
            format!("{} feature rows but manifest declares {n} nodes", n - missing),
        ));
    }
    Csr::from_rows(d, rows.into_iter().map(Option::unwrap).collect())
        .map_err(|e| Error::data(path, 0, e.to_string()))
}

fn read_sparse_features(path: &Path, n: usize, d: usize) -> Result<Csr> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (line, f) in records(path)? {
        if f.len() != 3 {
            return Err(Error::data(path, line, format!("expected 3 fields, got {}", f.len())));
        }
        let node = node_field(path, line, &f[0], n)?;
        let dim: usize = parse_field(path, line, &f[1], "feature dim")?;
        if dim >= d {
            return Err(Error::data(path, line, format!("feature dim {dim} out of range 0..{d}")));
        }
        let v: f64 = parse_field(path, line, &f[2], "feature value")?;
        if !v.is_finite() {
            return Err(Error::data(path, line, "non-finite feature value"));
        }
        if rows[node].iter().any(|&(c, _)| c == dim) {
            return Err(Error::data(path, line, format!("duplicate entry ({node}, {dim})")));
        }
        if v != 0.0 {
            rows[node].push((dim, v));
        }
    }
    Csr::from_rows(d, rows).map_err(|e| Error::data(path, 0, e.to_string()))
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let n = manifest.n_nodes;
    let (adjacency, edge_stats) = read_edges(&dir.join(EDGES_FILE), n)?;
    let labels = read_labels(&dir.join(LABELS_FILE), n, manifest.n_classes)?;

    let sparse_path = dir.join(SPARSE_FEATURES_FILE);
    let dense_path = dir.join(DENSE_FEATURES_FILE);
    let features = if sparse_path.exists() {
        read_sparse_features(&sparse_path, n, manifest.n_features)?
    } else if dense_path.exists() {
        read_dense_features(&dense_path, n, manifest.n_features)?
    } else {
        return Err(Error::io(
            dense_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no features.tsv or features.sparse.tsv"),
        ));
    };

    let meta_path = dir.join(META_FILE);
    let graph = Graph::new(adjacency, Features::auto(features), labels, manifest.n_classes)
        .map_err(|e| Error::data(&meta_path, 0, e.to_string()))?;
    graph
        .check_class_coverage()
        .map_err(|e| Error::data(dir.join(LABELS_FILE), 0, e.to_string()))?;
    Ok(Dataset {
        manifest,
        graph,
        edge_stats,
    })
}

pub fn load_graph(dir: &Path) -> Result<Graph> {
    load_dataset(dir).map(|d| d.graph)
}

fn write_file(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes `graph` under `dir` in the directory format. Features go to the
/// sparse file when the graph stores them sparse.
pub fn write_dataset(dir: &Path, manifest: &Manifest, graph: &Graph) -> Result<()> {
    if manifest.n_nodes != graph.n_nodes()
        || manifest.n_features != graph.n_features()
        || manifest.n_classes != graph.n_classes()
    {
        return Err(Error::Invalid("manifest counts disagree with graph".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir.join(META_FILE), &serde_json::to_string_pretty(manifest)?)?;

    let mut edges = String::new();
    for (u, v) in graph.edges() {
        let _ = writeln!(edges, "{u}\t{v}");
    }
    write_file(dir.join(EDGES_FILE), &edges)?;

    let mut labels = String::new();
    for (u, l) in graph.labels().iter().enumerate() {
        let _ = writeln!(labels, "{u}\t{l}");
    }
    write_file(dir.join(LABELS_FILE), &labels)?;

    let mut feats = String::new();
    let (keep, drop) = if graph.features().is_sparse() {
        for u in 0..graph.n_nodes() {
            for (j, v) in graph.features().row_entries(u) {
                let _ = writeln!(feats, "{u}\t{j}\t{v}");
            }
        }
        (SPARSE_FEATURES_FILE, DENSE_FEATURES_FILE)
    } else {
        let dense = graph.features().to_dense();
        for u in 0..graph.n_nodes() {
            let _ = write!(feats, "{u}");
            for v in dense.row(u) {
                let _ = write!(feats, "\t{v}");
            }
            feats.push('\n');
        }
        (DENSE_FEATURES_FILE, SPARSE_FEATURES_FILE)
    };
    write_file(dir.join(keep), &feats)?;
    let stale = dir.join(drop);
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(stale, e))?;
    }
    Ok(())
}
