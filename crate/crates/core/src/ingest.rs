//! Conversion of raw citation-network files into the dataset directory
//! format.
//!
//! Two inputs are understood:
//!
//! * `linqs`: a `.content` file (`id f_1 .. f_d label`) and a `.cites` file
//!   (`cited citing`), with arbitrary string ids. Nodes are numbered in
//!   content-file order and class ids follow the sorted label names.
//! * `edgelist`: integer node ids `0..n`; an edge file (`u v`), a label
//!   file (`node label`) and a feature table, either dense (`node x_0 ..`)
//!   or sparse triplets (`node dim value`). Integer labels keep their
//!   numeric order, anything else is sorted by name.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use crate::dataset::{records, ClassSplitIds, Manifest};
use crate::error::{Error, Result};
use crate::graph::{adjacency_from_edges, EdgeListStats, Features, Graph};
use crate::nn::Csr;

#[derive(Clone, Debug)]
pub enum RawInput {
    Linqs {
        content: PathBuf,
        cites: PathBuf,
    },
    EdgeList {
        edges: PathBuf,
        labels: PathBuf,
        features: PathBuf,
        sparse: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestStats {
    pub edges: EdgeListStats,
    /// Edge lines naming a node absent from the node table.
    pub unknown_endpoints: usize,
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub manifest: Manifest,
    pub graph: Graph,
    pub stats: IngestStats,
    /// Original node ids, for `linqs` input.
    pub node_ids: Option<Vec<String>>,
}

impl fmt::Display for Ingested {
    /// One statistics row: name, nodes, edges, features, classes and the
    /// train/dev/test class counts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.manifest;
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.name,
            self.graph.n_nodes(),
            self.graph.n_edges(),
            self.graph.n_features(),
            self.graph.n_classes(),
            m.class_split.train.len(),
            m.class_split.dev.len(),
            m.class_split.test.len()
        )
    }
}

/// Assigns class ids to label strings: numeric order if every label is an
/// integer, lexicographic otherwise.
fn class_index(names: &[String]) -> (Vec<String>, HashMap<String, usize>) {
    let distinct: BTreeSet<&String> = names.iter().collect();
    let mut sorted: Vec<String> = distinct.into_iter().cloned().collect();
    if sorted.iter().all(|s| s.parse::<u64>().is_ok()) {
        sorted.sort_by_key(|s| s.parse::<u64>().unwrap());
    }
    let index = sorted.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    (sorted, index)
}

fn fixed_split(n_classes: usize, sizes: (usize, usize, usize)) -> Result<ClassSplitIds> {
    let (a, b, c) = sizes;
    if a + b + c != n_classes || a == 0 || b == 0 || c == 0 {
        return Err(Error::Invalid(format!(
            "split sizes {a},{b},{c} must be positive and sum to {n_classes} classes"
        )));
    }
    Ok(ClassSplitIds {
        train: (0..a).collect(),
        dev: (a..a + b).collect(),
        test: (a + b..n_classes).collect(),
    })
}

/// Node ids, features, label names, edges and the count of edge lines
/// naming unknown nodes.
type LinqsTables = (Vec<String>, Csr, Vec<String>, Vec<(usize, usize)>, usize);

fn read_linqs(content: &Path, cites: &Path) -> Result<LinqsTables> {
    let rows = records(content)?;
    if rows.is_empty() {
        return Err(Error::data(content, 0, "empty feature table"));
    }
    let d = rows[0].1.len().saturating_sub(2);
    if d == 0 {
        return Err(Error::data(content, rows[0].0, "expected id, features and label"));
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut id_index = HashMap::new();
    let mut feats = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (line, f) in rows {
        if f.len() != d + 2 {
            return Err(Error::data(content, line, format!("expected {} fields, got {}", d + 2, f.len())));
        }
        if id_index.insert(f[0].clone(), ids.len()).is_some() {
            return Err(Error::data(content, line, format!("node {:?} listed twice", f[0])));
        }
        ids.push(f[0].clone());
        let mut row = Vec::new();
        for (j, s) in f[1..=d].iter().enumerate() {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::data(content, line, format!("bad feature value {s:?}")))?;
            if !v.is_finite() {
                return Err(Error::data(content, line, "non-finite feature value"));
            }
            if v != 0.0 {
                row.push((j, v));
            }
        }
        feats.push(row);
        labels.push(f[d + 1].clone());
    }
    let x = Csr::from_rows(d, feats)?;

    let mut edges = Vec::new();
    let mut unknown = 0;
    for (line, f) in records(cites)? {
        if f.len() != 2 {
            return Err(Error::data(cites, line, format!("expected 2 fields, got {}", f.len())));
        }
        match (id_index.get(&f[0]), id_index.get(&f[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => unknown += 1,
        }
    }
    Ok((ids, x, labels, edges, unknown))
}

fn read_int_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, f) in records(path)? {
        if f.len() != 2 {
            return Err(Error::data(path, line, format!("expected 2 fields, got {}", f.len())));
        }
        let mut ends = [0usize; 2];
        for (e, s) in ends.iter_mut().zip(&f) {
            *e = s
                .parse()
                .map_err(|_| Error::data(path, line, format!("bad node id {s:?}")))?;
            if *e >= n {
                return Err(Error::data(path, line, format!("node id {e} out of range 0..{n}")));
            }
        }
        edges.push((ends[0], ends[1]));
    }
    Ok(edges)
}

fn read_int_labels(path: &Path) -> Result<Vec<String>> {
    let mut labels: Vec<Option<String>> = Vec::new();
    for (line, f) in records(path)? {
        if f.len() != 2 {
            return Err(Error::data(path, line, format!("expected 2 fields, got {}", f.len())));
        }
        let u: usize = f[0]
            .parse()
            .map_err(|_| Error::data(path, line, format!("bad node id {:?}", f[0])))?;
        if u >= labels.len() {
            labels.resize(u + 1, None);
        }
        if labels[u].replace(f[1].clone()).is_some() {
            return Err(Error::data(path, line, format!("node {u} labelled twice")));
        }
    }
    if labels.is_empty() {
        return Err(Error::data(path, 0, "no labels"));
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(u, l)| l.ok_or_else(|| Error::data(path, 0, format!("node {u} has no label"))))
        .collect()
}

fn read_feature_table(path: &Path, n: usize, sparse: bool) -> Result<Csr> {
    let rows = records(path)?;
    if rows.is_empty() {
        return Err(Error::data(path, 0, "empty feature table"));
    }
    let mut feats: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    let mut d = 0;
    let node = |line: usize, s: &str| -> Result<usize> {
        let u: usize = s
            .parse()
            .map_err(|_| Error::data(path, line, format!("bad node id {s:?}")))?;
        if u >= n {
            return Err(Error::data(path, line, format!("node id {u} out of range 0..{n}")));
        }
        Ok(u)
    };
    let value = |line: usize, s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::data(path, line, format!("bad feature value {s:?}")))
    };
    if sparse {
        for (line, f) in rows {
            if f.len() != 3 {
                return Err(Error::data(path, line, format!("expected 3 fields, got {}", f.len())));
            }
            let u = node(line, &f[0])?;
            let j: usize = f[1]
                .parse()
                .map_err(|_| Error::data(path, line, format!("bad feature dim {:?}", f[1])))?;
            let v = value(line, &f[2])?;
            if feats[u].iter().any(|&(c, _)| c == j) {
                return Err(Error::data(path, line, format!("duplicate entry ({u}, {j})")));
            }
            d = d.max(j + 1);
            if v != 0.0 {
                feats[u].push((j, v));
            }
        }
    } else {
        d = rows[0].1.len() - 1;
        if d == 0 {
            return Err(Error::data(path, rows[0].0, "feature rows have no values"));
        }
        for (line, f) in rows {
            if f.len() != d + 1 {
                return Err(Error::data(path, line, format!("expected {} fields, got {}", d + 1, f.len())));
            }
            let u = node(line, &f[0])?;
            if std::mem::replace(&mut seen[u], true) {
                return Err(Error::data(path, line, format!("node {u} listed twice")));
            }
            for (j, s) in f[1..].iter().enumerate() {
                let v = value(line, s)?;
                if v != 0.0 {
                    feats[u].push((j, v));
                }
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::data(path, 0, format!("node {u} has no feature row")));
        }
    }
    Csr::from_rows(d, feats)
}

/// Parses raw files into a validated graph and a manifest with a fixed
/// (ascending-id) class split of the given sizes.
pub fn ingest(input: &RawInput, name: &str, split_sizes: (usize, usize, usize)) -> Result<Ingested> {
    let (node_ids, x, label_names, edges, unknown) = match input {
        RawInput::Linqs { content, cites } => {
            let (ids, x, labels, edges, unknown) = read_linqs(content, cites)?;
            (Some(ids), x, labels, edges, unknown)
        }
        RawInput::EdgeList {
            edges,
            labels,
            features,
            sparse,
        } => {
            let label_names = read_int_labels(labels)?;
            let n = label_names.len();
            let x = read_feature_table(features, n, *sparse)?;
            (None, x, label_names, read_int_edges(edges, n)?, 0)
        }
    };
    let n = label_names.len();
    let (class_names, index) = class_index(&label_names);
    let labels: Vec<usize> = label_names.iter().map(|l| index[l]).collect();
    let (adjacency, edge_stats) = adjacency_from_edges(n, &edges)?;
    let graph = Graph::new(adjacency, Features::auto(x), labels, class_names.len())?;
    let manifest = Manifest {
        name: name.to_owned(),
        n_nodes: n,
        n_features: graph.n_features(),
        n_classes: graph.n_classes(),
        class_split: fixed_split(graph.n_classes(), split_sizes)?,
        class_names: Some(class_names),
    };
    Ok(Ingested {
        manifest,
        graph,
        stats: IngestStats {
            edges: edge_stats,
            unknown_endpoints: unknown,
        },
        node_ids,
    })
}
