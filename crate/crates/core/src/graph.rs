//! Attributed, undirected, unweighted graphs.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nn::{Csr, DenseMatrix};

/// Feature density below which node features are kept in CSR form.
pub const SPARSE_FEATURE_DENSITY: f64 = 0.05;

/// Node feature matrix, `n_nodes × dim`.
#[derive(Clone, Debug, PartialEq)]
pub enum Features {
    Dense(DenseMatrix),
    Sparse(Csr),
}

impl Features {
    /// Picks the storage by density.
    pub fn auto(m: Csr) -> Self {
        let cells = (m.n_rows() * m.n_cols()).max(1);
        if (m.nnz() as f64) / (cells as f64) < SPARSE_FEATURE_DENSITY {
            Features::Sparse(m)
        } else {
            Features::Dense(m.to_dense())
        }
    }

    pub fn n_rows(&self) -> usize {
        match self {
            Features::Dense(m) => m.rows(),
            Features::Sparse(m) => m.n_rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Dense(m) => m.cols(),
            Features::Sparse(m) => m.n_cols(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            Features::Dense(m) => m.values().iter().filter(|&&v| v != 0.0).count(),
            Features::Sparse(m) => m.nnz(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Features::Sparse(_))
    }

    /// `X · w`.
    pub fn matmul(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Features::Dense(m) => m.matmul(w),
            Features::Sparse(m) => m.spmm(w),
        }
    }

    /// `Xᵀ · g`.
    pub fn t_matmul(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Features::Dense(m) => m.t_matmul(g),
            Features::Sparse(m) => m.t_spmm(g),
        }
    }

    pub fn gather_rows(&self, rows: &[usize]) -> Result<Self> {
        Ok(match self {
            Features::Dense(m) => Features::Dense(m.gather_rows(rows)?),
            Features::Sparse(m) => Features::Sparse(m.gather_rows(rows)?),
        })
    }

    /// Nonzero `(dim, value)` pairs of row `r`, ascending by dim.
    pub fn row_entries(&self, r: usize) -> Vec<(usize, f64)> {
        match self {
            Features::Dense(m) => m
                .row(r)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect(),
            Features::Sparse(m) => {
                let (c, v) = m.row(r);
                c.iter().copied().zip(v.iter().copied()).collect()
            }
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Features::Dense(m) => m.clone(),
            Features::Sparse(m) => m.to_dense(),
        }
    }

    /// Value equality regardless of storage.
    pub fn same_values(&self, other: &Self) -> bool {
        self.n_rows() == other.n_rows()
            && self.dim() == other.dim()
            && (0..self.n_rows()).all(|r| self.row_entries(r) == other.row_entries(r))
    }
}

/// Immutable attributed graph. Adjacency is symmetric with unit weights and
/// no stored self-loops; labels lie in `0..n_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: Csr,
    features: Features,
    labels: Vec<usize>,
    n_classes: usize,
}

/// Outcome of turning a raw edge list into an adjacency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeListStats {
    pub lines: usize,
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Symmetric unit-weight CSR from undirected edge pairs. `(u,v)` and `(v,u)`
/// are the same edge; repeats and self-loops are dropped and counted.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<(Csr, EdgeListStats)> {
    let mut stats = EdgeListStats {
        lines: edges.len(),
        ..Default::default()
    };
    let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::Invalid(format!("edge ({u},{v}) out of range for {n} nodes")));
        }
        if u == v {
            stats.self_loops += 1;
            continue;
        }
        if !rows[u].insert(v) {
            stats.duplicates += 1;
        }
        rows[v].insert(u);
    }
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().map(|c| (c, 1.0)).collect())
        .collect();
    Ok((Csr::from_rows(n, rows)?, stats))
}

impl Graph {
    pub fn new(adjacency: Csr, features: Features, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n = adjacency.n_rows();
        if adjacency.n_cols() != n {
            return Err(Error::shape("Graph", "adjacency must be square"));
        }
        if features.n_rows() != n {
            return Err(Error::shape(
                "Graph",
                format!("{} feature rows for {n} nodes", features.n_rows()),
            ));
        }
        if labels.len() != n {
            return Err(Error::shape("Graph", format!("{} labels for {n} nodes", labels.len())));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::Invalid(format!(
                "node {i} has label {l} outside 0..{n_classes}"
            )));
        }
        for u in 0..n {
            let (cols, vals) = adjacency.row(u);
            for (&v, &w) in cols.iter().zip(vals) {
                if v == u {
                    return Err(Error::Invalid(format!("self-loop stored at node {u}")));
                }
                if w != 1.0 {
                    return Err(Error::Invalid(format!("edge ({u},{v}) has weight {w}")));
                }
                if !adjacency.contains(v, u) {
                    return Err(Error::Invalid(format!("edge ({u},{v}) has no reverse")));
                }
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            n_classes,
        })
    }

    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        features: Features,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let (adjacency, _) = adjacency_from_edges(n, edges)?;
        Self::new(adjacency, features, labels, n_classes)
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    /// Undirected edge count.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.features.dim()
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency.row_nnz(u)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.contains(u, v)
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_nodes()).flat_map(move |u| {
            self.adjacency
                .row(u)
                .0
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }

    /// Node count per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Fails if some class id in `0..n_classes` labels no node. Only required
    /// of full datasets; induced subgraphs keep the global class ids.
    pub fn check_class_coverage(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(Error::Invalid(format!("class {c} labels no node"))),
            None => Ok(()),
        }
    }
}

/// `D̃^(−1/2) (A + I) D̃^(−1/2)` for a graph's adjacency `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(Csr);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Csr {
        &self.0
    }

    /// `Â · m`.
    pub fn propagate(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.spmm(m)
    }
}

pub fn gcn_normalize(g: &Graph) -> NormalizedAdjacency {
    let n = g.n_nodes();
    let adj = g.adjacency();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(adj.nnz() + n);
    let mut values = Vec::with_capacity(adj.nnz() + n);
    indptr.push(0);
    for i in 0..n {
        let di = (g.degree(i) + 1) as f64;
        let (cols, _) = adj.row(i);
        let mut diag_done = false;
        for &j in cols {
            if !diag_done && j > i {
                indices.push(i);
                values.push(1.0 / di);
                diag_done = true;
            }
            let dj = (g.degree(j) + 1) as f64;
            indices.push(j);
            values.push(1.0 / (di * dj).sqrt());
        }
        if !diag_done {
            indices.push(i);
            values.push(1.0 / di);
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency(
        Csr::new(n, n, indptr, indices, values).expect("normalized adjacency is well formed"),
    )
}

/// Correspondence between a view's local node ids and the source graph's.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeMapping {
    Identity(usize),
    Subset {
        to_global: Vec<usize>,
        to_local: Vec<Option<usize>>,
    },
}

impl NodeMapping {
    pub fn to_global(&self, local: usize) -> usize {
        match self {
            NodeMapping::Identity(_) => local,
            NodeMapping::Subset { to_global, .. } => to_global[local],
        }
    }

    pub fn to_local(&self, global: usize) -> Option<usize> {
        match self {
            NodeMapping::Identity(n) => (global < *n).then_some(global),
            NodeMapping::Subset { to_local, .. } => to_local.get(global).copied().flatten(),
        }
    }

    pub fn n_local(&self) -> usize {
        match self {
            NodeMapping::Identity(n) => *n,
            NodeMapping::Subset { to_global, .. } => to_global.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, NodeMapping::Identity(_))
    }
}

/// Subgraph on `keep` (as a set). Kept nodes are renumbered `0..|keep|` in
/// ascending original-id order; an edge survives iff both ends are kept.
pub fn induced_subgraph(g: &Graph, keep: &[usize]) -> Result<(Graph, NodeMapping)> {
    let n = g.n_nodes();
    let keep: BTreeSet<usize> = keep.iter().copied().collect();
    if keep.is_empty() {
        return Err(Error::Invalid("induced_subgraph: empty keep set".into()));
    }
    if let Some(&bad) = keep.iter().next_back().filter(|&&m| m >= n) {
        return Err(Error::Invalid(format!(
            "induced_subgraph: node {bad} out of range for {n} nodes"
        )));
    }
    let to_global: Vec<usize> = keep.into_iter().collect();
    let mut to_local = vec![None; n];
    for (l, &gid) in to_global.iter().enumerate() {
        to_local[gid] = Some(l);
    }

    let mut indptr = Vec::with_capacity(to_global.len() + 1);
    let mut indices = Vec::new();
    indptr.push(0);
    for &gid in &to_global {
        // ascending global ids map to ascending local ids, so rows stay sorted
        indices.extend(g.adjacency().row(gid).0.iter().filter_map(|&v| to_local[v]));
        indptr.push(indices.len());
    }
    let values = vec![1.0; indices.len()];
    let adjacency = Csr::new(to_global.len(), to_global.len(), indptr, indices, values)?;
    let features = g.features().gather_rows(&to_global)?;
    let labels = to_global.iter().map(|&u| g.labels()[u]).collect();
    let sub = Graph::new(adjacency, features, labels, g.n_classes())?;
    Ok((sub, NodeMapping::Subset { to_global, to_local }))
}
