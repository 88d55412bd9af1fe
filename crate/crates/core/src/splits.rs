//! Class-level partitions and the per-partition graph views.
//!
//! In the transductive setting every partition sees the whole graph and only
//! the labels differ. In the inductive setting a partition sees the subgraph
//! induced by the nodes whose label belongs to its class set, so edges
//! between partitions are cut.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassSplitIds;
use crate::error::{Error, Result};
use crate::graph::{gcn_normalize, induced_subgraph, Graph, NodeMapping, NormalizedAdjacency};
use crate::rng::{choose_without_replacement, derive_seed, seeded, tags};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Transductive,
    Inductive,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Transductive => "transductive",
            Setting::Inductive => "inductive",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transductive" => Ok(Setting::Transductive),
            "inductive" => Ok(Setting::Inductive),
            _ => Err(Error::Invalid(format!("unknown setting {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Test];
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        })
    }
}

/// How class ids are dealt into train/dev/test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitAssignment {
    /// Ascending ids: the first classes train, then dev, then test.
    Fixed,
    /// Class ids shuffled with this seed, then sliced.
    Seeded(u64),
}

impl FromStr for SplitAssignment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "fixed" {
            return Ok(SplitAssignment::Fixed);
        }
        s.parse()
            .map(SplitAssignment::Seeded)
            .map_err(|_| Error::Invalid(format!("split seed must be \"fixed\" or an integer, got {s:?}")))
    }
}

impl fmt::Display for SplitAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitAssignment::Fixed => f.write_str("fixed"),
            SplitAssignment::Seeded(s) => write!(f, "{s}"),
        }
    }
}

impl Serialize for SplitAssignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SplitAssignment::Fixed => s.serialize_str("fixed"),
            SplitAssignment::Seeded(v) => s.serialize_u64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SplitAssignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Int(u64),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(SplitAssignment::Seeded(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Pairwise-disjoint, nonempty train/dev/test class sets. Each set is kept
/// sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    train: Vec<usize>,
    dev: Vec<usize>,
    test: Vec<usize>,
}

impl ClassSplit {
    pub fn new(
        mut train: Vec<usize>,
        mut dev: Vec<usize>,
        mut test: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        for (name, set) in [("train", &mut train), ("dev", &mut dev), ("test", &mut test)] {
            set.sort_unstable();
            if set.is_empty() {
                return Err(Error::Invalid(format!("{name} class set is empty")));
            }
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!("{name} class set has duplicates")));
            }
            if let Some(&c) = set.last().filter(|&&c| c >= n_classes) {
                return Err(Error::Invalid(format!("class {c} out of range 0..{n_classes}")));
            }
        }
        for (a, b) in [(&train, &dev), (&train, &test), (&dev, &test)] {
            if let Some(c) = a.iter().find(|c| b.binary_search(c).is_ok()) {
                return Err(Error::Invalid(format!("class {c} appears in two partitions")));
            }
        }
        Ok(Self { train, dev, test })
    }

    pub fn from_ids(ids: &ClassSplitIds, n_classes: usize) -> Result<Self> {
        Self::new(ids.train.clone(), ids.dev.clone(), ids.test.clone(), n_classes)
    }

    pub fn to_ids(&self) -> ClassSplitIds {
        ClassSplitIds {
            train: self.train.clone(),
            dev: self.dev.clone(),
            test: self.test.clone(),
        }
    }

    pub fn classes(&self, p: Partition) -> &[usize] {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }

    /// Partition owning class `c`, if any.
    pub fn partition_of(&self, c: usize) -> Option<Partition> {
        Partition::ALL
            .into_iter()
            .find(|&p| self.classes(p).binary_search(&c).is_ok())
    }
}

pub fn split_classes(
    g: &Graph,
    sizes: (usize, usize, usize),
    assignment: SplitAssignment,
) -> Result<ClassSplit> {
    let n = g.n_classes();
    let (a, b, c) = sizes;
    if a + b + c != n {
        return Err(Error::Invalid(format!(
            "split sizes {a}+{b}+{c} do not sum to {n} classes"
        )));
    }
    let order: Vec<usize> = match assignment {
        SplitAssignment::Fixed => (0..n).collect(),
        SplitAssignment::Seeded(seed) => {
            let mut rng = seeded(derive_seed(seed, tags::SPLIT));
            choose_without_replacement(&mut rng, n, n)
        }
    };
    ClassSplit::new(
        order[..a].to_vec(),
        order[a..a + b].to_vec(),
        order[a + b..].to_vec(),
        n,
    )
}

/// A graph with its normalized adjacency computed once, shared by every
/// transductive view.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    graph: Arc<Graph>,
    normalized: Arc<NormalizedAdjacency>,
}

impl PreparedGraph {
    pub fn new(graph: Graph) -> Self {
        let normalized = Arc::new(gcn_normalize(&graph));
        Self {
            graph: Arc::new(graph),
            normalized,
        }
    }

    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn normalized(&self) -> &Arc<NormalizedAdjacency> {
        &self.normalized
    }
}

#[derive(Clone, Debug)]
pub struct SplitView {
    pub setting: Setting,
    pub partition: Partition,
    graph: Arc<Graph>,
    normalized: Arc<NormalizedAdjacency>,
    mapping: NodeMapping,
    classes: Vec<usize>,
    /// Local node ids per entry of `classes`, ascending.
    class_nodes: Vec<Vec<usize>>,
}

impl SplitView {
    pub fn graph(&self) -> &Arc<Graph> {
        &self.graph
    }

    pub fn normalized(&self) -> &Arc<NormalizedAdjacency> {
        &self.normalized
    }

    pub fn mapping(&self) -> &NodeMapping {
        &self.mapping
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    /// This partition's class ids, ascending.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// Local ids of the nodes labelled `classes()[i]`.
    pub fn nodes_of_class_index(&self, i: usize) -> &[usize] {
        &self.class_nodes[i]
    }

    pub fn nodes_of_class(&self, class: usize) -> Option<&[usize]> {
        self.classes
            .binary_search(&class)
            .ok()
            .map(|i| self.class_nodes[i].as_slice())
    }

    /// All nodes carrying this partition's labels, with the label's rank in
    /// `classes()`, ordered by local id.
    pub fn labeled_nodes(&self) -> Vec<(usize, usize)> {
        let labels = self.graph.labels();
        (0..self.n_nodes())
            .filter_map(|u| self.classes.binary_search(&labels[u]).ok().map(|r| (u, r)))
            .collect()
    }
}

pub fn build_view(
    pg: &PreparedGraph,
    split: &ClassSplit,
    setting: Setting,
    partition: Partition,
) -> Result<SplitView> {
    let full = pg.graph();
    if split.classes(partition).iter().any(|&c| c >= full.n_classes()) {
        return Err(Error::Invalid(format!(
            "split references classes beyond the graph's {}",
            full.n_classes()
        )));
    }
    let classes = split.classes(partition).to_vec();
    let members: Vec<usize> = (0..full.n_nodes())
        .filter(|&u| classes.binary_search(&full.labels()[u]).is_ok())
        .collect();
    if members.is_empty() {
        return Err(Error::Invalid(format!(
            "{partition} classes {classes:?} label no nodes"
        )));
    }
    let (graph, normalized, mapping) = match setting {
        Setting::Transductive => (
            Arc::clone(full),
            Arc::clone(pg.normalized()),
            NodeMapping::Identity(full.n_nodes()),
        ),
        Setting::Inductive => {
            let (sub, mapping) = induced_subgraph(full, &members)?;
            let norm = gcn_normalize(&sub);
            (Arc::new(sub), Arc::new(norm), mapping)
        }
    };
    let mut class_nodes = vec![Vec::new(); classes.len()];
    for (u, &l) in graph.labels().iter().enumerate() {
        if let Ok(i) = classes.binary_search(&l) {
            class_nodes[i].push(u);
        }
    }
    Ok(SplitView {
        setting,
        partition,
        graph,
        normalized,
        mapping,
        classes,
        class_nodes,
    })
}

#[derive(Clone, Debug)]
pub struct Views {
    pub train: SplitView,
    pub dev: SplitView,
    pub test: SplitView,
}

impl Views {
    pub fn get(&self, p: Partition) -> &SplitView {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Test => &self.test,
        }
    }
}

pub fn build_views(pg: &PreparedGraph, split: &ClassSplit, setting: Setting) -> Result<Views> {
    Ok(Views {
        train: build_view(pg, split, setting, Partition::Train)?,
        dev: build_view(pg, split, setting, Partition::Dev)?,
        test: build_view(pg, split, setting, Partition::Test)?,
    })
}

/// Edge accounting for an inductive cut.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCutAudit {
    pub total_edges: usize,
    pub intra_train: usize,
    pub intra_dev: usize,
    pub intra_test: usize,
    pub cut_train_dev: usize,
    pub cut_train_test: usize,
    pub cut_dev_test: usize,
}

impl EdgeCutAudit {
    pub fn cut_total(&self) -> usize {
        self.cut_train_dev + self.cut_train_test + self.cut_dev_test
    }
}

pub fn edge_cut_audit(g: &Graph, split: &ClassSplit) -> Result<EdgeCutAudit> {
    let part = |u: usize| {
        split
            .partition_of(g.labels()[u])
            .ok_or_else(|| Error::Invalid(format!("class of node {u} is in no partition")))
    };
    let mut a = EdgeCutAudit {
        total_edges: g.n_edges(),
        intra_train: 0,
        intra_dev: 0,
        intra_test: 0,
        cut_train_dev: 0,
        cut_train_test: 0,
        cut_dev_test: 0,
    };
    use Partition::*;
    for (u, v) in g.edges() {
        match (part(u)?, part(v)?) {
            (Train, Train) => a.intra_train += 1,
            (Dev, Dev) => a.intra_dev += 1,
            (Test, Test) => a.intra_test += 1,
            (Train, Dev) | (Dev, Train) => a.cut_train_dev += 1,
            (Train, Test) | (Test, Train) => a.cut_train_test += 1,
            (Dev, Test) | (Test, Dev) => a.cut_dev_test += 1,
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Features;
    use crate::nn::DenseMatrix;

    /// 6 nodes, classes 0,0,1,1,2,2; a ring so every partition pair is cut.
    fn ring() -> Graph {
        let edges: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        let f = Features::Dense(DenseMatrix::from_fn(6, 3, |i, j| (i + j) as f64));
        Graph::from_edges(6, &edges, f, vec![0, 0, 1, 1, 2, 2], 3).unwrap()
    }

    fn seven_class_graph() -> Graph {
        let f = Features::Dense(DenseMatrix::zeros(7, 1));
        Graph::from_edges(7, &[], f, (0..7).collect(), 7).unwrap()
    }

    #[test]
    fn fixed_split_ascending() {
        let s = split_classes(&seven_class_graph(), (3, 2, 2), SplitAssignment::Fixed).unwrap();
        assert_eq!(s.classes(Partition::Train), &[0, 1, 2]);
        assert_eq!(s.classes(Partition::Dev), &[3, 4]);
        assert_eq!(s.classes(Partition::Test), &[5, 6]);
    }

    #[test]
    fn empty_partition_rejected() {
        assert!(split_classes(&seven_class_graph(), (7, 0, 0), SplitAssignment::Fixed).is_err());
        assert!(split_classes(&seven_class_graph(), (3, 2, 1), SplitAssignment::Fixed).is_err());
    }

    #[test]
    fn seeded_split_is_a_reproducible_permutation() {
        let g = seven_class_graph();
        let a = split_classes(&g, (3, 2, 2), SplitAssignment::Seeded(11)).unwrap();
        let b = split_classes(&g, (3, 2, 2), SplitAssignment::Seeded(11)).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = Partition::ALL.iter().flat_map(|&p| a.classes(p).to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn assignment_parses() {
        assert_eq!("fixed".parse::<SplitAssignment>().unwrap(), SplitAssignment::Fixed);
        assert_eq!("42".parse::<SplitAssignment>().unwrap(), SplitAssignment::Seeded(42));
        assert!("x".parse::<SplitAssignment>().is_err());
    }

    #[test]
    fn inductive_views_cut_every_cross_edge() {
        let pg = PreparedGraph::new(ring());
        let split = split_classes(pg.graph(), (1, 1, 1), SplitAssignment::Fixed).unwrap();
        let views = build_views(&pg, &split, Setting::Inductive).unwrap();
        for p in Partition::ALL {
            let v = views.get(p);
            assert_eq!(v.n_nodes(), 2);
            assert_eq!(v.graph().n_edges(), 1);
        }
        let audit = edge_cut_audit(pg.graph(), &split).unwrap();
        assert_eq!(audit.cut_total(), 3);
        assert_eq!(audit.intra_train + audit.intra_dev + audit.intra_test + audit.cut_total(), 6);
    }

    #[test]
    fn transductive_views_share_normalization() {
        let pg = PreparedGraph::new(ring());
        let split = split_classes(pg.graph(), (1, 1, 1), SplitAssignment::Fixed).unwrap();
        let views = build_views(&pg, &split, Setting::Transductive).unwrap();
        assert!(Arc::ptr_eq(views.train.normalized(), views.test.normalized()));
        assert!(Arc::ptr_eq(views.dev.normalized(), pg.normalized()));
        assert_eq!(views.dev.n_nodes(), 6);
        assert!(views.dev.mapping().is_identity());
        assert_eq!(views.dev.nodes_of_class(1), Some(&[2usize, 3][..]));
    }

    #[test]
    fn degenerate_partition_equals_full_graph() {
        let f = Features::Dense(DenseMatrix::from_fn(4, 2, |i, j| (i * j) as f64));
        let g = Graph::from_edges(4, &[(0, 1), (2, 3), (1, 2)], f, vec![0, 0, 0, 0], 3).unwrap();
        let pg = PreparedGraph::new(g.clone());
        let split = ClassSplit::new(vec![0], vec![1], vec![2], 3).unwrap();
        let v = build_view(&pg, &split, Setting::Inductive, Partition::Train).unwrap();
        assert_eq!(**v.graph(), g);
        assert!(build_view(&pg, &split, Setting::Inductive, Partition::Dev).is_err());
    }
}
