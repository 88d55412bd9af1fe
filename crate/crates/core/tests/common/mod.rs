#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fsnc::dataset::{write_dataset, ClassSplitIds, Manifest};
use fsnc::graph::{Features, Graph};
use fsnc::nn::DenseMatrix;
use rand::Rng;

pub fn data_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Random graph in which every class labels at least one node. Features are
/// a noisy one-hot of the label (padded or folded into `d` columns).
pub fn random_graph(rng: &mut impl Rng, n: usize, d: usize, c: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(density) {
                edges.push((u, v));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|u| if u < c { u } else { rng.gen_range(0..c) }).collect();
    let x = DenseMatrix::from_fn(n, d, |i, j| {
        let signal = if labels[i] % d == j { 1.0 } else { 0.0 };
        signal + rng.gen_range(-0.3..0.3)
    });
    Graph::from_edges(n, &edges, Features::Dense(x), labels, c).unwrap()
}

/// Graph with `per_class` nodes of each of `c` classes, labels in blocks.
pub fn block_graph(rng: &mut impl Rng, c: usize, per_class: usize, d: usize, p_in: f64, p_out: f64) -> Graph {
    let n = c * per_class;
    let labels: Vec<usize> = (0..n).map(|u| u / per_class).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let x = DenseMatrix::from_fn(n, d, |i, j| {
        let signal = if labels[i] % d == j { 1.0 } else { 0.0 };
        signal + rng.gen_range(-0.5..0.5)
    });
    Graph::from_edges(n, &edges, Features::Dense(x), labels, c).unwrap()
}

/// Writes `g` as a dataset directory with the fixed ascending split.
pub fn write_toy_dataset(dir: &Path, name: &str, g: &Graph, sizes: (usize, usize, usize)) {
    let (a, b, _) = sizes;
    let c = g.n_classes();
    let manifest = Manifest {
        name: name.into(),
        n_nodes: g.n_nodes(),
        n_features: g.n_features(),
        n_classes: c,
        class_split: ClassSplitIds {
            train: (0..a).collect(),
            dev: (a..a + b).collect(),
            test: (a + b..c).collect(),
        },
        class_names: None,
    };
    write_dataset(dir, &manifest, g).unwrap();
}
