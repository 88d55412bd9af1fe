//! Finite-difference checks of every hand-written gradient path on small
//! random instances.

use rand::Rng;
use serde::Serialize;

use crate::encoders::{init_encoder, init_head, Backbone, EncoderShape, HEAD_B};
use crate::episodes::Episode;
use crate::error::Result;
use crate::graph::{Features, Graph};
use crate::methods::{probe_objective, protonet_episode, supervised_objective};
use crate::nn::{glorot_uniform, grad_check, DenseMatrix, GradCheckConfig, GradCheckReport, ParamSet};
use crate::rng::{derive_seed, seeded};
use crate::splits::{build_view, ClassSplit, Partition, PreparedGraph, Setting, SplitView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradPath {
    GcnHead,
    MlpHead,
    LinearProbe,
    Protonet,
}

impl GradPath {
    pub const ALL: [GradPath; 4] = [GradPath::GcnHead, GradPath::MlpHead, GradPath::LinearProbe, GradPath::Protonet];

    pub fn name(self) -> &'static str {
        match self {
            GradPath::GcnHead => "gcn+head",
            GradPath::MlpHead => "mlp+head",
            GradPath::LinearProbe => "linear probe",
            GradPath::Protonet => "protonet",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SuiteConfig {
    pub check: GradCheckConfig,
    pub instances: usize,
    pub max_nodes: usize,
    pub max_features: usize,
    pub seed: u64,
    /// Negate every analytic gradient; the suite must then fail.
    pub flip_sign: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            check: GradCheckConfig::default(),
            instances: 20,
            max_nodes: 30,
            max_features: 10,
            seed: 0,
            flip_sign: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PathReport {
    pub path: GradPath,
    pub instances: usize,
    pub report: GradCheckReport,
}

/// Random graph with `n` nodes, `c` classes (each used) and dense features.
fn random_view(rng: &mut impl Rng, n: usize, d: usize, c: usize) -> Result<SplitView> {
    let density = rng.gen_range(0.05..0.4);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(density) {
                edges.push((u, v));
            }
        }
    }
    let x = DenseMatrix::from_fn(n, d, |_, _| if rng.gen_bool(0.7) { rng.gen_range(-1.0..1.0) } else { 0.0 });
    let labels: Vec<usize> = (0..n).map(|u| if u < c { u } else { rng.gen_range(0..c) }).collect();
    // one extra class so the split has nonempty dev/test sets
    let g = Graph::from_edges(n, &edges, Features::Dense(x), labels, c + 2)?;
    let split = ClassSplit::new((0..c).collect(), vec![c], vec![c + 1], c + 2)?;
    build_view(&PreparedGraph::new(g), &split, Setting::Transductive, Partition::Train)
}

fn maybe_flip(flip: bool, mut g: ParamSet) -> ParamSet {
    if flip {
        for p in g.iter_mut() {
            p.value.scale(-1.0);
        }
    }
    g
}

fn check_instance(path: GradPath, cfg: &SuiteConfig, instance: usize) -> Result<GradCheckReport> {
    let seed = derive_seed(derive_seed(cfg.seed, path as u64), instance as u64);
    let mut rng = seeded(seed);
    let n = rng.gen_range(6..=cfg.max_nodes.max(6));
    let d = rng.gen_range(2..=cfg.max_features.max(2));
    let c = rng.gen_range(2..=3);
    let shape = EncoderShape {
        in_dim: d,
        hidden: rng.gen_range(3..=8),
        embed: rng.gen_range(2..=5),
    };
    let check = GradCheckConfig { seed, ..cfg.check };
    let flip = cfg.flip_sign;

    match path {
        GradPath::GcnHead | GradPath::MlpHead => {
            let backbone = if path == GradPath::GcnHead { Backbone::Gcn } else { Backbone::Mlp };
            let view = random_view(&mut rng, n, d, c)?;
            let mut params = init_encoder(shape, &mut rng);
            params.merge_from(&init_head(shape.embed, c, &mut rng));
            let (nodes, targets): (Vec<usize>, Vec<usize>) = view.labeled_nodes().into_iter().unzip();
            grad_check(
                |p| {
                    let (loss, g, _) = supervised_objective(backbone, &view, p, &nodes, &targets)?;
                    Ok((loss, maybe_flip(flip, g)))
                },
                &params,
                &check,
            )
        }
        GradPath::LinearProbe => {
            let m = rng.gen_range(c..=3 * c);
            let z = DenseMatrix::from_fn(m, shape.embed, |_, _| rng.gen_range(-2.0..2.0));
            let labels: Vec<usize> = (0..m).map(|i| if i < c { i } else { rng.gen_range(0..c) }).collect();
            let mut head = init_head(shape.embed, c, &mut rng);
            *head.get_mut(HEAD_B)? = glorot_uniform(1, c, &mut rng);
            grad_check(
                |p| {
                    let (loss, g) = probe_objective(&z, &labels, p, 5e-4)?;
                    Ok((loss, maybe_flip(flip, g)))
                },
                &head,
                &check,
            )
        }
        GradPath::Protonet => {
            let view = random_view(&mut rng, n.max(2 * c + 2), d, c)?;
            let params = init_encoder(shape, &mut rng);
            let ep = random_episode(&mut rng, &view, c);
            grad_check(
                |p| {
                    let (loss, g) = protonet_episode(Backbone::Mlp, &view, &ep, p)?;
                    Ok((loss, maybe_flip(flip, g)))
                },
                &params,
                &check,
            )
        }
    }
}

/// An episode over the first `c` classes of `view`: every class with two or
/// more nodes contributes one support node and its remaining nodes as
/// queries; classes with a single node only give support.
fn random_episode(rng: &mut impl Rng, view: &SplitView, c: usize) -> Episode {
    let mut support = Vec::new();
    let mut query = Vec::new();
    for i in 0..c {
        let nodes = view.nodes_of_class_index(i);
        let first = rng.gen_range(0..nodes.len());
        for (j, &u) in nodes.iter().enumerate() {
            if j == first {
                support.push((u, i));
            } else {
                query.push((u, i));
            }
        }
    }
    Episode {
        support,
        query,
        class_map: view.classes()[..c].to_vec(),
    }
}

pub fn run_path(path: GradPath, cfg: &SuiteConfig) -> Result<PathReport> {
    let mut report = GradCheckReport::default();
    for i in 0..cfg.instances {
        report.absorb(check_instance(path, cfg, i)?);
    }
    Ok(PathReport {
        path,
        instances: cfg.instances,
        report,
    })
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<PathReport>> {
    GradPath::ALL.into_iter().map(|p| run_path(p, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let cfg = SuiteConfig {
            instances: 5,
            ..Default::default()
        };
        for r in run_suite(&cfg).unwrap() {
            assert!(r.report.passed(), "{}: {:?}", r.path.name(), r.report.violations.first());
            assert!(r.report.checked > 0);
        }
    }

    #[test]
    fn sign_flip_detected_on_every_path() {
        let cfg = SuiteConfig {
            instances: 2,
            flip_sign: true,
            ..Default::default()
        };
        for r in run_suite(&cfg).unwrap() {
            assert!(!r.report.passed(), "{}", r.path.name());
        }
    }

    #[test]
    fn impossible_tolerance_reports_without_panicking() {
        let mut cfg = SuiteConfig {
            instances: 2,
            ..Default::default()
        };
        cfg.check.tol = 1e-12;
        let reports = run_suite(&cfg).unwrap();
        assert!(reports.iter().any(|r| !r.report.passed()));
    }
}
