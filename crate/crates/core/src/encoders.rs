//! Two-layer GCN and MLP encoders plus the linear classification head,
//! with hand-derived backward passes.
//!
//! GCN:  `Z = Â · ReLU(Â · X · W1) · W2`
//! MLP:  `Z = ReLU(X · W1) · W2`
//! Head: `logits = Z · W + b`

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Features, Graph, NormalizedAdjacency};
use crate::nn::{glorot_uniform, DenseMatrix, ParamSet};
use crate::splits::SplitView;

pub const ENC_W1: &str = "encoder.w1";
pub const ENC_W2: &str = "encoder.w2";
pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_EMBED: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gcn,
    Mlp,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Gcn => "gcn",
            Backbone::Mlp => "mlp",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Backbone::Gcn),
            "mlp" => Ok(Backbone::Mlp),
            _ => Err(Error::Invalid(format!("unknown backbone {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub in_dim: usize,
    pub hidden: usize,
    pub embed: usize,
}

impl EncoderShape {
    pub fn new(in_dim: usize) -> Self {
        Self {
            in_dim,
            hidden: DEFAULT_HIDDEN,
            embed: DEFAULT_EMBED,
        }
    }
}

/// Glorot-initialized `encoder.w1` (d×h) and `encoder.w2` (h×e).
pub fn init_encoder(shape: EncoderShape, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert(ENC_W1, glorot_uniform(shape.in_dim, shape.hidden, rng))
        .expect("fresh set");
    p.insert(ENC_W2, glorot_uniform(shape.hidden, shape.embed, rng))
        .expect("fresh set");
    p
}

/// Glorot `head.w` (e×c) and zero `head.b` (1×c).
pub fn init_head(embed: usize, n_out: usize, rng: &mut impl Rng) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert(HEAD_W, glorot_uniform(embed, n_out, rng)).expect("fresh set");
    p.insert(HEAD_B, DenseMatrix::zeros(1, n_out)).expect("fresh set");
    p
}

/// All-zero head.
pub fn zero_head(embed: usize, n_out: usize) -> ParamSet {
    let mut p = ParamSet::new();
    p.insert(HEAD_W, DenseMatrix::zeros(embed, n_out)).expect("fresh set");
    p.insert(HEAD_B, DenseMatrix::zeros(1, n_out)).expect("fresh set");
    p
}

fn check_in_dim(features: &Features, w1: &DenseMatrix) -> Result<()> {
    if features.dim() != w1.rows() {
        return Err(Error::shape(
            "encoder",
            format!("{} input features but W1 has {} rows", features.dim(), w1.rows()),
        ));
    }
    Ok(())
}

fn relu_mask(grad: &mut DenseMatrix, pre: &DenseMatrix) {
    for (g, &p) in grad.values_mut().iter_mut().zip(pre.values()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Activations kept by [`gcn_forward`].
#[derive(Clone, Debug)]
pub struct GcnCache {
    graph: Arc<Graph>,
    normalized: Arc<NormalizedAdjacency>,
    pre: DenseMatrix,
    hidden: DenseMatrix,
}

/// Embeddings of every node of the view, `n × e`.
pub fn gcn_forward(view: &SplitView, params: &ParamSet) -> Result<(DenseMatrix, GcnCache)> {
    gcn_forward_on(view.graph(), view.normalized(), params)
}

pub fn gcn_forward_on(
    graph: &Arc<Graph>,
    normalized: &Arc<NormalizedAdjacency>,
    params: &ParamSet,
) -> Result<(DenseMatrix, GcnCache)> {
    let w1 = params.get(ENC_W1)?;
    let w2 = params.get(ENC_W2)?;
    check_in_dim(graph.features(), w1)?;
    let xw = graph.features().matmul(w1)?;
    let pre = normalized.propagate(&xw)?;
    let hidden = pre.relu();
    let z = normalized.propagate(&hidden.matmul(w2)?)?;
    Ok((
        z,
        GcnCache {
            graph: Arc::clone(graph),
            normalized: Arc::clone(normalized),
            pre,
            hidden,
        },
    ))
}

/// Gradients of `encoder.w1` and `encoder.w2` given `∂L/∂Z` (n × e).
/// Uses the symmetry of Â.
pub fn gcn_backward(cache: &GcnCache, params: &ParamSet, grad_z: &DenseMatrix) -> Result<ParamSet> {
    let w2 = params.get(ENC_W2)?;
    let grad_u = cache.normalized.propagate(grad_z)?;
    let grad_w2 = cache.hidden.t_matmul(&grad_u)?;
    let mut grad_h = grad_u.matmul_t(w2)?;
    relu_mask(&mut grad_h, &cache.pre);
    let grad_p = cache.normalized.propagate(&grad_h)?;
    let grad_w1 = cache.graph.features().t_matmul(&grad_p)?;
    ParamSet::new().with(ENC_W1, grad_w1)?.with(ENC_W2, grad_w2)
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Features,
    pre: DenseMatrix,
    hidden: DenseMatrix,
}

/// Row-wise MLP on the given feature rows.
pub fn mlp_forward(features: &Features, params: &ParamSet) -> Result<(DenseMatrix, MlpCache)> {
    let w1 = params.get(ENC_W1)?;
    let w2 = params.get(ENC_W2)?;
    check_in_dim(features, w1)?;
    let pre = features.matmul(w1)?;
    let hidden = pre.relu();
    let z = hidden.matmul(w2)?;
    Ok((
        z,
        MlpCache {
            input: features.clone(),
            pre,
            hidden,
        },
    ))
}

pub fn mlp_backward(cache: &MlpCache, params: &ParamSet, grad_z: &DenseMatrix) -> Result<ParamSet> {
    let w2 = params.get(ENC_W2)?;
    let grad_w2 = cache.hidden.t_matmul(grad_z)?;
    let mut grad_h = grad_z.matmul_t(w2)?;
    relu_mask(&mut grad_h, &cache.pre);
    let grad_w1 = cache.input.t_matmul(&grad_h)?;
    ParamSet::new().with(ENC_W1, grad_w1)?.with(ENC_W2, grad_w2)
}

/// Cache for [`encode`], covering both backbones.
#[derive(Clone, Debug)]
pub enum EncodeCache {
    Gcn {
        inner: GcnCache,
        nodes: Vec<usize>,
        n_nodes: usize,
    },
    Mlp(MlpCache),
}

/// Embeddings of `nodes` (local ids) in `view`, one row per listed node.
/// The GCN runs over the whole view; the MLP only touches the listed rows.
pub fn encode(
    backbone: Backbone,
    view: &SplitView,
    params: &ParamSet,
    nodes: &[usize],
) -> Result<(DenseMatrix, EncodeCache)> {
    match backbone {
        Backbone::Gcn => {
            let (z, inner) = gcn_forward(view, params)?;
            Ok((
                z.gather_rows(nodes)?,
                EncodeCache::Gcn {
                    inner,
                    nodes: nodes.to_vec(),
                    n_nodes: view.n_nodes(),
                },
            ))
        }
        Backbone::Mlp => {
            let x = view.graph().features().gather_rows(nodes)?;
            let (z, cache) = mlp_forward(&x, params)?;
            Ok((z, EncodeCache::Mlp(cache)))
        }
    }
}

/// Embeddings of every node in the view.
pub fn encode_all(backbone: Backbone, view: &SplitView, params: &ParamSet) -> Result<DenseMatrix> {
    match backbone {
        Backbone::Gcn => Ok(gcn_forward(view, params)?.0),
        Backbone::Mlp => Ok(mlp_forward(view.graph().features(), params)?.0),
    }
}

pub fn encode_backward(cache: &EncodeCache, params: &ParamSet, grad_rows: &DenseMatrix) -> Result<ParamSet> {
    match cache {
        EncodeCache::Gcn {
            inner,
            nodes,
            n_nodes,
        } => {
            let grad_z = grad_rows.scatter_rows(nodes, *n_nodes)?;
            gcn_backward(inner, params, &grad_z)
        }
        EncodeCache::Mlp(c) => mlp_backward(c, params, grad_rows),
    }
}

/// `Z · W + b`.
pub fn classify(z: &DenseMatrix, head: &ParamSet) -> Result<DenseMatrix> {
    let mut logits = z.matmul(head.get(HEAD_W)?)?;
    logits.add_row_broadcast(head.get(HEAD_B)?)?;
    Ok(logits)
}

/// Returns `(∂L/∂Z, {head.w, head.b} gradients)`.
pub fn classify_backward(
    z: &DenseMatrix,
    head: &ParamSet,
    grad_logits: &DenseMatrix,
) -> Result<(DenseMatrix, ParamSet)> {
    let grad_w = z.t_matmul(grad_logits)?;
    let grad_b = grad_logits.column_sums();
    let grad_z = grad_logits.matmul_t(head.get(HEAD_W)?)?;
    Ok((grad_z, ParamSet::new().with(HEAD_W, grad_w)?.with(HEAD_B, grad_b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gcn_normalize;
    use crate::nn::Csr;
    use crate::rng::seeded;

    fn path3() -> Graph {
        let f = Features::Dense(DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 2.0],
            vec![0.5, -1.0, 0.0],
            vec![0.0, 3.0, 1.0],
        ]));
        Graph::from_edges(3, &[(0, 1), (1, 2)], f, vec![0, 1, 0], 2).unwrap()
    }

    fn params(d: usize, seed: u64) -> ParamSet {
        init_encoder(
            EncoderShape {
                in_dim: d,
                hidden: 4,
                embed: 3,
            },
            &mut seeded(seed),
        )
    }

    #[test]
    fn gcn_matches_dense_oracle_on_path() {
        let g = Arc::new(path3());
        let norm = Arc::new(gcn_normalize(&g));
        let p = params(3, 1);
        let (z, _) = gcn_forward_on(&g, &norm, &p).unwrap();

        let a = norm.matrix().to_dense();
        let x = g.features().to_dense();
        let h = a
            .matmul(&x)
            .unwrap()
            .matmul(p.get(ENC_W1).unwrap())
            .unwrap()
            .relu();
        let oracle = a.matmul(&h).unwrap().matmul(p.get(ENC_W2).unwrap()).unwrap();
        assert!(z.max_abs_diff(&oracle) <= 1e-10);
    }

    #[test]
    fn edgeless_gcn_equals_mlp() {
        let base = path3();
        let g = Arc::new(
            Graph::new(
                Csr::zeros(3, 3),
                base.features().clone(),
                base.labels().to_vec(),
                2,
            )
            .unwrap(),
        );
        let norm = Arc::new(gcn_normalize(&g));
        let p = params(3, 4);
        let (zg, _) = gcn_forward_on(&g, &norm, &p).unwrap();
        let (zm, _) = mlp_forward(g.features(), &p).unwrap();
        assert_eq!(zg, zm);
    }

    #[test]
    fn zero_weights_zero_embeddings() {
        let g = Arc::new(path3());
        let norm = Arc::new(gcn_normalize(&g));
        let p = params(3, 0).zeros_like();
        let (z, _) = gcn_forward_on(&g, &norm, &p).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let g = Arc::new(path3());
        let norm = Arc::new(gcn_normalize(&g));
        let p = params(3, 2);
        let (z, cache) = gcn_forward_on(&g, &norm, &p).unwrap();
        let grads = gcn_backward(&cache, &p, &DenseMatrix::zeros(z.rows(), z.cols())).unwrap();
        assert!(grads.iter().all(|q| q.value.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dead_relu_unit_gets_no_first_layer_grad() {
        let x = Features::Dense(DenseMatrix::from_rows(&[vec![1.0, 2.0]]));
        // hidden unit 1 has a negative pre-activation
        let p = ParamSet::new()
            .with(ENC_W1, DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]))
            .unwrap()
            .with(ENC_W2, DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]))
            .unwrap();
        let (_, cache) = mlp_forward(&x, &p).unwrap();
        let g = mlp_backward(&cache, &p, &DenseMatrix::from_rows(&[vec![1.0]])).unwrap();
        let gw1 = g.get(ENC_W1).unwrap();
        assert_eq!((gw1.get(0, 1), gw1.get(1, 1)), (0.0, 0.0));
        assert!(gw1.get(0, 0) != 0.0);
    }

    #[test]
    fn shape_mismatch_reported() {
        let g = Arc::new(path3());
        let norm = Arc::new(gcn_normalize(&g));
        assert!(matches!(
            gcn_forward_on(&g, &norm, &params(5, 0)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn head_cases() {
        let z = DenseMatrix::from_rows(&[vec![0.3, -2.0], vec![1.5, 4.0]]);
        let logits = classify(&z, &zero_head(2, 3)).unwrap();
        assert!(logits.values().iter().all(|&v| v == 0.0));

        let ident = ParamSet::new()
            .with(HEAD_W, DenseMatrix::identity(2))
            .unwrap()
            .with(HEAD_B, DenseMatrix::zeros(1, 2))
            .unwrap();
        assert_eq!(classify(&z, &ident).unwrap(), z);

        let head = init_head(2, 3, &mut seeded(8));
        let mut head = head;
        head.get_mut(HEAD_B).unwrap().values_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let got = classify(&z, &head).unwrap();
        let w = head.get(HEAD_W).unwrap();
        let oracle = DenseMatrix::from_fn(2, 3, |i, j| {
            (0..2).map(|k| z.get(i, k) * w.get(k, j)).sum::<f64>() + [0.1, -0.2, 0.3][j]
        });
        assert!(got.max_abs_diff(&oracle) <= 1e-14);
    }
}
