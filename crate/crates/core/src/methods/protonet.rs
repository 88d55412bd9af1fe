//! Prototypical networks with squared Euclidean distance.

use super::{predict, reorder_like, EpisodeResult};
use crate::encoders::{encode, encode_backward, Backbone};
use crate::episodes::Episode;
use crate::error::{Error, Result};
use crate::nn::{softmax_ce, DenseMatrix, ParamSet};
use crate::splits::SplitView;

/// Mean support embedding per episode label, `n_way × e`.
pub fn prototypes(z_support: &DenseMatrix, labels: &[usize], n_way: usize) -> Result<DenseMatrix> {
    if labels.len() != z_support.rows() {
        return Err(Error::shape("prototypes", format!("{} labels for {} rows", labels.len(), z_support.rows())));
    }
    let mut protos = DenseMatrix::zeros(n_way, z_support.cols());
    let mut counts = vec![0usize; n_way];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_way {
            return Err(Error::Invalid(format!("label {y} out of range for {n_way} classes")));
        }
        counts[y] += 1;
        for (p, v) in protos.row_mut(y).iter_mut().zip(z_support.row(i)) {
            *p += v;
        }
    }
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::Invalid(format!("episode label {j} has no support nodes")));
        }
        for p in protos.row_mut(j) {
            *p /= c as f64;
        }
    }
    Ok(protos)
}

/// `−‖z_q − c_j‖²` for each query row and prototype.
fn neg_sq_distances(z_query: &DenseMatrix, protos: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(z_query.rows(), protos.rows(), |q, j| {
        -z_query
            .row(q)
            .iter()
            .zip(protos.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    })
}

/// Gradients of the episode loss with respect to the support and query
/// embeddings.
#[derive(Clone, Debug)]
pub struct ProtoGrads {
    pub support: DenseMatrix,
    pub query: DenseMatrix,
}

/// Query cross-entropy under prototype distances, with gradients flowing
/// through both the query embeddings and the prototypes.
pub fn protonet_objective(
    z_support: &DenseMatrix,
    support_labels: &[usize],
    z_query: &DenseMatrix,
    query_labels: &[usize],
    n_way: usize,
) -> Result<(f64, ProtoGrads)> {
    let protos = prototypes(z_support, support_labels, n_way)?;
    if z_query.cols() != protos.cols() {
        return Err(Error::shape("protonet", format!("query dim {} vs {}", z_query.cols(), protos.cols())));
    }
    let logits = neg_sq_distances(z_query, &protos);
    let (loss, g) = softmax_ce(&logits, query_labels)?;

    let e = protos.cols();
    let mut grad_query = DenseMatrix::zeros(z_query.rows(), e);
    let mut grad_protos = DenseMatrix::zeros(n_way, e);
    for q in 0..z_query.rows() {
        for j in 0..n_way {
            let w = 2.0 * g.get(q, j);
            for k in 0..e {
                let diff = z_query.get(q, k) - protos.get(j, k);
                grad_query.row_mut(q)[k] -= w * diff;
                grad_protos.row_mut(j)[k] += w * diff;
            }
        }
    }
    let mut counts = vec![0usize; n_way];
    for &y in support_labels {
        counts[y] += 1;
    }
    let grad_support = DenseMatrix::from_fn(z_support.rows(), e, |i, k| {
        let y = support_labels[i];
        grad_protos.get(y, k) / counts[y] as f64
    });
    Ok((
        loss,
        ProtoGrads {
            support: grad_support,
            query: grad_query,
        },
    ))
}

fn stack(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let values = [a.values(), b.values()].concat();
    DenseMatrix::new(a.rows() + b.rows(), a.cols(), values)
}

/// Episode loss and encoder gradients.
pub fn protonet_episode(backbone: Backbone, view: &SplitView, ep: &Episode, params: &ParamSet) -> Result<(f64, ParamSet)> {
    let n_support = ep.support.len();
    let nodes: Vec<usize> = ep.support_nodes().into_iter().chain(ep.query_nodes()).collect();
    let (z, cache) = encode(backbone, view, params, &nodes)?;
    let idx: Vec<usize> = (0..nodes.len()).collect();
    let zs = z.gather_rows(&idx[..n_support])?;
    let zq = z.gather_rows(&idx[n_support..])?;
    let (loss, g) = protonet_objective(&zs, &ep.support_labels(), &zq, &ep.query_labels(), ep.n_way())?;
    let grads = encode_backward(&cache, params, &stack(&g.support, &g.query)?)?;
    Ok((loss, reorder_like(params, &grads)?))
}

/// Nearest-prototype classification of the query.
pub fn protonet_eval(
    z_support: &DenseMatrix,
    support_labels: &[usize],
    z_query: &DenseMatrix,
    query_labels: &[usize],
    n_way: usize,
) -> Result<EpisodeResult> {
    let protos = prototypes(z_support, support_labels, n_way)?;
    predict(&neg_sq_distances(z_query, &protos), query_labels)
}
