//! Supervised pretraining over the training classes, then a fresh linear
//! classifier fitted per episode on frozen embeddings.

use super::{predict, supervised_objective, EpisodeResult, MethodConfig};
use crate::encoders::{classify, classify_backward, zero_head, Backbone, HEAD_W};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, softmax_ce, DenseMatrix, ParamSet};
use crate::splits::SplitView;

/// Loss and gradients of one full-batch epoch over every labelled node of
/// the view, targets being the class's rank within the view's class set.
pub fn ignn_pretrain_epoch(backbone: Backbone, view: &SplitView, params: &ParamSet) -> Result<(f64, ParamSet)> {
    let (nodes, targets): (Vec<usize>, Vec<usize>) = view.labeled_nodes().into_iter().unzip();
    if nodes.is_empty() {
        return Err(Error::Invalid(format!("{} view has no labelled nodes", view.partition)));
    }
    let (loss, grads, _) = supervised_objective(backbone, view, params, &nodes, &targets)?;
    Ok((loss, grads))
}

/// `CE(Z·W + b) + (λ/2)·‖W‖²` and its gradient. The bias is not penalized.
pub fn probe_objective(z: &DenseMatrix, labels: &[usize], head: &ParamSet, weight_decay: f64) -> Result<(f64, ParamSet)> {
    let logits = classify(z, head)?;
    let (ce, grad_logits) = softmax_ce(&logits, labels)?;
    let (_, mut grads) = classify_backward(z, head, &grad_logits)?;
    let w = head.get(HEAD_W)?;
    grads.get_mut(HEAD_W)?.axpy(weight_decay, w)?;
    Ok((ce + 0.5 * weight_decay * w.squared_norm(), grads))
}

/// Gradient descent from a zero head for `probe_steps` steps.
pub fn train_probe(z_support: &DenseMatrix, labels: &[usize], n_way: usize, cfg: &MethodConfig) -> Result<ParamSet> {
    let mut head = zero_head(z_support.cols(), n_way);
    for _ in 0..cfg.probe_steps {
        let (_, grads) = probe_objective(z_support, labels, &head, cfg.probe_weight_decay)?;
        sgd_step(&mut head, &grads, cfg.probe_lr, 0.0, &[])?;
    }
    Ok(head)
}

/// Fits a probe on the support embeddings and classifies the query.
pub fn linear_probe(
    z_support: &DenseMatrix,
    support_labels: &[usize],
    z_query: &DenseMatrix,
    query_labels: &[usize],
    n_way: usize,
    cfg: &MethodConfig,
) -> Result<EpisodeResult> {
    let head = train_probe(z_support, support_labels, n_way, cfg)?;
    predict(&classify(z_query, &head)?, query_labels)
}
