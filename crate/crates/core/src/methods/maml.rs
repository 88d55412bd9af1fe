//! First-order MAML. The inner loop adapts every parameter (encoder and
//! head) on the support set by plain gradient descent; the outer gradient
//! is the query gradient at the adapted parameters.

use super::{predict, supervised_objective, EpisodeResult, MethodConfig};
use crate::encoders::{classify, encode};
use crate::episodes::Episode;
use crate::error::Result;
use crate::nn::{sgd_step, ParamSet};
use crate::splits::SplitView;

/// A copy of `params` after `inner_steps` support updates.
pub fn adapt(cfg: &MethodConfig, view: &SplitView, ep: &Episode, params: &ParamSet) -> Result<ParamSet> {
    let mut adapted = params.clone();
    let nodes = ep.support_nodes();
    let labels = ep.support_labels();
    for _ in 0..cfg.inner_steps {
        let (_, grads, _) = supervised_objective(cfg.backbone, view, &adapted, &nodes, &labels)?;
        sgd_step(&mut adapted, &grads, cfg.inner_lr, 0.0, &[])?;
    }
    Ok(adapted)
}

/// Query loss and outer gradient at the adapted parameters.
pub fn fomaml_episode(cfg: &MethodConfig, view: &SplitView, ep: &Episode, params: &ParamSet) -> Result<(f64, ParamSet)> {
    let adapted = adapt(cfg, view, ep, params)?;
    let (loss, grads, _) = supervised_objective(cfg.backbone, view, &adapted, &ep.query_nodes(), &ep.query_labels())?;
    Ok((loss, grads))
}

/// Adapts a copy on the support set, then classifies the query.
pub fn fomaml_eval(cfg: &MethodConfig, view: &SplitView, ep: &Episode, params: &ParamSet) -> Result<EpisodeResult> {
    let adapted = adapt(cfg, view, ep, params)?;
    let (z, _) = encode(cfg.backbone, view, &adapted, &ep.query_nodes())?;
    predict(&classify(&z, &adapted)?, &ep.query_labels())
}
