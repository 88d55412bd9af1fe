//! Training strategies: I-GNN (supervised pretraining, then a linear probe
//! per episode), Prototypical Networks, first-order MAML on an MLP, and
//! Meta-GNN (first-order MAML on a GCN).

mod ignn;
mod maml;
mod protonet;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{
    classify, classify_backward, encode, encode_all, encode_backward, init_encoder, init_head, zero_head,
    Backbone, EncoderShape, DEFAULT_EMBED, DEFAULT_HIDDEN,
};
use crate::episodes::{sample_episode, Episode, EpisodeSpec};
use crate::error::{Error, Result};
use crate::nn::{argmax_rows, softmax_ce, DenseMatrix, OptimizerState, ParamSet};
use crate::splits::SplitView;
use crate::stats::accuracy;

pub use ignn::{ignn_pretrain_epoch, linear_probe, probe_objective, train_probe};
pub use maml::{adapt, fomaml_episode, fomaml_eval};
pub use protonet::{prototypes, protonet_episode, protonet_eval, protonet_objective, ProtoGrads};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    Ignn,
    Protonet,
    Maml,
    MetaGnn,
}

impl MethodId {
    pub const ALL: [MethodId; 4] = [MethodId::Ignn, MethodId::Protonet, MethodId::Maml, MethodId::MetaGnn];

    pub fn required_backbone(self) -> Backbone {
        match self {
            MethodId::Ignn | MethodId::MetaGnn => Backbone::Gcn,
            MethodId::Protonet | MethodId::Maml => Backbone::Mlp,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodId::Ignn => "ignn",
            MethodId::Protonet => "protonet",
            MethodId::Maml => "maml",
            MethodId::MetaGnn => "meta_gnn",
        })
    }
}

impl FromStr for MethodId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    SquaredEuclidean,
}

/// Fully resolved method hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: MethodId,
    pub backbone: Backbone,
    pub hidden: usize,
    pub embed: usize,
    /// Adam step size for pretraining and outer meta-updates.
    pub lr: f64,
    pub weight_decay: f64,
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub probe_lr: f64,
    pub probe_steps: usize,
    pub probe_weight_decay: f64,
    pub distance: Distance,
}

impl MethodConfig {
    pub fn new(method: MethodId) -> Self {
        Self {
            method,
            backbone: method.required_backbone(),
            hidden: DEFAULT_HIDDEN,
            embed: DEFAULT_EMBED,
            lr: 1e-2,
            weight_decay: 5e-4,
            inner_lr: 0.1,
            inner_steps: 5,
            probe_lr: 1e-2,
            probe_steps: 300,
            probe_weight_decay: 5e-4,
            distance: Distance::SquaredEuclidean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbone != self.method.required_backbone() {
            return Err(Error::Invalid(format!(
                "method {} requires the {} backbone, got {}",
                self.method,
                self.method.required_backbone(),
                self.backbone
            )));
        }
        if self.hidden == 0 || self.embed == 0 {
            return Err(Error::Invalid("hidden and embedding sizes must be positive".into()));
        }
        let rates = [
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
            ("inner_lr", self.inner_lr),
            ("probe_lr", self.probe_lr),
            ("probe_weight_decay", self.probe_weight_decay),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn shape(&self, in_dim: usize) -> EncoderShape {
        EncoderShape {
            in_dim,
            hidden: self.hidden,
            embed: self.embed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

impl EpisodeResult {
    pub fn from_predictions(predictions: Vec<usize>, truth: &[usize]) -> Result<Self> {
        Ok(Self {
            accuracy: accuracy(&predictions, truth)?,
            predictions,
        })
    }
}

/// Trainable state of one repeat.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: ParamSet,
    pub optimizer: OptimizerState,
}

/// Fresh parameters for `cfg`. I-GNN gets a head over the training classes,
/// the MAML variants a zero head over the N episode labels, ProtoNet none.
pub fn init_model(
    cfg: &MethodConfig,
    in_dim: usize,
    n_train_classes: usize,
    spec: &EpisodeSpec,
    rng: &mut impl Rng,
) -> Model {
    let mut params = init_encoder(cfg.shape(in_dim), rng);
    match cfg.method {
        MethodId::Ignn => params.merge_from(&init_head(cfg.embed, n_train_classes, rng)),
        MethodId::Maml | MethodId::MetaGnn => params.merge_from(&zero_head(cfg.embed, spec.n_way)),
        MethodId::Protonet => {}
    }
    let optimizer = OptimizerState::new(&params, cfg.lr, cfg.weight_decay);
    Model { params, optimizer }
}

/// Cross-entropy of the encoder + head on `nodes`, with gradients for every
/// parameter. Also returns the logits.
pub fn supervised_objective(
    backbone: Backbone,
    view: &SplitView,
    params: &ParamSet,
    nodes: &[usize],
    targets: &[usize],
) -> Result<(f64, ParamSet, DenseMatrix)> {
    let (z, cache) = encode(backbone, view, params, nodes)?;
    let logits = classify(&z, params)?;
    let (loss, grad_logits) = softmax_ce(&logits, targets)?;
    let (grad_z, head_grads) = classify_backward(&z, params, &grad_logits)?;
    let mut grads = encode_backward(&cache, params, &grad_z)?;
    grads.merge_from(&head_grads);
    Ok((loss, reorder_like(params, &grads)?, logits))
}

/// `grads` rearranged to follow the parameter order of `like`.
pub(crate) fn reorder_like(like: &ParamSet, grads: &ParamSet) -> Result<ParamSet> {
    let mut out = ParamSet::new();
    for name in like.names() {
        out.insert(name, grads.get(name)?.clone())?;
    }
    Ok(out)
}

/// One optimization step of the training loop. I-GNN runs one
/// full-batch epoch over the train view; the episodic methods draw one
/// episode from the train view and apply one outer update. Returns the
/// training loss.
pub fn train_step(
    cfg: &MethodConfig,
    model: &mut Model,
    train_view: &SplitView,
    spec: &EpisodeSpec,
    rng: &mut impl Rng,
) -> Result<f64> {
    let (loss, grads) = match cfg.method {
        MethodId::Ignn => ignn_pretrain_epoch(cfg.backbone, train_view, &model.params)?,
        MethodId::Protonet => {
            let ep = sample_episode(train_view, spec, rng)?;
            protonet_episode(cfg.backbone, train_view, &ep, &model.params)?
        }
        MethodId::Maml | MethodId::MetaGnn => {
            let ep = sample_episode(train_view, spec, rng)?;
            fomaml_episode(cfg, train_view, &ep, &model.params)?
        }
    };
    model.optimizer.adam_step(&mut model.params, &grads)?;
    Ok(loss)
}

/// Frozen-parameter evaluator for one view. Methods that classify from
/// fixed embeddings compute them once for the whole view.
pub struct Evaluator<'a> {
    cfg: &'a MethodConfig,
    params: &'a ParamSet,
    view: &'a SplitView,
    embeddings: Option<DenseMatrix>,
}

impl<'a> Evaluator<'a> {
    pub fn new(cfg: &'a MethodConfig, params: &'a ParamSet, view: &'a SplitView) -> Result<Self> {
        let embeddings = match cfg.method {
            MethodId::Ignn | MethodId::Protonet => Some(encode_all(cfg.backbone, view, params)?),
            MethodId::Maml | MethodId::MetaGnn => None,
        };
        Ok(Self {
            cfg,
            params,
            view,
            embeddings,
        })
    }

    pub fn episode(&self, ep: &Episode) -> Result<EpisodeResult> {
        let rows = |z: &DenseMatrix| -> Result<(DenseMatrix, DenseMatrix)> {
            Ok((z.gather_rows(&ep.support_nodes())?, z.gather_rows(&ep.query_nodes())?))
        };
        match (self.cfg.method, &self.embeddings) {
            (MethodId::Ignn, Some(z)) => {
                let (zs, zq) = rows(z)?;
                linear_probe(&zs, &ep.support_labels(), &zq, &ep.query_labels(), ep.n_way(), self.cfg)
            }
            (MethodId::Protonet, Some(z)) => {
                let (zs, zq) = rows(z)?;
                protonet_eval(&zs, &ep.support_labels(), &zq, &ep.query_labels(), ep.n_way())
            }
            _ => fomaml_eval(self.cfg, self.view, ep, self.params),
        }
    }
}

/// Query predictions by argmax of `logits`.
pub(crate) fn predict(logits: &DenseMatrix, truth: &[usize]) -> Result<EpisodeResult> {
    EpisodeResult::from_predictions(argmax_rows(logits), truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Features, Graph};
    use crate::rng::seeded;
    use crate::splits::{build_view, ClassSplit, Partition, PreparedGraph, Setting};

    /// 12 nodes, 4 classes of 3; class c has features near e_c.
    pub(crate) fn toy_views(setting: Setting, extra_edges: bool) -> (SplitView, SplitView) {
        let n = 12;
        let labels: Vec<usize> = (0..n).map(|u| u / 3).collect();
        let f = DenseMatrix::from_fn(n, 4, |u, j| if j == u / 3 { 1.0 + 0.1 * (u % 3) as f64 } else { 0.05 });
        let mut edges = vec![(0, 1), (1, 2), (3, 4), (6, 7), (9, 10), (10, 11)];
        if extra_edges {
            edges.extend([(0, 6), (2, 9), (4, 5), (7, 8)]);
        }
        let g = Graph::from_edges(n, &edges, Features::Dense(f), labels, 4).unwrap();
        let pg = PreparedGraph::new(g);
        let split = ClassSplit::new(vec![0, 1], vec![2], vec![3], 4).unwrap();
        let train = build_view(&pg, &split, setting, Partition::Train).unwrap();
        let split2 = ClassSplit::new(vec![0], vec![1], vec![2, 3], 4).unwrap();
        let test = build_view(&pg, &split2, setting, Partition::Test).unwrap();
        (train, test)
    }

    #[test]
    fn backbone_contract_enforced() {
        let mut cfg = MethodConfig::new(MethodId::Maml);
        assert!(cfg.validate().is_ok());
        cfg.backbone = Backbone::Gcn;
        assert!(cfg.validate().is_err());
        assert_eq!(MethodConfig::new(MethodId::MetaGnn).backbone, Backbone::Gcn);
        assert_eq!("meta_gnn".parse::<MethodId>().unwrap(), MethodId::MetaGnn);
    }

    #[test]
    fn ignn_train_step_never_samples_episodes() {
        let (train, _) = toy_views(Setting::Transductive, false);
        let cfg = MethodConfig::new(MethodId::Ignn);
        let spec = EpisodeSpec::new(2, 1, 1).unwrap();
        let mut model = init_model(&cfg, 4, 2, &spec, &mut seeded(0));
        let mut rng = seeded(5);
        let before = rng.clone();
        train_step(&cfg, &mut model, &train, &spec, &mut rng).unwrap();
        assert_eq!(rng, before);
    }

    #[test]
    fn every_method_step_changes_parameters() {
        let (train, _) = toy_views(Setting::Transductive, true);
        let spec = EpisodeSpec::new(2, 1, 1).unwrap();
        for m in MethodId::ALL {
            let cfg = MethodConfig::new(m);
            let mut model = init_model(&cfg, 4, 2, &spec, &mut seeded(1));
            let before = model.params.checksum();
            train_step(&cfg, &mut model, &train, &spec, &mut seeded(2)).unwrap();
            assert_ne!(model.params.checksum(), before, "{m}");
        }
    }

    #[test]
    fn maml_step_ignores_adjacency_but_meta_gnn_does_not() {
        let spec = EpisodeSpec::new(2, 1, 1).unwrap();
        for (m, expect_same) in [(MethodId::Maml, true), (MethodId::MetaGnn, false)] {
            let cfg = MethodConfig::new(m);
            let mut sums = Vec::new();
            for extra in [false, true] {
                let (train, _) = toy_views(Setting::Transductive, extra);
                let mut model = init_model(&cfg, 4, 2, &spec, &mut seeded(3));
                train_step(&cfg, &mut model, &train, &spec, &mut seeded(4)).unwrap();
                sums.push(model.params.checksum());
            }
            assert_eq!(sums[0] == sums[1], expect_same, "{m}");
        }
    }

    #[test]
    fn evaluation_does_not_mutate_parameters() {
        let (_, test) = toy_views(Setting::Inductive, true);
        let spec = EpisodeSpec::new(2, 1, 2).unwrap();
        let ep = sample_episode(&test, &spec, &mut seeded(9)).unwrap();
        for m in MethodId::ALL {
            let cfg = MethodConfig::new(m);
            let model = init_model(&cfg, 4, 2, &spec, &mut seeded(1));
            let before = model.params.checksum();
            let r = Evaluator::new(&cfg, &model.params, &test).unwrap().episode(&ep).unwrap();
            assert!((0.0..=1.0).contains(&r.accuracy));
            assert_eq!(r.predictions.len(), 4);
            assert_eq!(model.params.checksum(), before, "{m}");
        }
    }
}
