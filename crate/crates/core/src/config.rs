//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//! seed = 0
//!
//! [dataset]
//! path = "../data/cora"      # relative to this file
//! setting = "inductive"
//! split = "fixed"            # or an integer seed; omit to use meta.json
//! sizes = [3, 2, 2]          # optional
//!
//! [method]
//! name = "ignn"              # ignn | protonet | maml | meta_gnn
//!
//! [protocol]
//! n_way = 2
//! k_shot = 5
//! ```
//!
//! Every omitted key takes its default; [`RunConfig::resolve`] fills them in
//! so the resolved file can be written back and rerun as is.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{read_manifest, Manifest};
use crate::encoders::Backbone;
use crate::episodes::EpisodeSpec;
use crate::error::{Error, Result};
use crate::methods::{Distance, MethodConfig, MethodId};
use crate::protocol::ProtocolConfig;
use crate::splits::{split_classes, ClassSplit, Setting, SplitAssignment};
use crate::graph::Graph;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "FSNC_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub method: MethodSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    pub setting: Setting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitAssignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: MethodId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<Backbone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<Distance>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_tasks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_way: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_shot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_query: Option<usize>,
}

impl MethodSection {
    pub fn new(name: MethodId) -> Self {
        Self {
            name,
            backbone: None,
            hidden: None,
            embed: None,
            lr: None,
            weight_decay: None,
            inner_lr: None,
            inner_steps: None,
            probe_lr: None,
            probe_steps: None,
            probe_weight_decay: None,
            distance: None,
        }
    }

    pub fn to_method_config(&self) -> MethodConfig {
        let d = MethodConfig::new(self.name);
        MethodConfig {
            method: self.name,
            backbone: self.backbone.unwrap_or(d.backbone),
            hidden: self.hidden.unwrap_or(d.hidden),
            embed: self.embed.unwrap_or(d.embed),
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            inner_lr: self.inner_lr.unwrap_or(d.inner_lr),
            inner_steps: self.inner_steps.unwrap_or(d.inner_steps),
            probe_lr: self.probe_lr.unwrap_or(d.probe_lr),
            probe_steps: self.probe_steps.unwrap_or(d.probe_steps),
            probe_weight_decay: self.probe_weight_decay.unwrap_or(d.probe_weight_decay),
            distance: self.distance.unwrap_or(d.distance),
        }
    }

    fn from_method_config(m: &MethodConfig) -> Self {
        Self {
            name: m.method,
            backbone: Some(m.backbone),
            hidden: Some(m.hidden),
            embed: Some(m.embed),
            lr: Some(m.lr),
            weight_decay: Some(m.weight_decay),
            inner_lr: Some(m.inner_lr),
            inner_steps: Some(m.inner_steps),
            probe_lr: Some(m.probe_lr),
            probe_steps: Some(m.probe_steps),
            probe_weight_decay: Some(m.probe_weight_decay),
            distance: Some(m.distance),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Reads `path`. Relative dataset and output paths are resolved against
    /// the file's directory and stored absolute; the dataset must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let dataset = base.join(&cfg.dataset.path);
        if !dataset.is_dir() {
            return Err(Error::Config(format!("dataset directory {} does not exist", dataset.display())));
        }
        cfg.dataset.path = dataset.canonicalize().map_err(|e| Error::io(&dataset, e))?;
        if let Some(out) = cfg.output.as_mut() {
            let joined = base.join(&*out);
            *out = std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces the seed with `$FSNC_SEED` when set.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let p = &self.protocol;
        let spec = EpisodeSpec::new(p.n_way.unwrap_or(2), p.k_shot.unwrap_or(5), p.q_query.unwrap_or(10))?;
        let mut cfg = ProtocolConfig::new(self.method.to_method_config(), spec, self.dataset.setting, self.seed);
        cfg.eval_interval = p.eval_interval.unwrap_or(cfg.eval_interval);
        cfg.eval_tasks = p.eval_tasks.unwrap_or(cfg.eval_tasks);
        cfg.patience = p.patience.unwrap_or(cfg.patience);
        cfg.max_epochs = p.max_epochs.unwrap_or(cfg.max_epochs);
        cfg.repeats = p.repeats.unwrap_or(cfg.repeats);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Class split: the manifest's own split unless `split` is given.
    pub fn class_split(&self, manifest: &Manifest, graph: &Graph) -> Result<ClassSplit> {
        let own = &manifest.class_split;
        let sizes = self
            .dataset
            .sizes
            .map(|[a, b, c]| (a, b, c))
            .unwrap_or((own.train.len(), own.dev.len(), own.test.len()));
        match self.dataset.split {
            None if self.dataset.sizes.is_none() => ClassSplit::from_ids(own, graph.n_classes()),
            None => split_classes(graph, sizes, SplitAssignment::Fixed),
            Some(a) => split_classes(graph, sizes, a),
        }
    }

    /// Copy with every default written out.
    pub fn resolve(&self) -> Result<Self> {
        let protocol = self.protocol_config()?;
        let mut out = self.clone();
        out.method = MethodSection::from_method_config(&protocol.method);
        out.protocol = ProtocolSection {
            eval_interval: Some(protocol.eval_interval),
            eval_tasks: Some(protocol.eval_tasks),
            patience: Some(protocol.patience),
            max_epochs: Some(protocol.max_epochs),
            repeats: Some(protocol.repeats),
            n_way: Some(protocol.spec.n_way),
            k_shot: Some(protocol.spec.k_shot),
            q_query: Some(protocol.spec.q_query),
        };
        if out.dataset.split.is_none() && out.dataset.sizes.is_none() {
            let m = read_manifest(&self.dataset.path)?;
            let s = &m.class_split;
            if s.train.iter().chain(&s.dev).chain(&s.test).copied().eq(0..m.n_classes) {
                out.dataset.split = Some(SplitAssignment::Fixed);
                out.dataset.sizes = Some([s.train.len(), s.dev.len(), s.test.len()]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 7

[dataset]
path = "data"
setting = "inductive"

[method]
name = "protonet"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let p = cfg.protocol_config().unwrap();
        assert_eq!(
            (p.eval_interval, p.eval_tasks, p.patience, p.max_epochs, p.repeats),
            (10, 100, 10, 10_000, 5)
        );
        assert_eq!((p.spec.n_way, p.spec.k_shot, p.spec.q_query), (2, 5, 10));
        assert_eq!(p.method.backbone, Backbone::Mlp);
        assert_eq!(p.master_seed, 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("seed = 7", "seed = 7\nsed = 3");
        assert!(matches!(RunConfig::parse(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("name = \"protonet\"", "name = \"protonet\"\ninner_lrr = 0.1");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn wrong_backbone_rejected() {
        let text = MINIMAL.replace("name = \"protonet\"", "name = \"protonet\"\nbackbone = \"gcn\"");
        let cfg = RunConfig::parse(&text).unwrap();
        assert!(cfg.protocol_config().is_err());
    }

    #[test]
    fn split_seed_forms() {
        let text = MINIMAL.replace("setting = \"inductive\"", "setting = \"inductive\"\nsplit = 42");
        assert_eq!(RunConfig::parse(&text).unwrap().dataset.split, Some(SplitAssignment::Seeded(42)));
        let text = MINIMAL.replace("setting = \"inductive\"", "setting = \"inductive\"\nsplit = \"fixed\"");
        assert_eq!(RunConfig::parse(&text).unwrap().dataset.split, Some(SplitAssignment::Fixed));
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = RunConfig::parse(MINIMAL).unwrap();
        cfg.method = MethodSection::from_method_config(&MethodConfig::new(MethodId::Maml));
        cfg.dataset.split = Some(SplitAssignment::Seeded(3));
        let back = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
