//! The train / validate / early-stop / test loop, repeated `T` times.
//!
//! Each repeat trains for up to `M` epochs. Every `EI` epochs the model is
//! evaluated on `S` dev episodes; a strictly better dev accuracy snapshots
//! the parameters and resets the patience counter, anything else increments
//! it, and training stops once the counter reaches `E`. The best snapshot is
//! then evaluated on `S` test episodes.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodes::{check_feasible, sample_batch, Episode, EpisodeSpec};
use crate::error::{Error, Result};
use crate::methods::{init_model, train_step, EpisodeResult, Evaluator, MethodConfig, MethodId, Model};
use crate::nn::ParamSet;
use crate::rng::{derive_seed, seeded, tags, StreamRng};
use crate::splits::{build_views, ClassSplit, Partition, PreparedGraph, Setting, SplitView, Views};
use crate::stats::{summarize, Summary};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Validation interval in epochs (EI).
    pub eval_interval: usize,
    /// Episodes per dev or test evaluation (S).
    pub eval_tasks: usize,
    /// Validation rounds without improvement before stopping (E).
    pub patience: usize,
    /// Epoch budget (M).
    pub max_epochs: usize,
    /// Independent repeats (T).
    pub repeats: usize,
    pub spec: EpisodeSpec,
    pub setting: Setting,
    pub method: MethodConfig,
    pub master_seed: u64,
}

impl ProtocolConfig {
    /// Defaults: EI = 10, S = 100, E = 10, M = 10000, T = 5.
    pub fn new(method: MethodConfig, spec: EpisodeSpec, setting: Setting, master_seed: u64) -> Self {
        Self {
            eval_interval: 10,
            eval_tasks: 100,
            patience: 10,
            max_epochs: 10_000,
            repeats: 5,
            spec,
            setting,
            method,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.eval_interval >= 1, "eval_interval must be >= 1"),
            (self.eval_tasks >= 1, "eval_tasks must be >= 1"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.max_epochs >= self.eval_interval, "max_epochs must be >= eval_interval"),
            (self.repeats >= 1, "repeats must be >= 1"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::Config((*msg).into()));
        }
        self.spec.validate()?;
        self.method.validate()
    }
}

/// What the schedule needs from a training run.
pub trait Strategy {
    type Snapshot;

    fn train_epoch(&mut self, epoch: usize) -> Result<()>;
    /// Mean dev accuracy of the current parameters.
    fn validate(&mut self) -> Result<f64>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub best_dev: f64,
    /// Epoch whose parameters were restored; 0 means the initialization.
    pub best_epoch: usize,
    /// Last epoch trained.
    pub stop_epoch: usize,
    /// `(epoch, dev accuracy)` for every validation round.
    pub dev_history: Vec<(usize, f64)>,
}

/// Runs the early-stopping schedule and leaves `strategy` holding the best
/// snapshot. The best accuracy starts at 0 and the initial parameters are
/// the fallback snapshot.
pub fn run_schedule<S: Strategy>(
    strategy: &mut S,
    eval_interval: usize,
    patience: usize,
    max_epochs: usize,
) -> Result<ScheduleOutcome> {
    let mut best_dev = 0.0;
    let mut best_epoch = 0;
    let mut best = strategy.snapshot();
    let mut waited = 0;
    let mut stop_epoch = 0;
    let mut dev_history = Vec::new();
    for epoch in 1..=max_epochs {
        strategy.train_epoch(epoch)?;
        stop_epoch = epoch;
        if epoch % eval_interval != 0 {
            continue;
        }
        let acc = strategy.validate()?;
        dev_history.push((epoch, acc));
        if acc > best_dev {
            best_dev = acc;
            best_epoch = epoch;
            best = strategy.snapshot();
            waited = 0;
        } else {
            waited += 1;
        }
        if waited == patience {
            break;
        }
    }
    strategy.restore(best);
    Ok(ScheduleOutcome {
        best_dev,
        best_epoch,
        stop_epoch,
        dev_history,
    })
}

/// Applies `classify` to every episode in parallel; results keep episode
/// order.
pub fn evaluate_with<F>(episodes: &[Episode], classify: F) -> Result<Vec<EpisodeResult>>
where
    F: Fn(&Episode) -> Result<EpisodeResult> + Sync + Send,
{
    episodes.par_iter().map(classify).collect()
}

/// Mean accuracy of frozen `params` over `episodes`, plus the per-episode
/// accuracies.
pub fn evaluate_episodes(
    method: &MethodConfig,
    params: &ParamSet,
    view: &SplitView,
    episodes: &[Episode],
) -> Result<(f64, Vec<f64>)> {
    let evaluator = Evaluator::new(method, params, view)?;
    let accs: Vec<f64> = evaluate_with(episodes, |ep| evaluator.episode(ep))?
        .into_iter()
        .map(|r| r.accuracy)
        .collect();
    let mean = if accs.is_empty() {
        0.0
    } else {
        accs.iter().sum::<f64>() / accs.len() as f64
    };
    Ok((mean, accs))
}

/// Samples `count` episodes from `view` with `seed` and evaluates them.
pub fn evaluate_tasks(
    method: &MethodConfig,
    params: &ParamSet,
    view: &SplitView,
    spec: &EpisodeSpec,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let episodes = sample_batch(view, spec, count, seed)?;
    Ok(evaluate_episodes(method, params, view, &episodes)?.0)
}

/// Seed of repeat `i`; depends only on `(master_seed, i)`.
pub fn repeat_seed(master_seed: u64, repeat: usize) -> u64 {
    derive_seed(derive_seed(master_seed, tags::REPEAT), repeat as u64)
}

struct MethodRun<'a> {
    cfg: &'a ProtocolConfig,
    views: &'a Views,
    model: Model,
    train_rng: StreamRng,
    dev_episodes: Vec<Episode>,
}

impl Strategy for MethodRun<'_> {
    type Snapshot = ParamSet;

    fn train_epoch(&mut self, _epoch: usize) -> Result<()> {
        train_step(&self.cfg.method, &mut self.model, &self.views.train, &self.cfg.spec, &mut self.train_rng)?;
        Ok(())
    }

    fn validate(&mut self) -> Result<f64> {
        Ok(evaluate_episodes(&self.cfg.method, &self.model.params, &self.views.dev, &self.dev_episodes)?.0)
    }

    fn snapshot(&self) -> ParamSet {
        self.model.params.clone()
    }

    fn restore(&mut self, snapshot: ParamSet) {
        self.model.params = snapshot;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub repeat: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub best_dev: f64,
    pub best_epoch: usize,
    pub stop_epoch: usize,
    pub dev_history: Vec<(usize, f64)>,
    /// Per-episode test accuracies, in episode order.
    pub episode_accuracies: Vec<f64>,
    /// Checksum of the tested parameters.
    pub params_checksum: u64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config: ProtocolConfig,
    pub repeats: Vec<RepeatReport>,
    pub summary: Summary,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.repeats.iter().map(|r| r.test_accuracy).collect()
    }
}

/// Fails early when a view cannot supply the episodes the run needs.
pub fn check_views(views: &Views, cfg: &ProtocolConfig) -> Result<()> {
    let needs_train_episodes = cfg.method.method != MethodId::Ignn;
    for p in Partition::ALL {
        if p == Partition::Train && !needs_train_episodes {
            continue;
        }
        check_feasible(views.get(p), &cfg.spec).map_err(|e| Error::Invalid(format!("{p} view: {e}")))?;
    }
    Ok(())
}

/// One repeat: initialize, train under the schedule, test the best snapshot.
/// Returns the report and the tested parameters.
pub fn run_repeat(views: &Views, cfg: &ProtocolConfig, repeat: usize) -> Result<(RepeatReport, ParamSet)> {
    let start = Instant::now();
    let seed = repeat_seed(cfg.master_seed, repeat);
    let in_dim = views.train.graph().n_features();
    let n_train = views.train.classes().len();
    let model = init_model(&cfg.method, in_dim, n_train, &cfg.spec, &mut seeded(derive_seed(seed, tags::INIT)));
    let dev_episodes = sample_batch(&views.dev, &cfg.spec, cfg.eval_tasks, derive_seed(seed, tags::DEV))?;
    let mut run = MethodRun {
        cfg,
        views,
        model,
        train_rng: seeded(derive_seed(seed, tags::TRAIN)),
        dev_episodes,
    };
    let outcome = run_schedule(&mut run, cfg.eval_interval, cfg.patience, cfg.max_epochs)?;
    let test_episodes = sample_batch(&views.test, &cfg.spec, cfg.eval_tasks, derive_seed(seed, tags::TEST))?;
    let (test_accuracy, episode_accuracies) =
        evaluate_episodes(&cfg.method, &run.model.params, &views.test, &test_episodes)?;
    let report = RepeatReport {
        repeat,
        seed,
        test_accuracy,
        best_dev: outcome.best_dev,
        best_epoch: outcome.best_epoch,
        stop_epoch: outcome.stop_epoch,
        dev_history: outcome.dev_history,
        episode_accuracies,
        params_checksum: run.model.params.checksum(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "repeat {repeat}: test {:.4}, best dev {:.4} at epoch {}, stopped at {}",
        report.test_accuracy,
        report.best_dev,
        report.best_epoch,
        report.stop_epoch
    );
    Ok((report, run.model.params))
}

/// All repeats (in parallel), then the mean and 95% interval over their
/// test accuracies. Also returns each repeat's tested parameters.
pub fn run_protocol(
    pg: &PreparedGraph,
    split: &ClassSplit,
    cfg: &ProtocolConfig,
) -> Result<(RunReport, Vec<ParamSet>)> {
    let start = Instant::now();
    cfg.validate()?;
    let views = build_views(pg, split, cfg.setting)?;
    check_views(&views, cfg)?;
    let (repeats, params): (Vec<RepeatReport>, Vec<ParamSet>) = (0..cfg.repeats)
        .into_par_iter()
        .map(|i| run_repeat(&views, cfg, i))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let accs: Vec<f64> = repeats.iter().map(|r| r.test_accuracy).collect();
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.clone(),
        summary: summarize(&accs)?,
        repeats,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok((report, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dev accuracies are read from a script; the "parameters" are the
    /// epoch count.
    struct Scripted {
        dev: Vec<f64>,
        round: usize,
        epoch: usize,
    }

    impl Strategy for Scripted {
        type Snapshot = usize;
        fn train_epoch(&mut self, epoch: usize) -> Result<()> {
            self.epoch = epoch;
            Ok(())
        }
        fn validate(&mut self) -> Result<f64> {
            self.round += 1;
            Ok(self.dev[self.round - 1])
        }
        fn snapshot(&self) -> usize {
            self.epoch
        }
        fn restore(&mut self, s: usize) {
            self.epoch = s;
        }
    }

    fn scripted(dev: &[f64]) -> Scripted {
        Scripted {
            dev: dev.to_vec(),
            round: 0,
            epoch: 0,
        }
    }

    #[test]
    fn single_interval_single_round() {
        for acc in [0.0, 0.7] {
            let mut s = scripted(&[acc]);
            let out = run_schedule(&mut s, 10, 1, 10).unwrap();
            assert_eq!(out.dev_history.len(), 1);
            assert_eq!(out.stop_epoch, 10);
        }
    }

    #[test]
    fn patience_counts_non_improving_rounds() {
        let mut s = scripted(&[0.5, 0.6, 0.6, 0.55, 0.7, 0.1, 0.2, 0.3, 0.9]);
        let out = run_schedule(&mut s, 2, 3, 100).unwrap();
        // rounds at epochs 2,4,...: best 0.7 at epoch 10, then three misses
        assert_eq!(out.best_epoch, 10);
        assert_eq!(out.stop_epoch, 16);
        assert_eq!(s.epoch, 10);
        assert_eq!(out.best_dev, 0.7);
    }

    #[test]
    fn never_improving_restores_initialization() {
        let mut s = scripted(&[0.0, 0.0]);
        let out = run_schedule(&mut s, 5, 2, 50).unwrap();
        assert_eq!((out.best_epoch, out.stop_epoch), (0, 10));
        assert_eq!(s.epoch, 0);
    }

    #[test]
    fn budget_ends_before_patience() {
        let mut s = scripted(&[0.1, 0.2, 0.3]);
        let out = run_schedule(&mut s, 3, 5, 10).unwrap();
        assert_eq!(out.dev_history.len(), 3);
        assert_eq!((out.best_epoch, out.stop_epoch), (9, 10));
    }

    #[test]
    fn config_bounds() {
        let method = MethodConfig::new(MethodId::Protonet);
        let spec = EpisodeSpec::new(2, 1, 1).unwrap();
        let mut cfg = ProtocolConfig::new(method, spec, Setting::Inductive, 0);
        assert!(cfg.validate().is_ok());
        cfg.max_epochs = 5;
        assert!(cfg.validate().is_err());
    }
}
