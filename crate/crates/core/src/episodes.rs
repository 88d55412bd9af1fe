//! N-way K-shot Q-query episode sampling.

use std::io::{BufRead, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{choose_without_replacement, substream};
use crate::splits::SplitView;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize, q_query: usize) -> Result<Self> {
        let spec = Self {
            n_way,
            k_shot,
            q_query,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_way < 2 || self.k_shot < 1 || self.q_query < 1 {
            return Err(Error::Invalid(format!(
                "episode spec needs N >= 2, K >= 1, Q >= 1; got N={} K={} Q={}",
                self.n_way, self.k_shot, self.q_query
            )));
        }
        Ok(())
    }

    pub fn nodes_per_class(&self) -> usize {
        self.k_shot + self.q_query
    }
}

/// One meta-task. Node ids are local to the view it was sampled from;
/// labels are episode labels `0..N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub support: Vec<(usize, usize)>,
    pub query: Vec<(usize, usize)>,
    /// Episode label → original class id.
    pub class_map: Vec<usize>,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.class_map.len()
    }

    pub fn support_nodes(&self) -> Vec<usize> {
        self.support.iter().map(|&(u, _)| u).collect()
    }

    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|&(_, l)| l).collect()
    }

    pub fn query_nodes(&self) -> Vec<usize> {
        self.query.iter().map(|&(u, _)| u).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|&(_, l)| l).collect()
    }
}

/// Indices into `view.classes()` of classes with at least `min_nodes` nodes.
fn eligible_classes(view: &SplitView, min_nodes: usize) -> Vec<usize> {
    (0..view.classes().len())
        .filter(|&i| view.nodes_of_class_index(i).len() >= min_nodes)
        .collect()
}

/// Checks that `view` can supply episodes of shape `spec`.
pub fn check_feasible(view: &SplitView, spec: &EpisodeSpec) -> Result<()> {
    spec.validate()?;
    let available = eligible_classes(view, spec.nodes_per_class()).len();
    if available < spec.n_way {
        return Err(Error::InsufficientClasses {
            needed: spec.n_way,
            available,
            min_nodes: spec.nodes_per_class(),
        });
    }
    Ok(())
}

/// Draws N eligible classes uniformly without replacement (episode label =
/// draw order), then K+Q distinct nodes per class; the first K drawn go to
/// the support set.
pub fn sample_episode(view: &SplitView, spec: &EpisodeSpec, rng: &mut impl Rng) -> Result<Episode> {
    check_feasible(view, spec)?;
    let per_class = spec.nodes_per_class();
    let eligible = eligible_classes(view, per_class);
    let chosen = choose_without_replacement(rng, eligible.len(), spec.n_way);

    let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
    let mut query = Vec::with_capacity(spec.n_way * spec.q_query);
    let mut class_map = Vec::with_capacity(spec.n_way);
    for (label, &e) in chosen.iter().enumerate() {
        let class_idx = eligible[e];
        class_map.push(view.classes()[class_idx]);
        let nodes = view.nodes_of_class_index(class_idx);
        let picks = choose_without_replacement(rng, nodes.len(), per_class);
        let (s, q) = picks.split_at(spec.k_shot);
        support.extend(s.iter().map(|&i| (nodes[i], label)));
        query.extend(q.iter().map(|&i| (nodes[i], label)));
    }
    Ok(Episode {
        support,
        query,
        class_map,
    })
}

/// `count` episodes; episode `i` draws from substream `i` of `master_seed`.
pub fn sample_batch(
    view: &SplitView,
    spec: &EpisodeSpec,
    count: usize,
    master_seed: u64,
) -> Result<Vec<Episode>> {
    check_feasible(view, spec)?;
    (0..count)
        .into_par_iter()
        .map(|i| sample_episode(view, spec, &mut substream(master_seed, i as u64)))
        .collect()
}

/// One line of the episode manifest. Node ids are global.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub class_map: Vec<usize>,
    pub support: Vec<usize>,
    pub query: Vec<usize>,
}

impl EpisodeRecord {
    pub fn from_episode(view: &SplitView, ep: &Episode) -> Self {
        let m = view.mapping();
        Self {
            class_map: ep.class_map.clone(),
            support: ep.support.iter().map(|&(u, _)| m.to_global(u)).collect(),
            query: ep.query.iter().map(|&(u, _)| m.to_global(u)).collect(),
        }
    }

    /// Rebuilds the episode in `view`'s local ids, recovering episode labels
    /// from each node's class.
    pub fn to_episode(&self, view: &SplitView) -> Result<Episode> {
        let labels = view.graph().labels();
        let convert = |nodes: &[usize]| -> Result<Vec<(usize, usize)>> {
            nodes
                .iter()
                .map(|&g| {
                    let u = view
                        .mapping()
                        .to_local(g)
                        .ok_or_else(|| Error::Invalid(format!("node {g} is not in this view")))?;
                    let l = self
                        .class_map
                        .iter()
                        .position(|&c| c == labels[u])
                        .ok_or_else(|| Error::Invalid(format!("node {g} has a class outside the episode")))?;
                    Ok((u, l))
                })
                .collect()
        };
        Ok(Episode {
            support: convert(&self.support)?,
            query: convert(&self.query)?,
            class_map: self.class_map.clone(),
        })
    }
}

pub fn write_jsonl(out: &mut impl Write, view: &SplitView, episodes: &[Episode]) -> Result<()> {
    for ep in episodes {
        let line = serde_json::to_string(&EpisodeRecord::from_episode(view, ep))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<episode manifest>", e))?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead, view: &SplitView) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("<episode manifest>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(&line)?;
        out.push(rec.to_episode(view)?);
    }
    Ok(out)
}
