//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits nonzero if any failed.
//!
//! Run alone with `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::data_dir;
use fsnc::config::RunConfig;
use fsnc::dataset::load_dataset;
use fsnc::episodes::{sample_episode, EpisodeSpec};
use fsnc::gradsuite::{run_suite, SuiteConfig};
use fsnc::graph::{gcn_normalize, Features, Graph};
use fsnc::methods::{EpisodeResult, MethodConfig, MethodId};
use fsnc::nn::{DenseMatrix, GradCheckConfig};
use fsnc::protocol::{evaluate_with, run_protocol, run_schedule, ProtocolConfig, RunReport, Strategy};
use fsnc::report::csv_without_wall_clock;
use fsnc::rng::seeded;
use fsnc::splits::{build_views, split_classes, ClassSplit, Partition, PreparedGraph, Setting, SplitAssignment};
use fsnc::stats::summarize;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// 1 -------------------------------------------------------------------------

fn gradients() -> Outcome {
    let start = Instant::now();
    let cfg = SuiteConfig {
        check: GradCheckConfig {
            h: 1e-5,
            tol: 1e-4,
            ..Default::default()
        },
        instances: 20,
        max_nodes: 30,
        max_features: 10,
        ..Default::default()
    };
    let reports = run_suite(&cfg).map_err(err)?;
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    for r in &reports {
        ensure(r.instances >= 20 && r.report.checked > 0, || format!("{}: nothing checked", r.path.name()))?;
        ensure(r.report.passed(), || format!("{}: {:?}", r.path.name(), r.report.violations.first()))?;
        worst = worst.max(r.report.max_error);
    }
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("4 paths x 20 instances, max rel err {worst:.2e}, {:.1}s", elapsed.as_secs_f64()))
}

// 2 -------------------------------------------------------------------------

/// D̃^-1/2 (A+I) D̃^-1/2 on dense matrices, built straight from the edge list.
fn dense_normalized(n: usize, edges: &[(usize, usize)]) -> DenseMatrix {
    let mut a = DenseMatrix::identity(n);
    for &(u, v) in edges {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) / (deg[i].sqrt() * deg[j].sqrt()))
}

fn normalization() -> Outcome {
    let mut rng = seeded(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let p = rng.gen_range(0.0..0.5);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(n, &edges, Features::Dense(DenseMatrix::zeros(n, 1)), vec![0; n], 1).map_err(err)?;
        let diff = gcn_normalize(&g).matrix().to_dense().max_abs_diff(&dense_normalized(n, &edges));
        worst = worst.max(diff);
    }
    ensure(worst <= 1e-12, || format!("max abs error {worst:e}"))?;
    for n in [1, 3, 17] {
        let g = Graph::from_edges(n, &[], Features::Dense(DenseMatrix::zeros(n, 1)), vec![0; n], 1).map_err(err)?;
        ensure(gcn_normalize(&g).matrix().to_dense() == DenseMatrix::identity(n), || format!("edgeless n={n} not identity"))?;
    }
    Ok(format!("100 random graphs, max abs error {worst:.1e}; edgeless = I"))
}

// 3 -------------------------------------------------------------------------

fn split_isolation() -> Outcome {
    let mut notes = Vec::new();
    for name in ["cora", "citeseer"] {
        let ds = load_dataset(&data_dir(name)).map_err(err)?;
        let g = ds.graph;
        let split = ClassSplit::from_ids(&ds.manifest.class_split, g.n_classes()).map_err(err)?;
        let pg = PreparedGraph::new(g.clone());
        let ind = build_views(&pg, &split, Setting::Inductive).map_err(err)?;

        let part_of = |u: usize| split.partition_of(g.labels()[u]).unwrap();
        let mut owner = vec![None; g.n_nodes()];
        for p in Partition::ALL {
            let v = ind.get(p);
            for local in 0..v.n_nodes() {
                let u = v.mapping().to_global(local);
                ensure(owner[u].is_none(), || format!("{name}: node {u} in two views"))?;
                ensure(part_of(u) == p, || format!("{name}: node {u} in wrong view"))?;
                owner[u] = Some(p);
            }
            // brute force: every view edge is an original edge inside p
            for (a, b) in v.graph().edges() {
                let (ga, gb) = (v.mapping().to_global(a), v.mapping().to_global(b));
                ensure(g.has_edge(ga, gb) && part_of(ga) == p && part_of(gb) == p, || {
                    format!("{name}: view edge ({ga},{gb}) crosses partitions")
                })?;
            }
            // and every original edge inside p survives
            let inside = g.edges().filter(|&(a, b)| part_of(a) == p && part_of(b) == p).count();
            ensure(inside == v.graph().n_edges(), || format!("{name}: {p} lost edges"))?;
        }
        ensure(owner.iter().all(Option::is_some), || format!("{name}: node outside every view"))?;

        let tr = build_views(&pg, &split, Setting::Transductive).map_err(err)?;
        ensure(
            Arc::ptr_eq(tr.train.normalized(), tr.dev.normalized())
                && Arc::ptr_eq(tr.dev.normalized(), tr.test.normalized())
                && Arc::ptr_eq(tr.train.graph(), tr.test.graph()),
            || format!("{name}: transductive views do not share the adjacency"),
        )?;
        let cut = g.edges().filter(|&(a, b)| part_of(a) != part_of(b)).count();
        notes.push(format!("{name}: {cut} cross edges removed"));
    }
    Ok(notes.join(", "))
}

// 4 -------------------------------------------------------------------------

fn episode_balance() -> Outcome {
    let ds = load_dataset(&data_dir("cora")).map_err(err)?;
    // five test classes so that 5-way episodes exist
    let split = split_classes(&ds.graph, (1, 1, 5), SplitAssignment::Fixed).map_err(err)?;
    let pg = PreparedGraph::new(ds.graph);
    let mut total = 0;
    for setting in [Setting::Transductive, Setting::Inductive] {
        let views = build_views(&pg, &split, setting).map_err(err)?;
        let view = &views.test;
        for n in [2, 5] {
            for k in [1, 3, 5] {
                let spec = EpisodeSpec::new(n, k, 10).map_err(err)?;
                let mut rng = seeded((n * 10 + k) as u64);
                let episodes = (0..1000)
                    .map(|_| sample_episode(view, &spec, &mut rng))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(err)?;
                for ep in &episodes {
                    for l in 0..n {
                        let ks = ep.support.iter().filter(|e| e.1 == l).count();
                        let qs = ep.query.iter().filter(|e| e.1 == l).count();
                        ensure(ks == k && qs == 10, || format!("{setting} {n}w{k}s: unbalanced"))?;
                    }
                    ensure(ep.support.iter().all(|s| ep.query.iter().all(|q| q.0 != s.0)), || {
                        format!("{setting} {n}w{k}s: support and query overlap")
                    })?;
                }
                let constant = evaluate_with(&episodes, |ep| {
                    EpisodeResult::from_predictions(vec![0; ep.query.len()], &ep.query_labels())
                })
                .map_err(err)?;
                ensure(constant.iter().all(|r| r.accuracy == 1.0 / n as f64), || {
                    format!("{setting} {n}w{k}s: constant classifier off 1/N")
                })?;
                total += episodes.len();
            }
        }
    }
    Ok(format!("{total} episodes over 2 settings x {{2,5}} x {{1,3,5}}"))
}

// 5 and 7 share runs ---------------------------------------------------------

fn protocol_for(dataset: &str, method: MethodId, setting: Setting) -> Result<(PreparedGraph, ClassSplit, ProtocolConfig), String> {
    let ds = load_dataset(&data_dir(dataset)).map_err(err)?;
    let split = ClassSplit::from_ids(&ds.manifest.class_split, ds.graph.n_classes()).map_err(err)?;
    let spec = EpisodeSpec::new(2, 5, 10).map_err(err)?;
    let cfg = ProtocolConfig::new(MethodConfig::new(method), spec, setting, 0);
    Ok((PreparedGraph::new(ds.graph), split, cfg))
}

fn run_default(dataset: &str, method: MethodId, setting: Setting) -> Result<RunReport, String> {
    let (pg, split, cfg) = protocol_for(dataset, method, setting)?;
    run_protocol(&pg, &split, &cfg).map(|(r, _)| r).map_err(err)
}

struct Shared {
    cora_inductive: Vec<(MethodId, RunReport)>,
}

fn setting_invariance(shared: &mut Shared) -> Outcome {
    let mut notes = Vec::new();
    for dataset in ["cora", "citeseer"] {
        for method in [MethodId::Protonet, MethodId::Maml] {
            let t = run_default(dataset, method, Setting::Transductive)?;
            let i = run_default(dataset, method, Setting::Inductive)?;
            let (ta, ia) = (t.test_accuracies(), i.test_accuracies());
            let bits = |v: &[f64]| v.iter().map(|a| a.to_bits()).collect::<Vec<_>>();
            ensure(bits(&ta) == bits(&ia), || format!("{dataset} {method}: {ta:?} vs {ia:?}"))?;
            ensure(
                t.repeats.iter().zip(&i.repeats).all(|(a, b)| a.episode_accuracies == b.episode_accuracies),
                || format!("{dataset} {method}: per-episode streams differ"),
            )?;
            notes.push(format!("{dataset}/{method} {}", i.summary));
            if dataset == "cora" {
                shared.cora_inductive.push((method, i));
            }
        }
    }
    Ok(notes.join(", "))
}

// 6 -------------------------------------------------------------------------

/// Mock method: the dev accuracy of each round is scripted; the parameters
/// are the epoch they were taken at, and "testing" reads them back.
struct Scripted {
    dev: Vec<f64>,
    round: usize,
    epoch: usize,
}

impl Strategy for Scripted {
    type Snapshot = usize;
    fn train_epoch(&mut self, epoch: usize) -> fsnc::Result<()> {
        self.epoch = epoch;
        Ok(())
    }
    fn validate(&mut self) -> fsnc::Result<f64> {
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

/// A scripted dev sequence, the schedule (EI, E, M) and the hand-traced
/// outcome (best epoch, best dev, stop epoch, validation rounds).
type Trace = (&'static [f64], (usize, usize, usize), (usize, f64, usize, usize));

fn protocol_semantics() -> Outcome {
    let cases: [Trace; 3] = [
        // rounds at 2,4,..: best 0.6@4 (0.6@6 is not strictly better), 0.7@10, then three misses
        (&[0.5, 0.6, 0.6, 0.55, 0.7, 0.1, 0.2, 0.3, 0.9], (2, 3, 10_000), (10, 0.7, 16, 8)),
        // never beats the initial 0: E misses, initialization is tested
        (&[0.0; 10], (10, 10, 10_000), (0, 0.0, 100, 10)),
        // budget runs out: rounds at 5,10,15,20, then epochs 21..23 train
        (&[0.3, 0.2, 0.4, 0.4], (5, 2, 23), (15, 0.4, 23, 4)),
    ];
    for (i, &(dev, (ei, e, m), (best_epoch, best_dev, stop, rounds))) in cases.iter().enumerate() {
        let mut s = Scripted {
            dev: dev.to_vec(),
            round: 0,
            epoch: 0,
        };
        let out = run_schedule(&mut s, ei, e, m).map_err(err)?;
        let got = (out.best_epoch, out.best_dev, out.stop_epoch, out.dev_history.len(), s.epoch);
        ensure(got == (best_epoch, best_dev, stop, rounds, best_epoch), || {
            format!("case {}: got {got:?}", i + 1)
        })?;
    }
    Ok("3 hand-traced sequences".into())
}

// 7 -------------------------------------------------------------------------

fn reproduction(shared: &Shared) -> Outcome {
    let one_core = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(err)?;
    let start = Instant::now();
    let ignn = one_core.install(|| run_default("cora", MethodId::Ignn, Setting::Inductive))?;
    let elapsed = start.elapsed();
    let s = ignn.summary;
    ensure(s.mean >= 0.60, || format!("I-GNN mean {s}"))?;
    ensure(s.mean - 0.5 >= 5.0 * s.ci95, || format!("I-GNN {s} within 5 CI of chance"))?;
    ensure(elapsed <= Duration::from_secs(15 * 60), || format!("I-GNN took {elapsed:?}"))?;
    let mut notes = vec![format!("ignn {s} in {:.0}s on 1 thread", elapsed.as_secs_f64())];
    for (method, report) in &shared.cora_inductive {
        let m = report.summary.mean;
        ensure(m >= 0.52, || format!("{method} mean {}", report.summary))?;
        notes.push(format!("{method} {}", report.summary));
    }
    ensure(shared.cora_inductive.len() == 2, || "missing protonet/maml runs".into())?;
    Ok(notes.join(", "))
}

// 8 -------------------------------------------------------------------------

fn statistics() -> Outcome {
    let s = summarize(&[0.4, 0.6]).map_err(err)?;
    ensure((s.mean - 0.5).abs() <= 1e-3 && (s.ci95 - 0.196).abs() <= 1e-3, || format!("{s:?}"))?;
    let c = summarize(&[0.7; 5]).map_err(err)?;
    ensure(c.ci95 == 0.0, || format!("constant series: {c:?}"))?;
    Ok(format!("({:.4}, {:.4}); constant CI 0", s.mean, s.ci95))
}

// 9 -------------------------------------------------------------------------

fn run_binary(config: &Path, out: &Path, jobs: &str) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fsnc"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--jobs", jobs])
        .env_remove("FSNC_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(err)?;
    ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
    std::fs::read_to_string(out.join("report.csv")).map_err(err)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut notes = Vec::new();
    for (method, backbone_note) in [("ignn", "gcn"), ("protonet", "mlp")] {
        let cfg = RunConfig::parse(&format!(
            "schema_version = 1\nseed = 7\n[dataset]\npath = {:?}\nsetting = \"transductive\"\n[method]\nname = \"{method}\"\n",
            data_dir("cora").display().to_string()
        ))
        .map_err(err)?;
        let path = tmp.path().join(format!("{method}.toml"));
        std::fs::write(&path, cfg.to_toml().map_err(err)?).map_err(err)?;
        let a = run_binary(&path, &tmp.path().join(format!("{method}_a")), "1")?;
        let b = run_binary(&path, &tmp.path().join(format!("{method}_b")), "4")?;
        ensure(csv_without_wall_clock(&a) == csv_without_wall_clock(&b), || format!("{method}: report.csv differs"))?;
        ensure(a.lines().count() == 6, || format!("{method}: expected 5 repeat rows"))?;
        notes.push(format!("{method} ({backbone_note})"));
    }
    Ok(format!("--jobs 1 vs 4 identical for {}", notes.join(", ")))
}

fn main() {
    let mut shared = Shared { cora_inductive: Vec::new() };
    let mut failed = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail}");
            }
        }
    };
    report(1, "gradient correctness", gradients());
    report(2, "normalization oracle", normalization());
    report(3, "split isolation", split_isolation());
    report(4, "episode balance", episode_balance());
    report(5, "setting invariance", setting_invariance(&mut shared));
    report(6, "protocol semantics", protocol_semantics());
    report(7, "desk-scale reproduction", reproduction(&shared));
    report(8, "statistics", statistics());
    report(9, "determinism", determinism());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
