//! Command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{load_dataset, write_dataset, Dataset};
use crate::gradsuite::{run_suite, SuiteConfig};
use crate::ingest::{ingest, RawInput};
use crate::nn::GradCheckConfig;
use crate::protocol::{check_views, run_protocol};
use crate::report::{write_csv, DatasetInfo, ReportFile, SweepRow, REPORT_JSON};
use crate::splits::{build_views, edge_cut_audit, split_classes, EdgeCutAudit, Partition, PreparedGraph, Setting, SplitAssignment};

#[derive(Debug, Parser)]
#[command(name = "fsnc", version, about = "Few-shot node classification benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw citation-network files into a dataset directory.
    Ingest(IngestArgs),
    /// Materialize class partitions and audit the edges an inductive split removes.
    Split(SplitArgs),
    /// Run the benchmark protocol for one configuration.
    Run(RunArgs),
    /// Run a configuration over a grid of N-way and K-shot values.
    Sweep(SweepArgs),
    /// Check every analytic gradient against central differences.
    Gradcheck(GradcheckArgs),
    /// Summarize one or more report.json files.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RawFormat {
    /// `.content` + `.cites` files with string node ids.
    Linqs,
    /// Integer edge list, label table and feature table.
    Edgelist,
}

/// Class-partition sizes written `train,dev,test`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizes(pub usize, pub usize, pub usize);

impl FromStr for Sizes {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [a, b, c] => Ok(Sizes(a, b, c)),
            _ => Err(format!("expected three comma-separated sizes, got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub format: RawFormat,
    #[arg(long, required_if_eq("format", "linqs"))]
    pub content: Option<PathBuf>,
    #[arg(long, required_if_eq("format", "linqs"))]
    pub cites: Option<PathBuf>,
    #[arg(long, required_if_eq("format", "edgelist"))]
    pub edges: Option<PathBuf>,
    #[arg(long, required_if_eq("format", "edgelist"))]
    pub labels: Option<PathBuf>,
    #[arg(long, required_if_eq("format", "edgelist"))]
    pub features: Option<PathBuf>,
    /// The feature table holds `node dim value` triplets.
    #[arg(long)]
    pub sparse: bool,
    #[arg(long)]
    pub name: String,
    /// Class-partition sizes, e.g. `3,2,2`.
    #[arg(long)]
    pub split: Sizes,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_setting)]
    pub setting: Setting,
    /// `fixed` or an integer seed.
    #[arg(long, default_value = "fixed", value_parser = parse_assignment)]
    pub seed: SplitAssignment,
    /// Defaults to the sizes recorded in meta.json.
    #[arg(long)]
    pub sizes: Option<Sizes>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validate the config, dataset and views, then stop.
    #[arg(long)]
    pub dry_run: bool,
    /// Worker threads for repeats and evaluation episodes.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 5])]
    pub n_way: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5])]
    pub k_shot: Vec<usize>,
    /// CSV file to write; defaults to `sweep.csv` in the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negate the analytic gradients (checker self-test; must fail).
    #[arg(long, hide = true)]
    pub flip_sign: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.json files or run directories containing one.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write the summary rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_assignment(s: &str) -> Result<SplitAssignment, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Split(a) => cmd_split(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_ingest(a: IngestArgs) -> anyhow::Result<ExitCode> {
    let input = match a.format {
        RawFormat::Linqs => RawInput::Linqs {
            content: a.content.context("--content is required")?,
            cites: a.cites.context("--cites is required")?,
        },
        RawFormat::Edgelist => RawInput::EdgeList {
            edges: a.edges.context("--edges is required")?,
            labels: a.labels.context("--labels is required")?,
            features: a.features.context("--features is required")?,
            sparse: a.sparse,
        },
    };
    let Sizes(tr, dv, te) = a.split;
    let out = ingest(&input, &a.name, (tr, dv, te))?;
    let s = &out.stats;
    if s.edges.duplicates > 0 {
        log::warn!("collapsed {} duplicate edge lines", s.edges.duplicates);
    }
    if s.edges.self_loops > 0 {
        log::warn!("dropped {} self-loops", s.edges.self_loops);
    }
    if s.unknown_endpoints > 0 {
        log::warn!("dropped {} edge lines naming unknown nodes", s.unknown_endpoints);
    }
    write_dataset(&a.out, &out.manifest, &out.graph)?;
    if let Some(ids) = &out.node_ids {
        let text: String = ids.iter().enumerate().map(|(i, id)| format!("{i}\t{id}\n")).collect();
        let path = a.out.join("nodes.tsv");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("dataset\tnodes\tedges\tfeatures\tclasses\ttrain\tdev\ttest");
    println!("{out}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PartitionManifest {
    partition: Partition,
    setting: Setting,
    classes: Vec<usize>,
    n_nodes: usize,
    n_edges: usize,
    /// Global ids of the view's nodes, in local-id order.
    nodes: Vec<usize>,
}

#[derive(Serialize)]
struct SplitSummary {
    dataset: String,
    setting: Setting,
    assignment: SplitAssignment,
    class_split: crate::dataset::ClassSplitIds,
    audit: EdgeCutAudit,
}

fn cmd_split(a: SplitArgs) -> anyhow::Result<ExitCode> {
    let Dataset { manifest, graph, .. } = load_dataset(&a.dataset)?;
    let own = &manifest.class_split;
    let sizes = a
        .sizes
        .map(|Sizes(x, y, z)| (x, y, z))
        .unwrap_or((own.train.len(), own.dev.len(), own.test.len()));
    let split = split_classes(&graph, sizes, a.seed)?;
    let audit = edge_cut_audit(&graph, &split)?;
    let pg = PreparedGraph::new(graph);
    let views = build_views(&pg, &split, a.setting)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for p in Partition::ALL {
        let v = views.get(p);
        let m = PartitionManifest {
            partition: p,
            setting: a.setting,
            classes: v.classes().to_vec(),
            n_nodes: v.n_nodes(),
            n_edges: v.graph().n_edges(),
            nodes: (0..v.n_nodes()).map(|u| v.mapping().to_global(u)).collect(),
        };
        let path = a.out.join(format!("{p}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&m)?)?;
        println!("{p}\tclasses {:?}\tnodes {}\tedges {}", m.classes, m.n_nodes, m.n_edges);
    }
    let summary = SplitSummary {
        dataset: manifest.name,
        setting: a.setting,
        assignment: a.seed,
        class_split: split.to_ids(),
        audit,
    };
    std::fs::write(a.out.join("audit.json"), serde_json::to_string_pretty(&summary)?)?;
    let au = &summary.audit;
    println!(
        "cross-partition edges: train-dev {}, train-test {}, dev-test {} ({} of {} total)",
        au.cut_train_dev,
        au.cut_train_test,
        au.cut_dev_test,
        au.cut_total(),
        au.total_edges
    );
    Ok(ExitCode::SUCCESS)
}

fn load_run_config(path: &Path) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    cfg.apply_env_seed()?;
    Ok(cfg)
}

fn output_dir(cli_out: Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    cli_out
        .or_else(|| cfg.output.clone())
        .context("no output directory: pass --out or set `output` in the config")
}

/// Loads the dataset and runs one configuration.
fn execute(cfg: &RunConfig, jobs: Option<usize>) -> anyhow::Result<(ReportFile, Vec<crate::nn::ParamSet>)> {
    let protocol = cfg.protocol_config()?;
    let ds = load_dataset(&cfg.dataset.path)?;
    let split = cfg.class_split(&ds.manifest, &ds.graph)?;
    let info = DatasetInfo {
        name: ds.manifest.name.clone(),
        n_nodes: ds.graph.n_nodes(),
        n_edges: ds.graph.n_edges(),
        n_features: ds.graph.n_features(),
        n_classes: ds.graph.n_classes(),
        class_split: split.to_ids(),
    };
    let pg = PreparedGraph::new(ds.graph);
    let (run, params) = with_jobs(jobs, || run_protocol(&pg, &split, &protocol))??;
    Ok((ReportFile::new(cfg.resolve()?, info, run), params))
}

fn cmd_run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_run_config(&a.config)?;
    if a.dry_run {
        let protocol = cfg.protocol_config()?;
        let ds = load_dataset(&cfg.dataset.path)?;
        let split = cfg.class_split(&ds.manifest, &ds.graph)?;
        let pg = PreparedGraph::new(ds.graph);
        let views = build_views(&pg, &split, protocol.setting)?;
        check_views(&views, &protocol)?;
        for p in Partition::ALL {
            let v = views.get(p);
            println!("{p}\tclasses {:?}\tnodes {}\tedges {}", v.classes(), v.n_nodes(), v.graph().n_edges());
        }
        print!("{}", cfg.resolve()?.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    let out = output_dir(a.out, &cfg)?;
    let (report, params) = execute(&cfg, a.jobs)?;
    report.write(&out)?;
    std::fs::write(out.join("config.toml"), report.config.to_toml()?)?;
    let pdir = out.join("params");
    std::fs::create_dir_all(&pdir)?;
    for (i, p) in params.iter().enumerate() {
        p.save_json(&pdir.join(format!("repeat{i}.json")))?;
    }
    let r = &report.run;
    println!(
        "{} {} {}-way {}-shot: {} over {} repeats",
        r.config.method.method,
        r.config.setting,
        r.config.spec.n_way,
        r.config.spec.k_shot,
        r.summary,
        r.repeats.len()
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<ExitCode> {
    let base = load_run_config(&a.config)?;
    let path = match a.out {
        Some(p) => p,
        None => output_dir(None, &base)?.join("sweep.csv"),
    };
    let mut rows = Vec::new();
    for &n in &a.n_way {
        for &k in &a.k_shot {
            let mut cfg = base.clone();
            cfg.protocol.n_way = Some(n);
            cfg.protocol.k_shot = Some(k);
            let (report, _) = execute(&cfg, a.jobs).with_context(|| format!("N={n} K={k}"))?;
            let row = SweepRow::from_report(&report.run);
            println!("{}\t{}\tN={}\tK={}\t{}", row.method, row.setting, n, k, report.run.summary);
            rows.push(row);
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(a: GradcheckArgs) -> anyhow::Result<ExitCode> {
    let cfg = SuiteConfig {
        check: GradCheckConfig {
            h: a.h,
            tol: a.tol,
            ..Default::default()
        },
        instances: a.instances,
        seed: a.seed,
        flip_sign: a.flip_sign,
        ..Default::default()
    };
    let mut ok = true;
    println!("path\tinstances\tcoords\tmax_rel_err\tviolations\tstatus");
    for r in run_suite(&cfg)? {
        let passed = r.report.passed();
        ok &= passed;
        println!(
            "{}\t{}\t{}\t{:.3e}\t{}\t{}",
            r.path.name(),
            r.instances,
            r.report.checked,
            r.report.max_error,
            r.report.violations.len(),
            if passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_report(a: ReportArgs) -> anyhow::Result<ExitCode> {
    let mut rows = Vec::new();
    println!("dataset\tmethod\tsetting\tN\tK\taccuracy\trepeats");
    for input in &a.inputs {
        let path = if input.is_dir() { input.join(REPORT_JSON) } else { input.clone() };
        let report = ReportFile::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let r = &report.run;
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            report.dataset.name,
            r.config.method.method,
            r.config.setting,
            r.config.spec.n_way,
            r.config.spec.k_shot,
            r.summary,
            r.repeats.len()
        );
        rows.push(SweepRow::from_report(r));
    }
    if let Some(csv) = &a.csv {
        write_csv(csv, &rows)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse() {
        assert_eq!("3,2,2".parse::<Sizes>().unwrap(), Sizes(3, 2, 2));
        assert!("3,2".parse::<Sizes>().is_err());
        assert!("a,b,c".parse::<Sizes>().is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
