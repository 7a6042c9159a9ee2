//! `langdist`: distance matrices, transfer correlations, metric fitting,
//! source selection, adversarial simulation and report rendering.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use langdist::correlation::{pooled_distance_transfer_correlation, sweep_matrices};
use langdist::distance::{build_all, metric_correlations};
use langdist::feature_store::{load_feature_table, FeatureClass};
use langdist::metric_fit::{fit_per_setting, per_setting_csv, FitOptions, MetricWeights};
use langdist::report::{heatmap_svg, render_delta_tables, square_csv};
use langdist::selection::{build_relation_graph, graph_diameter, pam, select_k};
use langdist::sim::{evaluate_transfer, gen_synthetic, train, Mode, SyntheticTaskSpec, TrainConfig};
use langdist::{
    fit_weights, preset_dcomb, Clustering, DeltaTable, DistanceMatrix, Error, FeatureTable, MetricId,
    TransferScoreMatrix,
};

#[derive(Parser)]
#[command(name = "langdist", version, about = "Language distance and transfer-planning pipeline")]
struct Cli {
    /// Output directory; every file is written below it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file with the subcommand's options. Flags given on the command
    /// line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Distance matrices for every base metric plus their correlation matrix.
    Dist(DistArgs),
    /// Predictive score of each metric against transfer-score matrices.
    Correlate(CorrelateArgs),
    /// Simplex weights of a combined metric.
    Fit(FitArgs),
    /// k-medoids partition of a distance matrix.
    Cluster(ClusterArgs),
    /// Relation graph of a clustering.
    Graph(GraphArgs),
    /// Synthetic multi-domain transfer runs.
    Simulate(SimulateArgs),
    /// Delta tables and score heatmaps.
    Report(ReportArgs),
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct DistArgs {
    /// Directory holding fam.csv, geo.csv, syntax.csv, phonology.csv, inventory.csv.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Restrict output to these metrics.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Min-max normalize each matrix.
    #[arg(long)]
    normalize: bool,
    /// Also write the metric correlation heatmap as SVG.
    #[arg(long)]
    svg: bool,
    /// Weights JSON; writes the combined matrix too.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct CorrelateArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    /// Transfer-score matrix CSVs.
    #[arg(long, num_args = 1..)]
    scores: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Keep same-language cells.
    #[arg(long)]
    include_self: bool,
    /// Also report the single correlation over all pooled cells.
    #[arg(long)]
    pooled: bool,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct FitArgs {
    /// Write the preset combined-metric weights and exit.
    #[arg(long)]
    preset: bool,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    scores: Option<Vec<PathBuf>>,
    /// Component metrics; defaults to those of the preset.
    #[arg(long, value_delimiter = ',')]
    components: Option<Vec<String>>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    include_self: bool,
    /// Also fit one weight vector per score matrix.
    #[arg(long)]
    per_setting: bool,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ClusterArgs {
    /// Distance matrix CSV.
    #[arg(long)]
    distance: Option<PathBuf>,
    /// Fixed number of clusters; otherwise the largest k meeting --min-size.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    min_size: Option<usize>,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct GraphArgs {
    #[arg(long)]
    clustering: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// Cluster sizes of the synthetic task.
    #[arg(long, value_delimiter = ',')]
    clusters: Option<Vec<usize>>,
    #[arg(long)]
    rotation: Option<f64>,
    #[arg(long)]
    within_noise: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Clusters whose domains are labeled sources.
    #[arg(long, value_delimiter = ',')]
    source_clusters: Option<Vec<usize>>,
    /// Use only the medoid of each source cluster as a labeled source.
    #[arg(long)]
    medoid_sources: bool,
    /// Also train on the remaining members of source clusters, unlabeled.
    #[arg(long)]
    include_source_unlabeled: bool,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<Mode>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    task: Option<String>,
    #[arg(skip)]
    train: Option<TrainConfig>,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ReportArgs {
    /// Long-format delta CSV: task,config,scale,series,value.
    #[arg(long)]
    deltas: Option<PathBuf>,
    /// Transfer-score matrices to draw as heatmaps.
    #[arg(long, num_args = 1..)]
    scores: Option<Vec<PathBuf>>,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

fn load_config<A: DeserializeOwned + Default>(path: Option<&Path>) -> Result<A> {
    let Some(path) = path else {
        return Ok(A::default());
    };
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), msg: format!("config {}: {e}", path.display()) }.into())
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    let path = out.join(name);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| invalid(format!("missing --{flag}")))
}

fn parse_metrics(names: &[String]) -> Result<Vec<MetricId>> {
    Ok(names.iter().map(|n| n.parse()).collect::<langdist::Result<Vec<MetricId>>>()?)
}

fn load_tables(dir: &Path, classes: &[FeatureClass]) -> Result<Vec<FeatureTable<f64>>> {
    let mut tables = Vec::new();
    for &class in classes {
        let path = dir.join(format!("{class}.csv"));
        tables.push(load_feature_table(&path, class).with_context(|| format!("loading {class} features"))?);
    }
    Ok(tables)
}

/// Feature classes needed by `metrics`, in canonical order.
fn classes_for(metrics: &[MetricId]) -> Vec<FeatureClass> {
    let mut out: Vec<FeatureClass> = metrics.iter().filter_map(|m| m.feature_class()).collect();
    out.sort();
    out.dedup();
    out
}

fn build_selected(dir: &Path, metrics: &[MetricId], normalize: bool) -> Result<Vec<DistanceMatrix<f64>>> {
    let tables = load_tables(dir, &classes_for(metrics))?;
    let mut out = Vec::new();
    for (m, d) in build_all(&tables, normalize) {
        if metrics.contains(&m) {
            out.push(d.with_context(|| format!("building {m}"))?);
        }
    }
    Ok(out)
}

fn load_scores(paths: &[PathBuf]) -> Result<Vec<TransferScoreMatrix<f64>>> {
    if paths.is_empty() {
        return Err(invalid("missing --scores"));
    }
    paths.iter().map(|p| TransferScoreMatrix::load(p).with_context(|| format!("loading {}", p.display()))).collect()
}

fn cmd_dist(a: DistArgs, out: &Path) -> Result<()> {
    let dir = required(a.features, "features")?;
    let metrics = match a.metrics {
        Some(m) => parse_metrics(&m)?,
        None => MetricId::all_base(),
    };
    let matrices = build_selected(&dir, &metrics, a.normalize)?;
    for m in &matrices {
        write(out, &format!("dist/{}.csv", m.metric()), &m.to_csv())?;
    }
    let labels: Vec<String> = matrices.iter().map(|m| m.metric().to_string()).collect();
    let corr = metric_correlations(&matrices)?;
    write(out, "metric_correlation.csv", &square_csv("metric", &labels, &corr))?;
    if a.svg {
        let svg = heatmap_svg("metric correlation", &labels, &labels, &corr, (-1.0, 1.0));
        write(out, "metric_correlation.svg", &svg)?;
    }
    if let Some(path) = a.weights {
        let weights: MetricWeights<f64> = read_json(&path)?;
        let parts = build_selected(&dir, &weights.components, true)?;
        write(out, "dist/combined.csv", &weights.combine(&parts)?.to_csv())?;
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), msg: format!("{}: {e}", path.display()) }.into())
}

fn cmd_correlate(a: CorrelateArgs, out: &Path) -> Result<()> {
    let dir = required(a.features, "features")?;
    let scores = load_scores(&a.scores.unwrap_or_default())?;
    let metrics = match a.metrics {
        Some(m) => parse_metrics(&m)?,
        None => MetricId::all_base(),
    };
    let tables = load_tables(&dir, &classes_for(&metrics))?;
    let matrices: Vec<_> = build_all(&tables, false).into_iter().filter(|(m, _)| metrics.contains(m)).collect();
    let exclude_self = !a.include_self;
    let mut summary = String::from("metric,task,scale,score,undefined_sources");
    if a.pooled {
        summary.push_str(",pooled");
    }
    summary.push('\n');
    let mut per_source = String::from("metric,task,scale,source,score\n");
    let mut reports = Vec::new();
    for entry in sweep_matrices(&matrices, &scores, exclude_self) {
        let r = entry
            .report
            .with_context(|| format!("{} on {}/{}", entry.metric, entry.setting.task, entry.setting.scale))?;
        let s = &entry.setting;
        summary.push_str(&format!("{},{},{},{},{}", r.metric, s.task, s.scale, r.mean, r.undefined));
        if a.pooled {
            let d = matrices
                .iter()
                .find(|(m, _)| *m == entry.metric)
                .and_then(|(_, d)| d.as_ref().ok())
                .expect("report implies a matrix");
            let sm = scores
                .iter()
                .find(|x| x.task() == s.task && x.scale() == s.scale)
                .expect("setting comes from a score matrix");
            match pooled_distance_transfer_correlation(d, sm, exclude_self) {
                Ok(v) => summary.push_str(&format!(",{v}")),
                Err(_) => summary.push_str(",NA"),
            }
        }
        summary.push('\n');
        for (lang, v) in &r.per_source {
            let v = v.map_or_else(|| "NA".to_string(), |v| v.to_string());
            per_source.push_str(&format!("{},{},{},{lang},{v}\n", r.metric, s.task, s.scale));
        }
        reports.push(r);
    }
    write(out, "correlation.csv", &summary)?;
    write(out, "correlation_per_source.csv", &per_source)?;
    write(out, "correlation.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    Ok(())
}

fn cmd_fit(a: FitArgs, out: &Path) -> Result<()> {
    if a.preset {
        let w = preset_dcomb::<f64>();
        return write(out, "weights.json", &(serde_json::to_string_pretty(&w)? + "\n"));
    }
    let dir = required(a.features, "features")?;
    let scores = load_scores(&a.scores.unwrap_or_default())?;
    let metrics = match a.components {
        Some(c) => parse_metrics(&c)?,
        None => preset_dcomb::<f64>().components,
    };
    let mut components = Vec::new();
    let built = build_selected(&dir, &metrics, true)?;
    for m in &metrics {
        let d = built.iter().find(|d| d.metric() == *m).ok_or_else(|| invalid(format!("{m} cannot be a component")))?;
        components.push(d.clone());
    }
    let mut opts = FitOptions::default();
    if let Some(step) = a.grid_step {
        opts.grid_step = step;
    }
    opts.refine = !a.no_refine;
    opts.exclude_self = !a.include_self;
    let fit = fit_weights(&metrics, &components, &scores, opts)?;
    write(out, "weights.json", &(serde_json::to_string_pretty(&fit)? + "\n"))?;
    if a.per_setting {
        let fits = fit_per_setting(&metrics, &components, &scores, opts)?;
        write(out, "weights_per_setting.csv", &per_setting_csv(&fits))?;
    }
    Ok(())
}

fn cmd_cluster(a: ClusterArgs, seed: u64, out: &Path) -> Result<()> {
    let path = required(a.distance, "distance")?;
    let d = DistanceMatrix::<f64>::load(&path)?;
    let c = match a.k {
        Some(k) => pam(&d, k, seed)?,
        None => select_k(&d, a.min_size.unwrap_or(3), seed)?.1,
    };
    println!("k = {}, cost = {}", c.k(), c.cost());
    write(out, "clustering.json", &(c.to_json() + "\n"))
}

fn cmd_graph(a: GraphArgs, out: &Path) -> Result<()> {
    let path = required(a.clustering, "clustering")?;
    let text = fs::read_to_string(&path).map_err(|source| Error::Io { path: path.clone(), source })?;
    let c = Clustering::<f64>::from_json(&text)?;
    let g = build_relation_graph(&c);
    println!("diameter = {}", graph_diameter(&g)?);
    write(out, "graph.json", &(g.to_json() + "\n"))?;
    write(out, "graph.dot", &g.to_dot())
}

fn cmd_simulate(a: SimulateArgs, seed: u64, out: &Path) -> Result<()> {
    let sizes = a.clusters.unwrap_or_else(|| vec![4, 4]);
    let mut spec = SyntheticTaskSpec::with_clusters(&sizes, seed)?;
    spec.cluster_rotation = a.rotation.unwrap_or(std::f64::consts::FRAC_PI_3);
    spec.within_noise = a.within_noise.unwrap_or(0.1);
    spec.cluster_shift = a.shift.unwrap_or(0.0);
    if let Some(d) = a.input_dim {
        spec.input_dim = d;
    }
    if let Some(n) = a.samples {
        spec.samples_per_domain = n;
        spec.test_samples_per_domain = n;
    }
    let source_clusters = a.source_clusters.unwrap_or_else(|| vec![0]);
    let c = spec.clustering.clone();
    if let Some(&bad) = source_clusters.iter().find(|&&s| s >= c.k()) {
        return Err(invalid(format!("source cluster {bad} out of range 0..{}", c.k())));
    }
    let sources: Vec<_> = source_clusters
        .iter()
        .flat_map(|&s| if a.medoid_sources { vec![c.medoid_indices()[s]] } else { c.members(s) })
        .map(|i| c.langs()[i].clone())
        .collect();
    let targets = langdist::sim::target_domains(&c, &sources);
    let unlabeled: Vec<_> = c
        .langs()
        .iter()
        .filter(|l| !sources.contains(l) && (a.include_source_unlabeled || targets.contains(l)))
        .cloned()
        .collect();
    let modes = a.modes.unwrap_or_else(|| Mode::ALL.to_vec());
    let seeds = a.seeds.unwrap_or_else(|| vec![seed]);
    let mut base = a.train.unwrap_or_default();
    if let Some(l) = a.lambda {
        base.lambda = l;
    }
    if let Some(e) = a.epochs {
        base.epochs = e;
    }
    if base.label == TrainConfig::default().label {
        base.label = format!("{}*", c.medoids()[source_clusters[0]]);
    }
    base.graph = Some(build_relation_graph(&c));
    let task = a.task.unwrap_or_else(|| "synthetic".to_string());

    let mut results = Vec::new();
    let mut summary = String::from("mode,seed,target_accuracy,target_f1\n");
    for &s in &seeds {
        let mut spec = spec.clone();
        spec.seed = s;
        let data = gen_synthetic::<f64>(&spec)?;
        let split = data.transfer_split(&sources, &unlabeled)?;
        for &mode in &modes {
            let cfg = TrainConfig { mode, seed: s, ..base.clone() };
            let r = train(&split, &data.test, &cfg).with_context(|| format!("{mode} run, seed {s}"))?;
            let stem = format!("runs/{mode}_s{s}");
            write(out, &format!("{stem}.json"), &(r.to_json() + "\n"))?;
            write(out, &format!("{stem}_task_loss.csv"), &r.task_loss_csv())?;
            write(out, &format!("{stem}_adv_loss.csv"), &r.adv_loss_csv())?;
            write(out, &format!("{stem}_scores.csv"), &r.scores_csv())?;
            let acc = r.mean_accuracy(&targets).unwrap_or(f64::NAN);
            let f1 = r.mean_f1(&targets).unwrap_or(f64::NAN);
            summary.push_str(&format!("{mode},{s},{acc},{f1}\n"));
            results.push(r);
        }
    }
    write(out, "scenario.json", &(serde_json::to_string_pretty(&spec)? + "\n"))?;
    write(out, "summary.csv", &summary)?;
    if modes.contains(&Mode::Erm) && modes.iter().any(|m| *m != Mode::Erm) {
        let table = evaluate_transfer(&task, &results, &c)?;
        write(out, "deltas.csv", &table.to_csv())?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs, out: &Path) -> Result<()> {
    if a.deltas.is_none() && a.scores.is_none() {
        return Err(invalid("nothing to report: give --deltas and/or --scores"));
    }
    if let Some(path) = a.deltas {
        let text = fs::read_to_string(&path).map_err(|source| Error::Io { path: path.clone(), source })?;
        let tables = DeltaTable::<f64>::parse_long(&text).with_context(|| format!("reading {}", path.display()))?;
        write(out, "report.csv", &render_delta_tables(&tables))?;
    }
    for s in load_scores_opt(a.scores)? {
        let rows: Vec<String> = s.sources().iter().map(|l| l.to_string()).collect();
        let cols: Vec<String> = s.targets().iter().map(|l| l.to_string()).collect();
        let values: Vec<Vec<Option<f64>>> =
            (0..rows.len()).map(|i| (0..cols.len()).map(|j| s.get(i, j)).collect()).collect();
        let title = format!("{} {}", s.task(), s.scale());
        let svg = heatmap_svg(&title, &rows, &cols, &values, (0.0, 100.0));
        write(out, &format!("heatmap_{}_{}.svg", s.task(), s.scale()), &svg)?;
    }
    Ok(())
}

fn load_scores_opt(paths: Option<Vec<PathBuf>>) -> Result<Vec<TransferScoreMatrix<f64>>> {
    match paths {
        Some(p) => load_scores(&p),
        None => Ok(Vec::new()),
    }
}

macro_rules! overlay {
    ($cli:ident, $file:ident; opt: $($o:ident),*; flag: $($f:ident),*) => {{
        $( $cli.$o = $cli.$o.or($file.$o); )*
        $( $cli.$f = $cli.$f || $file.$f; )*
        $cli
    }};
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_deref();
    let out = cli.out.as_path();
    match cli.cmd {
        Command::Dist(mut a) => {
            let f: DistArgs = load_config(cfg)?;
            cmd_dist(overlay!(a, f; opt: features, metrics, weights; flag: normalize, svg), out)
        }
        Command::Correlate(mut a) => {
            let f: CorrelateArgs = load_config(cfg)?;
            cmd_correlate(overlay!(a, f; opt: features, scores, metrics; flag: include_self, pooled), out)
        }
        Command::Fit(mut a) => {
            let f: FitArgs = load_config(cfg)?;
            let a = overlay!(a, f; opt: features, scores, components, grid_step;
                flag: preset, no_refine, include_self, per_setting);
            cmd_fit(a, out)
        }
        Command::Cluster(mut a) => {
            let f: ClusterArgs = load_config(cfg)?;
            cmd_cluster(overlay!(a, f; opt: distance, k, min_size; flag: ), cli.seed, out)
        }
        Command::Graph(mut a) => {
            let f: GraphArgs = load_config(cfg)?;
            cmd_graph(overlay!(a, f; opt: clustering; flag: ), out)
        }
        Command::Simulate(mut a) => {
            let f: SimulateArgs = load_config(cfg)?;
            let a = overlay!(a, f;
                opt: clusters, rotation, within_noise, shift, input_dim, samples, source_clusters,
                     modes, seeds, lambda, epochs, task, train;
                flag: medoid_sources, include_source_unlabeled);
            cmd_simulate(a, cli.seed, out)
        }
        Command::Report(mut a) => {
            let f: ReportArgs = load_config(cfg)?;
            cmd_report(overlay!(a, f; opt: deltas, scores; flag: ), out)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(err) if err.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
