//! Command-line front end.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use crate::data::{self, load_table, load_table_with_codebooks, LoadOptions};
use crate::error::{Error, Result};
use crate::eval::{adjusted_rand_index_partial, binary_factor_accuracy, MetricRecord};
use crate::hierarchy::{
    clusters_with_threshold, export_tree, fit_hierarchy_with_threshold, rank_factors_with_threshold, Hierarchy,
    DEFAULT_PRUNE_THRESHOLD,
};
use crate::layer::{fit_layer, hard_labels, CorexConfig, SoftLabels};
use crate::model::Model;
use crate::synthetic::{generate, GroundTruth, LatentTreeSpec};

#[derive(Debug, Parser)]
#[command(name = "corex", version, about = "Correlation explanation for discrete data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic latent-tree dataset with its ground truth.
    Gen(GenArgs),
    /// Fit a hierarchy to a table.
    Fit(FitArgs),
    /// Label a table with a fitted model.
    Transform(TransformArgs),
    /// Score predicted labels against reference labels.
    Eval(EvalArgs),
    /// Rank the factors of a fitted model.
    Rank(RankArgs),
    /// Write the tree of a fitted model as DOT and JSON.
    Export(ExportArgs),
    /// Turn a table of nonnegative counts into 0/1/2 categories.
    Discretize(DiscretizeArgs),
    /// Cluster recovery on synthetic trees over a range of branch sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    /// Number of branches.
    #[arg(long)]
    pub b: usize,
    /// Erasure probability (default 1 - 2/c).
    #[arg(long)]
    pub erasure: Option<f64>,
    /// Root-to-branch flip probability.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub flip: f64,
    /// Sample count (default max(200, 2bc)).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Independent fair-bit columns appended after the leaves.
    #[arg(long, default_value_t = 0)]
    pub noise_vars: usize,
}

impl TreeArgs {
    fn spec(&self, c: usize, seed: u64) -> LatentTreeSpec {
        let base = LatentTreeSpec::new(self.b, c);
        LatentTreeSpec {
            erasure: self.erasure.unwrap_or(base.erasure),
            root_flip: self.flip,
            n_samples: self.samples.unwrap_or(base.n_samples),
            noise_vars: self.noise_vars,
            seed,
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Leaves per branch.
    #[arg(long)]
    pub c: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct LayerArgs {
    /// Factors in a single-layer fit.
    #[arg(long)]
    pub m: Option<usize>,
    /// Factors per layer, bottom first, e.g. 8,3,1. Overrides --m.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// States per factor.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Samples per iteration for estimating marginals (default: all).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Variables below this normalized mutual information with their
    /// parent are left unassigned.
    #[arg(long, default_value_t = DEFAULT_PRUNE_THRESHOLD)]
    pub prune_threshold: f64,
}

impl LayerArgs {
    fn configs(&self, default_m: usize) -> Result<Vec<CorexConfig>> {
        let sizes = match &self.layers {
            Some(sizes) => sizes.clone(),
            None => vec![self.m.unwrap_or(default_m)],
        };
        let configs: Vec<CorexConfig> = sizes
            .into_iter()
            .map(|m| CorexConfig {
                m,
                k: self.k,
                lambda: self.lambda,
                max_iter: self.max_iter,
                tol: self.tol,
                seed: self.seed,
                batch_size: self.batch_size,
                restarts: self.restarts,
                ..CorexConfig::default()
            })
            .collect();
        if configs.is_empty() {
            return Err(Error::InvalidConfig("--layers is empty".into()));
        }
        for c in &configs {
            c.validate()?;
        }
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return Err(Error::InvalidConfig("--prune-threshold must lie in [0, 1]".into()));
        }
        Ok(configs)
    }
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Field delimiter (default: tab for .tsv/.tab files, otherwise comma).
    #[arg(long)]
    pub delimiter: Option<char>,
    /// The first row holds data, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// Cell values read as missing.
    #[arg(long, value_delimiter = ',')]
    pub missing: Option<Vec<String>>,
}

impl TableArgs {
    fn options(&self, path: &Path) -> Result<LoadOptions> {
        let mut options = LoadOptions::for_path(path);
        if let Some(d) = self.delimiter {
            if !d.is_ascii() {
                return Err(Error::InvalidConfig(format!("delimiter {d:?} is not ASCII")));
            }
            options.delimiter = d as u8;
        }
        options.has_header = !self.no_header;
        if let Some(tokens) = &self.missing {
            options.missing_tokens = tokens.clone();
        }
        Ok(options)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub data: PathBuf,
    #[command(flatten)]
    pub layer: LayerArgs,
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Adjusted Rand index between two clusterings.
    Ari,
    /// Agreement between two binary labelings, up to relabeling.
    Acc,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted labels: a CSV file or a ground-truth JSON file.
    pub pred: PathBuf,
    /// Reference labels: a CSV file or a ground-truth JSON file.
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value = "ari")]
    pub metric: Metric,
    /// Column of the predicted file (CSV header name, or `cluster`, `z`,
    /// `y<j>` for ground-truth JSON).
    #[arg(long)]
    pub pred_column: Option<String>,
    /// Column of the reference file.
    #[arg(long)]
    pub truth_column: Option<String>,
    /// Also write the record to metric.json here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    pub model: PathBuf,
    /// Layer to rank, 0 being the bottom.
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    /// Members listed per factor.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Also write ranking.csv here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub model: PathBuf,
    /// Leave edge weights out.
    #[arg(long)]
    pub no_weights: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscretizeArgs {
    /// Table of nonnegative integer counts with a header row.
    pub counts: PathBuf,
    /// Most frequent columns coded with three levels; the rest are binary.
    #[arg(long, default_value_t = 0)]
    pub top: usize,
    /// Field delimiter (default: tab for .tsv/.tab files, otherwise comma).
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Leaves per branch to try.
    #[arg(long, value_delimiter = ',', required = true)]
    pub c_list: Vec<usize>,
    /// Number of seeds per branch size, counting up from --seed.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    /// Layer settings; --m defaults to --b.
    #[command(flatten)]
    pub layer: LayerArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Provenance written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub results: serde_json::Value,
    pub wall_ms: f64,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            results: serde_json::Value::Null,
            wall_ms: 0.0,
        }
    }

    fn write(mut self, path: &Path, started: Instant) -> Result<()> {
        self.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        write_text(path, &(serde_json::to_string_pretty(&self)? + "\n"))
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parses arguments, runs the command and maps failures to exit codes:
/// 1 for data and model problems, 2 for invalid arguments.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        _ => 1,
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(value) = std::env::var("COREX_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("COREX_THREADS must be a positive integer, got {value:?}"))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Transform(a) => cmd_transform(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Rank(a) => cmd_rank(&a),
        Command::Export(a) => cmd_export(&a),
        Command::Discretize(a) => cmd_discretize(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let started = Instant::now();
    let spec = args.tree.spec(args.c, args.seed);
    spec.validate()?;
    let (data, truth) = generate(&spec)?;
    prepare_dir(&args.out_dir)?;
    let data_path = args.out_dir.join("data.csv");
    let truth_path = args.out_dir.join("truth.json");
    data.write_csv(&data_path)?;
    write_text(&truth_path, &(serde_json::to_string(&truth)? + "\n"))?;

    let mut manifest = RunManifest::new("gen", serde_json::to_value(&spec)?, Some(spec.seed));
    manifest.outputs = vec![display(&data_path), display(&truth_path)];
    manifest.results = json!({ "n_samples": data.n_samples(), "n_vars": data.n_vars() });
    manifest.write(&args.out_dir.join("manifest.json"), started)?;
    println!("wrote {} samples x {} columns to {}", data.n_samples(), data.n_vars(), data_path.display());
    Ok(())
}

fn layer_summary(h: &Hierarchy) -> serde_json::Value {
    let layers: Vec<_> = h
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            json!({
                "layer": l,
                "m": layer.m(),
                "live": h.live(l).len(),
                "tc_total": layer.tc_total,
                "iterations": layer.iterations_run,
                "converged": layer.converged,
                "best_restart": layer.best_restart,
            })
        })
        .collect();
    json!({ "layers": layers, "converged": h.layers.iter().all(|l| l.converged) })
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let started = Instant::now();
    let configs = args.layer.configs(1)?;
    let data = load_table(&args.data, &args.table.options(&args.data)?)?;
    let h = fit_hierarchy_with_threshold(&data, &configs, args.layer.prune_threshold)?;
    let model = Model::new(h, &data);
    let labels = model.hierarchy.transform(&data)?;

    prepare_dir(&args.out_dir)?;
    let out = |name: &str| args.out_dir.join(name);
    model.save(&out("model.json"))?;
    write_labels(&out("labels.csv"), &labels)?;
    write_clusters(&out("clusters.csv"), &model)?;
    write_history(&out("history.csv"), &model.hierarchy)?;
    let (dot, skeleton) = export_tree(&model.hierarchy, &model.column_names, true);
    write_text(&out("tree.dot"), &dot)?;
    write_text(&out("tree.json"), &(serde_json::to_string_pretty(&skeleton)? + "\n"))?;

    let config = json!({ "layers": configs, "prune_threshold": args.layer.prune_threshold });
    let mut manifest = RunManifest::new("fit", config, Some(args.layer.seed));
    manifest.inputs = vec![display(&args.data)];
    manifest.outputs = ["model.json", "labels.csv", "clusters.csv", "history.csv", "tree.dot", "tree.json"]
        .iter()
        .map(|n| display(&out(n)))
        .collect();
    manifest.results = layer_summary(&model.hierarchy);
    manifest.write(&out("manifest.json"), started)?;

    for (l, layer) in model.hierarchy.layers.iter().enumerate() {
        println!(
            "layer {l}: m={} live={} tc_total={:.6} iterations={} converged={}",
            layer.m(),
            model.hierarchy.live(l).len(),
            layer.tc_total,
            layer.iterations_run,
            layer.converged
        );
    }
    Ok(())
}

/// Soft probabilities (6 decimals) and hard labels of every factor.
pub fn write_labels(path: &Path, labels: &[SoftLabels]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let mut header = vec!["sample".to_string()];
    for (l, layer) in labels.iter().enumerate() {
        for j in 0..layer.m() {
            header.extend((0..layer.k()).map(|s| format!("l{l}_y{j}_p{s}")));
            header.push(format!("l{l}_y{j}"));
        }
    }
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let hard: Vec<Array2<u32>> = labels.iter().map(hard_labels).collect();
    let n_samples = labels.first().map_or(0, SoftLabels::n_samples);
    for sample in 0..n_samples {
        let mut row = vec![sample.to_string()];
        for (layer, h) in labels.iter().zip(&hard) {
            for j in 0..layer.m() {
                row.extend((0..layer.k()).map(|s| format!("{:.6}", layer.probability(sample, j, s))));
                row.push(h[[sample, j]].to_string());
            }
        }
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_clusters(path: &Path, model: &Model) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable", "cluster"])?;
    for (name, e) in model.column_names.iter().zip(&model.hierarchy.edges[0]) {
        let cluster = e.map(|e| e.parent.to_string()).unwrap_or_default();
        w.write_record([name.as_str(), cluster.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_history(path: &Path, h: &Hierarchy) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "layer,iteration,tc_total").map_err(io)?;
    for (l, layer) in h.layers.iter().enumerate() {
        for (t, tc) in layer.objective_history.iter().enumerate() {
            writeln!(w, "{l},{},{tc:?}", t + 1).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn cmd_transform(args: &TransformArgs) -> Result<()> {
    let started = Instant::now();
    let model = Model::load(&args.model)?;
    let options = args.table.options(&args.data)?;
    let data = match &model.codebooks {
        Some(books) => load_table_with_codebooks(&args.data, &options, books)?,
        None => load_table(&args.data, &options)?,
    };
    model.check_columns(&data)?;
    let labels = model.hierarchy.transform(&data)?;
    prepare_dir(&args.out_dir)?;
    let labels_path = args.out_dir.join("labels.csv");
    write_labels(&labels_path, &labels)?;

    let mut manifest = RunManifest::new("transform", serde_json::Value::Null, None);
    manifest.inputs = vec![display(&args.model), display(&args.data)];
    manifest.outputs = vec![display(&labels_path)];
    manifest.results = json!({ "n_samples": data.n_samples() });
    manifest.write(&args.out_dir.join("manifest.json"), started)?;
    println!("labeled {} samples into {}", data.n_samples(), labels_path.display());
    Ok(())
}

/// Labels read from a CSV column or a ground-truth document; `None` marks
/// an unlabeled item.
pub fn read_labeling(path: &Path, column: Option<&str>) -> Result<Vec<Option<usize>>> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let truth: GroundTruth = serde_json::from_str(&text)?;
        return match column.unwrap_or("cluster") {
            "cluster" | "cluster_of" => Ok(truth.cluster_of),
            "z" => Ok(truth.root_values().into_iter().map(Some).collect()),
            other => {
                let j = other
                    .strip_prefix('y')
                    .and_then(|j| j.parse::<usize>().ok())
                    .filter(|&j| j < truth.spec.b)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown ground-truth column {other:?}")))?;
                Ok(truth.branch_values(j).into_iter().map(Some).collect())
            }
        };
    }

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(LoadOptions::for_path(path).delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            kind => Error::Parse {
                row: 0,
                message: format!("{kind:?}"),
            },
        })?;
    let headers = rdr.headers()?.clone();
    let index = match column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidConfig(format!("{} has no column {name:?}", path.display())))?,
        None if headers.len() == 2 => 1,
        None if headers.len() == 1 => 0,
        None => {
            return Err(Error::InvalidConfig(format!(
                "{} has {} columns; choose one with --pred-column/--truth-column",
                path.display(),
                headers.len()
            )))
        }
    };
    let mut raw: Vec<String> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = record.get(index).ok_or_else(|| Error::Parse {
            row: row + 2,
            message: format!("missing field {}", index + 1),
        })?;
        raw.push(field.to_string());
    }
    if raw.is_empty() {
        return Err(Error::Empty);
    }
    // integers keep their values; anything else is coded by first appearance
    let numeric: Option<Vec<Option<usize>>> = raw
        .iter()
        .map(|v| if v.is_empty() { Some(None) } else { v.parse().ok().map(Some) })
        .collect();
    Ok(numeric.unwrap_or_else(|| {
        let mut codes: HashMap<&str, usize> = HashMap::new();
        raw.iter()
            .map(|v| {
                (!v.is_empty()).then(|| {
                    let next = codes.len();
                    *codes.entry(v.as_str()).or_insert(next)
                })
            })
            .collect()
    }))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let pred = read_labeling(&args.pred, args.pred_column.as_deref())?;
    let truth = read_labeling(&args.truth, args.truth_column.as_deref())?;
    let record = match args.metric {
        Metric::Ari => {
            let r = adjusted_rand_index_partial(&pred, &truth)?;
            MetricRecord {
                metric: "ari".into(),
                value: r.ari,
                spec: None,
                seed: None,
                scored: Some(r.scored),
                excluded: Some(r.excluded),
            }
        }
        Metric::Acc => {
            let complete = |v: Vec<Option<usize>>, path: &Path| -> Result<Vec<usize>> {
                v.into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::InvalidData(format!("{} has unlabeled items", path.display())))
            };
            let value = binary_factor_accuracy(&complete(pred, &args.pred)?, &complete(truth, &args.truth)?)?;
            MetricRecord {
                metric: "acc".into(),
                value,
                spec: None,
                seed: None,
                scored: None,
                excluded: None,
            }
        }
    };
    let text = serde_json::to_string(&record)?;
    println!("{text}");
    if let Some(dir) = &args.out_dir {
        prepare_dir(dir)?;
        let path = dir.join("metric.json");
        write_text(&path, &(text + "\n"))?;
        let mut manifest = RunManifest::new("eval", json!({ "metric": args.metric }), None);
        manifest.inputs = vec![display(&args.pred), display(&args.truth)];
        manifest.outputs = vec![display(&path)];
        manifest.results = serde_json::to_value(&record)?;
        manifest.write(&dir.join("manifest.json"), started)?;
    }
    Ok(())
}

fn input_names(model: &Model, l: usize) -> Vec<String> {
    if l == 0 {
        model.column_names.clone()
    } else {
        model.hierarchy.inputs[l - 1].iter().map(|j| format!("L{l}_{j}")).collect()
    }
}

pub fn cmd_rank(args: &RankArgs) -> Result<()> {
    let started = Instant::now();
    let model = Model::load(&args.model)?;
    let h = &model.hierarchy;
    let layer = h
        .layers
        .get(args.layer)
        .ok_or_else(|| Error::InvalidConfig(format!("model has {} layers", h.depth())))?;
    let names = input_names(&model, args.layer);
    let ranked = rank_factors_with_threshold(layer, h.prune_threshold);

    let mut rows = Vec::new();
    for r in &ranked {
        let members: Vec<&str> = r.members.iter().take(args.top).map(|&i| names[i].as_str()).collect();
        println!("y{}\tscore={:.4}\ttc={:.4}\t{}", r.factor, r.score, r.tc, members.join(" "));
        rows.push((r, members.join(" ")));
    }
    if let Some(dir) = &args.out_dir {
        prepare_dir(dir)?;
        let path = dir.join("ranking.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["factor", "score", "tc", "size", "members"])?;
        for (r, members) in rows {
            w.write_record([
                r.factor.to_string(),
                format!("{:?}", r.score),
                format!("{:?}", r.tc),
                r.members.len().to_string(),
                members,
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let mut manifest = RunManifest::new("rank", json!({ "layer": args.layer, "top": args.top }), None);
        manifest.inputs = vec![display(&args.model)];
        manifest.outputs = vec![display(&path)];
        manifest.write(&dir.join("manifest.json"), started)?;
    }
    Ok(())
}

pub fn cmd_export(args: &ExportArgs) -> Result<()> {
    let started = Instant::now();
    let model = Model::load(&args.model)?;
    let (dot, skeleton) = export_tree(&model.hierarchy, &model.column_names, !args.no_weights);
    prepare_dir(&args.out_dir)?;
    let dot_path = args.out_dir.join("tree.dot");
    let json_path = args.out_dir.join("tree.json");
    write_text(&dot_path, &dot)?;
    write_text(&json_path, &(serde_json::to_string_pretty(&skeleton)? + "\n"))?;
    let mut manifest = RunManifest::new("export", json!({ "weights": !args.no_weights }), None);
    manifest.inputs = vec![display(&args.model)];
    manifest.outputs = vec![display(&dot_path), display(&json_path)];
    manifest.write(&args.out_dir.join("manifest.json"), started)
}

pub fn cmd_discretize(args: &DiscretizeArgs) -> Result<()> {
    let started = Instant::now();
    let mut options = LoadOptions::for_path(&args.counts);
    if let Some(d) = args.delimiter {
        if !d.is_ascii() {
            return Err(Error::InvalidConfig(format!("delimiter {d:?} is not ASCII")));
        }
        options.delimiter = d as u8;
    }
    let (names, counts) = read_counts(&args.counts, options.delimiter)?;
    if args.top > names.len() {
        return Err(Error::InvalidConfig(format!("--top {} exceeds {} columns", args.top, names.len())));
    }
    let order = data::order_by_total(counts.view());
    let sorted = counts.select(ndarray::Axis(1), &order);
    let sorted_names = order.iter().map(|&i| names[i].clone()).collect();
    let data = data::discretize_counts(sorted.view(), args.top)?.with_column_names(sorted_names)?;

    prepare_dir(&args.out_dir)?;
    let path = args.out_dir.join("discretized.csv");
    data.write_csv(&path)?;
    let mut manifest = RunManifest::new("discretize", json!({ "top": args.top }), None);
    manifest.inputs = vec![display(&args.counts)];
    manifest.outputs = vec![display(&path)];
    manifest.results = json!({ "n_samples": data.n_samples(), "n_vars": data.n_vars() });
    manifest.write(&args.out_dir.join("manifest.json"), started)?;
    println!("wrote {} x {} categories to {}", data.n_samples(), data.n_vars(), path.display());
    Ok(())
}

fn read_counts(path: &Path, delimiter: u8) -> Result<(Vec<String>, Array2<i64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            kind => Error::Parse {
                row: 0,
                message: format!("{kind:?}"),
            },
        })?;
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut flat = Vec::new();
    let mut rows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        for field in record.iter() {
            flat.push(field.parse::<i64>().map_err(|_| Error::Parse {
                row,
                message: format!("{field:?} is not an integer count"),
            })?);
        }
        rows += 1;
    }
    if rows == 0 || names.is_empty() {
        return Err(Error::Empty);
    }
    let counts = Array2::from_shape_vec((rows, names.len()), flat).map_err(|e| Error::InvalidData(e.to_string()))?;
    Ok((names, counts))
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub c: usize,
    pub seed: u64,
    pub n: usize,
    pub samples: usize,
    pub ari: f64,
    pub excluded: usize,
    pub tc_total: f64,
    pub iterations: usize,
    pub wall_ms: f64,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let started = Instant::now();
    let base = args.layer.configs(args.tree.b)?;
    let config = base[0].clone();
    prepare_dir(&args.out_dir)?;
    let manifest_dir = args.out_dir.join("manifests");
    prepare_dir(&manifest_dir)?;

    let sweep_path = args.out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&sweep_path)?;
    let mut rows = Vec::new();
    for &c in &args.c_list {
        for seed in args.layer.seed..args.layer.seed + args.seeds {
            let row_started = Instant::now();
            let spec = args.tree.spec(c, seed);
            spec.validate()?;
            let (data, truth) = generate(&spec)?;
            let config = CorexConfig { seed, ..config.clone() };
            let (layer, _) = fit_layer(&data, &config)?;
            let assignment = clusters_with_threshold(&layer, args.layer.prune_threshold).assignment;
            let ari = adjusted_rand_index_partial(&assignment, &truth.cluster_of)?;
            let row = SweepRow {
                c,
                seed,
                n: data.n_vars(),
                samples: data.n_samples(),
                ari: ari.ari,
                excluded: ari.excluded,
                tc_total: layer.tc_total,
                iterations: layer.iterations_run,
                wall_ms: row_started.elapsed().as_secs_f64() * 1e3,
            };
            println!("c={c} seed={seed} n={} ari={:.4} tc_total={:.4}", row.n, row.ari, row.tc_total);
            w.serialize(&row)?;

            let mut manifest = RunManifest::new("sweep", json!({ "tree": spec, "layer": config }), Some(seed));
            manifest.outputs = vec![display(&sweep_path)];
            manifest.results = serde_json::to_value(&row)?;
            manifest.write(&manifest_dir.join(format!("c{c}_seed{seed}.json")), row_started)?;
            rows.push(row);
        }
    }
    w.flush().map_err(|e| Error::io(&sweep_path, e))?;
    let mut manifest = RunManifest::new("sweep", json!({ "c_list": args.c_list, "seeds": args.seeds }), Some(args.layer.seed));
    manifest.outputs = vec![display(&sweep_path)];
    manifest.results = json!({ "rows": rows.len() });
    manifest.write(&args.out_dir.join("manifest.json"), started)
}
