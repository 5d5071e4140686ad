//! `nestagree`: corpus generation, training, evaluation and analysis.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use nestagree::analysis::{
    ablation_scan, pca_states, record_unit, unit_id, AblationReport, PcaTarget, ScanOptions, StateKind,
};
use nestagree::cells::{Architecture, Checkpoint};
use nestagree::config::{ConfigError, PipelineConfig};
use nestagree::corpus::{CorpusError, Split};
use nestagree::evaluation::{evaluate_tasks, Metric, ModelPredictor};
use nestagree::pipeline::{generate_data, DataDir};
use nestagree::training::{checkpoint_perplexity, grid_search, train, RunDir, RunManifest, TrainError};

#[derive(Parser, Debug)]
#[command(name = "nestagree", version, about = "Nested number-agreement experiments on a synthetic grammar")]
struct Cli {
    /// TOML config; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true, env = "NESTAGREE_OUT", default_value = "runs")]
    out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Config override as a dotted key, e.g. `--set training.epochs=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate corpora, agreement tasks and dataset statistics.
    Gen {
        /// Restrict to one grammar, e.g. `p1=0.5,p2=0.5`.
        #[arg(long)]
        only: Option<String>,
    },
    /// Train the configured model on one corpus.
    Train(TrainArgs),
    /// Grid search over model sizes on one corpus.
    Grid(TrainArgs),
    /// Agreement accuracy matrices and model comparison.
    Eval {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        figure: Figure,
    },
    /// Single-unit ablation scan.
    Ablate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Activation of one unit grouped by noun numbers.
    Record {
        #[arg(long)]
        model: PathBuf,
        /// Defaults to the unit best separating the first noun's number.
        #[arg(long)]
        unit: Option<usize>,
        /// Defaults to the top layer.
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value = "hidden")]
        kind: StateKind,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
    },
    /// Principal components of the state trajectories.
    Pca {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value = "hidden")]
        kind: StateKind,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
    },
    /// Index page linking every output under the root.
    Report,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    arch: Option<Architecture>,
    #[arg(long, default_value_t = 0.5)]
    p1: f64,
    #[arg(long, default_value_t = 0.5)]
    p2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig2,
    Fig3,
    Fig4,
    All,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = classify(&e);
            let record = serde_json::json!({
                "error": { "kind": kind, "message": format!("{e:#}"), "command": name }
            });
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Train(_) => "train",
        Command::Grid(_) => "grid",
        Command::Eval { .. } => "eval",
        Command::Ablate { .. } => "ablate",
        Command::Record { .. } => "record",
        Command::Pca { .. } => "pca",
        Command::Report => "report",
    }
}

fn classify(e: &anyhow::Error) -> (&'static str, u8) {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return ("config", 2);
        }
        if cause.is::<std::io::Error>() {
            return ("io", 3);
        }
        match cause.downcast_ref::<CorpusError>() {
            Some(CorpusError::Io(_)) => return ("io", 3),
            Some(CorpusError::Exists(_)) => return ("exists", 4),
            _ => {}
        }
        match cause.downcast_ref::<TrainError>() {
            Some(TrainError::Io(_)) => return ("io", 3),
            Some(TrainError::Exists(_)) => return ("exists", 4),
            _ => {}
        }
    }
    ("runtime", 1)
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
    force: bool,
    workers: usize,
}

impl Ctx {
    fn data(&self) -> Result<DataDir> {
        let root = self.out.join("data");
        DataDir::open(&root).with_context(|| format!("loading {}; run `nestagree gen` first", root.display()))
    }

    fn manifest(&self, experiment: &str) -> RunManifest {
        let json = serde_json::to_value(&self.cfg).expect("config serializes");
        let mut m = RunManifest::new(experiment, self.cfg.digest(), json);
        m.seeds.push(self.cfg.seed);
        m
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let mut cfg = PipelineConfig::parse(&text)?;
    if !cli.set.is_empty() {
        let mut table: toml::Table = toml::from_str(&cfg.to_toml()).expect("config round-trips");
        for kv in &cli.set {
            apply_override(&mut table, kv)?;
        }
        cfg = PipelineConfig::parse(&toml::to_string(&table).expect("table serializes"))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `a.b=v` sets `table[a][b]`; `v` is read as a TOML value, else a string.
fn apply_override(table: &mut toml::Table, kv: &str) -> Result<(), ConfigError> {
    let (key, raw) = kv.split_once('=').ok_or_else(|| ConfigError::Invalid(format!("`{kv}` is not KEY=VALUE")))?;
    let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let ctx = Ctx { cfg, out: cli.out, force: cli.force, workers };
    match cli.command {
        Command::Gen { only } => gen(&ctx, only.as_deref()),
        Command::Train(a) => train_cmd(ctx, &a),
        Command::Grid(a) => grid_cmd(ctx, &a),
        Command::Eval { models, figure } => eval_cmd(&ctx, &models, figure),
        Command::Ablate { model, threshold } => ablate_cmd(&ctx, &model, threshold),
        Command::Record { model, unit, layer, kind, d, s } => record_cmd(&ctx, &model, unit, layer, kind, d, s),
        Command::Pca { model, layer, kind, d, s } => pca_cmd(&ctx, &model, layer, kind, d, s),
        Command::Report => report_cmd(&ctx),
    }
}

fn parse_only(s: &str) -> Result<(f64, f64), ConfigError> {
    let mut p1 = None;
    let mut p2 = None;
    for part in s.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| ConfigError::Invalid(format!("--only `{s}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| ConfigError::Invalid(format!("--only value `{v}`")))?;
        match k.trim() {
            "p1" => p1 = Some(v),
            "p2" => p2 = Some(v),
            other => return Err(ConfigError::Invalid(format!("--only key `{other}`"))),
        }
    }
    match (p1, p2) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(ConfigError::Invalid("--only needs p1 and p2".into())),
    }
}

fn gen(ctx: &Ctx, only: Option<&str>) -> Result<()> {
    let only = only.map(parse_only).transpose()?;
    let root = ctx.out.join("data");
    let m = generate_data(&root, &ctx.cfg, only, ctx.force, ctx.workers)?;
    info!("wrote {} corpora and {} agreement tasks to {}", m.datasets.len(), m.natasks.len(), root.display());
    Ok(())
}

fn run_label(arch: Architecture, p1: f64, p2: f64, seed: u64) -> String {
    format!("{arch}_p1-{p1}_p2-{p2}_seed-{seed}")
}

fn train_cmd(mut ctx: Ctx, a: &TrainArgs) -> Result<()> {
    if let Some(arch) = a.arch {
        ctx.cfg.model.architecture = arch;
    }
    let data = ctx.data()?;
    let train_s = data.stream(a.p1, a.p2, Split::Train)?;
    let valid_s = data.stream(a.p1, a.p2, Split::Valid)?;
    let mcfg = ctx.cfg.model_config()?;
    let tcfg = ctx.cfg.training_config();
    let dir = ctx.out.join("train").join(run_label(mcfg.architecture, a.p1, a.p2, ctx.cfg.seed));
    let mut m = ctx.manifest("train");
    m.datasets = vec![train_s.id.stem(), valid_s.id.stem()];
    let mut run = RunDir::create(&dir, ctx.force, m)?;
    let outcome = train(&mcfg, &tcfg, &train_s, &valid_s)?;
    run.save_checkpoint("model.ckpt", &outcome.checkpoint)?;
    run.write_metrics("metrics.csv", &outcome.curve)?;
    run.finish()?;
    info!("checkpoint written to {}", dir.join("model.ckpt").display());
    Ok(())
}

fn grid_cmd(mut ctx: Ctx, a: &TrainArgs) -> Result<()> {
    if let Some(arch) = a.arch {
        ctx.cfg.model.architecture = arch;
    }
    let arch = ctx.cfg.model.architecture;
    let data = ctx.data()?;
    let train_s = data.stream(a.p1, a.p2, Split::Train)?;
    let valid_s = data.stream(a.p1, a.p2, Split::Valid)?;
    let test_s = data.stream(a.p1, a.p2, Split::Test)?;
    let dir = ctx.out.join("grid").join(run_label(arch, a.p1, a.p2, ctx.cfg.seed));
    let mut m = ctx.manifest("grid");
    m.datasets = vec![train_s.id.stem(), valid_s.id.stem(), test_s.id.stem()];
    let mut run = RunDir::create(&dir, ctx.force, m)?;
    let result = grid_search(arch, &train_s, &valid_s, &ctx.cfg.grid_spec(), &ctx.cfg.training_config(), ctx.workers)?;
    let mut csv = String::from("# hyperparameter grid: validation perplexity per config\n");
    csv.push_str("config,layers,hidden,embedding,dropout,chunk,parameters,valid_ppl,error\n");
    for e in &result.entries {
        let c = &e.config;
        let label = c.label();
        csv.push_str(&format!(
            "{label},{},{},{},{},{},{},{},{}\n",
            c.layers,
            c.hidden,
            c.embedding,
            c.dropout,
            c.chunk,
            e.parameter_count,
            e.valid_ppl.map_or(String::new(), |p| p.to_string()),
            e.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
        ));
        if let Some(ck) = &e.checkpoint {
            run.save_checkpoint(&format!("configs/{label}.ckpt"), ck)?;
            run.write_metrics(&format!("configs/{label}_metrics.csv"), &e.curve)?;
        }
    }
    run.write("grid.csv", csv.as_bytes())?;
    let best = result.best_entry().ok_or_else(|| anyhow!("every grid config failed"))?;
    let ck = best.checkpoint.as_ref().expect("successful entry has a checkpoint");
    let test_ppl = checkpoint_perplexity(ck, &test_s)?;
    run.save_checkpoint("best.ckpt", ck)?;
    let best_csv = format!(
        "# best grid config\nconfig,parameters,valid_ppl,test_ppl\n{},{},{},{test_ppl}\n",
        best.config.label(),
        best.parameter_count,
        best.valid_ppl.expect("successful entry has a perplexity")
    );
    run.write("best.csv", best_csv.as_bytes())?;
    run.finish()?;
    info!("best config {} (test ppl {test_ppl:.4})", best.config.label());
    Ok(())
}

fn model_name(path: &Path) -> String {
    let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) => format!("{}_{stem}", dir.to_string_lossy()),
        None => stem,
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ck.check_vocabulary()?;
    Ok(ck)
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

fn write_csv_with(run: &mut RunDir, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    run.write(rel, &buf)?;
    Ok(())
}

fn eval_cmd(ctx: &Ctx, models: &[PathBuf], figure: Figure) -> Result<()> {
    let data = ctx.data()?;
    let specs = ctx.cfg.task_specs()?;
    let depths = sorted_unique(specs.iter().map(|s| s.d).collect());
    let spacings = sorted_unique(specs.iter().map(|s| s.s).collect());
    let s_fig3 = ctx.cfg.analysis.spacing;
    let tasks = data.tasks(|d, s| depths.contains(&d) && spacings.contains(&s))?;
    let want = |f: Figure| figure == f || figure == Figure::All;
    let mut summary = String::from(
        "# fig4: model comparison, mean accuracy over all agreement tasks\n\
         model,architecture,parameters,valid_ppl,test_ppl,mean_accuracy,within_limits_accuracy\n",
    );
    for path in models {
        let ck = load_checkpoint(path)?;
        let name = model_name(path);
        let dataset = ck.provenance.dataset;
        let limits = match dataset {
            Some(id) => Some(data.train_limits(id.p1, id.p2)?),
            None => None,
        };
        let pred = ModelPredictor::from_checkpoint(&ck)?;
        let grid = evaluate_tasks(&pred, &tasks, ctx.workers)?;
        let mut m = ctx.manifest("eval");
        m.datasets = dataset.map(|id| id.stem()).into_iter().collect();
        let mut run = RunDir::create(&ctx.out.join("eval").join(&name), ctx.force, m)?;
        if want(Figure::Fig2) {
            for metric in [Metric::MeanOverVerbs, Metric::AllCorrect, Metric::PerLexeme] {
                let mat = grid.matrix(metric, &depths, &spacings, limits)?;
                let title = format!("fig2: agreement accuracy ({}) of {name}", metric.as_str());
                let stem = format!("fig2_{}", metric.as_str());
                write_csv_with(&mut run, &format!("{stem}.csv"), |b| Ok(mat.write_csv(b, &title)?))?;
                run.write(&format!("{stem}.svg"), mat.to_svg(&title).as_bytes())?;
            }
        }
        if want(Figure::Fig3) {
            let fig3_depths: Vec<usize> = depths.iter().copied().filter(|&d| grid.results.contains_key(&(d, s_fig3))).collect();
            let pv = grid.per_verb(s_fig3, &fig3_depths)?;
            let title = format!("fig3: per-verb accuracy at s={s_fig3} of {name}");
            write_csv_with(&mut run, "fig3_per_verb.csv", |b| Ok(pv.write_csv(b, &title)?))?;
            run.write("fig3_per_verb.svg", pv.to_svg(&title, limits.map(|l| l.0)).as_bytes())?;
        }
        if want(Figure::Fig4) {
            let mat = grid.matrix(Metric::MeanOverVerbs, &depths, &spacings, limits)?;
            let title = format!("fig4: agreement accuracy of {name} ({})", ck.model.config.architecture);
            write_csv_with(&mut run, "fig4_matrix.csv", |b| Ok(mat.write_csv(b, &title)?))?;
            run.write("fig4_matrix.svg", mat.to_svg(&title).as_bytes())?;
            let test_ppl = match dataset {
                Some(id) => checkpoint_perplexity(&ck, &data.stream(id.p1, id.p2, Split::Test)?)?.to_string(),
                None => String::new(),
            };
            let all: Vec<f64> = mat.values.iter().flatten().copied().collect();
            let within: Vec<f64> = match limits {
                Some((md, ms)) => depths
                    .iter()
                    .flat_map(|&d| spacings.iter().map(move |&s| (d, s)))
                    .filter(|&(d, s)| d <= md && s <= ms)
                    .filter_map(|(d, s)| mat.get(d, s))
                    .collect(),
                None => Vec::new(),
            };
            let mean = |v: &[f64]| if v.is_empty() { String::new() } else { (v.iter().sum::<f64>() / v.len() as f64).to_string() };
            summary.push_str(&format!(
                "{name},{},{},{},{test_ppl},{},{}\n",
                ck.model.config.architecture,
                ck.model.parameter_count(),
                ck.provenance.valid_ppl.map_or(String::new(), |p| p.to_string()),
                mean(&all),
                mean(&within)
            ));
        }
        run.finish()?;
        info!("evaluated {name}");
    }
    if want(Figure::Fig4) {
        let mut run = RunDir::create(&ctx.out.join("eval").join("comparison"), true, ctx.manifest("eval-comparison"))?;
        run.write("fig4_summary.csv", summary.as_bytes())?;
        run.finish()?;
    }
    Ok(())
}

fn analysis_tasks(ctx: &Ctx, data: &DataDir, s: usize) -> Result<Vec<nestagree::corpus::NaTask>> {
    let depths = &ctx.cfg.analysis.depths;
    let tasks = data.tasks(|d, ts| ts == s && depths.contains(&d))?;
    if tasks.len() != depths.len() {
        bail!("agreement tasks for depths {depths:?} at s={s} are not all generated");
    }
    Ok(tasks)
}

fn ablate_cmd(ctx: &Ctx, model: &Path, threshold: Option<f64>) -> Result<()> {
    let data = ctx.data()?;
    let ck = load_checkpoint(model)?;
    let a = &ctx.cfg.analysis;
    let tasks = analysis_tasks(ctx, &data, a.spacing)?;
    let opts = ScanOptions {
        threshold: threshold.unwrap_or(a.threshold),
        all_layers: a.all_layers,
        hidden_only: a.hidden_only,
        units: None,
        workers: ctx.workers,
    };
    let report = ablation_scan(&ck.model, &tasks, &opts)?;
    let name = model_name(model);
    let mut run = RunDir::create(&ctx.out.join("ablate").join(&name), ctx.force, ctx.manifest("ablate"))?;
    let title = format!("table1: units whose ablation drops agreement accuracy below {} ({name})", opts.threshold);
    write_csv_with(&mut run, "table1.csv", |b| Ok(report.write_csv(b, &title)?))?;
    write_csv_with(&mut run, "table1_ablated_accuracy.csv", |b| write_ablated(b, &report))?;
    run.finish()?;
    info!("units listed: {:?}", report.listed_units());
    Ok(())
}

/// Accuracy after ablating each scanned unit, one column per report row.
fn write_ablated(w: &mut Vec<u8>, r: &AblationReport) -> Result<()> {
    use std::io::Write;
    writeln!(w, "# table1: accuracy per single-unit ablation")?;
    let cols: Vec<String> = r.rows.iter().map(|row| format!("d{}_v{}_{}", row.d, row.verb, row.split)).collect();
    writeln!(w, "unit,{}", cols.join(","))?;
    for (u, accs) in &r.ablated {
        let vals: Vec<String> = accs.iter().map(f64::to_string).collect();
        writeln!(w, "{u},{}", vals.join(","))?;
    }
    Ok(())
}

fn trace_task(ctx: &Ctx, data: &DataDir, d: Option<usize>, s: Option<usize>) -> Result<nestagree::corpus::NaTask> {
    let a = &ctx.cfg.analysis;
    Ok(data.task(d.unwrap_or(a.trace_depth), s.unwrap_or(a.trace_spacing))?)
}

fn record_cmd(
    ctx: &Ctx,
    model: &Path,
    unit: Option<usize>,
    layer: Option<usize>,
    kind: StateKind,
    d: Option<usize>,
    s: Option<usize>,
) -> Result<()> {
    let data = ctx.data()?;
    let ck = load_checkpoint(model)?;
    let cfg = &ck.model.config;
    let layer = layer.unwrap_or(cfg.layers - 1);
    let task = trace_task(ctx, &data, d, s)?;
    let trace = match unit {
        Some(u) => record_unit(&ck.model, &task, layer, u, kind)?,
        None => {
            let mut best: Option<(f64, nestagree::analysis::UnitTrace)> = None;
            for u in 0..cfg.hidden {
                let t = record_unit(&ck.model, &task, layer, u, kind)?;
                let sep = t.separation(1, t.noun_verb_span(1));
                if best.as_ref().is_none_or(|(b, _)| sep > *b) {
                    best = Some((sep, t));
                }
            }
            best.expect("hidden > 0").1
        }
    };
    let name = model_name(model);
    let id = unit_id(cfg, layer, trace.unit);
    let dir = ctx.out.join("record").join(format!("{name}_unit-{id}_{}_d{}_s{}", kind.as_str(), task.spec.d, task.spec.s));
    let mut run = RunDir::create(&dir, ctx.force, ctx.manifest("record"))?;
    let title = format!("fig3: {} activity of unit {id} (layer {layer}) by noun numbers", kind.as_str());
    write_csv_with(&mut run, "unit_trace.csv", |b| Ok(trace.write_csv(b, &title)?))?;
    run.write("unit_trace.svg", trace.to_svg(&title).as_bytes())?;
    run.finish()?;
    info!("recorded unit {id} into {}", dir.display());
    Ok(())
}

fn pca_cmd(
    ctx: &Ctx,
    model: &Path,
    layer: Option<usize>,
    kind: StateKind,
    d: Option<usize>,
    s: Option<usize>,
) -> Result<()> {
    let data = ctx.data()?;
    let ck = load_checkpoint(model)?;
    let layer = layer.unwrap_or(ck.model.config.layers - 1);
    let task = trace_task(ctx, &data, d, s)?;
    let res = pca_states(&ck.model, &task, PcaTarget { layer, kind })?;
    let name = model_name(model);
    let dir = ctx.out.join("pca").join(format!("{name}_layer-{layer}_{}_d{}_s{}", kind.as_str(), task.spec.d, task.spec.s));
    let mut run = RunDir::create(&dir, ctx.force, ctx.manifest("pca"))?;
    let title = format!("fig3: PCA of {} states, layer {layer}", kind.as_str());
    write_csv_with(&mut run, "pca_variance.csv", |b| Ok(res.write_variance_csv(b, &title)?))?;
    write_csv_with(&mut run, "pca_trajectories.csv", |b| Ok(res.write_trajectory_csv(b, &title)?))?;
    run.write("pca_trajectories.svg", res.to_svg(&title).as_bytes())?;
    run.finish()?;
    info!("PCA written to {}", dir.display());
    Ok(())
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn report_cmd(ctx: &Ctx) -> Result<()> {
    let mut html = String::from("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>nestagree report</title></head><body>\n");
    html.push_str("<h1>nestagree outputs</h1>\n");
    let data_manifest = ctx.out.join("data").join(nestagree::pipeline::MANIFEST_FILE);
    if data_manifest.exists() {
        let data = ctx.data()?;
        html.push_str(&format!(
            "<h2>data</h2>\n<p>{} corpora, {} agreement tasks. <a href=\"../data/stats.csv\">statistics</a></p>\n\
             <img src=\"../data/stats_depth.svg\"><img src=\"../data/stats_max_spacing.svg\">\n",
            data.manifest.datasets.len(),
            data.manifest.natasks.len()
        ));
    }
    for section in ["train", "grid", "eval", "ablate", "record", "pca"] {
        let dir = ctx.out.join(section);
        let Ok(rd) = fs::read_dir(&dir) else { continue };
        let mut runs: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        runs.sort();
        html.push_str(&format!("<h2>{section}</h2>\n"));
        for r in runs {
            let m = RunManifest::load_verified(&r.join("manifest.json"))
                .with_context(|| format!("verifying {}", r.display()))?;
            let rel = format!("../{section}/{}", r.file_name().expect("dir name").to_string_lossy());
            html.push_str(&format!("<h3>{}</h3>\n<ul>\n", html_escape(&r.file_name().unwrap_or_default().to_string_lossy())));
            for a in &m.artifacts {
                let href = html_escape(&format!("{rel}/{}", a.path));
                html.push_str(&format!("<li><a href=\"{href}\">{}</a></li>\n", html_escape(&a.path)));
                if a.path.ends_with(".svg") {
                    html.push_str(&format!("<img src=\"{href}\">\n"));
                }
            }
            html.push_str("</ul>\n");
        }
    }
    html.push_str("</body></html>\n");
    let dir = ctx.out.join("report");
    fs::create_dir_all(&dir)?;
    let path = dir.join("index.html");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    std::io::Write::write_all(&mut w, html.as_bytes())?;
    info!("report written to {}", path.display());
    Ok(())
}
