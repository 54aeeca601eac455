mod config;
mod output;

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use disparse::analytics::{labeled_sets, pmi_matrix, tag_priors, transition_matrix};
use disparse::corpus::{
    corpus_statistics, extract_branches, load_trees_path, split_trees, split_trees_by_id, TreeSplit,
};
use disparse::eval::{
    ablation_csv, cross_validate, evaluate, noise_csv, noise_experiment, priors_of, run_ablation, NoiseMode, NoiseSpec,
    NoiseTargets, RunSetup,
};
use disparse::features::ablation_grid;
use disparse::models::{load_bundle, predict_tree, save_bundle, train_stack, ContextMode};
use disparse::synth::{generate_synthetic, SyntheticSpec};
use disparse::ConversationTree;
use serde::Serialize;

use config::{RunConfig, Split};
use output::{OutDir, RunManifest};

#[derive(Parser)]
#[command(
    name = "disparse",
    version,
    about = "Online discourse parsing for conversation trees"
)]
struct Cli {
    /// Seed for splits, folds, training and noise.
    #[arg(long, global = true, env = "DISPARSE_SEED")]
    seed: Option<u64>,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for fold, grid and per-tag jobs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gold,
    Predicted,
}

impl From<Mode> for ContextMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Gold => ContextMode::Gold,
            Mode::Predicted => ContextMode::Predicted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Every tag planted as a cue word.
    Planted,
    /// Planted cues plus reply tags that depend on the parent's tags.
    Dependencies,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a tree file; with --out, write it back canonically.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Validate only, write nothing.
        #[arg(long)]
        validate: bool,
    },
    /// Dataset statistics.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Tag priors, collocation PMI and transition matrices as CSV.
    Analytics {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train a tag stack and save it as a model bundle.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Feature config (JSON), overriding the run config.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Label every post of a tree file with a trained bundle.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "predicted")]
        mode: Mode,
    },
    /// Score a bundle, a held-out split, or k-fold cross-validation.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Score this bundle on the whole input instead of training.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Feature ablation grid on a held-out split.
    Ablate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Label-noise experiments on a held-out split.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with its ground truth.
    Synth {
        /// Generator spec (JSON).
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Tree count for a preset.
        #[arg(long, default_value_t = 50)]
        trees: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Stats { .. } => "stats",
            Command::Analytics { .. } => "analytics",
            Command::Train { .. } => "train",
            Command::Parse { .. } => "parse",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Noise { .. } => "noise",
            Command::Synth { .. } => "synth",
        }
    }
}

/// Bad invocation rather than bad data; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    seed: u64,
    config_path: Option<PathBuf>,
    config: RunConfig,
    out: Option<PathBuf>,
    command: &'static str,
}

impl Ctx {
    fn manifest(&self) -> Result<RunManifest> {
        let mut m = RunManifest::new(self.command, self.seed);
        if let Some(p) = &self.config_path {
            m.config(p)?;
        }
        Ok(m)
    }

    fn out_dir(&self) -> Result<OutDir> {
        let dir = self
            .out
            .as_ref()
            .ok_or_else(|| usage(format!("`{}` needs --out <dir>", self.command)))?;
        OutDir::create(dir)
    }

    fn split(&self, trees: &[ConversationTree]) -> Result<TreeSplit> {
        Ok(match &self.config.split {
            Some(Split::HeldOut(n)) => split_trees(trees, *n, self.seed)?,
            Some(Split::TestTrees(ids)) => split_trees_by_id(trees, ids)?,
            None => split_trees(trees, default_held_out(trees.len()), self.seed)?,
        })
    }
}

/// Fifteen percent of the trees, at least one.
fn default_held_out(n: usize) -> usize {
    ((n * 15 + 50) / 100).clamp(1, n.saturating_sub(1).max(1))
}

const MACRO_NOTE: &str = "macro averages exclude tags without gold support";

fn load(path: &Path) -> Result<Vec<ConversationTree>> {
    load_trees_path(path).with_context(|| format!("loading {}", path.display()))
}

fn ndjson<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_manifest(out: &mut OutDir, mut manifest: RunManifest) -> Result<()> {
    manifest.outputs = out.names().to_vec();
    manifest.outputs.push("manifest.json".into());
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    out.write("manifest.json", &json)
}

fn tree_ids(trees: &[ConversationTree], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| trees[i].tree_id().to_owned()).collect()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        config_path: cli.config.clone(),
        config,
        out: cli.out.clone(),
        command: cli.command.name(),
    };
    match cli.command {
        Command::Ingest { input, validate } => ingest(&ctx, &input, validate),
        Command::Stats { input } => stats(&ctx, &input),
        Command::Analytics { input } => analytics(&ctx, &input),
        Command::Train { input, features } => train(&ctx, &input, features.as_deref()),
        Command::Parse { model, input, mode } => parse(&ctx, &model, &input, mode.into()),
        Command::Eval {
            input,
            features,
            model,
            mode,
        } => eval(
            &ctx,
            &input,
            features.as_deref(),
            model.as_deref(),
            mode.map(Into::into),
        ),
        Command::Ablate { input } => ablate(&ctx, &input),
        Command::Noise { input, features } => noise(&ctx, &input, features.as_deref()),
        Command::Synth { spec, preset, trees } => synth(&ctx, cli.seed, spec.as_deref(), preset, trees),
    }
}

fn ingest(ctx: &Ctx, input: &Path, validate: bool) -> Result<()> {
    let trees = load(input)?;
    let nodes: usize = trees.iter().map(ConversationTree::len).sum();
    let labeled = labeled_sets(&trees).len();
    let branches: usize = trees.iter().map(|t| extract_branches(t).len()).sum();
    println!(
        "{}: {} trees, {nodes} nodes ({labeled} labeled), {branches} branches",
        input.display(),
        trees.len()
    );
    if validate || ctx.out.is_none() {
        return Ok(());
    }
    let mut out = ctx.out_dir()?;
    let mut manifest = ctx.manifest()?;
    manifest.input(input)?;
    out.write("trees.ndjson", &ndjson(trees.iter().flat_map(|t| t.records()))?)?;
    write_manifest(&mut out, manifest)
}

fn stats(ctx: &Ctx, input: &Path) -> Result<()> {
    let trees = load(input)?;
    let s = corpus_statistics(&trees)?;
    let mut csv = String::from("variable,value,std\n");
    println!("{:<28} {:>12} {:>10}", "Variable", "Value", "Std");
    for (name, value, std) in s.rows() {
        match std {
            Some(sd) => {
                println!("{name:<28} {value:>12.1} {sd:>10.1}");
                csv.push_str(&format!("{name},{value},{sd}\n"));
            }
            None => {
                println!("{name:<28} {value:>12}");
                csv.push_str(&format!("{name},{value},\n"));
            }
        }
    }
    if ctx.out.is_some() {
        let mut out = ctx.out_dir()?;
        let mut manifest = ctx.manifest()?;
        manifest.input(input)?;
        out.report(manifest, &s, &csv)?;
    }
    Ok(())
}

fn analytics(ctx: &Ctx, input: &Path) -> Result<()> {
    let mut out = ctx.out_dir()?;
    let trees = load(input)?;
    let labeled = labeled_sets(&trees);
    let priors = tag_priors(&labeled)?;
    let pmi = pmi_matrix(&labeled)?;
    let trans = transition_matrix(&trees);
    out.write("priors.csv", priors.to_csv().as_bytes())?;
    out.write("pmi.csv", pmi.to_csv().as_bytes())?;
    out.write("transitions.csv", trans.to_csv().as_bytes())?;
    let mut manifest = ctx.manifest()?;
    manifest.input(input)?;
    if !pmi.empty_rows.is_empty() {
        let names: Vec<&str> = pmi.empty_rows.iter().map(|t| t.name()).collect();
        manifest
            .notes
            .push(format!("tags absent from the corpus: {}", names.join(" ")));
    }
    if !trans.empty_rows.is_empty() {
        let names: Vec<&str> = trans.empty_rows.iter().map(|t| t.name()).collect();
        manifest
            .notes
            .push(format!("transition rows without support: {}", names.join(" ")));
    }
    write_manifest(&mut out, manifest)?;
    println!(
        "{} labeled nodes; wrote priors.csv, pmi.csv, transitions.csv to {}",
        labeled.len(),
        out.path().display()
    );
    Ok(())
}

fn train(ctx: &Ctx, input: &Path, features: Option<&Path>) -> Result<()> {
    let mut out = ctx.out_dir()?;
    let trees = load(input)?;
    let config = ctx.config.feature_config(features)?;
    let resources = ctx.config.load_resources()?;
    let mut manifest = ctx.manifest()?;
    manifest.input(input)?;
    if let Some(f) = features {
        manifest.config(f)?;
    }
    for p in ctx.config.resource_files() {
        manifest.input(&p)?;
    }
    let train = match &ctx.config.split {
        Some(_) => {
            let split = ctx.split(&trees)?;
            manifest
                .notes
                .push(format!("held out: {}", tree_ids(&trees, &split.test).join(" ")));
            split.select(&trees).0
        }
        None => trees,
    };
    let stack = train_stack(
        &train,
        &config,
        &ctx.config.model,
        &resources,
        &ctx.config.tags(),
        ctx.seed,
    )?;
    save_bundle(&stack, out.path())?;
    out.write("features.json", &serde_json::to_vec_pretty(&config)?)?;
    let meta = stack.metadata();
    println!(
        "trained {} tag models on {} posts from {} trees; feature width {}; features {}",
        stack.tags().len(),
        meta.num_examples,
        meta.train_trees.len(),
        stack.extractor().width(),
        config.notation()
    );
    if !meta.degenerate_tags.is_empty() {
        let names: Vec<&str> = meta.degenerate_tags.iter().map(|t| t.name()).collect();
        println!("warning: single-class targets for {}", names.join(", "));
        manifest.notes.push(format!("constant models: {}", names.join(" ")));
    }
    write_manifest(&mut out, manifest)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    tree_id: &'a str,
    node_id: &'a str,
    labels: disparse::LabelSet,
}

fn parse(ctx: &Ctx, model: &Path, input: &Path, mode: ContextMode) -> Result<()> {
    let resources = ctx.config.load_resources()?;
    let stack = load_bundle(model, resources.vectors, resources.pdtb)
        .with_context(|| format!("loading bundle {}", model.display()))?;
    let trees = load(input)?;
    let mut lines = Vec::new();
    for t in &trees {
        let pred = predict_tree(&stack, t, mode)?;
        for i in t.preorder() {
            serde_json::to_writer(
                &mut lines,
                &PredictionLine {
                    tree_id: t.tree_id(),
                    node_id: &t.node(i).node_id,
                    labels: pred[i],
                },
            )?;
            lines.push(b'\n');
        }
    }
    match &ctx.out {
        None => std::io::stdout().lock().write_all(&lines)?,
        Some(_) => {
            let mut out = ctx.out_dir()?;
            let mut manifest = ctx.manifest()?;
            manifest.input(model)?;
            manifest.input(input)?;
            if mode == ContextMode::Predicted && stack.config().use_collocation {
                manifest
                    .notes
                    .push("collocation inputs come from a first prediction pass, not gold labels".into());
            }
            out.write("predictions.ndjson", &lines)?;
            write_manifest(&mut out, manifest)?;
            eprintln!("labeled {} trees into {}", trees.len(), out.path().display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct HeldOutReport<'a> {
    mode: ContextMode,
    features: String,
    test_trees: Vec<String>,
    results: &'a disparse::eval::EvalReport,
}

fn eval(
    ctx: &Ctx,
    input: &Path,
    features: Option<&Path>,
    model: Option<&Path>,
    mode: Option<ContextMode>,
) -> Result<()> {
    let mut out = ctx.out_dir()?;
    let trees = load(input)?;
    let mode = mode.unwrap_or(ctx.config.mode);
    let mut manifest = ctx.manifest()?;
    manifest.input(input)?;
    manifest.notes.push(MACRO_NOTE.into());
    if let Some(m) = model {
        let resources = ctx.config.load_resources()?;
        let stack = load_bundle(m, resources.vectors, resources.pdtb)?;
        manifest.input(m)?;
        let report = evaluate(&stack, &trees, mode)?;
        print_summary("bundle", &report);
        let body = HeldOutReport {
            mode,
            features: stack.config().notation(),
            test_trees: trees.iter().map(|t| t.tree_id().to_owned()).collect(),
            results: &report,
        };
        return out.report(manifest, &body, &report.to_csv());
    }
    let config = ctx.config.feature_config(features)?;
    if let Some(f) = features {
        manifest.config(f)?;
    }
    for p in ctx.config.resource_files() {
        manifest.input(&p)?;
    }
    let resources = ctx.config.load_resources()?;
    let tags = ctx.config.tags();
    let setup = RunSetup {
        config: &config,
        specs: &ctx.config.model,
        resources: &resources,
        tags: &tags,
        mode,
        seed: ctx.seed,
    };
    if ctx.config.split.is_some() {
        let split = ctx.split(&trees)?;
        let (train, test) = split.select(&trees);
        let report = setup.train_and_score(&train, &test)?;
        print_summary(&config.notation(), &report);
        let body = HeldOutReport {
            mode,
            features: config.notation(),
            test_trees: tree_ids(&trees, &split.test),
            results: &report,
        };
        out.report(manifest, &body, &report.to_csv())
    } else {
        let cv = cross_validate(&trees, &setup, ctx.config.folds)?;
        println!(
            "{}-fold CV, {}: w.F1 {:.3} ± {:.3}, m.F1 {:.3} ± {:.3}",
            cv.k,
            config.notation(),
            cv.mean.weighted_f1,
            cv.std.weighted_f1,
            cv.mean.macro_f1,
            cv.std.macro_f1
        );
        #[derive(Serialize)]
        struct CvBody<'a> {
            mode: ContextMode,
            features: String,
            cross_validation: &'a disparse::eval::CvReport,
        }
        let body = CvBody {
            mode,
            features: config.notation(),
            cross_validation: &cv,
        };
        out.report(manifest, &body, &cv.to_csv())
    }
}

fn print_summary(name: &str, r: &disparse::eval::EvalReport) {
    println!(
        "{name}: w.P {:.3} w.R {:.3} w.F1 {:.3} m.F1 {:.3} over {} posts",
        r.weighted_avg.precision, r.weighted_avg.recall, r.weighted_avg.f1, r.macro_avg.f1, r.num_nodes
    );
}

fn ablate(ctx: &Ctx, input: &Path) -> Result<()> {
    let mut out = ctx.out_dir()?;
    let trees = load(input)?;
    let split = ctx.split(&trees)?;
    let (train, test) = split.select(&trees);
    let a = &ctx.config.ablation;
    let grid = a
        .grid
        .clone()
        .unwrap_or_else(|| ablation_grid(a.bow_dimension, a.weighting));
    let resources = ctx.config.load_resources()?;
    let tags = ctx.config.tags();
    let setup = RunSetup {
        config: &grid[0],
        specs: &ctx.config.model,
        resources: &resources,
        tags: &tags,
        mode: ctx.config.mode,
        seed: ctx.seed,
    };
    let rows = run_ablation(&train, &test, &grid, &setup)?;
    println!(
        "{:<24} {:>6} {:>6} {:>6} {:>6}",
        "features", "w.P", "w.R", "w.F1", "m.F1"
    );
    for r in &rows {
        let s = r.summary;
        println!(
            "{:<24} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
            r.features, s.weighted_precision, s.weighted_recall, s.weighted_f1, s.macro_f1
        );
    }
    let mut manifest = ctx.manifest()?;
    manifest.input(input)?;
    for p in ctx.config.resource_files() {
        manifest.input(&p)?;
    }
    manifest.notes.push(MACRO_NOTE.into());
    #[derive(Serialize)]
    struct Body<'a> {
        mode: ContextMode,
        test_trees: Vec<String>,
        rows: &'a [disparse::eval::AblationRow],
    }
    let body = Body {
        mode: ctx.config.mode,
        test_trees: tree_ids(&trees, &split.test),
        rows: &rows,
    };
    out.report(manifest, &body, &ablation_csv(&rows))
}

fn default_noise(seed: u64) -> Vec<NoiseSpec> {
    let mut specs = Vec::new();
    for mode in [NoiseMode::Mask, NoiseMode::Substitute, NoiseMode::Add] {
        for fraction in [0.1, 0.2, 0.5] {
            specs.push(NoiseSpec {
                mode,
                fraction,
                targets: NoiseTargets::Both,
                seed,
            });
        }
    }
    specs
}

fn noise(ctx: &Ctx, input: &Path, features: Option<&Path>) -> Result<()> {
    let mut out = ctx.out_dir()?;
    let trees = load(input)?;
    let config = ctx.config.feature_config(features)?;
    if !config.uses_labels() {
        return Err(usage(
            "noise experiments need label features (label_sequence_depth or use_collocation)",
        ));
    }
    let split = ctx.split(&trees)?;
    let (train, test) = split.select(&trees);
    let resources = ctx.config.load_resources()?;
    let stack = train_stack(
        &train,
        &config,
        &ctx.config.model,
        &resources,
        &ctx.config.tags(),
        ctx.seed,
    )?;
    let priors = priors_of(&train)?;
    let specs = if ctx.config.noise.is_empty() {
        default_noise(ctx.seed)
    } else {
        ctx.config.noise.clone()
    };
    let rows = noise_experiment(&stack, &test, &specs, &priors)?;
    for r in &rows {
        println!(
            "{:<28} w.F1 {:.3}  m.F1 {:.3}",
            r.label, r.summary.weighted_f1, r.summary.macro_f1
        );
    }
    let mut manifest = ctx.manifest()?;
    manifest.input(input)?;
    if let Some(f) = features {
        manifest.config(f)?;
    }
    for p in ctx.config.resource_files() {
        manifest.input(&p)?;
    }
    manifest.notes.push("noise touches test-time label inputs only".into());
    manifest.notes.push(MACRO_NOTE.into());
    #[derive(Serialize)]
    struct Body<'a> {
        features: String,
        test_trees: Vec<String>,
        rows: &'a [disparse::eval::NoiseRow],
    }
    let body = Body {
        features: config.notation(),
        test_trees: tree_ids(&trees, &split.test),
        rows: &rows,
    };
    out.report(manifest, &body, &noise_csv(&rows))
}

fn synth(ctx: &Ctx, seed: Option<u64>, spec: Option<&Path>, preset: Option<Preset>, trees: usize) -> Result<()> {
    let mut out = ctx.out_dir()?;
    let mut manifest = ctx.manifest()?;
    let mut spec: SyntheticSpec = match (spec, preset) {
        (Some(p), _) => {
            manifest.config(p)?;
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            serde_json::from_reader(std::io::BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))?
        }
        (None, Some(Preset::Planted)) => SyntheticSpec::planted_cues(trees, 0),
        (None, Some(Preset::Dependencies)) => SyntheticSpec::with_dependencies(trees, 0),
        (None, None) => return Err(usage("`synth` needs --spec <file> or --preset")),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    manifest.seed = spec.seed;
    let corpus = generate_synthetic(&spec)?;
    out.write("trees.ndjson", &ndjson(corpus.trees.iter().flat_map(|t| t.records()))?)?;
    out.write("truth.json", &serde_json::to_vec_pretty(&corpus.truth)?)?;
    if let Some((inv, lines)) = &corpus.pdtb {
        out.write("pdtb.ndjson", &ndjson(lines)?)?;
        out.write("pdtb_inventory.txt", (inv.tags().join("\n") + "\n").as_bytes())?;
    }
    write_manifest(&mut out, manifest)?;
    let t = &corpus.truth;
    println!(
        "generated {} trees, {} nodes ({} labeled, {} labels), {} branches into {}",
        t.num_trees,
        t.num_nodes,
        t.num_labeled_nodes,
        t.num_labels,
        t.num_branches,
        out.path().display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
