use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use oniontext::corpus::{
    compute_stats, fuse_sources, load_corpus, write_corpus, Document, Mode, SourceName, SourceTag,
};
use oniontext::eval::{parse_report, render_report, ReportFormat};
use oniontext::extract::{load_selector_configs, SelectorRegistry};
use oniontext::fixtures::{generate_corpus, synthetic_marketplace_config, GeneratorSpec, TemplateMix};
use oniontext::model::{classify_two_level, load_model, predict, save_model, Task, TrainingConfig};
use oniontext::pipeline::{
    check_model_taxonomy, eligible, evaluate_model, prepare_document, preprocess_document,
    split_for_task, train_task, TrainOptions,
};
use oniontext::preprocess::PreprocessResources;
use oniontext::resources::{export_all, DATA_DIR_ENV};
use oniontext::taxonomy::{validate_taxonomy, Taxonomy, DRUGS};

#[derive(Parser)]
#[command(name = "oniontext", version, about = "Dark-web page text classification pipeline")]
struct Cli {
    /// Directory whose resource files override the embedded tables.
    #[arg(long, global = true, env = DATA_DIR_ENV, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse labeled source collections into one corpus under the canonical taxonomy.
    Ingest(IngestArgs),
    /// Pull visible text out of each document's HTML.
    Extract(ExtractArgs),
    /// Clean, filter and lemmatize extracted text into tokens.
    Preprocess(StageArgs),
    /// Fit a vocabulary and train a classifier for one task.
    Train(TrainArgs),
    /// Score a model on the held-out split (or the whole corpus).
    Evaluate(EvaluateArgs),
    /// Classify one page, or every document of a corpus file.
    Predict(PredictArgs),
    /// Re-render a saved evaluation report, or print corpus statistics.
    Report(ReportArgs),
    /// Write a seeded synthetic labeled corpus.
    GenFixtures(GenArgs),
    /// Check the taxonomy tables for counts and referential integrity.
    ValidateTaxonomy(ValidateArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Corpus file (JSON Lines).
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// JSON manifest: a list of {source, mode, path, label_scheme}.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    io: StageArgs,
    /// Marketplace selector configurations (JSON Lines).
    #[arg(long)]
    selectors: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = TrainingConfig::default().seed)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: Task,
    #[arg(short, long)]
    input: PathBuf,
    /// Model file to write.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = TrainingConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainingConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainingConfig::default().learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = oniontext::features::DEFAULT_MIN_DF)]
    min_df: usize,
    /// Also write the per-epoch loss trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    selectors: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(short, long)]
    input: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    #[command(flatten)]
    split: SplitArgs,
    /// Score every labeled document instead of the held-out split.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    selectors: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Main-class model.
    #[arg(long)]
    model: PathBuf,
    /// Drug sub-class model, consulted when the main class is Drugs.
    #[arg(long)]
    drugs_model: Option<PathBuf>,
    /// A page (HTML or text), or a `.jsonl` corpus for batch prediction.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "general")]
    mode: Mode,
    /// Marketplace whose selectors apply in marketplace mode.
    #[arg(long, default_value = "Synthetic")]
    marketplace: SourceName,
    #[arg(long)]
    selectors: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved JSON evaluation report.
    #[arg(short, long, required_unless_present = "corpus")]
    input: Option<PathBuf>,
    /// Print per-source and per-class counts of a corpus instead.
    #[arg(long, conflicts_with = "input")]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "main")]
    classes: Task,
    #[arg(long, default_value_t = GeneratorSpec::default().docs_per_class)]
    per_class: usize,
    #[arg(long, default_value_t = GeneratorSpec::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = GeneratorSpec::default().separation)]
    separation: f64,
    #[arg(long, default_value_t = GeneratorSpec::default().tokens_per_doc)]
    tokens_per_doc: usize,
    /// Template weights as general,marketplace,pretext.
    #[arg(long, default_value = "1,0,0")]
    template_mix: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Write the embedded resource tables into this directory first.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum LabelScheme {
    Canonical,
    Duta,
    Agora,
}

#[derive(Deserialize)]
struct ManifestEntry {
    source: String,
    mode: String,
    /// A corpus `.jsonl` file, or a directory of `<label path>/<page>` files.
    path: PathBuf,
    #[serde(default = "canonical")]
    label_scheme: LabelScheme,
}

fn canonical() -> LabelScheme {
    LabelScheme::Canonical
}

struct Ctx {
    data_dir: Option<PathBuf>,
}

impl Ctx {
    fn taxonomy(&self) -> Result<Taxonomy> {
        Taxonomy::load(self.data_dir.as_deref()).context("taxonomy")
    }

    fn resources(&self) -> Result<PreprocessResources> {
        PreprocessResources::load(self.data_dir.as_deref()).context("preprocess resources")
    }
}

fn selectors(path: Option<&Path>) -> Result<SelectorRegistry> {
    let mut registry = match path {
        Some(p) => load_selector_configs(p).context("extract")?,
        None => SelectorRegistry::new(),
    };
    let synthetic = synthetic_marketplace_config();
    registry
        .entry(synthetic.marketplace_name.clone())
        .or_insert(synthetic);
    Ok(registry)
}

/// Refuses to overwrite any of the inputs.
fn guard_output(output: &Path, inputs: &[&Path]) -> Result<()> {
    let out = fs::canonicalize(output).ok();
    for input in inputs {
        if out.is_some() && out == fs::canonicalize(input).ok() {
            bail!("output {} would overwrite an input file", output.display());
        }
    }
    Ok(())
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

/// Extracts and preprocesses, in parallel, every document that still lacks
/// tokens. Output order equals input order.
fn ensure_tokens(
    docs: Vec<Document>,
    registry: &SelectorRegistry,
    res: &PreprocessResources,
) -> Result<Vec<Document>> {
    docs.into_par_iter()
        .map(|d| {
            if d.tokens.is_some() || d.skipped {
                Ok(d)
            } else if d.extracted_text.is_some() {
                preprocess_document(d, res)
            } else {
                prepare_document(d, registry, res)
            }
        })
        .collect::<oniontext::Result<Vec<_>>>()
        .context("preprocess")
}

fn relabel(
    doc: Document,
    scheme: &LabelScheme,
    taxonomy: &Taxonomy,
) -> Result<Option<Document>> {
    let main = doc.main_label.clone();
    let sub = doc.drug_sublabel.clone();
    let mapped = match scheme {
        LabelScheme::Canonical => {
            let doc = match main.as_deref() {
                Some(m) if !taxonomy.is_main_class(m) => match m.strip_prefix("Drugs/") {
                    Some(rest) if sub.is_none() => doc.with_labels(Some(DRUGS), Some(rest)),
                    _ => doc,
                },
                _ => doc,
            };
            doc.check_labels(taxonomy)
                .with_context(|| format!("ingest: document {}", doc.id))?;
            return Ok(Some(doc));
        }
        LabelScheme::Duta => {
            let label = main.with_context(|| format!("ingest: document {} has no label", doc.id))?;
            taxonomy.map_duta_label(&label, sub.as_deref())
        }
        LabelScheme::Agora => {
            let label = main.with_context(|| format!("ingest: document {} has no label", doc.id))?;
            taxonomy.map_agora_label(&label)
        }
    }
    .with_context(|| format!("ingest: document {}", doc.id))?;
    Ok(mapped
        .main_class
        .class()
        .map(|class| doc.with_labels(Some(class), mapped.drug_sublabel.as_deref())))
}

fn collect_pages(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_pages(root, &path, out)?;
        } else if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("html" | "htm" | "txt")
        ) {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push((rel, path));
        }
    }
    Ok(())
}

fn read_source(entry: &ManifestEntry, tag: SourceTag) -> Result<Vec<Document>> {
    if entry.path.is_file() {
        return load_corpus(&entry.path).context("ingest");
    }
    let mut pages = Vec::new();
    collect_pages(&entry.path, &entry.path, &mut pages)?;
    pages
        .into_iter()
        .map(|(rel, path)| {
            let body = fs::read_to_string(&path)
                .with_context(|| format!("ingest: reading {}", path.display()))?;
            let label = rel.rsplit_once('/').map(|(dir, _)| dir.to_owned());
            let id = format!("{}:{rel}", tag.name);
            let doc = match tag.mode {
                Mode::Pretext => Document::from_text(id, tag, body),
                _ => Document::from_html(id, tag, body),
            };
            Ok(match (&entry.label_scheme, label) {
                (LabelScheme::Duta, Some(l)) => match l.split_once('/') {
                    Some((main, sub)) => doc.with_labels(Some(main), Some(sub)),
                    None => doc.with_labels(Some(&l), None),
                },
                (_, l) => doc.with_labels(l.as_deref(), None),
            })
        })
        .collect()
}

fn ingest(ctx: &Ctx, args: IngestArgs) -> Result<()> {
    let taxonomy = ctx.taxonomy()?;
    let text = fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).context("ingest: manifest")?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let mut batches = Vec::new();
    let mut dropped = 0usize;
    for mut entry in entries {
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        guard_output(&args.output, &[&entry.path])?;
        let tag = SourceTag::new(
            entry.source.parse().map_err(|e: String| anyhow::anyhow!("ingest: manifest source: {e}"))?,
            entry.mode.parse().map_err(|e: String| anyhow::anyhow!("ingest: manifest mode: {e}"))?,
        );
        let mut kept = Vec::new();
        for doc in read_source(&entry, tag)? {
            match relabel(doc, &entry.label_scheme, &taxonomy)? {
                Some(d) => kept.push(d),
                None => dropped += 1,
            }
        }
        batches.push((tag, kept));
    }
    let (docs, stats) = fuse_sources(batches).context("ingest")?;
    write_corpus(&args.output, &docs).context("ingest")?;
    eprint!("{}", stats.render());
    eprintln!("dropped: {dropped}");
    Ok(())
}

fn extract(args: ExtractArgs) -> Result<()> {
    guard_output(&args.io.output, &[&args.io.input])?;
    let registry = selectors(args.selectors.as_deref())?;
    let docs = load_corpus(&args.io.input).context("extract")?;
    let docs: Vec<Document> = docs
        .into_par_iter()
        .map(|d| oniontext::extract::extract_document(d, &registry))
        .collect::<oniontext::Result<_>>()
        .context("extract")?;
    let skipped = docs.iter().filter(|d| d.skipped).count();
    write_corpus(&args.io.output, &docs).context("extract")?;
    eprintln!("extracted {} documents, {skipped} skipped", docs.len());
    Ok(())
}

fn preprocess(ctx: &Ctx, args: StageArgs) -> Result<()> {
    guard_output(&args.output, &[&args.input])?;
    let res = ctx.resources()?;
    let docs = load_corpus(&args.input).context("preprocess")?;
    let docs: Vec<Document> = docs
        .into_par_iter()
        .map(|d| preprocess_document(d, &res))
        .collect::<oniontext::Result<_>>()
        .context("preprocess")?;
    write_corpus(&args.output, &docs).context("preprocess")?;
    Ok(())
}

fn train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    guard_output(&args.output, &[&args.input])?;
    let taxonomy = ctx.taxonomy()?;
    let registry = selectors(args.selectors.as_deref())?;
    let docs = ensure_tokens(
        load_corpus(&args.input).context("train")?,
        &registry,
        &ctx.resources()?,
    )?;
    let opts = TrainOptions {
        test_fraction: args.split.test_fraction,
        val_fraction: args.split.val_fraction,
        min_df: args.min_df,
        config: TrainingConfig {
            epochs: args.epochs,
            batch_size: args.batch_size,
            learning_rate: args.lr,
            seed: args.split.seed,
            ..TrainingConfig::default()
        },
    };
    let outcome = train_task(&docs, args.task, &taxonomy, &opts).context("train")?;
    save_model(&outcome.model, &args.output).context("train")?;
    for e in &outcome.trace.epochs {
        eprint!("epoch {} train_loss {:.6}", e.epoch, e.train_loss);
        if let (Some(l), Some(a)) = (e.validation_loss, e.validation_accuracy) {
            eprint!(" val_loss {l:.6} val_accuracy {a:.4}");
        }
        eprintln!();
    }
    eprintln!(
        "trained on {} documents ({} validation, {} held out), vocabulary {}",
        outcome.n_train,
        outcome.n_validation,
        outcome.test_ids.len(),
        outcome.model.dimension()
    );
    if let Some(path) = args.trace {
        emit(Some(&path), &serde_json::to_string_pretty(&outcome.trace)?)?;
    }
    Ok(())
}

fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<()> {
    if let Some(out) = &args.output {
        guard_output(out, &[&args.input, &args.model])?;
    }
    let taxonomy = ctx.taxonomy()?;
    let model = load_model(&args.model).context("evaluate")?;
    check_model_taxonomy(&model, &taxonomy).context("evaluate")?;
    let registry = selectors(args.selectors.as_deref())?;
    let docs = ensure_tokens(
        load_corpus(&args.input).context("evaluate")?,
        &registry,
        &ctx.resources()?,
    )?;
    let scored = if args.all {
        eligible(&docs, model.task)
    } else {
        split_for_task(
            &docs,
            model.task,
            args.split.test_fraction,
            args.split.val_fraction,
            args.split.seed,
        )
        .context("evaluate")?
        .test
    };
    if scored.is_empty() {
        bail!("evaluate: no labeled {} documents to score", model.task);
    }
    let report = evaluate_model(&model, &scored).context("evaluate")?;
    emit(args.output.as_deref(), &render_report(&report, args.format))
}

fn predict_cmd(ctx: &Ctx, args: PredictArgs) -> Result<()> {
    let taxonomy = ctx.taxonomy()?;
    let main = load_model(&args.model).context("predict")?;
    check_model_taxonomy(&main, &taxonomy).context("predict")?;
    let drugs = match &args.drugs_model {
        Some(p) => {
            let m = load_model(p).context("predict")?;
            check_model_taxonomy(&m, &taxonomy).context("predict")?;
            if m.task != Task::Drugs {
                bail!("predict: {} is a {} model, expected drugs", p.display(), m.task);
            }
            Some(m)
        }
        None => None,
    };
    let registry = selectors(args.selectors.as_deref())?;
    let res = ctx.resources()?;
    let batch = args.input.extension().and_then(|e| e.to_str()) == Some("jsonl");
    let docs = if batch {
        load_corpus(&args.input).context("predict")?
    } else {
        let body = fs::read_to_string(&args.input)
            .with_context(|| format!("reading {}", args.input.display()))?;
        let tag = SourceTag::new(args.marketplace, args.mode);
        let id = args.input.display().to_string();
        vec![match args.mode {
            Mode::Pretext => Document::from_text(id, tag, body),
            _ => Document::from_html(id, tag, body),
        }]
    };
    let docs = ensure_tokens(docs, &registry, &res)?;
    let lines: Vec<String> = docs
        .par_iter()
        .map(|d| -> Result<String> {
            let prefix = if batch { format!("{}\t", d.id) } else { String::new() };
            if d.skipped {
                return Ok(format!("{prefix}SKIPPED"));
            }
            let tokens = d.tokens.as_deref().unwrap_or_default();
            let line = match &drugs {
                Some(drugs) => {
                    let p = classify_two_level(&main, drugs, tokens)
                        .with_context(|| format!("predict: document {}", d.id))?;
                    match (p.drug_sublabel, p.drug_confidence) {
                        (Some(s), Some(c)) => {
                            format!("{}\t{:.4}\t{s}\t{c:.4}", p.main_label, p.main_confidence)
                        }
                        _ => format!("{}\t{:.4}", p.main_label, p.main_confidence),
                    }
                }
                None => {
                    let (i, c) = predict(&main, &main.transform(tokens))
                        .with_context(|| format!("predict: document {}", d.id))?;
                    format!("{}\t{c:.4}", main.class_names[i])
                }
            };
            Ok(prefix + &line)
        })
        .collect::<Result<_>>()?;
    emit(args.output.as_deref(), &(lines.join("\n") + "\n"))
}

fn report(args: ReportArgs) -> Result<()> {
    let text = if let Some(corpus) = &args.corpus {
        compute_stats(&load_corpus(corpus).context("report")?).render()
    } else {
        let input = args.input.as_deref().expect("clap enforces input or corpus");
        let body = fs::read_to_string(input)
            .with_context(|| format!("reading {}", input.display()))?;
        render_report(&parse_report(&body).context("report")?, args.format)
    };
    emit(args.output.as_deref(), &text)
}

fn gen_fixtures(ctx: &Ctx, args: GenArgs) -> Result<()> {
    let weights: Vec<f64> = args
        .template_mix
        .split(',')
        .map(|w| w.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("--template-mix expects three comma-separated numbers")?;
    let [general, marketplace, pretext] = weights[..] else {
        bail!("--template-mix expects three comma-separated numbers");
    };
    let spec = GeneratorSpec {
        seed: args.seed,
        docs_per_class: args.per_class,
        classes: args.classes,
        separation: args.separation,
        tokens_per_doc: args.tokens_per_doc,
        template: TemplateMix {
            general,
            marketplace,
            pretext,
        },
        ..GeneratorSpec::default()
    };
    let docs = generate_corpus(&spec, &ctx.taxonomy()?).context("gen-fixtures")?;
    write_corpus(&args.output, &docs).context("gen-fixtures")?;
    eprintln!("wrote {} documents", docs.len());
    Ok(())
}

fn validate(ctx: &Ctx, args: ValidateArgs) -> Result<()> {
    if let Some(dir) = &args.export {
        export_all(dir).context("validate-taxonomy")?;
    }
    let report = validate_taxonomy(&ctx.taxonomy()?);
    print!("{report}");
    if !report.passed() {
        bail!("validate-taxonomy: taxonomy tables failed validation");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        data_dir: cli.data_dir,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Extract(a) => extract(a),
        Command::Preprocess(a) => preprocess(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Predict(a) => predict_cmd(&ctx, a),
        Command::Report(a) => report(a),
        Command::GenFixtures(a) => gen_fixtures(&ctx, a),
        Command::ValidateTaxonomy(a) => validate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
