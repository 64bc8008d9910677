//! Pipeline driver: corpus generation, preprocessing, split inspection,
//! training, summary generation, and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
//! invariant violation. `CAST_SEED` supplies the seed when neither a
//! flag nor a config file does.

mod config;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use config::RunConfig;
use treesum_core::metrics::{eval_report, ScoredPair};
use treesum_core::model::{generate, DecodeMode, ModelConfig, SummaryModel};
use treesum_core::nn::{load_checkpoint, save_checkpoint};
use treesum_core::preprocess::{
    build_vocab, encode_example, generate_records, preprocess_record, read_corpus, read_dataset,
    write_corpus, write_dataset, Channel, EncodedExample, Vocabulary,
};
use treesum_core::splitter::{split, split_stats};
use treesum_core::train::{load_vocab, train, vocab_paths, TrainLogRecord};
use treesum_core::{frontend, MethodAst};

#[derive(Parser)]
#[command(name = "treesum", version, about = "Tree-splitting code summarization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus (JSONL).
    Gen(GenArgs),
    /// Parse, split, normalize, and encode a corpus; build vocabularies.
    Preprocess(PreprocessArgs),
    /// Dump per-method subtree splits with summary statistics.
    Split(SplitArgs),
    /// Train a model and write the best checkpoint plus a JSONL log.
    Train(TrainArgs),
    /// Decode summaries for an encoded dataset with a checkpoint.
    Summarize(SummarizeArgs),
    /// Score hypotheses against references with all four metrics.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Hold out the last N examples as the validation split.
    #[arg(long, default_value_t = 0)]
    valid_count: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ast_vocab_cap: Option<usize>,
    #[arg(long)]
    code_vocab_cap: Option<usize>,
    #[arg(long)]
    summary_vocab_cap: Option<usize>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    vocab_dir: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    /// Initialize parameters from an existing checkpoint.
    #[arg(long)]
    init_from: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long = "no_copy", default_value_t = false)]
    no_copy: bool,
    #[arg(long = "no_aggregation", default_value_t = false)]
    no_aggregation: bool,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab_dir: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "greedy")]
    mode: String,
    #[arg(long, default_value_t = 4)]
    beam_width: usize,
    #[arg(long, default_value_t = 1.0)]
    length_penalty: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    hyps: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn data_err<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves exit code 2; usage errors here are 1.
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };
    let result = std::panic::catch_unwind(|| run(cli));
    match result {
        Ok(Ok(())) => {}
        Ok(Err(err)) => {
            eprintln!("error: {}", err.message());
            std::process::exit(err.code());
        }
        Err(_) => {
            eprintln!("error: internal invariant violation");
            std::process::exit(3);
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("CAST_SEED").ok().and_then(|s| s.parse().ok())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
        }
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Split(args) => cmd_split(args),
        Command::Train(args) => cmd_train(args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let seed = args.seed.or_else(env_seed).unwrap_or(1);
    let records = generate_records(seed, args.n);
    write_corpus(&args.out, &records)
        .map_err(data_err(&format!("writing {}", args.out.display())))?;
    println!("wrote {} methods to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.ast_vocab_cap {
        cfg.ast_vocab_cap = v;
    }
    if let Some(v) = args.code_vocab_cap {
        cfg.code_vocab_cap = v;
    }
    if let Some(v) = args.summary_vocab_cap {
        cfg.summary_vocab_cap = v;
    }
    let records = read_corpus(&args.input)
        .map_err(data_err(&format!("reading {}", args.input.display())))?;
    let limits = cfg.limits();
    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for record in &records {
        match preprocess_record(&record.id, &record.code, record.summary.as_deref(), &limits) {
            Ok(example) => examples.push(example),
            Err(e) => {
                log::warn!("skipping {}: {e}", record.id);
                skipped += 1;
            }
        }
    }
    if examples.is_empty() {
        return Err(CliError::Data("no example survived preprocessing".into()));
    }
    if args.valid_count >= examples.len() {
        return Err(CliError::Usage(format!(
            "--valid-count {} leaves no training examples (corpus has {})",
            args.valid_count,
            examples.len()
        )));
    }
    let valid_start = examples.len() - args.valid_count;
    let (train_examples, valid_examples) = examples.split_at(valid_start);

    let ast_vocab = build_vocab(train_examples, Channel::Ast, cfg.ast_vocab_cap);
    let code_vocab = build_vocab(train_examples, Channel::Code, cfg.code_vocab_cap);
    let summary_vocab = build_vocab(train_examples, Channel::Summary, cfg.summary_vocab_cap);

    std::fs::create_dir_all(&args.out_dir)
        .map_err(data_err(&format!("creating {}", args.out_dir.display())))?;
    let (ast_path, code_path, summary_path) = vocab_paths(&args.out_dir);
    for (path, vocab) in [
        (&ast_path, &ast_vocab),
        (&code_path, &code_vocab),
        (&summary_path, &summary_vocab),
    ] {
        std::fs::write(path, vocab.to_json())
            .map_err(data_err(&format!("writing {}", path.display())))?;
    }

    let encode_all = |examples: &[treesum_core::preprocess::Example]| {
        examples
            .iter()
            .map(|e| encode_example(e, &ast_vocab, &code_vocab, &summary_vocab))
            .collect::<Vec<_>>()
    };
    let write_refs = |path: &Path, examples: &[treesum_core::preprocess::Example]| {
        let records: Vec<serde_json::Value> = examples
            .iter()
            .map(|e| json!({"id": e.id, "summary": e.summary_tokens.join(" ")}))
            .collect();
        let mut writer = BufWriter::new(File::create(path)?);
        for rec in records {
            serde_json::to_writer(&mut writer, &rec)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    };

    let train_path = args.out_dir.join("train.jsonl");
    write_dataset(&train_path, &encode_all(train_examples))
        .map_err(data_err(&format!("writing {}", train_path.display())))?;
    write_refs(&args.out_dir.join("refs.train.jsonl"), train_examples)
        .map_err(data_err("writing train references"))?;
    if args.valid_count > 0 {
        let valid_path = args.out_dir.join("valid.jsonl");
        write_dataset(&valid_path, &encode_all(valid_examples))
            .map_err(data_err(&format!("writing {}", valid_path.display())))?;
        write_refs(&args.out_dir.join("refs.valid.jsonl"), valid_examples)
            .map_err(data_err("writing valid references"))?;
    }
    println!(
        "preprocessed {} examples ({} skipped) into {} (vocab sizes ast={} code={} summary={})",
        examples.len(),
        skipped,
        args.out_dir.display(),
        ast_vocab.size(),
        code_vocab.size(),
        summary_vocab.size()
    );
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    let records = read_corpus(&args.input)
        .map_err(data_err(&format!("reading {}", args.input.display())))?;
    let file = File::create(&args.out)
        .map_err(data_err(&format!("creating {}", args.out.display())))?;
    let mut writer = BufWriter::new(file);
    let mut parsed = 0usize;
    let mut skipped = 0usize;
    let mut subtree_total = 0usize;
    let mut max_subtree_depth = 0usize;
    let mut max_full_depth = 0usize;
    for record in &records {
        let ast: MethodAst = match frontend::parse_source(&record.code) {
            Ok(parsed) => parsed.ast,
            Err(e) => {
                log::warn!("skipping {}: {e}", record.id);
                skipped += 1;
                continue;
            }
        };
        let result = split(&ast);
        let stats = split_stats(&result);
        parsed += 1;
        subtree_total += stats.subtree_count;
        max_subtree_depth = max_subtree_depth.max(stats.max_subtree_depth);
        max_full_depth = max_full_depth.max(stats.full_tree_depth);
        let mut line = serde_json::to_value(result.to_dump())
            .map_err(|e| CliError::Internal(format!("split dump: {e}")))?;
        line["id"] = json!(record.id);
        line["stats"] = serde_json::to_value(stats)
            .map_err(|e| CliError::Internal(format!("stats dump: {e}")))?;
        serde_json::to_writer(&mut writer, &line)
            .and_then(|()| {
                use std::io::Write as _;
                writer.write_all(b"\n").map_err(serde_json::Error::io)
            })
            .map_err(data_err("writing split dump"))?;
    }
    let summary = json!({"stats": {
        "methods": parsed,
        "skipped": skipped,
        "subtree_count_total": subtree_total,
        "max_subtree_depth": max_subtree_depth,
        "max_full_tree_depth": max_full_depth,
    }});
    serde_json::to_writer(&mut writer, &summary).map_err(data_err("writing stats"))?;
    writer
        .write_all(b"\n")
        .and_then(|()| writer.flush())
        .map_err(data_err("flushing output"))?;
    println!("split {parsed} methods ({skipped} skipped) into {}", args.out.display());
    Ok(())
}

fn read_vocabs(dir: &Path) -> Result<(Vocabulary, Vocabulary, Vocabulary), CliError> {
    let (ast_path, code_path, summary_path) = vocab_paths(dir);
    let ast = load_vocab(&ast_path).map_err(data_err(&format!("reading {}", ast_path.display())))?;
    let code =
        load_vocab(&code_path).map_err(data_err(&format!("reading {}", code_path.display())))?;
    let summary = load_vocab(&summary_path)
        .map_err(data_err(&format!("reading {}", summary_path.display())))?;
    Ok((ast, code, summary))
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.seed.or_else(env_seed) {
        cfg.seed = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.heads {
        cfg.heads = v;
    }
    cfg.no_copy |= args.no_copy;
    cfg.no_aggregation |= args.no_aggregation;

    let train_set = read_dataset(&args.train)
        .map_err(data_err(&format!("reading {}", args.train.display())))?;
    let valid_set = read_dataset(&args.valid)
        .map_err(data_err(&format!("reading {}", args.valid.display())))?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(CliError::Data("empty train or valid dataset".into()));
    }
    let (ast_vocab, code_vocab, summary_vocab) = read_vocabs(&args.vocab_dir)?;
    validate_ids(&train_set, &ast_vocab, &code_vocab, &summary_vocab)?;
    let model_config = cfg.model_config(ast_vocab.size(), code_vocab.size(), summary_vocab.size());

    let model: SummaryModel<f32> = match &args.init_from {
        Some(path) => {
            let params = load_checkpoint(path)
                .map_err(data_err(&format!("reading {}", path.display())))?;
            SummaryModel::from_params(model_config.clone(), params)
                .map_err(|e| CliError::Data(format!("checkpoint mismatch: {e}")))?
        }
        None => SummaryModel::new(model_config.clone(), cfg.seed),
    };

    let mut log_writer: Box<dyn Write> = match &args.log {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(data_err(&format!("creating {}", path.display())))?,
        )),
        None => Box::new(std::io::stdout()),
    };
    // Effective config echoed as the log header.
    let header = json!({"config": cfg, "model": model_config});
    writeln!(log_writer, "{header}").map_err(data_err("writing log header"))?;

    let options = cfg.train_options();
    let outcome = train(
        model,
        &train_set,
        &valid_set,
        &summary_vocab,
        &options,
        Some(&args.checkpoint),
        |record: &TrainLogRecord| {
            if let Ok(line) = serde_json::to_string(record) {
                let _ = writeln!(log_writer, "{line}");
            }
        },
    )
    .map_err(|e| CliError::Data(format!("training failed: {e}")))?;
    log_writer.flush().map_err(data_err("flushing log"))?;

    save_checkpoint(&outcome.model.params, &args.checkpoint)
        .map_err(data_err(&format!("writing {}", args.checkpoint.display())))?;
    let meta_path = checkpoint_meta_path(&args.checkpoint);
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&outcome.model.config)
            .map_err(|e| CliError::Internal(format!("config serialize: {e}")))?,
    )
    .map_err(data_err(&format!("writing {}", meta_path.display())))?;
    println!(
        "trained {} epochs (early stop: {}), best validation loss {:.4}, checkpoint {}",
        outcome.log.len(),
        outcome.stopped_early,
        outcome.best_valid_loss,
        args.checkpoint.display()
    );
    Ok(())
}

fn checkpoint_meta_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    checkpoint.with_file_name(name)
}

fn validate_ids(
    examples: &[EncodedExample],
    ast: &Vocabulary,
    code: &Vocabulary,
    summary: &Vocabulary,
) -> Result<(), CliError> {
    for ex in examples {
        let code_bad = ex.code_ids.iter().any(|&id| id as usize >= code.size());
        let sum_bad = ex.summary_ids.iter().any(|&id| id as usize >= summary.size());
        let ast_bad = ex
            .subtrees
            .iter()
            .flat_map(|t| t.label_ids.iter())
            .any(|&id| id as usize >= ast.size());
        if code_bad || sum_bad || ast_bad {
            return Err(CliError::Data(format!(
                "example {}: token ids exceed vocabulary sizes (ast={} code={} summary={}); \
                 dataset and vocab files disagree",
                ex.id,
                ast.size(),
                code.size(),
                summary.size()
            )));
        }
    }
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> Result<(), CliError> {
    let meta_path = checkpoint_meta_path(&args.checkpoint);
    let meta = std::fs::read_to_string(&meta_path)
        .map_err(data_err(&format!("reading {}", meta_path.display())))?;
    let model_config: ModelConfig =
        serde_json::from_str(&meta).map_err(data_err(&format!("parsing {}", meta_path.display())))?;
    let params = load_checkpoint::<f32>(&args.checkpoint)
        .map_err(data_err(&format!("reading {}", args.checkpoint.display())))?;
    let model = SummaryModel::from_params(model_config, params)
        .map_err(|e| CliError::Data(format!("checkpoint mismatch: {e}")))?;
    let (_, _, summary_vocab) = read_vocabs(&args.vocab_dir)?;

    let mode = match args.mode.as_str() {
        "greedy" => DecodeMode::Greedy,
        "beam" => DecodeMode::Beam {
            width: args.beam_width,
            length_penalty: args.length_penalty,
        },
        other => return Err(CliError::Usage(format!("unknown decode mode {other:?}"))),
    };

    let examples = read_dataset(&args.input)
        .map_err(data_err(&format!("reading {}", args.input.display())))?;
    let file = File::create(&args.out)
        .map_err(data_err(&format!("creating {}", args.out.display())))?;
    let mut writer = BufWriter::new(file);
    for example in &examples {
        let output = generate(&model, example, &summary_vocab, mode)
            .map_err(|e| CliError::Data(format!("decoding {}: {e}", example.id)))?;
        let line = json!({"id": example.id, "summary": output.tokens.join(" ")});
        serde_json::to_writer(&mut writer, &line).map_err(data_err("writing summary"))?;
        writer.write_all(b"\n").map_err(data_err("writing summary"))?;
    }
    writer.flush().map_err(data_err("flushing output"))?;
    println!("wrote {} summaries to {}", examples.len(), args.out.display());
    Ok(())
}

#[derive(Deserialize)]
struct SummaryLine {
    id: String,
    summary: String,
}

fn read_summaries(path: &Path) -> Result<Vec<SummaryLine>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(data_err(&format!("reading {}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SummaryLine = serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(parsed);
    }
    Ok(out)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let hyps = read_summaries(&args.hyps)?;
    let refs = read_summaries(&args.refs)?;
    let hyp_ids: BTreeSet<&str> = hyps.iter().map(|h| h.id.as_str()).collect();
    let ref_ids: BTreeSet<&str> = refs.iter().map(|r| r.id.as_str()).collect();
    if hyp_ids != ref_ids {
        let missing: Vec<&&str> = ref_ids.difference(&hyp_ids).collect();
        let extra: Vec<&&str> = hyp_ids.difference(&ref_ids).collect();
        return Err(CliError::Data(format!(
            "hypothesis/reference ids misaligned; missing from hyps: {missing:?}; extra in hyps: {extra:?}"
        )));
    }
    let tokenize = |s: &str| -> Vec<String> {
        s.split_whitespace().map(|t| t.to_lowercase()).collect()
    };
    let ref_by_id: std::collections::HashMap<&str, &SummaryLine> =
        refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut ids = Vec::new();
    let mut pairs = Vec::new();
    for hyp in &hyps {
        let reference = ref_by_id[hyp.id.as_str()];
        ids.push(hyp.id.clone());
        pairs.push(ScoredPair {
            hypothesis: tokenize(&hyp.summary),
            reference: tokenize(&reference.summary),
        });
    }
    let report = eval_report(&ids, &pairs).map_err(|e| CliError::Data(e.to_string()))?;
    println!("BLEU-CN : {:>7.2}", report.bleu * 100.0);
    println!("METEOR  : {:>7.2}", report.meteor * 100.0);
    println!("ROUGE-L : {:>7.2}", report.rouge_l * 100.0);
    println!("CIDEr   : {:>7.3}", report.cider);
    if let Some(path) = &args.out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Internal(format!("report serialize: {e}")))?,
        )
        .map_err(data_err(&format!("writing {}", path.display())))?;
    }
    Ok(())
}
