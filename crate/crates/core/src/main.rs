use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use groundqa::config::{AppConfig, SourceEntry};
use groundqa::corpus::{chunk_all, corpus_stats, ingest_path, load_paragraphs, write_paragraphs, SourceFormat, SourceKind};
use groundqa::evaluation::{self, EvalDataset};
use groundqa::fixtures;
use groundqa::moderation::ModerationMethod;
use groundqa::pipeline::{ReaderKind, SessionManager, SystemConfig};
use groundqa::retrieval::{KnowledgeBase, SearchMode};
use groundqa::service::{self, AppState};

#[derive(Parser)]
#[command(name = "groundqa", version, about = "Grounded conversational QA over car manuals")]
struct Cli {
    /// TOML config file; CAREXPERT_<SECTION>__<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest and chunk source files into a paragraph store.
    Ingest(IngestArgs),
    /// Index management.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Top-k retrieval for one query.
    Query {
        text: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        mode: Option<SearchMode>,
    },
    /// Interactive conversation in the terminal.
    Chat,
    /// Evaluation harness.
    Eval {
        #[command(subcommand)]
        target: EvalTarget,
        /// Evaluation dataset; the bundled fixture dataset when omitted.
        #[arg(long, global = true)]
        dataset: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[arg(long, default_value = "owners_manual")]
    kind: SourceKind,
    #[arg(long)]
    format: Option<SourceFormat>,
    #[arg(long)]
    max_chunk_words: Option<usize>,
    /// Paragraph store output (JSON Lines).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Build and persist an index.
    Build {
        /// Paragraph store; the configured corpus when omitted.
        #[arg(long)]
        paragraphs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum EvalTarget {
    Retriever {
        #[arg(long)]
        mode: Option<SearchMode>,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    Reader {
        #[arg(long, value_enum, default_value_t = Reader::Lexical)]
        reader: Reader,
    },
    Moderator,
    E2e,
    Matrix {
        /// JSON array of system configs; the bm25/dense x cosine/ES grid
        /// when omitted.
        #[arg(long)]
        configs: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Reader {
    Lexical,
    Llm,
}

type CliResult = Result<(), String>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let config = AppConfig::load(cli.config.as_deref()).map_err(|e| e.to_string())?;
    match cli.command {
        Command::Ingest(args) => ingest(&config, args),
        Command::Index {
            command: IndexCommand::Build { paragraphs, out },
        } => index_build(&config, paragraphs.as_deref(), &out),
        Command::Query { text, k, mode } => query(&config, &text, k, mode),
        Command::Chat => chat(&config),
        Command::Eval { target, dataset } => eval(&config, target, dataset.as_deref()),
        Command::Serve { port } => serve(&config, port),
    }
}

fn print_json(v: &impl serde::Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(v).map_err(|e| e.to_string())?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.to_string()),
        _ => Ok(()),
    }
}

fn ingest(config: &AppConfig, args: IngestArgs) -> CliResult {
    let max_words = args.max_chunk_words.unwrap_or(config.corpus.max_chunk_words);
    let mut documents = Vec::new();
    let mut reports = Vec::new();
    for path in args.paths {
        let entry = SourceEntry {
            path,
            kind: args.kind,
            format: args.format,
        };
        let format = entry.resolved_format().map_err(|e| e.to_string())?;
        let ingested = ingest_path(&entry.path, entry.kind, format).map_err(|e| e.to_string())?;
        documents.extend(ingested.documents);
        reports.push(ingested.report);
    }
    let paragraphs = chunk_all(&documents, max_words).map_err(|e| e.to_string())?;
    let file = std::fs::File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    write_paragraphs(std::io::BufWriter::new(file), &paragraphs).map_err(|e| e.to_string())?;
    print_json(&serde_json::json!({ "reports": reports, "stats": corpus_stats(&paragraphs) }))
}

fn index_build(config: &AppConfig, paragraphs: Option<&Path>, out: &Path) -> CliResult {
    let paragraphs = match paragraphs {
        Some(p) => load_paragraphs(p).map_err(|e| e.to_string())?,
        None => config.paragraphs().map_err(|e| e.to_string())?.0,
    };
    let count = paragraphs.len();
    let kb = KnowledgeBase::build(paragraphs, config.embedder(), config.build_options()).map_err(|e| e.to_string())?;
    kb.save(out).map_err(|e| e.to_string())?;
    println!("indexed {count} paragraphs into {}", out.display());
    Ok(())
}

fn query(config: &AppConfig, text: &str, k: usize, mode: Option<SearchMode>) -> CliResult {
    let kb = config.knowledge_base().map_err(|e| e.to_string())?;
    let results = kb.search(text, k, mode.unwrap_or(config.retrieval.mode)).map_err(|e| e.to_string())?;
    for r in results {
        let text = kb.paragraph(&r.paragraph_id).map_or("", |p| p.text.as_str());
        println!("{}. {} ({:.4})\n   {}", r.rank, r.paragraph_id, r.score, text);
    }
    Ok(())
}

fn chat(config: &AppConfig) -> CliResult {
    let engine = Arc::new(config.build_engine().map_err(|e| e.to_string())?);
    let manager = SessionManager::in_memory(engine);
    let session = manager.create_session(None).map_err(|e| e.to_string())?;
    println!("Ask about the car. Empty line or Ctrl-D quits.");
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    loop {
        print!("> ");
        out.flush().map_err(|e| e.to_string())?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line).map_err(|e| e.to_string())? == 0 || line.trim().is_empty() {
            return Ok(());
        }
        let turn = manager.handle_turn(&session.session_id, &line).map_err(|e| e.to_string())?;
        let scores = turn
            .moderation
            .iter()
            .flat_map(|m| m.scores.iter().map(|s| format!("{} {:.3}", s.kind, s.score)))
            .collect::<Vec<_>>()
            .join(", ");
        println!("[{:?}] {}", turn.kind, turn.final_text);
        if !scores.is_empty() {
            println!("    scores: {scores}");
        }
    }
}

fn load_dataset(path: Option<&Path>) -> Result<EvalDataset, String> {
    match path {
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            EvalDataset::from_json(&s).map_err(|e| e.to_string())
        }
        None => Ok(fixtures::eval_dataset()),
    }
}

fn default_matrix() -> Vec<SystemConfig> {
    let mut configs = Vec::new();
    for retriever in [SearchMode::Bm25, SearchMode::Dense] {
        for moderator in [ModerationMethod::Cosine, ModerationMethod::ExtractionScore] {
            let r = if retriever == SearchMode::Bm25 { "bm25" } else { "dense" };
            configs.push(SystemConfig {
                label: format!("{r}+{moderator}"),
                retriever,
                moderator,
                ..SystemConfig::default()
            });
        }
    }
    configs
}

fn eval(config: &AppConfig, target: EvalTarget, dataset: Option<&Path>) -> CliResult {
    let dataset = load_dataset(dataset)?;
    let engine = config.build_engine().map_err(|e| e.to_string())?;
    dataset.validate(&engine.knowledge.get()).map_err(|e| e.to_string())?;
    let system = engine.defaults.clone();
    let err = |e: evaluation::EvalError| e.to_string();
    match target {
        EvalTarget::Retriever { mode, k } => {
            let report = evaluation::eval_retriever(&engine.knowledge.get(), &dataset, mode.unwrap_or(system.retriever), k).map_err(err)?;
            print_json(&report)
        }
        EvalTarget::Reader { reader } => {
            let kind = match reader {
                Reader::Lexical => ReaderKind::Lexical,
                Reader::Llm => ReaderKind::Llm,
            };
            let (f1, em) = evaluation::eval_reader(&engine, &dataset, kind).map_err(err)?;
            print_json(&[f1, em])
        }
        EvalTarget::Moderator => print_json(&evaluation::eval_moderator(&engine, &system, &dataset).map_err(err)?),
        EvalTarget::E2e => {
            let (cos, meteor) = evaluation::eval_end_to_end(&engine, &system, &dataset).map_err(err)?;
            print_json(&[cos, meteor])
        }
        EvalTarget::Matrix { configs, json } => {
            let configs = match configs {
                Some(p) => {
                    let s = std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
                    serde_json::from_str(&s).map_err(|e| format!("{}: {e}", p.display()))?
                }
                None => default_matrix(),
            };
            let report = evaluation::run_config_matrix(&engine, &dataset, &configs).map_err(err)?;
            if json {
                print_json(&report)
            } else {
                print!("{}", report.to_text());
                Ok(())
            }
        }
    }
}

fn serve(config: &AppConfig, port: Option<u16>) -> CliResult {
    let engine = Arc::new(config.build_engine().map_err(|e| e.to_string())?);
    let manager = match &config.service.session_log {
        Some(path) => {
            let (manager, warnings) = SessionManager::persistent(engine, path).map_err(|e| e.to_string())?;
            for w in warnings {
                tracing::warn!("{w}");
            }
            manager
        }
        None => SessionManager::in_memory(engine),
    };
    let mut state = AppState::new(Arc::new(manager)).with_admin_token(std::env::var(&config.service.admin_token_env).ok());
    state.max_chunk_words = config.corpus.max_chunk_words;
    let addr: SocketAddr = format!("{}:{}", config.service.bind, port.unwrap_or(config.service.port))
        .parse()
        .map_err(|e| format!("bad bind address: {e}"))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(service::serve(state, addr)).map_err(|e| e.to_string())
}
