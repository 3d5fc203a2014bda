use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::json;

use courseware::config::AppConfig;
use courseware::diff::{apply_to_text, parse_unified_diff, FuzzPolicy};
use courseware::gateway::{Gateway, MediaType, MockScript, PageImage};
use courseware::knowledge::{
    build_analysis_prompt, knowledge_from_form, parse_analysis_response, ConceptForm,
    DocumentPages, KnowledgeError, StructuredKnowledge,
};
use courseware::pipeline::run_pipeline_with;
use courseware::service::{
    edit_html, error_event, http, EditEvent, EditSession, ElementSelector, ServiceError,
};

#[derive(Parser)]
#[command(
    name = "courseware",
    version,
    about = "Interactive courseware authoring engine"
)]
struct Cli {
    /// TOML configuration file. Defaults to $COURSEWARE_CONFIG when set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay model responses from a JSON script instead of calling a live endpoint.
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract structured knowledge from page images, or from a concept form.
    Analyze {
        /// Directory of PNG/JPEG pages, a JSON array of image paths, or a concept-form JSON object.
        input: PathBuf,
    },
    /// Generate an interactive page from knowledge (or concept-form) JSON.
    Generate {
        knowledge: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print the generation outcome as JSON on stderr.
        #[arg(long)]
        report: bool,
    },
    /// Apply a natural-language edit to one element of a page.
    Edit {
        courseware: PathBuf,
        #[arg(long)]
        xpath: String,
        #[arg(long)]
        instruction: String,
        #[arg(long, default_value = "")]
        css: String,
        #[arg(long, default_value = "")]
        snippet: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Print edit events as JSON lines on stderr.
        #[arg(long)]
        events: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Apply a unified diff to a file.
    DiffApply {
        original: PathBuf,
        patch: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Require hunks to match at their declared positions, byte for byte.
        #[arg(long)]
        exact: bool,
    },
}

struct CliError {
    code: &'static str,
    message: String,
    exit: u8,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>, exit: u8) -> Self {
        Self {
            code,
            message: message.into(),
            exit,
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new("invalid_input", message, 2)
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        let exit = match e {
            ServiceError::InvalidRequest(_)
            | ServiceError::PageLimitExceeded { .. }
            | ServiceError::EmptyDocument => 2,
            _ => 1,
        };
        Self::new(e.code(), e.to_string(), exit)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::NotFound {
            "file_not_found"
        } else {
            "io_error"
        };
        CliError::new(code, format!("{}: {e}", path.display()), 2)
    })
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::input(format!("{}: not UTF-8 text", path.display())))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::new("io_error", format!("{}: {e}", p.display()), 1)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new("io_error", e.to_string(), 1)),
    }
}

fn load_config(cli: &Cli) -> Result<AppConfig, CliError> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os("COURSEWARE_CONFIG").map(PathBuf::from));
    if let Some(p) = &path {
        read_file(p)?;
    }
    AppConfig::load(path.as_deref(), |k| std::env::var(k).ok())
        .map_err(|e| CliError::new("invalid_config", e.to_string(), 2))
}

fn gateway(cli: &Cli, config: &AppConfig) -> Result<Gateway, CliError> {
    match &cli.mock_script {
        Some(path) => {
            let text = read_text(path)?;
            let script = MockScript::from_json(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Ok(Gateway::new(
                config.gateway.clone(),
                Gateway::mock(script).1,
            ))
        }
        None => Ok(Gateway::http(config.gateway.clone())),
    }
}

fn image_page(path: &Path) -> Result<PageImage, CliError> {
    let bytes = read_file(path)?;
    let media_type = MediaType::sniff(&bytes).ok_or_else(|| {
        CliError::input(format!(
            "{}: only PNG and JPEG pages are accepted",
            path.display()
        ))
    })?;
    Ok(PageImage { media_type, bytes })
}

fn knowledge_error(e: KnowledgeError) -> CliError {
    CliError::from(ServiceError::from(e))
}

fn analyze(input: &Path, gw: &Gateway) -> Result<serde_json::Value, CliError> {
    let pages = if input.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| CliError::new("io_error", e.to_string(), 2))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().and_then(|x| x.to_str()).is_some_and(|x| {
                    matches!(x.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg")
                })
            })
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| image_page(p))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let value: serde_json::Value = serde_json::from_str(&read_text(input)?)
            .map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
        if value.is_object() {
            let form: ConceptForm = serde_json::from_value(value)
                .map_err(|e| CliError::input(format!("concept form: {e}")))?;
            let knowledge = knowledge_from_form(&form).map_err(knowledge_error)?;
            return Ok(json!({ "knowledge": knowledge, "warnings": [], "page_count": 0 }));
        }
        let paths: Vec<PathBuf> = serde_json::from_value(value)
            .map_err(|e| CliError::input(format!("expected an array of image paths: {e}")))?;
        let base = input.parent().unwrap_or(Path::new("."));
        paths
            .iter()
            .map(|p| image_page(&base.join(p)))
            .collect::<Result<Vec<_>, _>>()?
    };
    let pages = DocumentPages::new(pages).map_err(knowledge_error)?;
    let completion = gw
        .complete(&build_analysis_prompt(&pages))
        .map_err(ServiceError::from)?;
    let parsed = parse_analysis_response(&completion.text).map_err(|e| match e {
        KnowledgeError::MalformedJson(_) | KnowledgeError::SchemaViolation { .. } => {
            CliError::from(ServiceError::ManualInputRequired {
                document_id: input.display().to_string(),
                page_count: pages.page_count(),
                reason: e.to_string(),
            })
        }
        other => knowledge_error(other),
    })?;
    Ok(
        json!({ "knowledge": parsed.knowledge, "warnings": parsed.warnings, "page_count": pages.page_count() }),
    )
}

fn load_knowledge(path: &Path) -> Result<StructuredKnowledge, CliError> {
    let value: serde_json::Value = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if value.get("concept_name").is_some() {
        let form: ConceptForm = serde_json::from_value(value)
            .map_err(|e| CliError::input(format!("concept form: {e}")))?;
        return knowledge_from_form(&form).map_err(knowledge_error);
    }
    let value = value.get("knowledge").cloned().unwrap_or(value);
    let k: StructuredKnowledge =
        serde_json::from_value(value).map_err(|e| CliError::input(format!("knowledge: {e}")))?;
    k.validate().map_err(knowledge_error)?;
    Ok(k)
}

fn print_event(ev: &EditEvent) {
    eprintln!("{}", json!({ "event": ev.name(), "data": ev }));
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::DiffApply {
            original,
            patch,
            output,
            exact,
        } => {
            let original = read_text(original)?;
            let patch_text = read_text(patch)?;
            let diff = parse_unified_diff(&patch_text)
                .map_err(|e| CliError::new("malformed_diff", e.to_string(), 1))?;
            let policy = if *exact {
                FuzzPolicy::exact()
            } else {
                FuzzPolicy::default()
            };
            let (patched, _) = apply_to_text(&original, &diff, &policy)
                .map_err(|e| CliError::new("patch_failed", e.to_string(), 1))?;
            write_output(output.as_deref(), &patched)
        }
        Command::Analyze { input } => {
            if !input.exists() {
                return Err(CliError::new(
                    "file_not_found",
                    format!("{}: no such file or directory", input.display()),
                    2,
                ));
            }
            let config = load_config(cli)?;
            let result = analyze(input, &gateway(cli, &config)?)?;
            write_output(
                None,
                &format!(
                    "{}\n",
                    serde_json::to_string_pretty(&result).unwrap_or_default()
                ),
            )
        }
        Command::Generate {
            knowledge,
            output,
            report,
        } => {
            let k = load_knowledge(knowledge)?;
            let config = load_config(cli)?;
            let outcome = run_pipeline_with(&k, &gateway(cli, &config)?, &config.pipeline);
            if *report {
                let mut summary = serde_json::to_value(&outcome).unwrap_or_default();
                summary.as_object_mut().map(|o| o.remove("html"));
                eprintln!("{summary}");
            }
            write_output(output.as_deref(), &outcome.html)
        }
        Command::Edit {
            courseware,
            xpath,
            instruction,
            css,
            snippet,
            output,
            events,
        } => {
            let html = read_text(courseware)?;
            let config = load_config(cli)?;
            let gw = gateway(cli, &config)?;
            let selector = ElementSelector {
                xpath: xpath.clone(),
                css_selector: css.clone(),
                snippet: snippet.clone(),
                bounding_box: None,
            };
            let mut session = EditSession::new(courseware.display().to_string());
            let mut on_event = |ev: &EditEvent| {
                if *events {
                    print_event(ev);
                }
            };
            match edit_html(
                &gw,
                &config.edit,
                &html,
                &selector,
                instruction,
                &mut session,
                &mut on_event,
            ) {
                Ok(page) => {
                    if *events {
                        eprintln!("{}", json!({ "event": "session", "data": session }));
                    }
                    write_output(output.as_deref(), &page.html)
                }
                Err(e) => {
                    if *events {
                        print_event(&error_event(&e, &session));
                    }
                    Err(e.into())
                }
            }
        }
        Command::Serve { port, host } => {
            let config = load_config(cli)?;
            let gw = gateway(cli, &config)?;
            let service = Arc::new(config.build_service(gw)?);
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::new("runtime_error", e.to_string(), 1))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), *port))
                    .await
                    .map_err(|e| CliError::new("bind_failed", format!("{host}:{port}: {e}"), 1))?;
                tracing::info!(%host, port, store = %config.store_path.display(), "listening");
                axum::serve(listener, http::router(service))
                    .await
                    .map_err(|e| CliError::new("server_error", e.to_string(), 1))
            })
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("COURSEWARE_LOG")
                .unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "code": e.code, "message": e.message } })
            );
            ExitCode::from(e.exit)
        }
    }
}
