//! The `vprefine` command line.
//!
//! Every command prints exactly one JSON document on stdout; logs and errors
//! go to stderr, errors as a single JSON line. Exit status is 0 on success,
//! 1 when a task fails, 2 for configuration and I/O problems.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{abstract_code_with, analyze, lint_score, Diagnostic, MaskOptions};
use crate::codebase::{bootstrap, BootstrapOptions, BootstrapTask, CodebaseStore};
use crate::dsl::{Origin, SourceProgram};
use crate::feedback::FeedbackBundle;
use crate::orchestrator::{load_tasks, write_accuracy_csv, Engine, EngineConfig, HumanInput, Mode};
use crate::prompting::{HttpClient, MockClient, ModelClient, Templates};
use crate::runtime::{load_scene, SyntheticBackend};

/// Default location of the codebase file.
pub const DEFAULT_CODEBASE: &str = "codebase.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "vprefine",
    version,
    about = "Generate, run and refine visual programs"
)]
pub struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one query about one scene.
    Run(RunArgs),
    /// Run a JSONL task file and score the answers.
    Eval(EvalArgs),
    /// Inspect or seed the program codebase.
    #[command(subcommand)]
    Codebase(CodebaseCommand),
    /// Print the masked form of a program.
    Abstract(AbstractArgs),
    /// Print diagnostics and the lint score of a program.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hermetic,
    Live,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hermetic => Mode::Hermetic,
            ModeArg::Live => Mode::Live,
        }
    }
}

/// Options shared by every command that talks to a model.
#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scripted model replies (hermetic mode).
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Codebase JSONL file.
    #[arg(long)]
    pub codebase: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub templates_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub retrieval_k: Option<usize>,
    #[arg(long)]
    pub step_limit: Option<u64>,
    /// Turn off the visual feedback channel.
    #[arg(long)]
    pub no_visual: bool,
    /// Turn off the textual feedback channel.
    #[arg(long)]
    pub no_textual: bool,
    /// Turn off the compile feedback channel.
    #[arg(long)]
    pub no_compile: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub query: String,
    #[arg(long)]
    pub scene: PathBuf,
    /// Read operator notes from stdin after each iteration.
    #[arg(long)]
    pub human_feedback: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Tasks run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Subcommand)]
pub enum CodebaseCommand {
    /// Seed the codebase from a fraction of a task file.
    Init(InitArgs),
    /// List entries.
    List(CodebaseFile),
    /// Print one entry.
    Show {
        id: String,
        #[command(flatten)]
        file: CodebaseFile,
    },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct CodebaseFile {
    #[arg(long)]
    pub codebase: Option<PathBuf>,
    /// Aligned text table instead of JSON.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct AbstractArgs {
    pub file: PathBuf,
    /// Print only the masked program text.
    #[arg(long)]
    pub text: bool,
    /// Also mask primitive names.
    #[arg(long)]
    pub mask_callees: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub file: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub max_iterations: Option<usize>,
    pub retrieval_k: Option<usize>,
    pub bootstrap_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub step_limit: Option<u64>,
    pub human_feedback_enabled: Option<bool>,
    pub codebase_path: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub mock_script_path: Option<PathBuf>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }
}

/// Engine settings and file locations after merging flags over the config
/// file over defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub engine: EngineConfig,
    pub codebase_path: PathBuf,
    pub templates_dir: Option<PathBuf>,
    pub mock_script_path: Option<PathBuf>,
}

pub fn resolve(flags: &EngineArgs, file: &CliConfig) -> Result<Resolved, Failure> {
    let d = EngineConfig::default();
    let mut engine = EngineConfig {
        max_iterations: flags
            .max_iterations
            .or(file.max_iterations)
            .unwrap_or(d.max_iterations),
        retrieval_k: flags
            .retrieval_k
            .or(file.retrieval_k)
            .unwrap_or(d.retrieval_k),
        bootstrap_fraction: file.bootstrap_fraction.unwrap_or(d.bootstrap_fraction),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
        mode: flags.mode.map(Mode::from).or(file.mode).unwrap_or(d.mode),
        step_limit: flags.step_limit.or(file.step_limit).unwrap_or(d.step_limit),
        human_feedback_enabled: file
            .human_feedback_enabled
            .unwrap_or(d.human_feedback_enabled),
        channels: d.channels,
    };
    engine.channels.visual = !flags.no_visual;
    engine.channels.textual = !flags.no_textual;
    engine.channels.compile = !flags.no_compile;
    engine
        .validate()
        .map_err(|e| Failure::config(e.to_string()))?;
    Ok(Resolved {
        engine,
        codebase_path: flags
            .codebase
            .clone()
            .or_else(|| file.codebase_path.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CODEBASE)),
        templates_dir: flags
            .templates_dir
            .clone()
            .or_else(|| file.templates_dir.clone()),
        mock_script_path: flags
            .mock_script
            .clone()
            .or_else(|| file.mock_script_path.clone()),
    })
}

/// A command failure and the exit status it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn task(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            kind: "task",
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({"error": self.kind, "message": self.message}).to_string()
    }
}

fn load_config(flags: &EngineArgs) -> Result<Resolved, Failure> {
    let file = match &flags.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    resolve(flags, &file)
}

fn templates(r: &Resolved) -> Result<Templates, Failure> {
    match &r.templates_dir {
        Some(dir) => Templates::from_dir(dir).map_err(|e| Failure::io(dir, e)),
        None => Ok(Templates::builtin()),
    }
}

fn client(r: &Resolved) -> Result<Box<dyn ModelClient>, Failure> {
    match r.engine.mode {
        Mode::Hermetic => {
            let path = r
                .mock_script_path
                .as_ref()
                .ok_or_else(|| Failure::config("hermetic mode needs --mock-script"))?;
            Ok(Box::new(
                MockClient::from_file(path).map_err(|e| Failure::config(e.to_string()))?,
            ))
        }
        Mode::Live => Ok(Box::new(
            HttpClient::from_env().map_err(|e| Failure::config(e.to_string()))?,
        )),
    }
}

fn open_store(path: &Path) -> Result<CodebaseStore, Failure> {
    CodebaseStore::open(path).map_err(|e| Failure::config(e.to_string()))
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::config(format!("serialize output: {e}")))?;
    writeln!(out, "{text}").map_err(|e| Failure::io(Path::new("<stdout>"), e))
}

/// Operator notes read line by line until a blank line or end of input.
struct LineReader<'a> {
    input: &'a mut dyn BufRead,
}

impl HumanInput for LineReader<'_> {
    fn lines(&mut self, iteration: usize, feedback: &FeedbackBundle) -> Vec<String> {
        let mut err = std::io::stderr().lock();
        let _ = writeln!(err, "--- feedback after iteration {iteration} ---");
        let _ = write!(err, "{}", feedback.render());
        let _ = writeln!(
            err,
            "--- notes for the next refinement (blank line ends) ---"
        );
        let mut out = Vec::new();
        let mut line = String::new();
        loop {
            line.clear();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) if line.trim().is_empty() => break,
                Ok(_) => out.push(line.trim_end().to_string()),
            }
        }
        out
    }
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write, input: &mut dyn BufRead) -> Result<(), Failure> {
    let mut r = load_config(&a.engine)?;
    if a.human_feedback {
        r.engine.human_feedback_enabled = true;
    }
    let scene = load_scene(&a.scene).map_err(|e| Failure::config(e.to_string()))?;
    let store = open_store(&r.codebase_path)?;
    let templates = templates(&r)?;
    let client = client(&r)?;
    let engine = Engine::new(
        r.engine.clone(),
        client.as_ref(),
        &templates,
        &SyntheticBackend,
    );
    let mut human = LineReader { input };
    let human: Option<&mut dyn HumanInput> = if r.engine.human_feedback_enabled {
        Some(&mut human)
    } else {
        None
    };
    let report = engine.run_task("run", &a.query, &scene, &store, human);
    emit(out, &report)?;
    match &report.failure {
        Some(reason) => Err(Failure::task(reason.clone())),
        None => Ok(()),
    }
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let r = load_config(&a.engine)?;
    let tasks = load_tasks(&a.tasks).map_err(|e| Failure::config(e.to_string()))?;
    let store = open_store(&r.codebase_path)?;
    let templates = templates(&r)?;
    let client = client(&r)?;
    let engine = Engine::new(
        r.engine.clone(),
        client.as_ref(),
        &templates,
        &SyntheticBackend,
    );
    let (report, _) = engine.evaluate(&tasks, &store, a.jobs);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::io(&a.out_dir, e))?;
    let json_path = a.out_dir.join("eval_report.json");
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Failure::config(format!("serialize report: {e}")))?;
    std::fs::write(&json_path, text + "\n").map_err(|e| Failure::io(&json_path, e))?;
    let csv_path = a.out_dir.join("accuracy_vs_iteration.csv");
    write_accuracy_csv(&csv_path, &report).map_err(|e| Failure::io(&csv_path, e))?;
    emit(out, &report)
}

fn cmd_init(a: &InitArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let r = load_config(&a.engine)?;
    let fraction = a.fraction.unwrap_or(r.engine.bootstrap_fraction);
    let tasks = load_tasks(&a.tasks).map_err(|e| Failure::config(e.to_string()))?;
    let tasks: Vec<BootstrapTask> = tasks
        .into_iter()
        .map(|t| BootstrapTask {
            query: t.query,
            scene: t.scene,
        })
        .collect();
    let store = open_store(&r.codebase_path)?;
    let templates = templates(&r)?;
    let client = client(&r)?;
    let opts = BootstrapOptions {
        fraction,
        seed: r.engine.seed,
        limits: r.engine.limits(),
    };
    let report = store
        .update(|cb| {
            bootstrap(
                cb,
                &tasks,
                opts,
                client.as_ref(),
                &templates,
                &SyntheticBackend,
            )
        })
        .map_err(|e| Failure::config(e.to_string()))?;
    emit(out, &report)
}

#[derive(Serialize)]
struct ListRow<'a> {
    id: &'a str,
    status: crate::codebase::EntryStatus,
    runs: u64,
    query: &'a str,
}

fn codebase_path(f: &CodebaseFile) -> PathBuf {
    f.codebase
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CODEBASE))
}

fn cmd_list(f: &CodebaseFile, out: &mut dyn Write) -> Result<(), Failure> {
    let store = open_store(&codebase_path(f))?;
    let cb = store.read();
    let rows: Vec<ListRow> = cb
        .entries()
        .iter()
        .map(|e| ListRow {
            id: &e.id,
            status: e.status,
            runs: e.stats.runs,
            query: &e.query,
        })
        .collect();
    if !f.table {
        return emit(out, &rows);
    }
    let io = |e| Failure::io(Path::new("<stdout>"), e);
    writeln!(out, "{:<16}  {:<7}  {:>4}  query", "id", "status", "runs").map_err(io)?;
    for r in rows {
        let status = serde_json::to_value(r.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        writeln!(
            out,
            "{:<16}  {:<7}  {:>4}  {}",
            r.id, status, r.runs, r.query
        )
        .map_err(io)?;
    }
    Ok(())
}

fn cmd_show(id: &str, f: &CodebaseFile, out: &mut dyn Write) -> Result<(), Failure> {
    let store = open_store(&codebase_path(f))?;
    let cb = store.read();
    match cb.get(id) {
        Some(e) => emit(out, e),
        None => Err(Failure::config(format!("no codebase entry {id}"))),
    }
}

fn read_program(path: &Path) -> Result<crate::dsl::Program, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    SourceProgram::new(text, Origin::User)
        .parse()
        .map_err(|errs| {
            let msgs: Vec<String> = errs.iter().map(ToString::to_string).collect();
            Failure::config(format!("{}: {}", path.display(), msgs.join("; ")))
        })
}

fn cmd_abstract(a: &AbstractArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let program = read_program(&a.file)?;
    let code = abstract_code_with(
        &program,
        MaskOptions {
            mask_callees: a.mask_callees,
        },
    );
    if a.text {
        return write!(out, "{}", code.text).map_err(|e| Failure::io(Path::new("<stdout>"), e));
    }
    emit(out, &code)
}

#[derive(Serialize)]
struct AnalyzeOutput {
    diagnostics: Vec<Diagnostic>,
    lint_score: f64,
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let program = read_program(&a.file)?;
    let diagnostics = analyze(&program);
    let lint_score = lint_score(&program, &diagnostics);
    let text = serde_json::to_string(&AnalyzeOutput {
        diagnostics,
        lint_score,
    })
    .map_err(|e| Failure::config(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Failure::io(Path::new("<stdout>"), e))
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli, out: &mut dyn Write, input: &mut dyn BufRead) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out, input),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Codebase(CodebaseCommand::Init(a)) => cmd_init(a, out),
        Command::Codebase(CodebaseCommand::List(f)) => cmd_list(f, out),
        Command::Codebase(CodebaseCommand::Show { id, file }) => cmd_show(id, file, out),
        Command::Abstract(a) => cmd_abstract(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
    }
}

/// Parse `args`, run, report errors on stderr; returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "{}",
                Failure::config(first.trim_start_matches("error: ")).to_json()
            );
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    let stdout = std::io::stdout();
    let stdin = std::io::stdin();
    let result = execute(&cli, &mut stdout.lock(), &mut stdin.lock());
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.code
        }
    }
}
