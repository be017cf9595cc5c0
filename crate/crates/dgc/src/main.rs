//! `dgc`, the design compiler.
//!
//! Exit codes: 0 success, 1 diagnostics or rejected input, 2 I/O failure,
//! 3 step budget exhausted or a required rule failed.

mod seed;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dg_core::ast::GrammarModel;
use dg_core::diag::{has_errors, Diagnostic, DiagnosticKind};
use dg_core::dsl::parse_grammar;
use dg_core::export::{self, ExportPlugin, FORMATS};
use dg_core::graph::DesignGraph;
use dg_core::linker::{link, ModuleArchive};
use dg_core::program::Program;
use dg_core::runtime::{execute, trace::to_json_lines, RuntimeError, DEFAULT_BUDGET};
use dg_core::value::InstanceId;

const EXIT_DIAGNOSTICS: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_HALTED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dgc",
    version,
    about = "Design compiler for object-oriented design grammars"
)]
struct Cli {
    /// Report diagnostics as JSON lines on standard error.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, link and check a grammar.
    Check(CheckArgs),
    /// Execute the entry activity and write the final design graph.
    Run(RunArgs),
    /// Transform a design graph into a domain artifact.
    Export(ExportArgs),
    /// Package a grammar as a module archive.
    Seal(SealArgs),
    /// List the public surface recorded in an archive.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct CheckArgs {
    grammar: PathBuf,
    /// Module archive to link against; repeatable.
    #[arg(long = "import", value_name = "ARCHIVE")]
    imports: Vec<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    grammar: PathBuf,
    #[arg(long = "import", value_name = "ARCHIVE")]
    imports: Vec<PathBuf>,
    /// Activity to run instead of the declared entry.
    #[arg(long)]
    entry: Option<String>,
    /// Inline instance such as `Chassis{numberOfWheels:4}`, or a graph file.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BUDGET, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    /// Write the trace as JSON lines.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Write the final graph here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    graph: PathBuf,
    #[arg(long)]
    format: String,
    /// Grammar the graph was built with; required by method-backed formats.
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long = "import", value_name = "ARCHIVE")]
    imports: Vec<PathBuf>,
    /// Root instance id for `massbalance` and `rollup`.
    #[arg(long)]
    root: Option<u64>,
    /// Value method for `rollup`.
    #[arg(long, default_value = "value")]
    method: String,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SealArgs {
    grammar: PathBuf,
    #[arg(long = "import", value_name = "ARCHIVE")]
    imports: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Store the body in clear text and mark the archive inspectable in full.
    #[arg(long)]
    unsealed: bool,
}

#[derive(Args)]
struct InspectArgs {
    archive: PathBuf,
}

/// Why a command stopped early.
enum Failure {
    Diagnostics(Vec<Diagnostic>),
    Io(String),
    Rejected(String),
    Export(export::ExportError),
    Runtime(RuntimeError),
}

type CmdResult = Result<(), Failure>;

struct Reporter {
    json: bool,
}

impl Reporter {
    fn diagnostic(&self, d: &Diagnostic) {
        if self.json {
            eprintln!(
                "{}",
                serde_json::to_string(d).expect("diagnostic serializes")
            );
        } else {
            eprintln!("{d}");
        }
    }

    fn message(&self, kind: &str, msg: &str) {
        if self.json {
            // Same keys as a serialized diagnostic.
            let line = serde_json::json!({ "severity": "error", "kind": kind, "entity": null, "message": msg, "span": null });
            eprintln!("{line}");
        } else {
            eprintln!("error[{kind}]: {msg}");
        }
    }

    fn finish(&self, r: CmdResult) -> ExitCode {
        match r {
            Ok(()) => ExitCode::SUCCESS,
            Err(Failure::Diagnostics(ds)) => {
                ds.iter().for_each(|d| self.diagnostic(d));
                ExitCode::from(EXIT_DIAGNOSTICS)
            }
            Err(Failure::Io(msg)) => {
                self.message("IoError", &msg);
                ExitCode::from(EXIT_IO)
            }
            Err(Failure::Rejected(msg)) => {
                self.message("Rejected", &msg);
                ExitCode::from(EXIT_DIAGNOSTICS)
            }
            Err(Failure::Export(e)) => {
                self.message(e.kind(), &e.to_string());
                ExitCode::from(EXIT_DIAGNOSTICS)
            }
            Err(Failure::Runtime(e)) => {
                self.message(e.kind(), &e.to_string());
                match e {
                    RuntimeError::StepLimitExceeded { .. }
                    | RuntimeError::RequiredRuleFailed { .. } => ExitCode::from(EXIT_HALTED),
                    _ => ExitCode::from(EXIT_DIAGNOSTICS),
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_DIAGNOSTICS)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let rep = Reporter { json: cli.json };
    let result = match cli.command {
        Command::Check(a) => cmd_check(&rep, a),
        Command::Run(a) => cmd_run(&rep, a),
        Command::Export(a) => cmd_export(a),
        Command::Seal(a) => cmd_seal(&rep, a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    rep.finish(result)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    std::fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn parse_file(path: &Path) -> Result<GrammarModel, Failure> {
    let src = read_text(path)?;
    parse_grammar(&path.display().to_string(), &src).map_err(Failure::Diagnostics)
}

fn read_archives(paths: &[PathBuf]) -> Result<Vec<ModuleArchive>, Failure> {
    paths
        .iter()
        .map(|p| {
            ModuleArchive::read(p)
                .map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?
                .map_err(|d| Failure::Diagnostics(vec![d.with_entity(p.display().to_string())]))
        })
        .collect()
}

/// Parse and link; warnings are reported, errors fail.
fn load(rep: &Reporter, path: &Path, imports: &[PathBuf]) -> Result<Program, Failure> {
    let model = parse_file(path)?;
    let archives = read_archives(imports)?;
    let (program, warnings) = link(model, &archives).map_err(Failure::Diagnostics)?;
    warnings.iter().for_each(|d| rep.diagnostic(d));
    Ok(program)
}

fn cmd_check(rep: &Reporter, a: CheckArgs) -> CmdResult {
    load(rep, &a.grammar, &a.imports).map(|_| ())
}

/// The directory a file will be created in must exist before any work starts.
fn check_writable(path: &Option<PathBuf>) -> CmdResult {
    if let Some(p) = path {
        let dir = p
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !dir.is_dir() {
            return Err(Failure::Io(format!(
                "{}: directory does not exist",
                dir.display()
            )));
        }
    }
    Ok(())
}

fn cmd_run(rep: &Reporter, a: RunArgs) -> CmdResult {
    check_writable(&a.out)?;
    check_writable(&a.trace)?;
    let program = load(rep, &a.grammar, &a.imports)?;
    let entry = match a.entry.clone().or_else(|| {
        program
            .entry()
            .map(|k| k.rsplit("::").next().unwrap_or(&k).to_string())
    }) {
        Some(e) => e,
        None => {
            return Err(Failure::Diagnostics(vec![Diagnostic::error(
                DiagnosticKind::NoEntry,
                "no `entry` declaration and no activity named `main`",
            )]))
        }
    };
    let seed = match &a.seed {
        None => DesignGraph::for_schema(&program.schema),
        Some(s) if Path::new(s).is_file() => {
            seed::from_graph(&program, &read_text(Path::new(s))?).map_err(Failure::Rejected)?
        }
        Some(s) => seed::parse_inline(&program, s).map_err(Failure::Rejected)?,
    };
    match execute(&program, &entry, seed, a.budget) {
        Ok(run) => {
            if let Some(t) = &a.trace {
                write_file(t, to_json_lines(&run.trace).as_bytes())?;
            }
            let text = run.graph.serialize();
            match &a.out {
                Some(o) => write_file(o, text.as_bytes()),
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| Failure::Io(format!("standard output: {e}"))),
            }
        }
        Err(fail) => {
            // The trace up to the failure is still written.
            if let Some(t) = &a.trace {
                write_file(t, to_json_lines(&fail.trace).as_bytes())?;
            }
            Err(Failure::Runtime(fail.error))
        }
    }
}

fn cmd_export(a: ExportArgs) -> CmdResult {
    if !FORMATS.contains(&a.format.as_str()) {
        return Err(Failure::Rejected(format!(
            "unknown format `{}`; available formats: {}",
            a.format,
            FORMATS.join(", ")
        )));
    }
    check_writable(&a.out)?;
    let text = read_text(&a.graph)?;
    let silent = Reporter { json: false };
    let program = match &a.grammar {
        Some(g) => Some(load(&silent, g, &a.imports)?),
        None => None,
    };
    let mut graph = match &program {
        Some(p) => seed::from_graph(p, &text).map_err(Failure::Rejected)?,
        None => DesignGraph::parse(&text)
            .map_err(|e| Failure::Rejected(format!("{}: {e}", a.graph.display())))?,
    };
    if let Some(p) = &program {
        graph.set_multi_edges(p.schema.multi_edges.clone());
    }
    let root = a.root.map(InstanceId);
    let plugin: Box<dyn ExportPlugin> = match a.format.as_str() {
        "dot" => Box::new(export::Dot),
        "json" => Box::new(export::Json),
        "massbalance" => Box::new(export::MassBalance { root }),
        "cadlog" => Box::new(export::CadLog),
        "rollup" => {
            let root = root.ok_or_else(|| Failure::Rejected("`rollup` needs --root".into()))?;
            Box::new(export::Rollup {
                root,
                method: a.method.clone(),
            })
        }
        _ => unreachable!("format checked above"),
    };
    let artifact = match &program {
        Some(p) => export::run_builders(p, &graph, &[plugin.as_ref()]).remove(0),
        None if matches!(a.format.as_str(), "dot" | "json" | "cadlog") => Ok(export::Artifact {
            plugin: a.format.clone(),
            text: match a.format.as_str() {
                "dot" => export::export_dot(&graph),
                "json" => graph.serialize(),
                _ => export::cad_log(&graph),
            },
        }),
        None => {
            return Err(Failure::Rejected(format!(
                "format `{}` needs --grammar",
                a.format
            )))
        }
    }
    .map_err(Failure::Export)?;
    match &a.out {
        Some(o) => write_file(o, artifact.text.as_bytes()),
        None => std::io::stdout()
            .write_all(artifact.text.as_bytes())
            .map_err(|e| Failure::Io(format!("standard output: {e}"))),
    }
}

fn cmd_seal(rep: &Reporter, a: SealArgs) -> CmdResult {
    check_writable(&Some(a.out.clone()))?;
    let model = parse_file(&a.grammar)?;
    let archives = read_archives(&a.imports)?;
    let (archive, warnings) =
        ModuleArchive::seal(&model, &archives, !a.unsealed).map_err(Failure::Diagnostics)?;
    debug_assert!(!has_errors(&warnings));
    warnings.iter().for_each(|d| rep.diagnostic(d));
    archive
        .write(&a.out)
        .map_err(|e| Failure::Io(format!("{}: {e}", a.out.display())))
}

fn cmd_inspect(a: InspectArgs) -> CmdResult {
    let archive = read_archives(std::slice::from_ref(&a.archive))?.remove(0);
    let listing = archive
        .inspect()
        .map_err(|d| Failure::Diagnostics(vec![d]))?;
    print!("{listing}");
    Ok(())
}
