//! `designc`: command-line front end of the design compiler.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use designc::bundle::load_bundle;
use designc::dimension::PiReport;
use designc::graph::{DesignGraph, ExportFormat};
use designc::production::ProductionError;
use designc::solution_path::{
    plan_and_solve, report_json, sensitivity, solve_graph, ConstraintNetwork, SolveError, SolverConfig,
};
use designc::vocabulary::load_schema;
use serde_json::json;

/// Exit codes. Usage errors exit with 2 (clap's convention).
mod exit {
    pub const IO: u8 = 1;
    pub const LOAD: u8 = 3;
    pub const STEP: u8 = 4;
    pub const VALIDATION: u8 = 5;
    pub const SOLVER: u8 = 6;
}

const EXIT_CODES: &str = "Exit codes: 0 success, 1 I/O error, 2 usage error, 3 load error, \
4 step error, 5 validation failure, 6 solver failure.";

#[derive(Parser)]
#[command(name = "designc", version, about = "Compile graph-based design languages into designs", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a language bundle's main activity.
    Run {
        bundle: PathBuf,
        /// Parameter overrides (JSON object).
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Write trace.jsonl (and timings.jsonl).
        #[arg(long)]
        trace: bool,
        /// Additional graph exports.
        #[arg(long, value_name = "FORMAT", value_delimiter = ',')]
        dump: Vec<ExportFormat>,
        /// Global step budget.
        #[arg(long, value_name = "N", default_value_t = designc::production::DEFAULT_MAX_STEPS)]
        max_steps: u64,
        /// Write pi.json with the Pi groups of the final network's variables.
        #[arg(long)]
        pi: bool,
    },
    /// Load a bundle and run static checks only.
    Validate {
        bundle: PathBuf,
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
    },
    /// Solve a standalone equation network.
    Solve {
        network: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Partial derivative `OUTPUT:INPUT`, repeatable.
        #[arg(long, value_name = "OUT:IN")]
        sensitivity: Vec<String>,
    },
    /// Compute Pi groups of a variable list.
    Pi {
        variables: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Re-serialize a saved graph.
    Export {
        graph: PathBuf,
        /// Bundle directory or vocabulary file the graph conforms to.
        #[arg(long, value_name = "PATH")]
        bundle: PathBuf,
        #[arg(long, value_name = "FORMAT", default_value = "json")]
        dump: ExportFormat,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(exit::IO, format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| fail(exit::IO, format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| fail(exit::IO, format!("{}: {e}", path.display())))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn solver_code(e: &SolveError) -> u8 {
    match e {
        SolveError::Document(_) | SolveError::Network { .. } | SolveError::NotAnInput(_) => exit::LOAD,
        _ => exit::SOLVER,
    }
}

/// Variables of the final network with their dimensions.
fn network_report(graph: &DesignGraph, config: &SolverConfig) -> (serde_json::Value, Vec<(String, designc::dimension::Dimension)>) {
    let mut scratch = graph.clone();
    match solve_graph(&mut scratch, config) {
        Ok(r) => {
            let vars = r.network.variables.iter().map(|v| (v.key.to_string(), v.dimension)).collect();
            (report_json(&r.network, &r.plan, Some(&r.solution)), vars)
        }
        Err(e) => (json!({ "error": e.to_string() }), Vec::new()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    bundle: &Path,
    params: Option<&Path>,
    out: &Path,
    trace: bool,
    dump: &[ExportFormat],
    max_steps: u64,
    pi: bool,
) -> Result<(), Failure> {
    let overrides = params.map(read).transpose()?;
    let mut bundle = load_bundle(bundle, overrides.as_deref()).map_err(|e| fail(exit::LOAD, e.to_string()))?;
    bundle.env.max_steps = max_steps;

    let started = Instant::now();
    let (graph, result) = bundle.run();
    let elapsed = started.elapsed();

    let t = match &result {
        Ok(r) => &r.trace,
        Err(a) => &a.trace,
    };
    if trace {
        write(out, "trace.jsonl", &t.to_jsonl())?;
        let timings: String = t
            .elapsed
            .iter()
            .enumerate()
            .map(|(i, d)| format!("{{\"seq\":{i},\"elapsed_us\":{}}}\n", d.as_micros()))
            .collect();
        write(out, "timings.jsonl", &timings)?;
    }
    let run = match result {
        Ok(r) => r,
        Err(aborted) => {
            let code = match aborted.error {
                ProductionError::Solver { .. } => exit::SOLVER,
                _ => exit::STEP,
            };
            return Err(fail(code, aborted.error.to_string()));
        }
    };

    write(out, "graph.json", &graph.export(ExportFormat::Json))?;
    for f in dump {
        if *f != ExportFormat::Json {
            write(out, &format!("graph.{}", f.extension()), &graph.export(*f))?;
        }
    }
    let (report, vars) = network_report(&graph, &bundle.env.solver);
    write(out, "solver.json", &pretty(&report))?;
    if pi && !vars.is_empty() {
        write(out, "pi.json", &pretty(&PiReport::new(&vars).to_json()))?;
    }
    eprintln!(
        "{} nodes, {} edges, {} steps in {:.1} ms",
        graph.node_count(),
        graph.edge_count(),
        run.trace.entries.len(),
        elapsed.as_secs_f64() * 1e3
    );
    if !run.validation.is_valid() {
        return Err(fail(exit::VALIDATION, format!("final graph is invalid:\n{}", run.validation)));
    }
    Ok(())
}

fn solve(path: &Path, out: Option<&Path>, sens: &[String]) -> Result<(), Failure> {
    let network = ConstraintNetwork::from_document(&read(path)?).map_err(|e| fail(solver_code(&e), e.to_string()))?;
    let config = SolverConfig::default();
    let (plan, solution) = plan_and_solve(&network, &config).map_err(|e| fail(solver_code(&e), e.to_string()))?;
    let mut report = report_json(&network, &plan, Some(&solution));
    if !sens.is_empty() {
        let mut rows = Vec::new();
        for s in sens {
            let (o, i) = s
                .split_once(':')
                .ok_or_else(|| fail(exit::LOAD, format!("--sensitivity `{s}`: expected OUTPUT:INPUT")))?;
            let idx = |n: &str| network.named(n).ok_or_else(|| fail(exit::LOAD, format!("unknown variable `{n}`")));
            let d = sensitivity(&network, idx(o)?, idx(i)?, &config).map_err(|e| fail(solver_code(&e), e.to_string()))?;
            rows.push(json!({"output": o, "input": i, "value": d}));
        }
        report["sensitivities"] = json!(rows);
    }
    emit(out, "solution.json", &pretty(&report))
}

fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    match out {
        Some(dir) => write(dir, name, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn export(graph: &Path, bundle: &Path, format: ExportFormat, out: Option<&Path>) -> Result<(), Failure> {
    let vocab = if bundle.is_dir() { bundle.join("vocabulary.json") } else { bundle.to_path_buf() };
    let schema = load_schema(&read(&vocab)?).map_err(|e| fail(exit::LOAD, format!("{}: {e}", vocab.display())))?;
    let g = DesignGraph::from_json(Arc::new(schema), &read(graph)?)
        .map_err(|e| fail(exit::LOAD, format!("{}: {e}", graph.display())))?;
    emit(out, &format!("graph.{}", format.extension()), &g.export(format))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run {
            bundle,
            params,
            out,
            trace,
            dump,
            max_steps,
            pi,
        } => run(bundle, params.as_deref(), out, *trace, dump, *max_steps, *pi),
        Cmd::Validate { bundle, params } => params
            .as_deref()
            .map(read)
            .transpose()
            .and_then(|o| load_bundle(bundle, o.as_deref()).map_err(|e| fail(exit::LOAD, e.to_string())))
            .map(|b| {
                eprintln!(
                    "{}: {} classes, {} rules, {} chains, {} activities",
                    b.dir.display(),
                    b.schema.len(),
                    b.env.rules.len(),
                    b.env.chains.len(),
                    b.production.activities.len()
                )
            }),
        Cmd::Solve { network, out, sensitivity } => solve(network, out.as_deref(), sensitivity),
        Cmd::Pi { variables, out } => read(variables).and_then(|t| {
            let r = PiReport::from_document(&t).map_err(|e| fail(exit::LOAD, format!("{}: {e}", variables.display())))?;
            emit(out.as_deref(), "pi.json", &pretty(&r.to_json()))
        }),
        Cmd::Export { graph, bundle, dump, out } => export(graph, bundle, *dump, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
