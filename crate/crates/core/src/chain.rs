//! Process chains: export a graph extract to a file, run an external
//! program on it in a fresh working directory, parse its result file and
//! write the mapped values back into the graph.
//!
//! ```json
//! {"name": "pressureLoss",
//!  "command": ["./pressure_loss.sh", "{input}", "{output}"],
//!  "extract": {"class": "SCRSystem", "attributes": ["inFlow", "catalystVolume"]},
//!  "input_format": "json",
//!  "output_file": "result.json",
//!  "output_mapping": [{"path": "nodes/{i}/pressureLoss", "node": "each", "attr": "pressureLoss"}],
//!  "timeout": 10}
//! ```
//!
//! Placeholders `{input}`, `{output}` and `{workdir}` in arguments expand to
//! absolute paths inside the working directory. A program containing a `/`
//! is resolved against the chain's base directory. Working directories are
//! created under `DESIGNC_TMPDIR` when set, else the system temp directory.
//!
//! Node selectors: `"each"` maps once per extracted node, with `{i}` in the
//! path replaced by the node's extract index (CSV: the row); `{"extracted": k}`
//! targets the k-th extracted node; `{"class": "X"}` targets the unique `X`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::eval::NodeScope;
use crate::expr::{eval_bool, ClassScope, Expression, Ty, Value};
use crate::graph::{DesignGraph, GraphError, NodeId, Typed};
use crate::params::Parameters;
use crate::vocabulary::Schema;

/// Environment variable overriding the root of chain working directories.
pub const TMPDIR_VAR: &str = "DESIGNC_TMPDIR";

const OUTPUT_CAP: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Json,
    Csv,
}

impl FileFormat {
    fn extension(self) -> &'static str {
        match self {
            FileFormat::Json => "json",
            FileFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extract {
    pub class: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(rename = "where", default, deserialize_with = "expression_opt")]
    pub predicate: Option<Expression>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum NodeSelector {
    Keyword(SelectorKeyword),
    Extracted { extracted: usize },
    Class { class: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKeyword {
    Each,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mapping {
    /// Slash-separated path into a JSON result, or a CSV column name.
    pub path: String,
    pub node: NodeSelector,
    pub attr: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub name: String,
    /// Program followed by argument templates.
    pub command: Vec<String>,
    pub extract: Extract,
    #[serde(default = "default_format")]
    pub input_format: FileFormat,
    pub output_file: String,
    /// Defaults to `input_format`.
    #[serde(default)]
    pub output_format: Option<FileFormat>,
    #[serde(default)]
    pub output_mapping: Vec<Mapping>,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Where relative program paths are resolved; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_format() -> FileFormat {
    FileFormat::Json
}

fn default_timeout() -> f64 {
    60.0
}

fn expression_opt<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Expression>, D::Error> {
    let src: Option<String> = Option::deserialize(d)?;
    src.map(|s| Expression::parse(&s).map_err(serde::de::Error::custom)).transpose()
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain document: {0}")]
    Document(String),
    #[error("chain `{chain}`: {message}")]
    Invalid { chain: String, message: String },
    #[error("chain `{chain}`: command `{program}` not found")]
    NotFound { chain: String, program: String },
    #[error("chain `{chain}`: {message}")]
    Io { chain: String, message: String },
    #[error("chain `{chain}`: exit status {status}: {stderr}")]
    Exit { chain: String, status: i32, stderr: String },
    #[error("chain `{chain}`: timed out after {seconds} s")]
    Timeout { chain: String, seconds: f64 },
    #[error("chain `{chain}`: cannot parse output: {message}")]
    Parse { chain: String, message: String },
    #[error("chain `{chain}`: mapping `{path}`: {message}")]
    Mapping { chain: String, path: String, message: String },
    #[error("chain `{chain}`: write-back: {source}")]
    WriteBack { chain: String, source: GraphError },
}

/// Outcome of a successful chain run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainResult {
    pub exit_status: i32,
    /// `(node, attribute, value)` in mapping order.
    pub values: Vec<(NodeId, String, Value)>,
    pub written: usize,
    pub stdout: String,
    pub stderr: String,
}

/// Parses a chain document and checks it against `schema`.
pub fn load_chain(document: &str, schema: &Schema, params: &Parameters, base_dir: &Path) -> Result<ChainSpec, ChainError> {
    let mut spec: ChainSpec = serde_json::from_str(document).map_err(|e| ChainError::Document(e.to_string()))?;
    // the child runs in its workdir, so a relative base would resolve there
    spec.base_dir = std::path::absolute(base_dir).map_err(|e| ChainError::Document(e.to_string()))?;
    spec.check(schema, params)?;
    Ok(spec)
}

fn inside_workdir(rel: &str) -> bool {
    let p = Path::new(rel);
    !rel.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

impl ChainSpec {
    pub fn output_format(&self) -> FileFormat {
        self.output_format.unwrap_or(self.input_format)
    }

    fn invalid(&self, message: String) -> ChainError {
        ChainError::Invalid {
            chain: self.name.clone(),
            message,
        }
    }

    pub fn check(&self, schema: &Schema, params: &Parameters) -> Result<(), ChainError> {
        if self.command.is_empty() {
            return Err(self.invalid("empty command".into()));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(self.invalid(format!("timeout must be positive, got {}", self.timeout)));
        }
        if !inside_workdir(&self.output_file) {
            return Err(self.invalid(format!("output file `{}` must be a relative path inside the workdir", self.output_file)));
        }
        let class = &self.extract.class;
        if schema.class(class).is_none() {
            return Err(self.invalid(format!("extract class `{class}` is unknown")));
        }
        for a in &self.extract.attributes {
            if schema.attribute(class, a).is_none() {
                return Err(self.invalid(format!("class `{class}` has no attribute `{a}`")));
            }
        }
        if let Some(p) = &self.extract.predicate {
            let scope = ClassScope {
                schema,
                class,
                outer: Some(params),
            };
            match p.type_of(&scope) {
                Ok(Ty::Bool) => {}
                Ok(t) => return Err(self.invalid(format!("extract predicate has type {t:?}, expected a boolean"))),
                Err(e) => return Err(self.invalid(format!("extract predicate: {e}"))),
            }
        }
        for m in &self.output_mapping {
            let target = match &m.node {
                NodeSelector::Class { class } => {
                    if schema.class(class).is_none() {
                        return Err(self.invalid(format!("mapping `{}`: unknown class `{class}`", m.path)));
                    }
                    class
                }
                _ => class,
            };
            if schema.attribute(target, &m.attr).is_none() {
                return Err(self.invalid(format!("mapping `{}`: class `{target}` has no attribute `{}`", m.path, m.attr)));
            }
        }
        Ok(())
    }

    /// Nodes selected by the extract query, in id order.
    pub fn extracted(&self, graph: &DesignGraph, params: &Parameters) -> Vec<NodeId> {
        graph
            .nodes_of(&self.extract.class)
            .filter(|n| match &self.extract.predicate {
                None => true,
                Some(e) => {
                    let scope = NodeScope {
                        graph,
                        node: n.id(),
                        outer: params,
                    };
                    eval_bool(e.root(), &scope).unwrap_or(false)
                }
            })
            .map(|n| n.id())
            .collect()
    }

    /// Serializes the extract in the input format.
    pub fn render_extract(&self, graph: &DesignGraph, nodes: &[NodeId]) -> String {
        match self.input_format {
            FileFormat::Json => {
                let rows: Vec<serde_json::Value> = nodes
                    .iter()
                    .map(|id| {
                        let n = graph.node(*id).expect("extracted node exists");
                        let attrs: serde_json::Map<String, serde_json::Value> = self
                            .extract
                            .attributes
                            .iter()
                            .map(|a| (a.clone(), n.attr(a).map_or(serde_json::Value::Null, to_json)))
                            .collect();
                        serde_json::json!({"id": id.0, "class": n.class(), "attrs": attrs})
                    })
                    .collect();
                let mut s = serde_json::to_string_pretty(&serde_json::json!({ "nodes": rows })).expect("serializable");
                s.push('\n');
                s
            }
            FileFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.extract.attributes).expect("in-memory write");
                for id in nodes {
                    let n = graph.node(*id).expect("extracted node exists");
                    let row: Vec<String> = self
                        .extract
                        .attributes
                        .iter()
                        .map(|a| match n.attr(a) {
                            None => String::new(),
                            Some(Value::Number(x)) => format!("{x:?}"),
                            Some(Value::Str(s)) => s.clone(),
                            Some(Value::Bool(b)) => b.to_string(),
                        })
                        .collect();
                    w.write_record(&row).expect("in-memory write");
                }
                String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
            }
        }
    }
}

fn to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Number(x) => serde_json::Value::from(*x),
        Value::Str(s) => serde_json::Value::from(s.as_str()),
        Value::Bool(b) => serde_json::Value::from(*b),
    }
}

fn workdir_root() -> PathBuf {
    std::env::var_os(TMPDIR_VAR)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(std::env::temp_dir)
}

fn read_capped(path: &Path) -> String {
    let bytes = fs::read(path).unwrap_or_default();
    let end = bytes.len().min(OUTPUT_CAP);
    String::from_utf8_lossy(&bytes[..end]).into_owned()
}

/// A parsed result file.
enum Output {
    Json(serde_json::Value),
    Csv(Vec<BTreeMap<String, String>>),
}

fn parse_output(format: FileFormat, text: &str) -> Result<Output, String> {
    match format {
        FileFormat::Json => serde_json::from_str(text).map(Output::Json).map_err(|e| e.to_string()),
        FileFormat::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let header = r.headers().map_err(|e| e.to_string())?.clone();
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(|e| e.to_string())?;
                rows.push(header.iter().map(str::to_string).zip(rec.iter().map(str::to_string)).collect());
            }
            Ok(Output::Csv(rows))
        }
    }
}

#[derive(Clone, Copy)]
enum Field<'a> {
    Json(&'a serde_json::Value),
    Text(&'a str),
}

fn lookup<'a>(out: &'a Output, path: &str, row: usize) -> Result<Field<'a>, String> {
    match out {
        Output::Json(root) => {
            let mut cur = root;
            for seg in path.split('/').filter(|s| !s.is_empty()) {
                cur = match cur {
                    serde_json::Value::Object(m) => m.get(seg),
                    serde_json::Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get(i)),
                    _ => None,
                }
                .ok_or_else(|| format!("no field `{seg}`"))?;
            }
            Ok(Field::Json(cur))
        }
        Output::Csv(rows) => {
            let r = rows.get(row).ok_or_else(|| format!("no row {row}"))?;
            r.get(path).map(|s| Field::Text(s.as_str())).ok_or_else(|| format!("no column `{path}`"))
        }
    }
}

/// Converts a result field to the attribute's type. Numbers are SI values
/// in the attribute's dimension; strings with a unit tag are also accepted.
fn convert(field: Field<'_>, ty: Ty) -> Result<Typed, String> {
    let text = match field {
        Field::Json(serde_json::Value::String(s)) => Some(s.as_str()),
        Field::Text(s) => Some(s),
        Field::Json(_) => None,
    };
    match (ty, field, text) {
        (Ty::Number(d), Field::Json(serde_json::Value::Number(n)), _) => {
            Ok(Typed::number(n.as_f64().ok_or("number out of range")?, d))
        }
        (Ty::Number(d), _, Some(s)) => {
            if let Ok(x) = s.trim().parse::<f64>() {
                return Ok(Typed::number(x, d));
            }
            let t = Typed::parse(s)?;
            if t.ty != ty {
                return Err(format!("`{s}` has type {:?}, expected {ty:?}", t.ty));
            }
            Ok(t)
        }
        (Ty::Str, _, Some(s)) => Ok(Typed::string(s)),
        (Ty::Bool, Field::Json(serde_json::Value::Bool(b)), _) => Ok(Typed::boolean(*b)),
        (Ty::Bool, Field::Text(s), _) => s.trim().parse::<bool>().map(Typed::boolean).map_err(|e| e.to_string()),
        (_, Field::Json(v), _) => Err(format!("cannot convert {v} to {ty:?}")),
        (_, Field::Text(s), _) => Err(format!("cannot convert `{s}` to {ty:?}")),
    }
}

/// Runs the chain. On any error the graph is left unmodified.
pub fn run_chain(spec: &ChainSpec, graph: &mut DesignGraph, params: &Parameters) -> Result<ChainResult, ChainError> {
    let chain = spec.name.clone();
    let io = |message: String| ChainError::Io {
        chain: chain.clone(),
        message,
    };
    let nodes = spec.extracted(graph, params);

    let root = workdir_root();
    fs::create_dir_all(&root).map_err(|e| io(format!("workdir root {}: {e}", root.display())))?;
    let workdir = tempfile::Builder::new()
        .prefix("designc-")
        .tempdir_in(&root)
        .map_err(|e| io(format!("workdir: {e}")))?;
    let dir = workdir.path();
    let input = dir.join(format!("input.{}", spec.input_format.extension()));
    let output = dir.join(&spec.output_file);
    fs::write(&input, spec.render_extract(graph, &nodes)).map_err(|e| io(format!("writing input: {e}")))?;

    let expand = |arg: &str| {
        arg.replace("{input}", &input.to_string_lossy())
            .replace("{output}", &output.to_string_lossy())
            .replace("{workdir}", &dir.to_string_lossy())
    };
    let program = &spec.command[0];
    let program_path = if program.contains('/') {
        spec.base_dir.join(program)
    } else {
        PathBuf::from(program)
    };
    let stdout_path = dir.join(".stdout");
    let stderr_path = dir.join(".stderr");
    let stdout = fs::File::create(&stdout_path).map_err(|e| io(e.to_string()))?;
    let stderr = fs::File::create(&stderr_path).map_err(|e| io(e.to_string()))?;
    let mut child = Command::new(&program_path)
        .args(spec.command[1..].iter().map(|a| expand(a)))
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .spawn()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ChainError::NotFound {
                chain: chain.clone(),
                program: program.clone(),
            },
            _ => io(format!("spawning `{program}`: {e}")),
        })?;

    let deadline = Instant::now() + Duration::from_secs_f64(spec.timeout);
    let status = loop {
        match child.try_wait().map_err(|e| io(e.to_string()))? {
            Some(s) => break s,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ChainError::Timeout {
                    chain,
                    seconds: spec.timeout,
                });
            }
            None => std::thread::sleep(Duration::from_millis(2)),
        }
    };
    let stdout = read_capped(&stdout_path);
    let stderr = read_capped(&stderr_path);
    let code = status.code().unwrap_or(-1);
    if !status.success() {
        return Err(ChainError::Exit {
            chain,
            status: code,
            stderr,
        });
    }

    let text = fs::read_to_string(&output).map_err(|e| ChainError::Parse {
        chain: chain.clone(),
        message: format!("{}: {e}", spec.output_file),
    })?;
    let parsed = parse_output(spec.output_format(), &text).map_err(|message| ChainError::Parse {
        chain: chain.clone(),
        message,
    })?;

    let mut writes: Vec<(NodeId, String, Typed)> = Vec::new();
    for m in &spec.output_mapping {
        let fail = |message: String| ChainError::Mapping {
            chain: chain.clone(),
            path: m.path.clone(),
            message,
        };
        let targets: Vec<(usize, NodeId)> = match &m.node {
            NodeSelector::Keyword(SelectorKeyword::Each) => nodes.iter().copied().enumerate().collect(),
            NodeSelector::Extracted { extracted } => match nodes.get(*extracted) {
                Some(id) => vec![(*extracted, *id)],
                None => return Err(fail(format!("only {} node(s) extracted", nodes.len()))),
            },
            NodeSelector::Class { class } => {
                let found: Vec<NodeId> = graph.nodes_of(class).map(|n| n.id()).collect();
                match found[..] {
                    [id] => vec![(0, id)],
                    _ => return Err(fail(format!("{} `{class}` instance(s), expected one", found.len()))),
                }
            }
        };
        for (i, id) in targets {
            let class = graph.node(id).expect("live node").class();
            let ty = Ty::of_attr(graph.schema().attribute(class, &m.attr).ok_or_else(|| {
                fail(format!("class `{class}` has no attribute `{}`", m.attr))
            })?);
            let path = m.path.replace("{i}", &i.to_string());
            let field = lookup(&parsed, &path, i).map_err(fail)?;
            let typed = convert(field, ty).map_err(fail)?;
            writes.push((id, m.attr.clone(), typed));
        }
    }

    let values = writes.iter().map(|(n, a, t)| (*n, a.clone(), t.value.clone())).collect();
    let written = writes.len();
    graph.set_attrs(writes).map_err(|source| ChainError::WriteBack {
        chain: chain.clone(),
        source,
    })?;
    Ok(ChainResult {
        exit_status: code,
        values,
        written,
        stdout,
        stderr,
    })
}
