//! Language bundles: a directory holding a complete design language.
//!
//! ```text
//! vocabulary.json     classes, attributes, equations, associations
//! production.json     activities and the main activity
//! rules/*.json        one rule per file
//! chains/*.json       one process chain per file (optional directory)
//! params.json         parameter declarations (optional)
//! ```
//!
//! Loading reports every problem found, each prefixed with its file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::chain::{load_chain, ChainSpec};
use crate::graph::DesignGraph;
use crate::params::Parameters;
use crate::production::{execute, Aborted, Env, Production, Run};
use crate::rules::{load_rule, Rule};
use crate::vocabulary::{load_schema, Schema};

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub schema: Arc<Schema>,
    pub production: Production,
    pub env: Env,
}

/// All problems found while loading a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadError {
    pub problems: Vec<String>,
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.problems.join("\n"))
    }
}

impl std::error::Error for LoadError {}

fn read(path: &Path, problems: &mut Vec<String>) -> Option<String> {
    match fs::read_to_string(path) {
        Ok(s) => Some(s),
        Err(e) => {
            problems.push(format!("{}: {e}", path.display()));
            None
        }
    }
}

/// `*.json` files of `dir` in name order; a missing directory is empty.
fn json_files(dir: &Path, problems: &mut Vec<String>) -> Vec<PathBuf> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Vec::new(),
        Err(e) => {
            problems.push(format!("{}: {e}", dir.display()));
            return Vec::new();
        }
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

/// Loads and cross-checks the bundle in `dir`. `overrides` is a parameter
/// override document applied over `params.json`.
pub fn load_bundle(dir: &Path, overrides: Option<&str>) -> Result<Bundle, LoadError> {
    let mut problems = Vec::new();
    let vocab_path = dir.join("vocabulary.json");
    let schema = read(&vocab_path, &mut problems).and_then(|text| match load_schema(&text) {
        Ok(s) => Some(Arc::new(s)),
        Err(e) => {
            problems.push(format!("{}: {e}", vocab_path.display()));
            None
        }
    });

    let params_path = dir.join("params.json");
    let mut params = if params_path.exists() {
        read(&params_path, &mut problems)
            .and_then(|t| {
                Parameters::from_document(&t)
                    .map_err(|e| problems.push(format!("{}: {e}", params_path.display())))
                    .ok()
            })
            .unwrap_or_default()
    } else {
        Parameters::new()
    };
    if let Some(o) = overrides {
        if let Err(e) = params.apply_overrides(o) {
            problems.push(format!("parameter overrides: {e}"));
        }
    }

    let prod_path = dir.join("production.json");
    let production = read(&prod_path, &mut problems).and_then(|t| match crate::production::load_production(&t) {
        Ok(p) => Some(p),
        Err(e) => {
            problems.push(format!("{}: {e}", prod_path.display()));
            None
        }
    });

    let Some(schema) = schema else {
        return Err(LoadError { problems });
    };

    let mut rules: BTreeMap<String, Rule> = BTreeMap::new();
    let mut rule_files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in json_files(&dir.join("rules"), &mut problems) {
        let Some(text) = read(&path, &mut problems) else { continue };
        match load_rule(&text, &schema, &params) {
            Ok(r) => {
                if let Some(first) = rule_files.get(&r.name) {
                    problems.push(format!("{}: rule `{}` already defined in {}", path.display(), r.name, first.display()));
                    continue;
                }
                rule_files.insert(r.name.clone(), path.clone());
                rules.insert(r.name.clone(), r);
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }

    let mut chains: BTreeMap<String, ChainSpec> = BTreeMap::new();
    for path in json_files(&dir.join("chains"), &mut problems) {
        let Some(text) = read(&path, &mut problems) else { continue };
        match load_chain(&text, &schema, &params, dir) {
            Ok(c) if chains.contains_key(&c.name) => {
                problems.push(format!("{}: chain `{}` defined twice", path.display(), c.name))
            }
            Ok(c) => {
                chains.insert(c.name.clone(), c);
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }

    if let Some(p) = &production {
        for issue in p.check(&schema, &rules, &chains, &params) {
            problems.push(format!("{}: {issue}", prod_path.display()));
        }
    }

    match production {
        Some(production) if problems.is_empty() => Ok(Bundle {
            dir: dir.to_path_buf(),
            schema,
            production,
            env: Env::new(rules, chains, params),
        }),
        _ => Err(LoadError { problems }),
    }
}

impl Bundle {
    /// Runs the main activity on a fresh graph.
    pub fn run(&self) -> (DesignGraph, Result<Run, Aborted>) {
        let mut graph = DesignGraph::new(self.schema.clone());
        let result = execute(&self.production, &mut graph, &self.env);
        (graph, result)
    }
}
