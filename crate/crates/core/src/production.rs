//! The production system: activities of rule calls, sub-activities,
//! process-chain calls, decisions, loops and solver runs, executed in order
//! over one design graph.
//!
//! ```json
//! {"main": "main",
//!  "activities": [
//!    {"name": "main", "steps": [
//!      {"step": "rule", "name": "Axiom"},
//!      {"step": "decision", "if": "count(SCRSystem) == 0",
//!       "then": [{"step": "rule", "name": "SCRsystem"}], "else": []},
//!      {"step": "loop", "while": "attr(SCRSystem, pressureLoss) > 2 [kPa]", "max_iter": 20,
//!       "body": [{"step": "rule", "name": "Enlarge"}, {"step": "chain", "name": "pressureLoss"}]},
//!      {"step": "solve"}]}]}
//! ```
//!
//! Decisions and loop conditions first solve the equation network so the
//! predicate sees current values; the solve is skipped when the network is
//! still underdetermined. Multiplicities are only checked after the run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{run_chain, ChainError, ChainSpec};
use crate::expr::{eval_bool, EvalError, EvalScope, Expression, Ty, TypeScope, Value};
use crate::graph::{DesignGraph, NodeId, ValidationReport};
use crate::params::Parameters;
use crate::rules::{call_rule, Delta, MatchMode, Rule, RuleError};
use crate::solution_path::{solve_graph, SolveError, SolverConfig};
use crate::vocabulary::Schema;

pub const DEFAULT_MAX_ITER: u64 = 10_000;
pub const DEFAULT_MAX_STEPS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "step", rename_all = "lowercase", deny_unknown_fields)]
pub enum Step {
    Rule {
        name: String,
        #[serde(default)]
        mode: Option<MatchMode>,
        #[serde(default)]
        required: Option<bool>,
    },
    Activity {
        name: String,
    },
    Chain {
        name: String,
    },
    Decision {
        #[serde(rename = "if", deserialize_with = "expression")]
        predicate: Expression,
        #[serde(default)]
        then: Vec<Step>,
        #[serde(rename = "else", default)]
        otherwise: Vec<Step>,
    },
    Loop {
        #[serde(rename = "while", deserialize_with = "expression")]
        predicate: Expression,
        body: Vec<Step>,
        #[serde(default = "default_max_iter")]
        max_iter: u64,
    },
    Solve,
}

fn default_max_iter() -> u64 {
    DEFAULT_MAX_ITER
}

fn expression<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Expression, D::Error> {
    let src = String::deserialize(d)?;
    Expression::parse(&src).map_err(serde::de::Error::custom)
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Rule { name, .. } => write!(f, "rule {name}"),
            Step::Activity { name } => write!(f, "activity {name}"),
            Step::Chain { name } => write!(f, "chain {name}"),
            Step::Decision { predicate, .. } => write!(f, "decision `{predicate}`"),
            Step::Loop { predicate, .. } => write!(f, "loop `{predicate}`"),
            Step::Solve => f.write_str("solve"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activity {
    pub name: String,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub main: String,
    pub activities: BTreeMap<String, Activity>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductionDoc {
    main: String,
    activities: Vec<Activity>,
}

/// Parses a production document. References are resolved by [`Production::check`].
pub fn load_production(document: &str) -> Result<Production, String> {
    let doc: ProductionDoc = serde_json::from_str(document).map_err(|e| e.to_string())?;
    let mut activities = BTreeMap::new();
    for a in doc.activities {
        if activities.contains_key(&a.name) {
            return Err(format!("duplicate activity `{}`", a.name));
        }
        activities.insert(a.name.clone(), a);
    }
    Ok(Production {
        main: doc.main,
        activities,
    })
}

/// Predicates see graph queries and parameters only.
struct PredicateTypes<'a> {
    schema: &'a Schema,
    params: &'a Parameters,
}

impl TypeScope for PredicateTypes<'_> {
    fn ident(&self, _: &[String]) -> Option<Ty> {
        None
    }

    fn schema(&self) -> Option<&Schema> {
        Some(self.schema)
    }

    fn param(&self, name: &str) -> Option<Ty> {
        self.params.ty(name)
    }
}

struct PredicateScope<'a> {
    graph: &'a DesignGraph,
    params: &'a Parameters,
}

impl EvalScope for PredicateScope<'_> {
    fn ident(&self, path: &[String]) -> Result<Value, EvalError> {
        Err(EvalError::Unknown(path.join(".")))
    }

    fn graph(&self) -> Option<&DesignGraph> {
        Some(self.graph)
    }

    fn param(&self, name: &str) -> Option<Value> {
        self.params.value(name).cloned()
    }
}

/// Evaluates a decision predicate against the graph.
pub fn eval_decision(predicate: &Expression, graph: &DesignGraph, params: &Parameters) -> Result<bool, EvalError> {
    eval_bool(predicate.root(), &PredicateScope { graph, params })
}

impl Production {
    /// Every unresolved reference, ill-typed predicate and activity cycle.
    pub fn check(
        &self,
        schema: &Schema,
        rules: &BTreeMap<String, Rule>,
        chains: &BTreeMap<String, ChainSpec>,
        params: &Parameters,
    ) -> Vec<String> {
        let mut problems = Vec::new();
        if !self.activities.contains_key(&self.main) {
            problems.push(format!("main activity `{}` is not defined", self.main));
        }
        let scope = PredicateTypes { schema, params };
        for a in self.activities.values() {
            walk(&a.steps, &a.name, &mut |path, step| match step {
                Step::Rule { name, .. } if !rules.contains_key(name) => {
                    problems.push(format!("{path}: unknown rule `{name}`"))
                }
                Step::Activity { name } if !self.activities.contains_key(name) => {
                    problems.push(format!("{path}: unknown activity `{name}`"))
                }
                Step::Chain { name } if !chains.contains_key(name) => {
                    problems.push(format!("{path}: unknown chain `{name}`"))
                }
                Step::Decision { predicate, .. } | Step::Loop { predicate, .. } => {
                    match predicate.type_of(&scope) {
                        Ok(Ty::Bool) => {}
                        Ok(t) => problems.push(format!("{path}: predicate `{predicate}` has type {t:?}, expected a boolean")),
                        Err(e) => problems.push(format!("{path}: {e}")),
                    }
                    if let Step::Loop { max_iter: 0, .. } = step {
                        problems.push(format!("{path}: max_iter must be positive"));
                    }
                }
                _ => {}
            });
        }
        if let Some(cycle) = self.activity_cycle() {
            problems.push(format!("recursive activities: {}", cycle.join(" -> ")));
        }
        problems
    }

    fn callees(&self, name: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        if let Some(a) = self.activities.get(name) {
            walk(&a.steps, name, &mut |_, s| {
                if let Step::Activity { name } = s {
                    if let Some((k, _)) = self.activities.get_key_value(name) {
                        out.insert(k.as_str());
                    }
                }
            });
        }
        out
    }

    /// A cycle in the activity call graph, as a closed path.
    pub fn activity_cycle(&self) -> Option<Vec<String>> {
        fn dfs<'a>(p: &'a Production, at: &'a str, stack: &mut Vec<&'a str>, done: &mut BTreeSet<&'a str>) -> Option<Vec<String>> {
            if let Some(i) = stack.iter().position(|s| *s == at) {
                let mut cycle: Vec<String> = stack[i..].iter().map(|s| s.to_string()).collect();
                cycle.push(at.to_string());
                return Some(cycle);
            }
            if !done.insert(at) {
                return None;
            }
            stack.push(at);
            for c in p.callees(at) {
                if let Some(cycle) = dfs(p, c, stack, done) {
                    return Some(cycle);
                }
            }
            stack.pop();
            None
        }
        let mut done = BTreeSet::new();
        self.activities
            .keys()
            .find_map(|a| dfs(self, a, &mut Vec::new(), &mut done))
    }
}

fn walk(steps: &[Step], path: &str, f: &mut dyn FnMut(&str, &Step)) {
    for (i, s) in steps.iter().enumerate() {
        let here = format!("{path}/{i}");
        f(&here, s);
        match s {
            Step::Decision { then, otherwise, .. } => {
                walk(then, &format!("{here}/then"), f);
                walk(otherwise, &format!("{here}/else"), f);
            }
            Step::Loop { body, .. } => walk(body, &format!("{here}/body"), f),
            _ => {}
        }
    }
}

/// Everything a run needs besides the graph.
#[derive(Debug, Clone)]
pub struct Env {
    pub rules: BTreeMap<String, Rule>,
    pub chains: BTreeMap<String, ChainSpec>,
    pub params: Parameters,
    pub solver: SolverConfig,
    /// Global budget over executed steps and loop iterations.
    pub max_steps: u64,
}

impl Env {
    pub fn new(rules: BTreeMap<String, Rule>, chains: BTreeMap<String, ChainSpec>, params: Parameters) -> Self {
        Env {
            rules,
            chains,
            params,
            solver: SolverConfig::default(),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "step", rename_all = "lowercase")]
pub enum Event {
    Rule {
        rule: String,
        mode: MatchMode,
        matches: usize,
        applied: usize,
        delta: Delta,
    },
    Activity {
        name: String,
    },
    Chain {
        chain: String,
        exit_status: i32,
        written: usize,
        values: Vec<(NodeId, String, Value)>,
    },
    Decision {
        predicate: String,
        value: bool,
        branch: &'static str,
    },
    Loop {
        predicate: String,
        iteration: u64,
        value: bool,
    },
    Solve {
        implicit: bool,
        equations: usize,
        unknowns: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        max_residual: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        skipped: Option<String>,
    },
}

/// One executed step. `path` locates the step as `activity/index[/then|else|body/index]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub seq: u64,
    pub path: String,
    #[serde(flatten)]
    pub event: Event,
}

/// The ordered log of a run. Elapsed times are kept apart from the entries
/// so that the entries are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
    pub elapsed: Vec<Duration>,
}

impl Trace {
    /// Line-delimited JSON, one entry per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializable") + "\n")
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ProductionError {
    #[error("{path}: {source}")]
    Rule { path: String, source: Box<RuleError> },
    #[error("{path}: {source}")]
    Chain { path: String, source: Box<ChainError> },
    #[error("{path}: predicate `{predicate}`: {source}")]
    Predicate { path: String, predicate: String, source: EvalError },
    #[error("{path}: solver: {source}")]
    Solver { path: String, source: SolveError },
    #[error("{path}: loop still running after {max_iter} iterations")]
    LoopBound { path: String, max_iter: u64 },
    #[error("step budget of {0} exhausted")]
    StepBudget(u64),
    #[error("unknown {kind} `{name}`")]
    Unresolved { kind: &'static str, name: String },
}

/// A run that stopped at a failing step, with the trace up to that point.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct Aborted {
    pub error: ProductionError,
    pub trace: Trace,
}

/// A completed run. The graph passed validation when `validation.is_valid()`.
#[derive(Debug, Clone)]
pub struct Run {
    pub trace: Trace,
    pub validation: ValidationReport,
}

struct Exec<'a> {
    production: &'a Production,
    env: &'a Env,
    trace: Trace,
    steps: u64,
}

impl Exec<'_> {
    fn record(&mut self, path: &str, event: Event, started: Instant) {
        self.trace.entries.push(TraceEntry {
            seq: self.trace.entries.len() as u64,
            path: path.to_string(),
            event,
        });
        self.trace.elapsed.push(started.elapsed());
    }

    fn tick(&mut self) -> Result<(), ProductionError> {
        self.steps += 1;
        if self.steps > self.env.max_steps {
            return Err(ProductionError::StepBudget(self.env.max_steps));
        }
        Ok(())
    }

    fn steps(&mut self, steps: &[Step], path: &str, graph: &mut DesignGraph) -> Result<(), ProductionError> {
        for (i, s) in steps.iter().enumerate() {
            self.step(s, &format!("{path}/{i}"), graph)?;
        }
        Ok(())
    }

    fn solve(&mut self, path: &str, graph: &mut DesignGraph, implicit: bool) -> Result<(), ProductionError> {
        let started = Instant::now();
        let event = match solve_graph(graph, &self.env.solver) {
            Ok(r) => Event::Solve {
                implicit,
                equations: r.network.equations.len(),
                unknowns: r.network.unknowns().count(),
                max_residual: Some(r.solution.max_residual()),
                skipped: None,
            },
            Err(SolveError::Underdetermined { unknowns, .. }) if implicit => Event::Solve {
                implicit,
                equations: 0,
                unknowns: unknowns.len(),
                max_residual: None,
                skipped: Some(format!("underdetermined: {}", unknowns.join(", "))),
            },
            Err(source) => {
                return Err(ProductionError::Solver {
                    path: path.to_string(),
                    source,
                })
            }
        };
        self.record(path, event, started);
        Ok(())
    }

    fn predicate(&mut self, path: &str, predicate: &Expression, graph: &mut DesignGraph) -> Result<bool, ProductionError> {
        self.solve(path, graph, true)?;
        eval_decision(predicate, graph, &self.env.params).map_err(|source| ProductionError::Predicate {
            path: path.to_string(),
            predicate: predicate.to_string(),
            source,
        })
    }

    fn step(&mut self, step: &Step, path: &str, graph: &mut DesignGraph) -> Result<(), ProductionError> {
        self.tick()?;
        let started = Instant::now();
        match step {
            Step::Rule { name, mode, required } => {
                let rule = self.env.rules.get(name).ok_or_else(|| ProductionError::Unresolved {
                    kind: "rule",
                    name: name.clone(),
                })?;
                let mode = mode.unwrap_or(rule.mode);
                let out = call_rule(rule, graph, &self.env.params, mode, required.unwrap_or(rule.required)).map_err(
                    |source| ProductionError::Rule {
                        path: path.to_string(),
                        source: Box::new(source),
                    },
                )?;
                let event = Event::Rule {
                    rule: name.clone(),
                    mode,
                    matches: out.matches,
                    applied: out.applied,
                    delta: out.delta,
                };
                self.record(path, event, started);
            }
            Step::Activity { name } => {
                let activity = self.production.activities.get(name).ok_or_else(|| ProductionError::Unresolved {
                    kind: "activity",
                    name: name.clone(),
                })?;
                self.record(path, Event::Activity { name: name.clone() }, started);
                self.steps(&activity.steps, &format!("{path}/{name}"), graph)?;
            }
            Step::Chain { name } => {
                let spec = self.env.chains.get(name).ok_or_else(|| ProductionError::Unresolved {
                    kind: "chain",
                    name: name.clone(),
                })?;
                let r = run_chain(spec, graph, &self.env.params).map_err(|source| ProductionError::Chain {
                    path: path.to_string(),
                    source: Box::new(source),
                })?;
                let event = Event::Chain {
                    chain: name.clone(),
                    exit_status: r.exit_status,
                    written: r.written,
                    values: r.values,
                };
                self.record(path, event, started);
            }
            Step::Decision { predicate, then, otherwise } => {
                let value = self.predicate(path, predicate, graph)?;
                let (branch, steps) = if value { ("then", then) } else { ("else", otherwise) };
                let event = Event::Decision {
                    predicate: predicate.to_string(),
                    value,
                    branch,
                };
                self.record(path, event, started);
                self.steps(steps, &format!("{path}/{branch}"), graph)?;
            }
            Step::Loop { predicate, body, max_iter } => {
                for iteration in 0.. {
                    if iteration > 0 {
                        self.tick()?;
                    }
                    let started = Instant::now();
                    let value = self.predicate(path, predicate, graph)?;
                    let event = Event::Loop {
                        predicate: predicate.to_string(),
                        iteration,
                        value,
                    };
                    self.record(path, event, started);
                    if !value {
                        break;
                    }
                    if iteration == *max_iter {
                        return Err(ProductionError::LoopBound {
                            path: path.to_string(),
                            max_iter: *max_iter,
                        });
                    }
                    self.steps(body, &format!("{path}/body"), graph)?;
                }
            }
            Step::Solve => self.solve(path, graph, false)?,
        }
        Ok(())
    }
}

/// Runs the named activity on `graph`, then validates the result.
// `Aborted` carries the partial trace, so it is as large as `Run`.
#[allow(clippy::result_large_err)]
pub fn execute_activity(
    production: &Production,
    activity: &str,
    graph: &mut DesignGraph,
    env: &Env,
) -> Result<Run, Aborted> {
    let mut exec = Exec {
        production,
        env,
        trace: Trace::default(),
        steps: 0,
    };
    let result = match production.activities.get(activity) {
        Some(a) => exec.steps(&a.steps, activity, graph),
        None => Err(ProductionError::Unresolved {
            kind: "activity",
            name: activity.to_string(),
        }),
    };
    match result {
        Ok(()) => Ok(Run {
            trace: exec.trace,
            validation: graph.validate(),
        }),
        Err(error) => Err(Aborted {
            error,
            trace: exec.trace,
        }),
    }
}

/// Runs the main activity.
#[allow(clippy::result_large_err)]
pub fn execute(production: &Production, graph: &mut DesignGraph, env: &Env) -> Result<Run, Aborted> {
    execute_activity(production, &production.main, graph, env)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::rules::load_rule;
    use crate::vocabulary::load_schema;

    fn schema() -> Arc<Schema> {
        Arc::new(
            load_schema(
                r#"{"classes": [
            {"name": "CombustionEngine",
             "attributes": [{"name": "massFlow", "kind": "number", "dimension": {"M": "1", "T": "-1"}}],
             "associations": [{"name": "exhaustLine", "target": "SCRSystem", "min": 1, "max": 1,
                               "bindings": [["massFlow", "inFlow"]]}]},
            {"name": "SCRSystem",
             "attributes": [{"name": "inFlow", "kind": "number", "dimension": {"M": "1", "T": "-1"}},
                            {"name": "residenceTime", "kind": "number", "dimension": {"T": "1"}, "default": "0.5 [s]"},
                            {"name": "load", "kind": "number", "dimension": {"M": "1"}}],
             "equations": ["load == inFlow * residenceTime"]}
        ]}"#,
            )
            .unwrap(),
        )
    }

    fn env(schema: &Schema) -> Env {
        let params = Parameters::from_document(r#"{"flow": "2 [kg/s]"}"#).unwrap();
        let rules = [
            r#"{"name": "Axiom", "rhs": {"nodes": [{"pid": "e", "class": "CombustionEngine", "assign": {"massFlow": "param(flow)"}}]}}"#,
            r#"{"name": "SCRsystem", "lhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"}]},
                "rhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"}, {"pid": "s", "class": "SCRSystem"}],
                        "edges": [["e", "exhaustLine", "s"]]}}"#,
            r#"{"name": "Longer", "lhs": {"nodes": [{"pid": "s", "class": "SCRSystem"}]},
                "rhs": {"nodes": [{"pid": "s", "class": "SCRSystem", "assign": {"residenceTime": "s.residenceTime * 2"}}]}}"#,
        ]
        .iter()
        .map(|d| {
            let r = load_rule(d, schema, &params).unwrap();
            (r.name.clone(), r)
        })
        .collect();
        Env::new(rules, BTreeMap::new(), params)
    }

    fn production(doc: &str) -> Production {
        load_production(doc).unwrap()
    }

    #[test]
    fn empty_activity_is_identity() {
        let s = schema();
        let p = production(r#"{"main": "main", "activities": [{"name": "main", "steps": []}]}"#);
        let mut g = DesignGraph::new(s.clone());
        let run = execute(&p, &mut g, &env(&s)).unwrap();
        assert!(run.trace.entries.is_empty());
        assert!(g.is_empty());
    }

    #[test]
    fn axiom_then_decision_then_solve() {
        let s = schema();
        let p = production(
            r#"{"main": "main", "activities": [{"name": "main", "steps": [
                {"step": "rule", "name": "Axiom"},
                {"step": "decision", "if": "count(SCRSystem) == 0", "then": [{"step": "rule", "name": "SCRsystem"}]},
                {"step": "decision", "if": "count(SCRSystem) == 0", "then": [{"step": "rule", "name": "SCRsystem"}]},
                {"step": "solve"}]}]}"#,
        );
        let e = env(&s);
        assert!(p.check(&s, &e.rules, &e.chains, &e.params).is_empty());
        let mut g = DesignGraph::new(s.clone());
        let run = execute(&p, &mut g, &e).unwrap();
        assert!(run.validation.is_valid(), "{}", run.validation);
        assert_eq!(g.nodes_of("SCRSystem").count(), 1);
        let branches: Vec<_> = run
            .trace
            .entries
            .iter()
            .filter_map(|t| match &t.event {
                Event::Decision { branch, .. } => Some(*branch),
                _ => None,
            })
            .collect();
        assert_eq!(branches, ["then", "else"]);
        let scr = g.nodes_of("SCRSystem").next().unwrap();
        assert_eq!(scr.attr("load"), Some(&Value::Number(1.0)));
    }

    #[test]
    fn loop_runs_until_predicate_fails() {
        let s = schema();
        let p = production(
            r#"{"main": "main", "activities": [
                {"name": "main", "steps": [{"step": "rule", "name": "Axiom"}, {"step": "activity", "name": "grow"}]},
                {"name": "grow", "steps": [{"step": "rule", "name": "SCRsystem"},
                    {"step": "loop", "while": "attr(SCRSystem, load) < 10 [kg]", "max_iter": 10,
                     "body": [{"step": "rule", "name": "Longer"}]}]}]}"#,
        );
        let mut g = DesignGraph::new(s.clone());
        let run = execute(&p, &mut g, &env(&s)).unwrap();
        // load = 2 kg/s * 0.5 s * 2^k >= 10 kg at k = 4
        let scr = g.nodes_of("SCRSystem").next().unwrap();
        assert_eq!(scr.attr("residenceTime"), Some(&Value::Number(8.0)));
        let loops = run.trace.entries.iter().filter(|t| matches!(t.event, Event::Loop { .. })).count();
        assert_eq!(loops, 5);
        assert!(run.trace.entries.iter().any(|t| t.path == "main/1/grow/1/body/0"));
    }

    #[test]
    fn loop_bound_and_step_budget() {
        let s = schema();
        let p = production(
            r#"{"main": "main", "activities": [{"name": "main", "steps": [
                {"step": "loop", "while": "true", "max_iter": 3, "body": [{"step": "rule", "name": "Axiom"}]}]}]}"#,
        );
        let mut g = DesignGraph::new(s.clone());
        let err = execute(&p, &mut g, &env(&s)).unwrap_err();
        assert!(matches!(err.error, ProductionError::LoopBound { max_iter: 3, .. }));
        assert_eq!(g.node_count(), 3);

        let mut e = env(&s);
        e.max_steps = 4;
        let mut g = DesignGraph::new(s.clone());
        let err = execute(&p, &mut g, &e).unwrap_err();
        assert!(matches!(err.error, ProductionError::StepBudget(4)), "{}", err.error);
    }

    #[test]
    fn implicit_solve_skips_underdetermined() {
        let s = schema();
        let p = production(
            r#"{"main": "main", "activities": [{"name": "main", "steps": [
                {"step": "rule", "name": "SCRsystem"},
                {"step": "decision", "if": "exists(SCRSystem where residenceTime > 0 [s])"}]}]}"#,
        );
        let mut g = DesignGraph::new(s.clone());
        g.instantiate("SCRSystem", Vec::<(String, crate::graph::Typed)>::new()).unwrap();
        let run = execute(&p, &mut g, &env(&s)).unwrap();
        let skipped = run.trace.entries.iter().any(|t| matches!(&t.event, Event::Solve { skipped: Some(_), .. }));
        assert!(skipped);
        assert!(!run.validation.is_valid());
    }

    #[test]
    fn predicate_errors_and_checks() {
        let s = schema();
        let e = env(&s);
        let p = production(
            r#"{"main": "main", "activities": [{"name": "main", "steps": [
                {"step": "decision", "if": "attr(SCRSystem, load) > 0 [kg]"}]}]}"#,
        );
        let mut g = DesignGraph::new(s.clone());
        let err = execute(&p, &mut g, &e).unwrap_err();
        assert!(matches!(err.error, ProductionError::Predicate { source: EvalError::NotUnique { found: 0, .. }, .. }));

        let p = production(
            r#"{"main": "start", "activities": [
                {"name": "a", "steps": [{"step": "activity", "name": "b"}, {"step": "rule", "name": "Missing"}]},
                {"name": "b", "steps": [{"step": "decision", "if": "count(SCRSystem)", "then": [{"step": "activity", "name": "a"}]},
                                        {"step": "chain", "name": "nope"}]}]}"#,
        );
        let problems = p.check(&s, &e.rules, &e.chains, &e.params);
        let text = problems.join("\n");
        for needle in ["`start`", "unknown rule `Missing`", "unknown chain `nope`", "expected a boolean", "a -> b -> a"] {
            assert!(text.contains(needle), "{needle} missing from\n{text}");
        }
    }

    #[test]
    fn trace_is_line_delimited_json() {
        let s = schema();
        let p = production(
            r#"{"main": "main", "activities": [{"name": "main", "steps": [{"step": "rule", "name": "Axiom"}]}]}"#,
        );
        let mut g = DesignGraph::new(s.clone());
        let run = execute(&p, &mut g, &env(&s)).unwrap();
        assert_eq!(
            run.trace.to_jsonl(),
            "{\"seq\":0,\"path\":\"main/0\",\"step\":\"rule\",\"rule\":\"Axiom\",\"mode\":\"first\",\"matches\":1,\"applied\":1,\
             \"delta\":{\"created_nodes\":[1],\"deleted_nodes\":[],\"updated\":[],\"created_edges\":[],\"deleted_edges\":[]}}\n"
        );
        assert!(load_production(r#"{"main": "m", "activities": [{"name": "m", "steps": [{"step": "jump"}]}]}"#).is_err());
    }
}
