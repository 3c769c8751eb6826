//! Graph rewriting rules: typed, injective pattern matching with attribute
//! predicates, and single-pushout replacement with dangling-edge deletion.
//!
//! A rule document:
//!
//! ```json
//! {"name": "SCRsystem",
//!  "lhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"}]},
//!  "rhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"},
//!                    {"pid": "s", "class": "SCRSystem", "assign": {"residenceTime": "0.05 [s]"}}],
//!          "edges": [["e", "exhaustLine", "s"]]}}
//! ```
//!
//! Pids present on both sides are preserved nodes. Left-only pids are
//! deleted with every incident edge, right-only pids are created. Left edges
//! between preserved nodes that the right side omits are deleted.

mod apply;
mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ClassScope, EvalError, Expression, Ty, TypeScope};
use crate::graph::{Edge, GraphError, NodeId};
use crate::params::Parameters;
use crate::vocabulary::Schema;

pub use apply::{apply_rule, call_rule, CallOutcome, Delta};
pub use matching::{find_matches, is_match};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Apply the canonical first match.
    #[default]
    First,
    /// Compute all matches up front and apply them in canonical order,
    /// skipping those invalidated by earlier applications.
    Forall,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::First => "first",
            MatchMode::Forall => "forall",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternNode {
    pub pid: String,
    pub class: String,
    pub predicate: Option<Expression>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplacementNode {
    pub pid: String,
    pub class: String,
    /// Attribute assignments, sorted by attribute name.
    pub assign: Vec<(String, Expression)>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PatternEdge {
    pub source: String,
    pub assoc: String,
    pub target: String,
}

impl fmt::Display for PatternEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.source, self.assoc, self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    /// Sorted by pid.
    pub lhs: Vec<PatternNode>,
    pub lhs_edges: Vec<PatternEdge>,
    /// Sorted by pid.
    pub rhs: Vec<ReplacementNode>,
    pub rhs_edges: Vec<PatternEdge>,
    pub mode: MatchMode,
    pub required: bool,
}

/// An injective, type-conforming assignment of left-hand pids to nodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default, Serialize)]
#[serde(transparent)]
pub struct Match {
    bindings: BTreeMap<String, NodeId>,
}

impl Match {
    pub fn get(&self, pid: &str) -> Option<NodeId> {
        self.bindings.get(pid).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Matched nodes in pid order.
    pub fn nodes(&self) -> Vec<NodeId> {
        self.bindings.values().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

impl FromIterator<(String, NodeId)> for Match {
    fn from_iter<I: IntoIterator<Item = (String, NodeId)>>(iter: I) -> Self {
        Match {
            bindings: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RuleError {
    #[error("rule document: {0}")]
    Document(String),
    #[error("rule `{rule}`: {message}")]
    Invalid { rule: String, message: String },
    #[error("rule `{0}` is required but has no match")]
    NoMatch(String),
    #[error("rule `{0}`: stale match")]
    StaleMatch(String),
    /// `target` is `pid.attr`.
    #[error("rule `{rule}`: assignment `{target}`: {source}")]
    Assignment { rule: String, target: String, source: EvalError },
    #[error("rule `{rule}`: {source}")]
    Graph { rule: String, source: GraphError },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    name: String,
    #[serde(default)]
    lhs: SideDoc,
    #[serde(default)]
    rhs: SideDoc,
    #[serde(default)]
    mode: MatchMode,
    #[serde(default)]
    required: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SideDoc {
    #[serde(default)]
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    edges: Vec<(String, String, String)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    pid: String,
    class: String,
    #[serde(rename = "where")]
    predicate: Option<String>,
    #[serde(default)]
    assign: BTreeMap<String, String>,
}

/// Type scope for assignments: `pid.attr` over left-hand bindings.
struct BindingTypes<'a> {
    schema: &'a Schema,
    classes: &'a BTreeMap<&'a str, &'a str>,
    params: &'a Parameters,
}

impl TypeScope for BindingTypes<'_> {
    fn ident(&self, path: &[String]) -> Option<Ty> {
        let [pid, attr] = path else { return None };
        let class = self.classes.get(pid.as_str())?;
        self.schema.attribute(class, attr).map(Ty::of_attr)
    }

    fn schema(&self) -> Option<&Schema> {
        Some(self.schema)
    }

    fn param(&self, name: &str) -> Option<Ty> {
        self.params.ty(name)
    }
}

/// Parses a rule document and checks it against `schema`. Parameter types
/// are needed to check `param(..)` uses.
pub fn load_rule(document: &str, schema: &Schema, params: &Parameters) -> Result<Rule, RuleError> {
    let doc: RuleDoc = serde_json::from_str(document).map_err(|e| RuleError::Document(e.to_string()))?;
    let name = doc.name.clone();
    let invalid = |message: String| RuleError::Invalid {
        rule: name.clone(),
        message,
    };

    let mut lhs = Vec::new();
    for n in doc.lhs.nodes {
        if !n.assign.is_empty() {
            return Err(invalid(format!("left-hand node `{}` cannot carry assignments", n.pid)));
        }
        let predicate = match &n.predicate {
            Some(src) => Some(Expression::parse(src).map_err(|e| invalid(format!("where of `{}`: {e}", n.pid)))?),
            None => None,
        };
        lhs.push(PatternNode {
            pid: n.pid,
            class: n.class,
            predicate,
        });
    }
    let mut rhs = Vec::new();
    for n in doc.rhs.nodes {
        if n.predicate.is_some() {
            return Err(invalid(format!("right-hand node `{}` cannot carry a where predicate", n.pid)));
        }
        let mut assign = Vec::new();
        for (attr, src) in n.assign {
            let e = Expression::parse(&src).map_err(|e| invalid(format!("assignment `{}.{attr}`: {e}", n.pid)))?;
            assign.push((attr, e));
        }
        rhs.push(ReplacementNode {
            pid: n.pid,
            class: n.class,
            assign,
        });
    }
    let edge = |(source, assoc, target)| PatternEdge { source, assoc, target };
    let rule = Rule {
        name: doc.name,
        lhs,
        lhs_edges: doc.lhs.edges.into_iter().map(edge).collect(),
        rhs,
        rhs_edges: doc.rhs.edges.into_iter().map(edge).collect(),
        mode: doc.mode,
        required: doc.required,
    };
    rule.check(schema, params)?;
    let mut rule = rule;
    rule.lhs.sort_by(|a, b| a.pid.cmp(&b.pid));
    rule.rhs.sort_by(|a, b| a.pid.cmp(&b.pid));
    Ok(rule)
}

impl Rule {
    /// Pids on both sides.
    pub fn preserved(&self) -> BTreeSet<&str> {
        let left: BTreeSet<&str> = self.lhs.iter().map(|n| n.pid.as_str()).collect();
        self.rhs.iter().map(|n| n.pid.as_str()).filter(|p| left.contains(p)).collect()
    }

    /// Static checks: pids, classes, associations, predicate and assignment types.
    pub fn check(&self, schema: &Schema, params: &Parameters) -> Result<(), RuleError> {
        let invalid = |message: String| RuleError::Invalid {
            rule: self.name.clone(),
            message,
        };
        let mut left: BTreeMap<&str, &str> = BTreeMap::new();
        for n in &self.lhs {
            if schema.class(&n.class).is_none() {
                return Err(invalid(format!("`{}` has unknown class `{}`", n.pid, n.class)));
            }
            if left.insert(&n.pid, &n.class).is_some() {
                return Err(invalid(format!("duplicate left-hand pid `{}`", n.pid)));
            }
            if let Some(p) = &n.predicate {
                let scope = ClassScope {
                    schema,
                    class: &n.class,
                    outer: Some(params),
                };
                match p.type_of(&scope) {
                    Ok(Ty::Bool) => {}
                    Ok(t) => return Err(invalid(format!("where of `{}` has type {t:?}, expected a boolean", n.pid))),
                    Err(e) => return Err(invalid(format!("where of `{}`: {e}", n.pid))),
                }
            }
        }
        let mut right: BTreeMap<&str, &str> = BTreeMap::new();
        for n in &self.rhs {
            if schema.class(&n.class).is_none() {
                return Err(invalid(format!("`{}` has unknown class `{}`", n.pid, n.class)));
            }
            if right.insert(&n.pid, &n.class).is_some() {
                return Err(invalid(format!("duplicate right-hand pid `{}`", n.pid)));
            }
            if let Some(c) = left.get(n.pid.as_str()) {
                if *c != n.class {
                    return Err(invalid(format!(
                        "preserved pid `{}` changes class from `{c}` to `{}`",
                        n.pid, n.class
                    )));
                }
            }
            let scope = BindingTypes {
                schema,
                classes: &left,
                params,
            };
            for (attr, e) in &n.assign {
                let def = schema
                    .attribute(&n.class, attr)
                    .ok_or_else(|| invalid(format!("`{}`: class `{}` has no attribute `{attr}`", n.pid, n.class)))?;
                let expected = Ty::of_attr(def);
                let found = e
                    .type_of(&scope)
                    .map_err(|err| invalid(format!("assignment `{}.{attr}`: {err}", n.pid)))?;
                if found != expected {
                    return Err(invalid(format!(
                        "assignment `{}.{attr}`: expression has type {found:?}, attribute is {expected:?}",
                        n.pid
                    )));
                }
            }
        }
        for (side, edges, classes, strict) in [("left", &self.lhs_edges, &left, false), ("right", &self.rhs_edges, &right, true)] {
            let mut seen = BTreeSet::new();
            for e in edges {
                let (Some(src), Some(dst)) = (classes.get(e.source.as_str()), classes.get(e.target.as_str())) else {
                    return Err(invalid(format!("{side}-hand edge {e} references an unknown pid")));
                };
                let def = schema
                    .association(src, &e.assoc)
                    .ok_or_else(|| invalid(format!("{side}-hand edge {e}: `{src}` declares no association `{}`", e.assoc)))?;
                // a left pattern may name a supertype of the association target
                let fits = schema.conforms(dst, &def.target) || (!strict && schema.conforms(&def.target, dst));
                if !fits {
                    return Err(invalid(format!(
                        "{side}-hand edge {e}: target `{dst}` does not conform to `{}`",
                        def.target
                    )));
                }
                if !seen.insert(e) {
                    return Err(invalid(format!("duplicate {side}-hand edge {e}")));
                }
            }
        }
        Ok(())
    }
}

/// Helper for producing edges from pid triples under a binding.
fn bind_edge(e: &PatternEdge, nodes: &BTreeMap<String, NodeId>) -> Option<Edge> {
    Some(Edge {
        source: *nodes.get(&e.source)?,
        assoc: e.assoc.clone(),
        target: *nodes.get(&e.target)?,
    })
}
