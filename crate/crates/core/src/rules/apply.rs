use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{bind_edge, find_matches, is_match, Match, MatchMode, Rule, RuleError};
use crate::expr::eval::node_attr;
use crate::expr::{eval, EvalError, EvalScope, Ty, Value};
use crate::graph::{DesignGraph, Edge, NodeId, Typed};
use crate::params::Parameters;

/// What one or more rule applications changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Delta {
    pub created_nodes: Vec<NodeId>,
    pub deleted_nodes: Vec<NodeId>,
    pub updated: Vec<(NodeId, String)>,
    pub created_edges: Vec<Edge>,
    pub deleted_edges: Vec<Edge>,
}

impl Delta {
    pub fn is_empty(&self) -> bool {
        self.created_nodes.is_empty()
            && self.deleted_nodes.is_empty()
            && self.updated.is_empty()
            && self.created_edges.is_empty()
            && self.deleted_edges.is_empty()
    }

    pub fn extend(&mut self, other: Delta) {
        self.created_nodes.extend(other.created_nodes);
        self.deleted_nodes.extend(other.deleted_nodes);
        self.updated.extend(other.updated);
        self.created_edges.extend(other.created_edges);
        self.deleted_edges.extend(other.deleted_edges);
    }
}

/// `pid.attr` resolves against the matched nodes before rewriting.
struct BindingScope<'a> {
    graph: &'a DesignGraph,
    m: &'a Match,
    params: &'a Parameters,
}

impl EvalScope for BindingScope<'_> {
    fn ident(&self, path: &[String]) -> Result<Value, EvalError> {
        match path {
            [pid, attr] => match self.m.get(pid) {
                Some(id) => node_attr(self.graph, id, attr),
                None => Err(EvalError::Unknown(path.join("."))),
            },
            _ => Err(EvalError::Unknown(path.join("."))),
        }
    }

    fn graph(&self) -> Option<&DesignGraph> {
        Some(self.graph)
    }

    fn param(&self, name: &str) -> Option<Value> {
        self.params.value(name).cloned()
    }
}

/// Applies `rule` at `m`. Either the whole rewrite happens or the graph is
/// left untouched.
pub fn apply_rule(rule: &Rule, m: &Match, graph: &mut DesignGraph, params: &Parameters) -> Result<Delta, RuleError> {
    if !is_match(rule, m, graph, params) {
        return Err(RuleError::StaleMatch(rule.name.clone()));
    }
    let graph_err = |source| RuleError::Graph {
        rule: rule.name.clone(),
        source,
    };

    // all assignments see the pre-rewrite graph
    let mut values: Vec<Vec<(String, Typed)>> = Vec::with_capacity(rule.rhs.len());
    {
        let scope = BindingScope { graph, m, params };
        for n in &rule.rhs {
            let mut row = Vec::with_capacity(n.assign.len());
            for (attr, e) in &n.assign {
                let fail = |source| RuleError::Assignment {
                    rule: rule.name.clone(),
                    target: format!("{}.{attr}", n.pid),
                    source,
                };
                let value = eval(e.root(), &scope).map_err(fail)?;
                let ty = match graph.schema().attribute(&n.class, attr) {
                    Some(def) => Ty::of_attr(def),
                    None => return Err(fail(EvalError::Unknown(attr.clone()))),
                };
                row.push((attr.clone(), Typed { value, ty }));
            }
            values.push(row);
        }
    }

    let mut work = graph.clone();
    let mut delta = Delta::default();
    let preserved = rule.preserved();

    for p in &rule.lhs {
        if !preserved.contains(p.pid.as_str()) {
            let id = m.get(&p.pid).expect("checked match");
            delta.deleted_edges.extend(work.remove_node(id).map_err(graph_err)?);
            delta.deleted_nodes.push(id);
        }
    }
    let kept_edges: BTreeSet<_> = rule.rhs_edges.iter().collect();
    for e in &rule.lhs_edges {
        if preserved.contains(e.source.as_str()) && preserved.contains(e.target.as_str()) && !kept_edges.contains(e) {
            let edge = bind_edge(e, &m.bindings).expect("checked match");
            if work.remove_edge(&edge) {
                delta.deleted_edges.push(edge);
            }
        }
    }

    let mut ids: BTreeMap<String, NodeId> = m.iter().map(|(p, id)| (p.to_string(), id)).collect();
    let mut writes = Vec::new();
    for (n, row) in rule.rhs.iter().zip(values) {
        if preserved.contains(n.pid.as_str()) {
            let id = ids[&n.pid];
            for (attr, typed) in row {
                delta.updated.push((id, attr.clone()));
                writes.push((id, attr, typed));
            }
        } else {
            let id = work.instantiate(&n.class, row).map_err(graph_err)?;
            delta.created_nodes.push(id);
            ids.insert(n.pid.clone(), id);
        }
    }
    work.set_attrs(writes).map_err(graph_err)?;

    for e in &rule.rhs_edges {
        let edge = bind_edge(e, &ids).expect("rhs pids are bound");
        if !work.has_edge(edge.source, &edge.assoc, edge.target) {
            delta.created_edges.push(work.connect(edge.source, &edge.assoc, edge.target).map_err(graph_err)?);
        }
    }

    *graph = work;
    Ok(delta)
}

/// Result of one rule call.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CallOutcome {
    pub matches: usize,
    pub applied: usize,
    pub delta: Delta,
}

/// Finds matches and applies them per `mode`. A call without a match is a
/// no-op unless `required`.
pub fn call_rule(
    rule: &Rule,
    graph: &mut DesignGraph,
    params: &Parameters,
    mode: MatchMode,
    required: bool,
) -> Result<CallOutcome, RuleError> {
    let matches = find_matches(rule, graph, params);
    if matches.is_empty() {
        return if required {
            Err(RuleError::NoMatch(rule.name.clone()))
        } else {
            Ok(CallOutcome::default())
        };
    }
    let mut out = CallOutcome {
        matches: matches.len(),
        ..CallOutcome::default()
    };
    let take = match mode {
        MatchMode::First => 1,
        MatchMode::Forall => matches.len(),
    };
    for m in matches.iter().take(take) {
        if !is_match(rule, m, graph, params) {
            continue;
        }
        out.delta.extend(apply_rule(rule, m, graph, params)?);
        out.applied += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{rule, schema};
    use super::*;

    fn none() -> Vec<(String, Typed)> {
        Vec::new()
    }

    #[test]
    fn axiom_creates_nodes() {
        let r = rule(
            r#"{"name": "Axiom", "rhs": {"nodes": [{"pid": "r", "class": "Requirements", "assign": {"massFlow": "param(flow)"}},
                                                  {"pid": "e", "class": "CombustionEngine"}]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        let params = Parameters::from_document(r#"{"flow": "0.2 [kg/s]"}"#).unwrap();
        let out = call_rule(&r, &mut g, &params, MatchMode::First, true).unwrap();
        assert_eq!(out.delta.created_nodes, [NodeId(1), NodeId(2)]);
        assert_eq!(g.node(NodeId(2)).unwrap().class(), "Requirements");
        assert_eq!(g.node(NodeId(2)).unwrap().attr("massFlow"), Some(&Value::Number(0.2)));
    }

    #[test]
    fn preserves_and_adds_edge() {
        let r = rule(
            r#"{"name": "SCRsystem", "lhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"}]},
                "rhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"}, {"pid": "s", "class": "SCRSystem", "assign": {"inFlow": "e.massFlow"}}],
                        "edges": [["e", "exhaustLine", "s"]]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        let e = g.instantiate("CombustionEngine", [("massFlow", Typed::parse("0.1 [kg/s]").unwrap())]).unwrap();
        let out = call_rule(&r, &mut g, &Parameters::new(), MatchMode::First, false).unwrap();
        assert_eq!(out.delta.created_nodes, [NodeId(2)]);
        assert_eq!(out.delta.created_edges.len(), 1);
        assert!(out.delta.deleted_nodes.is_empty());
        assert!(g.has_edge(e, "exhaustLine", NodeId(2)));
        assert_eq!(g.node(NodeId(2)).unwrap().attr("inFlow"), Some(&Value::Number(0.1)));
        assert!(g.validate().is_valid());
    }

    #[test]
    fn dangling_edges_are_deleted() {
        let r = rule(r#"{"name": "drop", "lhs": {"nodes": [{"pid": "s", "class": "SCRSystem"}]}}"#).unwrap();
        let mut g = DesignGraph::new(schema());
        let e = g.instantiate("CombustionEngine", none()).unwrap();
        let s = g.instantiate("SCRSystem", none()).unwrap();
        let c = g.instantiate("Component", none()).unwrap();
        g.connect(e, "exhaustLine", s).unwrap();
        g.connect(s, "next", c).unwrap();
        let out = call_rule(&r, &mut g, &Parameters::new(), MatchMode::First, true).unwrap();
        assert_eq!(out.delta.deleted_nodes, [s]);
        assert_eq!(out.delta.deleted_edges.len(), 2);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn omitted_lhs_edge_is_deleted() {
        let r = rule(
            r#"{"name": "cut", "lhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}], "edges": [["a", "next", "b"]]},
                "rhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        let a = g.instantiate("Component", none()).unwrap();
        let b = g.instantiate("Component", none()).unwrap();
        g.connect(a, "next", b).unwrap();
        let out = call_rule(&r, &mut g, &Parameters::new(), MatchMode::First, true).unwrap();
        assert_eq!(out.delta.deleted_edges.len(), 1);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn identity_rule() {
        let r = rule(
            r#"{"name": "id", "lhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}], "edges": [["a", "next", "b"]]},
                "rhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}], "edges": [["a", "next", "b"]]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        let a = g.instantiate("Component", none()).unwrap();
        let b = g.instantiate("Component", none()).unwrap();
        g.connect(a, "next", b).unwrap();
        let before = g.clone();
        let out = call_rule(&r, &mut g, &Parameters::new(), MatchMode::Forall, true).unwrap();
        assert_eq!(out.applied, 1);
        assert!(out.delta.is_empty());
        assert_eq!(g, before);
    }

    #[test]
    fn assignment_error_leaves_graph_untouched() {
        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "e", "class": "CombustionEngine"}]},
                "rhs": {"nodes": [{"pid": "s", "class": "SCRSystem", "assign": {"inFlow": "e.massFlow / 0"}}]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        g.instantiate("CombustionEngine", [("massFlow", Typed::parse("1 [kg/s]").unwrap())]).unwrap();
        let before = g.clone();
        let err = call_rule(&r, &mut g, &Parameters::new(), MatchMode::First, true).unwrap_err();
        assert!(matches!(err, RuleError::Assignment { source: EvalError::DivisionByZero, .. }), "{err}");
        assert_eq!(g, before);

        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "c", "class": "Component"}]},
                "rhs": {"nodes": [{"pid": "c", "class": "Component", "assign": {"mass": "c.mass"}}]}}"#,
        )
        .unwrap();
        let err = call_rule(&r, &mut g, &Parameters::new(), MatchMode::First, true).unwrap_err();
        assert!(matches!(err, RuleError::Assignment { source: EvalError::Unset(_), .. }), "{err}");
    }

    #[test]
    fn modes_and_required() {
        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "c", "class": "Component"}]},
                "rhs": {"nodes": [{"pid": "c", "class": "Component", "assign": {"label": "\"seen\""}}]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        let p = Parameters::new();
        assert_eq!(call_rule(&r, &mut g, &p, MatchMode::First, false).unwrap(), CallOutcome::default());
        assert!(matches!(call_rule(&r, &mut g, &p, MatchMode::First, true), Err(RuleError::NoMatch(_))));
        for _ in 0..3 {
            g.instantiate("Component", none()).unwrap();
        }
        let out = call_rule(&r, &mut g, &p, MatchMode::First, true).unwrap();
        assert_eq!((out.matches, out.applied), (3, 1));
        let out = call_rule(&r, &mut g, &p, MatchMode::Forall, true).unwrap();
        assert_eq!((out.matches, out.applied), (3, 3));
        assert!(g.nodes().all(|n| n.attr("label") == Some(&Value::Str("seen".into()))));
    }

    #[test]
    fn forall_skips_invalidated_matches() {
        // deleting either end of an edge invalidates the match on the other end
        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}], "edges": [["a", "next", "b"]]},
                "rhs": {"nodes": [{"pid": "a", "class": "Component"}]}}"#,
        )
        .unwrap();
        let mut g = DesignGraph::new(schema());
        let a = g.instantiate("Component", none()).unwrap();
        let b = g.instantiate("Component", none()).unwrap();
        let c = g.instantiate("Component", none()).unwrap();
        g.connect(a, "next", b).unwrap();
        g.connect(b, "next", c).unwrap();
        let out = call_rule(&r, &mut g, &Parameters::new(), MatchMode::Forall, true).unwrap();
        assert_eq!((out.matches, out.applied), (2, 1));
        assert_eq!(g.nodes().map(|n| n.id()).collect::<Vec<_>>(), [a, c]);
    }
}
