use std::collections::BTreeMap;

use super::{bind_edge, Match, PatternNode, Rule};
use crate::expr::eval::NodeScope;
use crate::expr::eval_bool;
use crate::graph::{DesignGraph, Node, NodeId};
use crate::params::Parameters;

/// Class conformance plus the `where` predicate. A predicate that fails to
/// evaluate (for example over an unset attribute) does not match.
fn admits(p: &PatternNode, node: &Node, graph: &DesignGraph, params: &Parameters) -> bool {
    if !graph.schema().conforms(node.class(), &p.class) {
        return false;
    }
    match &p.predicate {
        None => true,
        Some(e) => {
            let scope = NodeScope {
                graph,
                node: node.id(),
                outer: params,
            };
            eval_bool(e.root(), &scope).unwrap_or(false)
        }
    }
}

/// All matches of the left-hand side, in lexicographic order of the matched
/// node ids taken in pid order. An empty left-hand side has exactly one
/// (empty) match.
pub fn find_matches(rule: &Rule, graph: &DesignGraph, params: &Parameters) -> Vec<Match> {
    let candidates: Vec<Vec<NodeId>> = rule
        .lhs
        .iter()
        .map(|p| graph.nodes().filter(|n| admits(p, n, graph, params)).map(|n| n.id()).collect())
        .collect();
    // edges checked at the depth where their later endpoint is bound
    let index: BTreeMap<&str, usize> = rule.lhs.iter().enumerate().map(|(i, p)| (p.pid.as_str(), i)).collect();
    let mut edges_at: Vec<Vec<(usize, &str, usize)>> = vec![Vec::new(); rule.lhs.len()];
    for e in &rule.lhs_edges {
        let (s, t) = (index[e.source.as_str()], index[e.target.as_str()]);
        edges_at[s.max(t)].push((s, e.assoc.as_str(), t));
    }

    let mut out = Vec::new();
    let mut chosen: Vec<NodeId> = Vec::with_capacity(rule.lhs.len());
    search(graph, &candidates, &edges_at, &mut chosen, &mut |chosen| {
        out.push(rule.lhs.iter().map(|p| p.pid.clone()).zip(chosen.iter().copied()).collect());
    });
    out
}

fn search(
    graph: &DesignGraph,
    candidates: &[Vec<NodeId>],
    edges_at: &[Vec<(usize, &str, usize)>],
    chosen: &mut Vec<NodeId>,
    emit: &mut dyn FnMut(&[NodeId]),
) {
    let depth = chosen.len();
    if depth == candidates.len() {
        emit(chosen);
        return;
    }
    for &c in &candidates[depth] {
        if chosen.contains(&c) {
            continue;
        }
        chosen.push(c);
        if edges_at[depth].iter().all(|&(s, a, t)| graph.has_edge(chosen[s], a, chosen[t])) {
            search(graph, candidates, edges_at, chosen, emit);
        }
        chosen.pop();
    }
}

/// Whether `m` is still a match of `rule` in `graph`.
pub fn is_match(rule: &Rule, m: &Match, graph: &DesignGraph, params: &Parameters) -> bool {
    if m.bindings.len() != rule.lhs.len() {
        return false;
    }
    let mut seen = Vec::with_capacity(rule.lhs.len());
    for p in &rule.lhs {
        let Some(id) = m.get(&p.pid) else { return false };
        if seen.contains(&id) {
            return false;
        }
        seen.push(id);
        match graph.node(id) {
            Some(n) if admits(p, n, graph, params) => {}
            _ => return false,
        }
    }
    rule.lhs_edges.iter().all(|e| {
        bind_edge(e, &m.bindings).is_some_and(|edge| graph.has_edge(edge.source, &edge.assoc, edge.target))
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::{rule, schema};
    use super::*;
    use crate::graph::Typed;

    fn graph() -> DesignGraph {
        let mut g = DesignGraph::new(schema());
        let e = g.instantiate("CombustionEngine", Vec::<(String, Typed)>::new()).unwrap();
        let s = g.instantiate("SCRSystem", [("inFlow", Typed::parse("0.3 [kg/s]").unwrap())]).unwrap();
        let c = g.instantiate("Component", Vec::<(String, Typed)>::new()).unwrap();
        g.connect(e, "exhaustLine", s).unwrap();
        g.connect(s, "next", c).unwrap();
        g
    }

    #[test]
    fn empty_lhs_has_one_empty_match() {
        let r = rule(r#"{"name": "axiom"}"#).unwrap();
        let g = DesignGraph::new(schema());
        let ms = find_matches(&r, &g, &Parameters::new());
        assert_eq!(ms, vec![Match::default()]);
    }

    #[test]
    fn subtype_conformance_and_order() {
        let r = rule(r#"{"name": "r", "lhs": {"nodes": [{"pid": "c", "class": "Component"}]}}"#).unwrap();
        let ms = find_matches(&r, &graph(), &Parameters::new());
        let ids: Vec<_> = ms.iter().map(|m| m.get("c").unwrap().0).collect();
        assert_eq!(ids, [1, 2, 3]);
    }

    #[test]
    fn injective_with_edges() {
        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}],
                "edges": [["a", "next", "b"]]}}"#,
        )
        .unwrap();
        let ms = find_matches(&r, &graph(), &Parameters::new());
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].nodes(), [NodeId(2), NodeId(3)]);

        let r = rule(r#"{"name": "r", "lhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}]}}"#)
            .unwrap();
        let ms = find_matches(&r, &graph(), &Parameters::new());
        assert_eq!(ms.len(), 6);
        assert!(ms.windows(2).all(|w| w[0].nodes() < w[1].nodes()));
    }

    #[test]
    fn predicates_filter_and_unset_is_no_match() {
        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "s", "class": "SCRSystem", "where": "inFlow > param(flow)"}]}}"#,
        )
        .unwrap();
        let mut params = Parameters::from_document(r#"{"flow": "0.2 [kg/s]"}"#).unwrap();
        let g = graph();
        assert_eq!(find_matches(&r, &g, &params).len(), 1);
        params.apply_overrides(r#"{"flow": 0.5}"#).unwrap();
        assert!(find_matches(&r, &g, &params).is_empty());

        let r = rule(r#"{"name": "r", "lhs": {"nodes": [{"pid": "c", "class": "Component", "where": "mass > 0 [kg]"}]}}"#).unwrap();
        assert!(find_matches(&r, &g, &params).is_empty());
    }

    #[test]
    fn stale_detection() {
        let r = rule(
            r#"{"name": "r", "lhs": {"nodes": [{"pid": "a", "class": "Component"}, {"pid": "b", "class": "Component"}],
                "edges": [["a", "next", "b"]]}}"#,
        )
        .unwrap();
        let mut g = graph();
        let p = Parameters::new();
        let m = find_matches(&r, &g, &p).remove(0);
        assert!(is_match(&r, &m, &g, &p));
        g.remove_node(NodeId(3)).unwrap();
        assert!(!is_match(&r, &m, &g, &p));
        let forged: Match = [("a".to_string(), NodeId(1)), ("b".to_string(), NodeId(1))].into_iter().collect();
        assert!(!is_match(&r, &forged, &g, &p));
    }
}
