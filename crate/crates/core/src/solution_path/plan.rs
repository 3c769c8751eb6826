use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

use serde::Serialize;

use super::network::ConstraintNetwork;
use super::numeric::isolatable;
use super::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Isolate,
    Newton1d,
    NewtonNd,
}

/// One step of the solution sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Component {
    Singleton { equation: usize, output: usize, method: Method },
    /// A strongly connected set of equations solved simultaneously.
    Block { equations: Vec<usize>, outputs: Vec<usize> },
}

impl Component {
    pub fn equations(&self) -> Vec<usize> {
        match self {
            Component::Singleton { equation, .. } => vec![*equation],
            Component::Block { equations, .. } => equations.clone(),
        }
    }

    pub fn outputs(&self) -> Vec<usize> {
        match self {
            Component::Singleton { output, .. } => vec![*output],
            Component::Block { outputs, .. } => outputs.clone(),
        }
    }
}

/// Ordered components plus the equations left over as consistency checks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolutionPlan {
    pub components: Vec<Component>,
    pub residual_checks: Vec<usize>,
}

/// Diagnosis attached to an underdetermined network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Underdetermined {
    /// Unknowns no equation could be assigned to.
    pub unmatched: Vec<usize>,
    /// The underdetermined part: everything reachable from the unmatched
    /// unknowns along alternating paths.
    pub blocking_unknowns: Vec<usize>,
    pub blocking_equations: Vec<usize>,
}

/// Maximum matching of equations to the unknowns they contain, by augmenting
/// paths. Returns `(unknown matched to each equation, equation matched to each variable)`.
pub fn maximum_matching(network: &ConstraintNetwork) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let neq = network.equations.len();
    let adj: Vec<Vec<usize>> = (0..neq).map(|e| network.unknowns_of(e).collect()).collect();
    let mut eq_of_var: Vec<Option<usize>> = vec![None; network.variables.len()];
    let mut var_of_eq: Vec<Option<usize>> = vec![None; neq];

    fn augment(
        e: usize,
        adj: &[Vec<usize>],
        visited: &mut [bool],
        eq_of_var: &mut [Option<usize>],
        var_of_eq: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[e] {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            let free = match eq_of_var[v] {
                None => true,
                Some(other) => augment(other, adj, visited, eq_of_var, var_of_eq),
            };
            if free {
                eq_of_var[v] = Some(e);
                var_of_eq[e] = Some(v);
                return true;
            }
        }
        false
    }

    for e in 0..neq {
        let mut visited = vec![false; network.variables.len()];
        augment(e, &adj, &mut visited, &mut eq_of_var, &mut var_of_eq);
    }
    (var_of_eq, eq_of_var)
}

fn diagnose(network: &ConstraintNetwork, eq_of_var: &[Option<usize>], unmatched: Vec<usize>) -> Underdetermined {
    let mut var_in: Vec<Vec<usize>> = vec![Vec::new(); network.variables.len()];
    for e in 0..network.equations.len() {
        for v in network.unknowns_of(e) {
            var_in[v].push(e);
        }
    }
    let mut vars: BTreeSet<usize> = unmatched.iter().copied().collect();
    let mut eqs = BTreeSet::new();
    let mut queue: VecDeque<usize> = unmatched.iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        for &e in &var_in[v] {
            if !eqs.insert(e) {
                continue;
            }
            // the matched partner of a reached equation is reachable too
            if let Some(w) = (0..eq_of_var.len()).find(|&w| eq_of_var[w] == Some(e)) {
                if vars.insert(w) {
                    queue.push_back(w);
                }
            }
        }
    }
    Underdetermined {
        unmatched,
        blocking_unknowns: vars.into_iter().collect(),
        blocking_equations: eqs.into_iter().collect(),
    }
}

/// Tarjan's algorithm. Components come out dependencies-first.
fn strongly_connected(deps: &[Vec<usize>]) -> Vec<Vec<usize>> {
    struct State<'a> {
        deps: &'a [Vec<usize>],
        index: usize,
        idx: Vec<Option<usize>>,
        low: Vec<usize>,
        stack: Vec<usize>,
        on_stack: Vec<bool>,
        out: Vec<Vec<usize>>,
    }

    fn visit(s: &mut State, v: usize) {
        s.idx[v] = Some(s.index);
        s.low[v] = s.index;
        s.index += 1;
        s.stack.push(v);
        s.on_stack[v] = true;
        for i in 0..s.deps[v].len() {
            let w = s.deps[v][i];
            match s.idx[w] {
                None => {
                    visit(s, w);
                    s.low[v] = s.low[v].min(s.low[w]);
                }
                Some(iw) if s.on_stack[w] => s.low[v] = s.low[v].min(iw),
                _ => {}
            }
        }
        if Some(s.low[v]) == s.idx[v] {
            let mut comp = Vec::new();
            loop {
                let w = s.stack.pop().expect("stack holds the component");
                s.on_stack[w] = false;
                comp.push(w);
                if w == v {
                    break;
                }
            }
            comp.sort_unstable();
            s.out.push(comp);
        }
    }

    let n = deps.len();
    let mut s = State {
        deps,
        index: 0,
        idx: vec![None; n],
        low: vec![0; n],
        stack: Vec::new(),
        on_stack: vec![false; n],
        out: Vec::new(),
    };
    for v in 0..n {
        if s.idx[v].is_none() {
            visit(&mut s, v);
        }
    }
    s.out
}

/// Orders the network for solution: match equations to unknowns, orient
/// each matched equation toward its unknown, condense cycles into blocks
/// and sort the blocks topologically. Ready components are taken in order
/// of their lowest equation index.
pub fn plan(network: &ConstraintNetwork) -> Result<SolutionPlan, SolveError> {
    let (var_of_eq, eq_of_var) = maximum_matching(network);
    let unmatched: Vec<usize> = network.unknowns().filter(|&v| eq_of_var[v].is_none()).collect();
    if !unmatched.is_empty() {
        let d = diagnose(network, &eq_of_var, unmatched);
        return Err(SolveError::Underdetermined {
            unknowns: d.unmatched.iter().map(|&v| network.variables[v].key.to_string()).collect(),
            blocking_unknowns: d.blocking_unknowns.iter().map(|&v| network.variables[v].key.to_string()).collect(),
            blocking_equations: d.blocking_equations.iter().map(|&e| network.equations[e].id.clone()).collect(),
        });
    }

    let matched: Vec<usize> = (0..network.equations.len()).filter(|&e| var_of_eq[e].is_some()).collect();
    let residual_checks: Vec<usize> = (0..network.equations.len()).filter(|&e| var_of_eq[e].is_none()).collect();
    let local: Vec<Option<usize>> = {
        let mut l = vec![None; network.equations.len()];
        for (i, &e) in matched.iter().enumerate() {
            l[e] = Some(i);
        }
        l
    };
    let deps: Vec<Vec<usize>> = matched
        .iter()
        .map(|&e| {
            let out = var_of_eq[e];
            let mut d: Vec<usize> = network
                .unknowns_of(e)
                .filter(|&v| Some(v) != out)
                .map(|v| local[eq_of_var[v].expect("all unknowns matched")].expect("matched equation"))
                .collect();
            d.sort_unstable();
            d.dedup();
            d
        })
        .collect();

    let comps = strongly_connected(&deps);
    let mut comp_of = vec![0; matched.len()];
    for (c, members) in comps.iter().enumerate() {
        for &m in members {
            comp_of[m] = c;
        }
    }
    // Kahn over the condensation
    let mut indegree = vec![0usize; comps.len()];
    let mut users: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); comps.len()];
    for (m, ds) in deps.iter().enumerate() {
        for &d in ds {
            let (cu, cd) = (comp_of[m], comp_of[d]);
            if cu != cd && users[cd].insert(cu) {
                indegree[cu] += 1;
            }
        }
    }
    let key = |c: usize| matched[comps[c][0]];
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = (0..comps.len())
        .filter(|&c| indegree[c] == 0)
        .map(|c| Reverse((key(c), c)))
        .collect();
    let mut components = Vec::with_capacity(comps.len());
    while let Some(Reverse((_, c))) = ready.pop() {
        let eqs: Vec<usize> = comps[c].iter().map(|&m| matched[m]).collect();
        let outs: Vec<usize> = eqs.iter().map(|&e| var_of_eq[e].expect("matched")).collect();
        components.push(if eqs.len() == 1 {
            let (e, v) = (eqs[0], outs[0]);
            let eq = &network.equations[e];
            let method = if isolatable(&eq.lhs, &eq.rhs, v) { Method::Isolate } else { Method::Newton1d };
            Component::Singleton {
                equation: e,
                output: v,
                method,
            }
        } else {
            Component::Block {
                equations: eqs,
                outputs: outs,
            }
        });
        for &u in &users[c] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(Reverse((key(u), u)));
            }
        }
    }
    Ok(SolutionPlan {
        components,
        residual_checks,
    })
}

impl SolutionPlan {
    /// Checks that executing the components in order never reads an
    /// unknown before it is assigned, and that each unknown is assigned once.
    pub fn check_order(&self, network: &ConstraintNetwork) -> Result<(), String> {
        let mut assigned: Vec<bool> = network.variables.iter().map(|v| v.is_known()).collect();
        for c in &self.components {
            let outs = c.outputs();
            for &o in &outs {
                if assigned[o] {
                    return Err(format!("{} assigned twice", network.variables[o].key));
                }
            }
            for e in c.equations() {
                for &v in &network.equations[e].vars {
                    if !assigned[v] && !outs.contains(&v) {
                        return Err(format!("{} read before assignment", network.variables[v].key));
                    }
                }
            }
            for o in outs {
                assigned[o] = true;
            }
        }
        match assigned.iter().position(|a| !a) {
            Some(v) => Err(format!("{} never assigned", network.variables[v].key)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(doc: &str) -> ConstraintNetwork {
        ConstraintNetwork::from_document(doc).unwrap()
    }

    #[test]
    fn forced_chain() {
        let n = net(r#"{"variables": [{"name": "a", "value": 1}, {"name": "b", "value": 2},
                                      {"name": "c"}, {"name": "d"}],
                       "equations": ["d == 2 * c", "c == a + b"]}"#);
        let p = plan(&n).unwrap();
        let c = n.named("c").unwrap();
        let d = n.named("d").unwrap();
        assert_eq!(
            p.components,
            vec![
                Component::Singleton { equation: 1, output: c, method: Method::Isolate },
                Component::Singleton { equation: 0, output: d, method: Method::Isolate },
            ]
        );
        assert!(p.residual_checks.is_empty());
        p.check_order(&n).unwrap();
    }

    #[test]
    fn cosine_pair_is_one_block() {
        let n = net(r#"{"variables": [{"name": "x"}, {"name": "y"}],
                       "equations": ["x == cos(y)", "y == cos(x)"]}"#);
        let p = plan(&n).unwrap();
        assert_eq!(p.components.len(), 1);
        match &p.components[0] {
            Component::Block { equations, outputs } => {
                assert_eq!(equations.len(), 2);
                assert_eq!(outputs.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn underdetermined_names_both_unknowns() {
        let n = net(r#"{"variables": [{"name": "x"}, {"name": "y"}], "equations": ["x + y == 3"]}"#);
        match plan(&n) {
            Err(SolveError::Underdetermined { unknowns, blocking_unknowns, blocking_equations }) => {
                assert_eq!(unknowns.len(), 1);
                assert_eq!(blocking_unknowns, vec!["x".to_string(), "y".to_string()]);
                assert_eq!(blocking_equations, vec!["eq1".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn surplus_equations_become_checks() {
        let n = net(r#"{"variables": [{"name": "x"}], "equations": ["x == 2", "2 * x == 4"]}"#);
        let p = plan(&n).unwrap();
        assert_eq!(p.components.len(), 1);
        assert_eq!(p.residual_checks, vec![1]);
    }

    #[test]
    fn repeated_unknown_uses_newton() {
        let n = net(r#"{"variables": [{"name": "x"}], "equations": ["x == cos(x)"]}"#);
        let p = plan(&n).unwrap();
        assert!(matches!(p.components[0], Component::Singleton { method: Method::Newton1d, .. }));
    }
}
