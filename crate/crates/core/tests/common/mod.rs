//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use designc::graph::{DesignGraph, NodeId, Typed};
use designc::vocabulary::{load_schema, Schema};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn exhaust_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../languages/exhaust")
}

// ---------------------------------------------------------------------------
// matching

/// Three classes; `Derived` specializes `Base`.
pub const MATCH_SCHEMA: &str = r#"{"classes": [
    {"name": "Base",
     "attributes": [{"name": "x", "kind": "number"}],
     "associations": [{"name": "link", "target": "Base", "min": 0}]},
    {"name": "Derived", "parent": "Base",
     "associations": [{"name": "special", "target": "Other", "min": 0}]},
    {"name": "Other",
     "attributes": [{"name": "x", "kind": "number"}],
     "associations": [{"name": "back", "target": "Base", "min": 0}]}
]}"#;

pub const CLASSES: [&str; 3] = ["Base", "Derived", "Other"];

pub fn match_schema() -> Arc<Schema> {
    Arc::new(load_schema(MATCH_SCHEMA).unwrap())
}

/// Hard-coded conformance, independent of the schema implementation.
pub fn conforms(sub: &str, sup: &str) -> bool {
    sub == sup || (sub == "Derived" && sup == "Base")
}

/// Associations by source class, with their declared target.
pub fn assocs(class: &str) -> Vec<(&'static str, &'static str)> {
    match class {
        "Base" => vec![("link", "Base")],
        "Derived" => vec![("link", "Base"), ("special", "Other")],
        "Other" => vec![("back", "Base")],
        _ => vec![],
    }
}

pub fn random_graph(rng: &mut impl Rng, schema: &Arc<Schema>) -> DesignGraph {
    let mut g = DesignGraph::new(schema.clone());
    let n = rng.gen_range(0..=7);
    let mut classes = Vec::new();
    for _ in 0..n {
        let class = *CLASSES.choose(rng).unwrap();
        let attrs: Vec<(String, Typed)> = if rng.gen_bool(0.85) {
            vec![("x".into(), Typed::number(rng.gen_range(0.0..1.0), Default::default()))]
        } else {
            vec![]
        };
        g.instantiate(class, attrs).unwrap();
        classes.push(class);
    }
    let p = rng.gen_range(0.1..0.5);
    for s in 0..n {
        for t in 0..n {
            for (assoc, target) in assocs(classes[s]) {
                if conforms(classes[t], target) && rng.gen_bool(p) {
                    g.connect(NodeId(s as u64 + 1), assoc, NodeId(t as u64 + 1)).unwrap();
                }
            }
        }
    }
    g
}

/// A left-hand pattern with its own evaluation data for the oracle.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub pids: Vec<String>,
    pub classes: Vec<&'static str>,
    /// `x > threshold` where present.
    pub thresholds: Vec<Option<f64>>,
    pub edges: Vec<(usize, &'static str, usize)>,
}

impl Pattern {
    pub fn rule_json(&self, name: &str) -> String {
        let nodes: Vec<String> = (0..self.pids.len())
            .map(|i| match self.thresholds[i] {
                Some(t) => format!(
                    r#"{{"pid": "{}", "class": "{}", "where": "x > {t:e}"}}"#,
                    self.pids[i], self.classes[i]
                ),
                None => format!(r#"{{"pid": "{}", "class": "{}"}}"#, self.pids[i], self.classes[i]),
            })
            .collect();
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|(s, a, t)| format!(r#"["{}", "{a}", "{}"]"#, self.pids[*s], self.pids[*t]))
            .collect();
        format!(
            r#"{{"name": "{name}", "lhs": {{"nodes": [{}], "edges": [{}]}}}}"#,
            nodes.join(", "),
            edges.join(", ")
        )
    }
}

pub fn random_pattern(rng: &mut impl Rng) -> Pattern {
    let k = rng.gen_range(0..=3);
    // pids deliberately not in declaration order
    let mut pids: Vec<String> = ["q", "b", "m"].iter().take(k).map(|s| s.to_string()).collect();
    pids.shuffle(rng);
    let classes: Vec<&'static str> = (0..k).map(|_| *CLASSES.choose(rng).unwrap()).collect();
    let thresholds = (0..k).map(|_| rng.gen_bool(0.3).then(|| rng.gen_range(0.0..1.0))).collect();
    let mut edges = Vec::new();
    if k > 0 {
        for _ in 0..rng.gen_range(0..=3) {
            let (s, t) = (rng.gen_range(0..k), rng.gen_range(0..k));
            let options = assocs(classes[s]);
            let (a, target) = options[rng.gen_range(0..options.len())];
            let fits = conforms(classes[t], target) || conforms(target, classes[t]);
            if fits && !edges.contains(&(s, a, t)) {
                edges.push((s, a, t));
            }
        }
    }
    Pattern {
        pids,
        classes,
        thresholds,
        edges,
    }
}

/// All injective typed maps, filtered by edges and predicates, as id tuples
/// in pid order, sorted.
pub fn brute_force_matches(p: &Pattern, g: &DesignGraph) -> Vec<Vec<u64>> {
    let mut order: Vec<usize> = (0..p.pids.len()).collect();
    order.sort_by(|a, b| p.pids[*a].cmp(&p.pids[*b]));
    let ids: Vec<u64> = g.nodes().map(|n| n.id().0).collect();
    let k = p.pids.len();
    let mut out = Vec::new();
    let total = ids.len().pow(k as u32);
    for code in 0..total {
        // pattern index i -> ids[digit i]
        let mut c = code;
        let assign: Vec<u64> = (0..k)
            .map(|_| {
                let d = c % ids.len().max(1);
                c /= ids.len().max(1);
                ids[d]
            })
            .collect();
        let injective = (0..k).all(|i| (0..i).all(|j| assign[i] != assign[j]));
        if !injective {
            continue;
        }
        let typed = (0..k).all(|i| {
            let n = g.node(NodeId(assign[i])).unwrap();
            conforms(n.class(), p.classes[i])
                && match p.thresholds[i] {
                    None => true,
                    Some(t) => matches!(n.attr("x"), Some(designc::expr::Value::Number(x)) if *x > t),
                }
        });
        let edges = p.edges.iter().all(|(s, a, t)| g.has_edge(NodeId(assign[*s]), a, NodeId(assign[*t])));
        if typed && edges {
            out.push(order.iter().map(|&i| assign[i]).collect());
        }
    }
    if k == 0 {
        out = vec![vec![]];
    }
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// solvable networks

#[derive(Debug, Clone, Copy)]
pub enum Own {
    Linear,
    Cubic,
    Exp,
}

#[derive(Debug, Clone, Copy)]
pub enum Coupling {
    Lin,
    Sin,
    Cos,
}

#[derive(Debug, Clone)]
pub struct GenEquation {
    pub own: usize,
    pub a: f64,
    pub kind: Own,
    pub terms: Vec<(f64, Coupling, usize)>,
    pub rhs: f64,
}

/// A network with a unique solution by construction: equation `j` is
/// `f_j(x_j) + sum c * h(v) == rhs` with `f_j' >= a >= 2` and
/// `sum |c| * |h'| <= 0.9`, so the fixed-point map is a contraction.
#[derive(Debug, Clone)]
pub struct GenNetwork {
    pub names: Vec<String>,
    pub unknowns: usize,
    pub truth: Vec<f64>,
    pub equations: Vec<GenEquation>,
}

fn own_value(kind: Own, a: f64, x: f64) -> (f64, f64) {
    match kind {
        Own::Linear => (a * x, a),
        Own::Cubic => (a * (x + x * x * x / 3.0), a * (1.0 + x * x)),
        Own::Exp => (a * x + x.exp() / 4.0, a + x.exp() / 4.0),
    }
}

fn coupling_value(c: Coupling, v: f64) -> (f64, f64) {
    match c {
        Coupling::Lin => (v, 1.0),
        Coupling::Sin => (v.sin(), v.cos()),
        Coupling::Cos => (v.cos(), -v.sin()),
    }
}

impl GenEquation {
    /// Residual and its gradient entries.
    pub fn residual(&self, x: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let (mut r, d) = own_value(self.kind, self.a, x[self.own]);
        let mut grad = vec![(self.own, d)];
        for &(c, h, v) in &self.terms {
            let (hv, hd) = coupling_value(h, x[v]);
            r += c * hv;
            grad.push((v, c * hd));
        }
        (r - self.rhs, grad)
    }

    fn text(&self, names: &[String], split: &[bool]) -> String {
        let x = &names[self.own];
        let mut lhs = match self.kind {
            Own::Linear => format!("{:e} * {x}", self.a),
            Own::Cubic => format!("{:e} * ({x} + {x}^3 / 3)", self.a),
            Own::Exp => format!("{:e} * {x} + exp({x}) / 4", self.a),
        };
        let mut rhs = format!("{:e}", self.rhs);
        for (i, &(c, h, v)) in self.terms.iter().enumerate() {
            let f = match h {
                Coupling::Lin => names[v].clone(),
                Coupling::Sin => format!("sin({})", names[v]),
                Coupling::Cos => format!("cos({})", names[v]),
            };
            // some terms move to the right-hand side with flipped sign
            if split[i] {
                rhs = format!("{rhs} + {:e} * {f}", -c);
            } else {
                lhs = format!("{lhs} + {:e} * {f}", c);
            }
        }
        format!("{lhs} == {rhs}")
    }
}

pub fn random_network(rng: &mut impl Rng) -> GenNetwork {
    let n = rng.gen_range(1..=20);
    let k = rng.gen_range(0..=4);
    let mut names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    names.extend((0..k).map(|i| format!("k{i}")));
    let truth: Vec<f64> = (0..n + k).map(|_| rng.gen_range(0.5..2.0)).collect();
    let triangular = rng.gen_bool(0.4);
    let mut equations = Vec::new();
    for j in 0..n {
        let a = rng.gen_range(2.0..4.0);
        let kind = *[Own::Linear, Own::Linear, Own::Cubic, Own::Exp].choose(rng).unwrap();
        let mut terms = Vec::new();
        let mut budget = 0.9;
        for _ in 0..rng.gen_range(0..=3) {
            let pool: Vec<usize> = (0..n + k).filter(|&v| v != j && (!triangular || v < j || v >= n)).collect();
            let Some(&v) = pool.choose(rng) else { break };
            let c: f64 = rng.gen_range(-0.3..0.3);
            if c.abs() > budget {
                break;
            }
            budget -= c.abs();
            let h = *[Coupling::Lin, Coupling::Sin, Coupling::Cos].choose(rng).unwrap();
            terms.push((c, h, v));
        }
        let mut e = GenEquation {
            own: j,
            a,
            kind,
            terms,
            rhs: 0.0,
        };
        e.rhs = e.residual(&truth).0;
        equations.push(e);
    }
    equations.shuffle(rng);
    GenNetwork {
        names,
        unknowns: n,
        truth,
        equations,
    }
}

impl GenNetwork {
    pub fn document(&self, rng: &mut impl Rng) -> String {
        let vars: Vec<String> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                if i < self.unknowns {
                    format!(r#"{{"name": "{name}", "dimension": {{}}}}"#)
                } else {
                    format!(r#"{{"name": "{name}", "dimension": {{}}, "value": {:e}}}"#, self.truth[i])
                }
            })
            .collect();
        let eqs: Vec<String> = self
            .equations
            .iter()
            .map(|e| {
                let split: Vec<bool> = e.terms.iter().map(|_| rng.gen_bool(0.3)).collect();
                format!("{:?}", e.text(&self.names, &split))
            })
            .collect();
        format!(r#"{{"variables": [{}], "equations": [{}]}}"#, vars.join(", "), eqs.join(", "))
    }

    /// All-at-once damped Newton with the analytic Jacobian, from 1.0.
    pub fn global_newton(&self) -> Option<Vec<f64>> {
        let n = self.unknowns;
        let mut x: Vec<f64> = (0..self.names.len()).map(|i| if i < n { 1.0 } else { self.truth[i] }).collect();
        let norm = |x: &[f64]| self.equations.iter().map(|e| e.residual(x).0.powi(2)).sum::<f64>().sqrt();
        for _ in 0..200 {
            let f0 = norm(&x);
            if f0 < 1e-13 {
                return Some(x[..n].to_vec());
            }
            let mut jac = DMatrix::<f64>::zeros(n, n);
            let mut rhs = DVector::<f64>::zeros(n);
            for (row, e) in self.equations.iter().enumerate() {
                let (r, grad) = e.residual(&x);
                rhs[row] = -r;
                for (v, d) in grad {
                    if v < n {
                        jac[(row, v)] += d;
                    }
                }
            }
            let dx = jac.lu().solve(&rhs)?;
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().enumerate().map(|(i, xi)| if i < n { xi + lambda * dx[i] } else { *xi }).collect();
                if norm(&trial) < f0 || lambda < 1e-6 {
                    x = trial;
                    break;
                }
                lambda /= 2.0;
            }
        }
        (norm(&x) < 1e-10).then(|| x[..n].to_vec())
    }
}

// ---------------------------------------------------------------------------
// exact rank

/// Rank of an integer matrix by fraction-free (Bareiss) elimination.
pub fn bareiss_rank(mut m: Vec<Vec<i128>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    let mut prev = 1i128;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m[r][c] != 0) else { continue };
        m.swap(rank, p);
        for r in rank + 1..rows {
            for cc in c + 1..cols {
                m[r][cc] = (m[rank][c] * m[r][cc] - m[r][c] * m[rank][cc]) / prev;
            }
            m[r][c] = 0;
        }
        prev = m[rank][c];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

pub fn by_name<T: Clone>(pairs: &[(String, T)]) -> BTreeMap<String, T> {
    pairs.iter().cloned().collect()
}
