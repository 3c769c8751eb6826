use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;

use super::numeric::Num;
use super::SolveError;
use crate::dimension::Dimension;
use crate::expr::{Expr, ExprKind, Expression, Ty, TypeScope};
use crate::graph::{DesignGraph, NodeId, Typed};
use crate::vocabulary::AttrKind;

/// Identifies a variable: a node attribute, or a free name in a standalone network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKey {
    Attr(NodeId, String),
    Named(String),
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Attr(n, a) => write!(f, "n{n}.{a}"),
            VarKey::Named(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub key: VarKey,
    pub dimension: Dimension,
    /// `Some` for knowns.
    pub value: Option<f64>,
    /// Starting point for Newton iterations when unknown.
    pub guess: f64,
}

impl Variable {
    pub fn is_known(&self) -> bool {
        self.value.is_some()
    }
}

/// One equation `lhs == rhs` over network variables.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationInstance {
    pub id: String,
    pub source: String,
    pub lhs: Num,
    pub rhs: Num,
    /// Distinct variable indices, ascending.
    pub vars: Vec<usize>,
}

/// Equations over variables, partitioned into knowns and unknowns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintNetwork {
    pub variables: Vec<Variable>,
    pub equations: Vec<EquationInstance>,
}

impl ConstraintNetwork {
    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn index_of(&self, key: &VarKey) -> Option<usize> {
        self.variables.iter().position(|v| &v.key == key)
    }

    pub fn named(&self, name: &str) -> Option<usize> {
        self.index_of(&VarKey::Named(name.to_string()))
    }

    pub fn unknowns(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.variables.len()).filter(|&i| !self.variables[i].is_known())
    }

    /// Unknown variables of equation `eq`.
    pub fn unknowns_of(&self, eq: usize) -> impl Iterator<Item = usize> + '_ {
        self.equations[eq]
            .vars
            .iter()
            .copied()
            .filter(|&v| !self.variables[v].is_known())
    }

    /// Sets a known value (used for sensitivity perturbation).
    pub fn set_known(&mut self, var: usize, value: f64) {
        self.variables[var].value = Some(value);
    }

    fn push_equation(&mut self, id: String, source: String, lhs: Num, rhs: Num) {
        let mut vars = Vec::new();
        lhs.collect_vars(&mut vars);
        rhs.collect_vars(&mut vars);
        vars.sort_unstable();
        vars.dedup();
        self.equations.push(EquationInstance {
            id,
            source,
            lhs,
            rhs,
            vars,
        });
    }
}

/// Compiles an expression to [`Num`], resolving identifiers through `resolve`.
pub(crate) fn compile(e: &Expr, resolve: &mut impl FnMut(&[String]) -> Result<usize, String>) -> Result<Num, String> {
    use crate::expr::{BinOp, UnaryOp};
    Ok(match &e.kind {
        ExprKind::Number { value, .. } => Num::Const(*value),
        ExprKind::Ident(path) => Num::Var(resolve(path)?),
        ExprKind::Unary(UnaryOp::Neg, a) => Num::Neg(Box::new(compile(a, resolve)?)),
        ExprKind::Binary(op @ (BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Pow), a, b) => {
            Num::Bin(*op, Box::new(compile(a, resolve)?), Box::new(compile(b, resolve)?))
        }
        ExprKind::Call(f, args) => Num::Func(
            *f,
            args.iter().map(|a| compile(a, resolve)).collect::<Result<_, _>>()?,
        ),
        _ => return Err("only arithmetic is allowed in equations".into()),
    })
}

/// Assembles the network induced by the graph: one equation per node and
/// class equation (inherited ones included), plus one equality per edge
/// binding. Attributes that are set (and were not written by the solver)
/// are knowns.
pub fn collect_network(graph: &DesignGraph) -> Result<ConstraintNetwork, SolveError> {
    let schema = graph.schema();
    let mut net = ConstraintNetwork::default();
    let mut index: BTreeMap<(NodeId, String), usize> = BTreeMap::new();

    let mut var_for = |net: &mut ConstraintNetwork, node: NodeId, attr: &str| -> Result<usize, String> {
        if let Some(&i) = index.get(&(node, attr.to_string())) {
            return Ok(i);
        }
        let n = graph.node(node).ok_or_else(|| format!("unknown node {node}"))?;
        let def = schema
            .attribute(n.class(), attr)
            .filter(|d| d.kind == AttrKind::Number)
            .ok_or_else(|| format!("`{}` has no numeric attribute `{attr}`", n.class()))?;
        let current = n.attr(attr).and_then(|v| v.as_number());
        let solved = graph.is_solved(node, attr);
        let i = net.variables.len();
        net.variables.push(Variable {
            key: VarKey::Attr(node, attr.to_string()),
            dimension: def.dimension,
            value: if solved { None } else { current },
            guess: current.unwrap_or(1.0),
        });
        index.insert((node, attr.to_string()), i);
        Ok(i)
    };

    for node in graph.nodes() {
        for (class, idx, eq) in schema.equations(node.class()) {
            let id = format!("{class}#{idx}@n{}", node.id());
            let (l, r) = eq
                .expression
                .as_equation()
                .expect("vocabulary equations are checked at load");
            let mut resolve = |path: &[String]| match path {
                [name] => var_for(&mut net, node.id(), name),
                _ => Err(format!("unexpected name `{}`", path.join("."))),
            };
            let lhs = compile(l, &mut resolve);
            let rhs = compile(r, &mut resolve);
            let (lhs, rhs) = match (lhs, rhs) {
                (Ok(l), Ok(r)) => (l, r),
                (Err(m), _) | (_, Err(m)) => return Err(SolveError::Network { equation: id, message: m }),
            };
            net.push_equation(id, eq.expression.source().to_string(), lhs, rhs);
        }
    }
    for edge in graph.edges() {
        let src = graph.node(edge.source).expect("edge endpoints exist");
        let Some(assoc) = schema.association(src.class(), &edge.assoc) else {
            continue;
        };
        for (sa, da) in &assoc.bindings {
            let id = format!("{}:{sa}={da}@n{}-n{}", edge.assoc, edge.source, edge.target);
            let net_err = |m| SolveError::Network { equation: id.clone(), message: m };
            let l = var_for(&mut net, edge.source, sa).map_err(net_err)?;
            let r = var_for(&mut net, edge.target, da).map_err(net_err)?;
            let source = format!("n{}.{sa} == n{}.{da}", edge.source, edge.target);
            net.push_equation(id, source, Num::Var(l), Num::Var(r));
        }
    }
    Ok(net)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    variables: Vec<RawVariable>,
    equations: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    #[serde(default)]
    dimension: Dimension,
    #[serde(default)]
    value: Option<serde_json::Value>,
    #[serde(default)]
    guess: Option<f64>,
}

struct NamedScope<'a>(&'a BTreeMap<String, Dimension>);

impl TypeScope for NamedScope<'_> {
    fn ident(&self, path: &[String]) -> Option<Ty> {
        match path {
            [name] => self.0.get(name).copied().map(Ty::Number),
            _ => None,
        }
    }
}

impl ConstraintNetwork {
    /// Parses a standalone network document:
    /// `{"variables": [{"name", "dimension", "value"?, "guess"?}], "equations": ["lhs == rhs"]}`.
    /// Values are SI numbers or constant strings such as `"2 [m]"`.
    pub fn from_document(text: &str) -> Result<ConstraintNetwork, SolveError> {
        let raw: RawNetwork = serde_json::from_str(text).map_err(|e| SolveError::Document(e.to_string()))?;
        let mut net = ConstraintNetwork::default();
        let mut dims = BTreeMap::new();
        for v in &raw.variables {
            if dims.insert(v.name.clone(), v.dimension).is_some() {
                return Err(SolveError::Document(format!("duplicate variable `{}`", v.name)));
            }
            let value = match &v.value {
                None => None,
                Some(serde_json::Value::Number(n)) => n.as_f64(),
                Some(serde_json::Value::String(s)) => {
                    let t = Typed::parse(s).map_err(SolveError::Document)?;
                    if t.ty != Ty::Number(v.dimension) {
                        return Err(SolveError::Document(format!(
                            "value `{s}` of `{}` does not have dimension [{}]",
                            v.name, v.dimension
                        )));
                    }
                    t.value.as_number()
                }
                Some(other) => return Err(SolveError::Document(format!("bad value {other} for `{}`", v.name))),
            };
            net.variables.push(Variable {
                key: VarKey::Named(v.name.clone()),
                dimension: v.dimension,
                value,
                guess: v.guess.or(value).unwrap_or(1.0),
            });
        }
        for (i, text) in raw.equations.iter().enumerate() {
            let id = format!("eq{}", i + 1);
            let fail = |message: String| SolveError::Network {
                equation: format!("{id} `{text}`"),
                message,
            };
            let expr = Expression::parse(text).map_err(|e| fail(e.to_string()))?;
            let (l, r) = expr.as_equation().ok_or_else(|| fail("expected `lhs == rhs`".into()))?;
            let scope = NamedScope(&dims);
            let dl = crate::expr::dim_of(l, &scope).map_err(|e| fail(format!("`{}`: {}", expr.snippet(e.span), e.message)))?;
            let dr = crate::expr::dim_of(r, &scope).map_err(|e| fail(format!("`{}`: {}", expr.snippet(e.span), e.message)))?;
            if dl != dr {
                return Err(fail(format!("sides have dimensions [{dl}] and [{dr}]")));
            }
            let mut resolve = |path: &[String]| {
                let name = path.join(".");
                net.named(&name).ok_or(format!("unknown variable `{name}`"))
            };
            let lhs = compile(l, &mut resolve).map_err(fail)?;
            let rhs = compile(r, &mut resolve).map_err(fail)?;
            if lhs.is_constant() && rhs.is_constant() {
                return Err(fail("references no variable".into()));
            }
            net.push_equation(id, text.clone(), lhs, rhs);
        }
        Ok(net)
    }
}
