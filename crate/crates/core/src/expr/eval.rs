use std::fmt;

use super::{BinOp, EvalError, Expr, ExprKind, Func, UnaryOp};
use crate::graph::{DesignGraph, NodeId};

/// A runtime value. Numbers are in SI base units.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Str(_) => "string",
            Value::Bool(_) => "boolean",
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// Supplies values during evaluation.
pub trait EvalScope {
    fn ident(&self, path: &[String]) -> Result<Value, EvalError>;

    fn graph(&self) -> Option<&DesignGraph> {
        None
    }

    fn param(&self, name: &str) -> Option<Value> {
        let _ = name;
        None
    }
}

/// Bare names resolve to attributes of one node.
pub(crate) struct NodeScope<'a> {
    pub(crate) graph: &'a DesignGraph,
    pub(crate) node: NodeId,
    pub(crate) outer: &'a dyn EvalScope,
}

impl EvalScope for NodeScope<'_> {
    fn ident(&self, path: &[String]) -> Result<Value, EvalError> {
        let [name] = path else {
            return Err(EvalError::Unknown(path.join(".")));
        };
        node_attr(self.graph, self.node, name)
    }

    fn graph(&self) -> Option<&DesignGraph> {
        Some(self.graph)
    }

    fn param(&self, name: &str) -> Option<Value> {
        self.outer.param(name)
    }
}

pub(crate) fn node_attr(graph: &DesignGraph, id: NodeId, name: &str) -> Result<Value, EvalError> {
    let node = graph.node(id).ok_or_else(|| EvalError::Unknown(id.to_string()))?;
    match node.attr(name) {
        Some(v) => Ok(v.clone()),
        None if graph.schema().attribute(node.class(), name).is_some() => {
            Err(EvalError::Unset(format!("{}#{}.{}", node.class(), id, name)))
        }
        None => Err(EvalError::Unknown(name.to_string())),
    }
}

pub fn eval_number(e: &Expr, scope: &dyn EvalScope) -> Result<f64, EvalError> {
    match eval(e, scope)? {
        Value::Number(v) => Ok(v),
        v => Err(EvalError::Type(format!("expected a number, found {}", v.kind_name()))),
    }
}

pub fn eval_bool(e: &Expr, scope: &dyn EvalScope) -> Result<bool, EvalError> {
    match eval(e, scope)? {
        Value::Bool(b) => Ok(b),
        v => Err(EvalError::Type(format!("expected a boolean, found {}", v.kind_name()))),
    }
}

fn finite(v: f64, what: &str) -> Result<Value, EvalError> {
    if v.is_finite() {
        Ok(Value::Number(v))
    } else {
        Err(EvalError::Domain(what.to_string()))
    }
}

pub fn eval(e: &Expr, scope: &dyn EvalScope) -> Result<Value, EvalError> {
    match &e.kind {
        ExprKind::Number { value, .. } => Ok(Value::Number(*value)),
        ExprKind::Str(s) => Ok(Value::Str(s.clone())),
        ExprKind::Bool(b) => Ok(Value::Bool(*b)),
        ExprKind::Ident(path) => scope.ident(path),
        ExprKind::Param(name) => scope.param(name).ok_or_else(|| EvalError::Unknown(format!("param({name})"))),
        ExprKind::Unary(UnaryOp::Neg, a) => Ok(Value::Number(-eval_number(a, scope)?)),
        ExprKind::Unary(UnaryOp::Not, a) => Ok(Value::Bool(!eval_bool(a, scope)?)),
        ExprKind::Binary(op, a, b) => binary(*op, a, b, scope),
        ExprKind::Call(func, args) => call(*func, args, scope),
        ExprKind::Count(class) => {
            let g = scope.graph().ok_or(EvalError::NoGraph)?;
            Ok(Value::Number(g.nodes_of(class).count() as f64))
        }
        ExprKind::Exists(class, pred) => {
            let g = scope.graph().ok_or(EvalError::NoGraph)?;
            for node in g.nodes_of(class) {
                let Some(p) = pred else {
                    return Ok(Value::Bool(true));
                };
                let inner = NodeScope {
                    graph: g,
                    node: node.id(),
                    outer: scope,
                };
                if eval_bool(p, &inner)? {
                    return Ok(Value::Bool(true));
                }
            }
            Ok(Value::Bool(false))
        }
        ExprKind::AttrOf(class, attr) => {
            let g = scope.graph().ok_or(EvalError::NoGraph)?;
            let nodes: Vec<_> = g.nodes_of(class).collect();
            if nodes.len() != 1 {
                return Err(EvalError::NotUnique {
                    class: class.clone(),
                    attr: attr.clone(),
                    found: nodes.len(),
                });
            }
            node_attr(g, nodes[0].id(), attr)
        }
    }
}

fn binary(op: BinOp, a: &Expr, b: &Expr, scope: &dyn EvalScope) -> Result<Value, EvalError> {
    match op {
        BinOp::And => return Ok(Value::Bool(eval_bool(a, scope)? && eval_bool(b, scope)?)),
        BinOp::Or => return Ok(Value::Bool(eval_bool(a, scope)? || eval_bool(b, scope)?)),
        BinOp::Eq | BinOp::Ne => {
            let eq = eval(a, scope)? == eval(b, scope)?;
            return Ok(Value::Bool(eq == (op == BinOp::Eq)));
        }
        _ => {}
    }
    let (x, y) = (eval_number(a, scope)?, eval_number(b, scope)?);
    match op {
        BinOp::Add => finite(x + y, "+"),
        BinOp::Sub => finite(x - y, "-"),
        BinOp::Mul => finite(x * y, "*"),
        BinOp::Div if y == 0.0 => Err(EvalError::DivisionByZero),
        BinOp::Div => finite(x / y, "/"),
        BinOp::Pow => finite(x.powf(y), "^"),
        BinOp::Lt => Ok(Value::Bool(x < y)),
        BinOp::Le => Ok(Value::Bool(x <= y)),
        BinOp::Gt => Ok(Value::Bool(x > y)),
        BinOp::Ge => Ok(Value::Bool(x >= y)),
        BinOp::And | BinOp::Or | BinOp::Eq | BinOp::Ne => unreachable!(),
    }
}

/// Numeric kernel shared with the solver.
pub(crate) fn apply_func(func: Func, args: &[f64]) -> Result<f64, EvalError> {
    let x = args[0];
    let v = match func {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Ln if x <= 0.0 => return Err(EvalError::Domain("ln".into())),
        Func::Ln => x.ln(),
        Func::Sqrt if x < 0.0 => return Err(EvalError::Domain("sqrt".into())),
        Func::Sqrt => x.sqrt(),
        Func::Abs => x.abs(),
        Func::Min => args.iter().copied().fold(f64::INFINITY, f64::min),
        Func::Max => args.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Domain(func.name().into()))
    }
}

fn call(func: Func, args: &[Expr], scope: &dyn EvalScope) -> Result<Value, EvalError> {
    let vals = args
        .iter()
        .map(|a| eval_number(a, scope))
        .collect::<Result<Vec<_>, _>>()?;
    apply_func(func, &vals).map(Value::Number)
}
