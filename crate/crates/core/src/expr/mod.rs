//! The expression language shared by class equations, rule predicates and
//! assignments, decision predicates and standalone networks.
//!
//! ```text
//! expr     := or
//! or       := and ("||" and)*
//! and      := cmp ("&&" cmp)*
//! cmp      := sum (("==" | "!=" | "<" | "<=" | ">" | ">=") sum)?
//! sum      := product (("+" | "-") product)*
//! product  := unary (("*" | "/") unary)*
//! unary    := ("-" | "!") unary | power
//! power    := primary ("^" unary)?
//! primary  := number ["[" unit "]"] | string | true | false
//!           | ident ["." ident] | func "(" args ")" | "(" expr ")"
//!           | count(Class) | exists(Class [where expr]) | attr(Class, name) | param(name)
//! ```
//!
//! Numbers are stored in SI base units; a unit tag scales the literal and
//! gives it a dimension. Untagged literals are dimensionless.

mod check;
pub(crate) mod eval;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::dimension::{Dimension, Rational};

pub use check::{dim_of, type_of, ClassScope, Ty, TypeScope};
pub use eval::{eval, eval_bool, eval_number, EvalScope, Value};
pub use parser::parse;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// `value` is in SI units; `exact` is set for untagged decimal literals.
    Number {
        value: f64,
        dim: Dimension,
        exact: Option<Rational>,
    },
    Str(String),
    Bool(bool),
    /// `name` or `pid.name`.
    Ident(Vec<String>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    Count(String),
    Exists(String, Option<Box<Expr>>),
    AttrOf(String, String),
    Param(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    /// Calls `f` on every identifier path in the tree, outside of `exists` bodies.
    pub fn visit_idents<'a>(&'a self, f: &mut impl FnMut(&'a [String])) {
        match &self.kind {
            ExprKind::Ident(path) => f(path),
            ExprKind::Unary(_, e) => e.visit_idents(f),
            ExprKind::Binary(_, a, b) => {
                a.visit_idents(f);
                b.visit_idents(f);
            }
            ExprKind::Call(_, args) => args.iter().for_each(|a| a.visit_idents(f)),
            _ => {}
        }
    }

    /// Exact rational value of a constant dimensionless subexpression.
    pub fn const_rational(&self) -> Option<Rational> {
        match &self.kind {
            ExprKind::Number { exact, dim, .. } if dim.is_dimensionless() => *exact,
            ExprKind::Unary(UnaryOp::Neg, e) => e.const_rational().map(|r| -r),
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (a.const_rational()?, b.const_rational()?);
                match op {
                    BinOp::Add => Some(a + b),
                    BinOp::Sub => Some(a - b),
                    BinOp::Mul => Some(a * b),
                    BinOp::Div if *b.numer() != 0 => Some(a / b),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    source: String,
    root: Expr,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Ok(Expression {
            source: source.to_string(),
            root: parse(source)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn snippet(&self, span: Span) -> &str {
        self.source.get(span.start..span.end).unwrap_or(&self.source)
    }

    /// Splits a top-level `lhs == rhs`.
    pub fn as_equation(&self) -> Option<(&Expr, &Expr)> {
        match &self.root.kind {
            ExprKind::Binary(BinOp::Eq, l, r) => Some((l, r)),
            _ => None,
        }
    }

    /// Distinct identifier paths, in first-occurrence order.
    pub fn identifiers(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = Vec::new();
        self.root.visit_idents(&mut |p| {
            if !out.iter().any(|q| q.as_slice() == p) {
                out.push(p.to_vec());
            }
        });
        out
    }

    /// Type-checks against `scope`, attaching the offending snippet on error.
    pub fn type_of(&self, scope: &dyn TypeScope) -> Result<Ty, ExprError> {
        type_of(&self.root, scope).map_err(|e| self.located(e))
    }

    pub fn dim_of(&self, scope: &dyn TypeScope) -> Result<Dimension, ExprError> {
        dim_of(&self.root, scope).map_err(|e| self.located(e))
    }

    fn located(&self, e: TypeError) -> ExprError {
        ExprError::Type {
            expr: self.source.clone(),
            at: self.snippet(e.span).to_string(),
            message: e.message,
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("parse error at {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

/// Static type or dimension error at `span`.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct TypeError {
    pub span: Span,
    pub message: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("attribute `{0}` is unset")]
    Unset(String),
    #[error("unknown name `{0}`")]
    Unknown(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0} outside its domain")]
    Domain(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("`attr({class}, {attr})` needs exactly one {class} instance, found {found}")]
    NotUnique { class: String, attr: String, found: usize },
    #[error("graph queries are not available here")]
    NoGraph,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExprError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("in `{expr}` at `{at}`: {message}")]
    Type { expr: String, at: String, message: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}
