use super::{BinOp, Expr, ExprKind, Func, TypeError, UnaryOp};
use crate::dimension::{Dimension, Rational};
use crate::vocabulary::{AttrKind, AttributeDef, Schema};

/// Static type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Number(Dimension),
    Str,
    Bool,
}

impl Ty {
    pub fn of_attr(attr: &AttributeDef) -> Ty {
        match attr.kind {
            AttrKind::Number => Ty::Number(attr.dimension),
            AttrKind::String => Ty::Str,
            AttrKind::Boolean => Ty::Bool,
        }
    }

    fn describe(self) -> String {
        match self {
            Ty::Number(d) => format!("number [{d}]"),
            Ty::Str => "string".into(),
            Ty::Bool => "boolean".into(),
        }
    }
}

/// Resolves names during type checking.
pub trait TypeScope {
    fn ident(&self, path: &[String]) -> Option<Ty>;

    /// Needed for `count`, `exists` and `attr`.
    fn schema(&self) -> Option<&Schema> {
        None
    }

    fn param(&self, _name: &str) -> Option<Ty> {
        None
    }
}

/// Bare names resolve to attributes of `class`; parameters come from `outer`.
pub struct ClassScope<'a> {
    pub schema: &'a Schema,
    pub class: &'a str,
    pub outer: Option<&'a dyn TypeScope>,
}

impl TypeScope for ClassScope<'_> {
    fn ident(&self, path: &[String]) -> Option<Ty> {
        match path {
            [name] => self.schema.attribute(self.class, name).map(Ty::of_attr),
            _ => None,
        }
    }

    fn schema(&self) -> Option<&Schema> {
        Some(self.schema)
    }

    fn param(&self, name: &str) -> Option<Ty> {
        self.outer.and_then(|o| o.param(name))
    }
}

fn err<T>(e: &Expr, message: impl Into<String>) -> Result<T, TypeError> {
    Err(TypeError {
        span: e.span,
        message: message.into(),
    })
}

/// Dimension of a numeric expression.
pub fn dim_of(e: &Expr, scope: &dyn TypeScope) -> Result<Dimension, TypeError> {
    match type_of(e, scope)? {
        Ty::Number(d) => Ok(d),
        t => err(e, format!("expected a number, found {}", t.describe())),
    }
}

fn expect_bool(e: &Expr, scope: &dyn TypeScope) -> Result<(), TypeError> {
    match type_of(e, scope)? {
        Ty::Bool => Ok(()),
        t => err(e, format!("expected a boolean, found {}", t.describe())),
    }
}

fn dimensionless(e: &Expr, scope: &dyn TypeScope, what: &str) -> Result<(), TypeError> {
    let d = dim_of(e, scope)?;
    if d.is_dimensionless() {
        Ok(())
    } else {
        err(e, format!("{what} needs a dimensionless argument, found [{d}]"))
    }
}

fn class_schema<'s>(e: &Expr, scope: &'s dyn TypeScope, class: &str) -> Result<&'s Schema, TypeError> {
    let Some(schema) = scope.schema() else {
        return err(e, "graph queries are not available here");
    };
    if schema.class(class).is_none() {
        return err(e, format!("unknown class `{class}`"));
    }
    Ok(schema)
}

/// Type of an expression by structural recursion.
pub fn type_of(e: &Expr, scope: &dyn TypeScope) -> Result<Ty, TypeError> {
    match &e.kind {
        ExprKind::Number { dim, .. } => Ok(Ty::Number(*dim)),
        ExprKind::Str(_) => Ok(Ty::Str),
        ExprKind::Bool(_) => Ok(Ty::Bool),
        ExprKind::Ident(path) => match scope.ident(path) {
            Some(t) => Ok(t),
            None => err(e, format!("unknown name `{}`", path.join("."))),
        },
        ExprKind::Param(name) => match scope.param(name) {
            Some(t) => Ok(t),
            None => err(e, format!("unknown parameter `{name}`")),
        },
        ExprKind::Unary(UnaryOp::Neg, a) => Ok(Ty::Number(dim_of(a, scope)?)),
        ExprKind::Unary(UnaryOp::Not, a) => {
            expect_bool(a, scope)?;
            Ok(Ty::Bool)
        }
        ExprKind::Binary(op, a, b) => binary(e, *op, a, b, scope),
        ExprKind::Call(func, args) => call(e, *func, args, scope),
        ExprKind::Count(class) => {
            class_schema(e, scope, class)?;
            Ok(Ty::Number(Dimension::dimensionless()))
        }
        ExprKind::Exists(class, pred) => {
            let schema = class_schema(e, scope, class)?;
            if let Some(p) = pred {
                let inner = ClassScope {
                    schema,
                    class,
                    outer: Some(scope),
                };
                expect_bool(p, &inner)?;
            }
            Ok(Ty::Bool)
        }
        ExprKind::AttrOf(class, attr) => {
            let schema = class_schema(e, scope, class)?;
            match schema.attribute(class, attr) {
                Some(a) => Ok(Ty::of_attr(a)),
                None => err(e, format!("class `{class}` has no attribute `{attr}`")),
            }
        }
    }
}

fn binary(e: &Expr, op: BinOp, a: &Expr, b: &Expr, scope: &dyn TypeScope) -> Result<Ty, TypeError> {
    match op {
        BinOp::Add | BinOp::Sub => {
            let (da, db) = (dim_of(a, scope)?, dim_of(b, scope)?);
            if da != db {
                return err(e, format!("cannot {} [{da}] and [{db}]", if op == BinOp::Add { "add" } else { "subtract" }));
            }
            Ok(Ty::Number(da))
        }
        BinOp::Mul => Ok(Ty::Number(dim_of(a, scope)? * dim_of(b, scope)?)),
        BinOp::Div => Ok(Ty::Number(dim_of(a, scope)? / dim_of(b, scope)?)),
        BinOp::Pow => {
            let base = dim_of(a, scope)?;
            let exp = dim_of(b, scope)?;
            if !exp.is_dimensionless() {
                return err(b, format!("exponent must be dimensionless, found [{exp}]"));
            }
            if base.is_dimensionless() {
                return Ok(Ty::Number(base));
            }
            match b.const_rational() {
                Some(r) => Ok(Ty::Number(base.powr(r))),
                None => err(b, format!("exponent of dimensional base [{base}] must be a rational constant")),
            }
        }
        BinOp::Eq | BinOp::Ne => {
            let (ta, tb) = (type_of(a, scope)?, type_of(b, scope)?);
            if ta != tb {
                return err(e, format!("cannot compare {} with {}", ta.describe(), tb.describe()));
            }
            Ok(Ty::Bool)
        }
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let (da, db) = (dim_of(a, scope)?, dim_of(b, scope)?);
            if da != db {
                return err(e, format!("cannot compare [{da}] with [{db}]"));
            }
            Ok(Ty::Bool)
        }
        BinOp::And | BinOp::Or => {
            expect_bool(a, scope)?;
            expect_bool(b, scope)?;
            Ok(Ty::Bool)
        }
    }
}

fn call(e: &Expr, func: Func, args: &[Expr], scope: &dyn TypeScope) -> Result<Ty, TypeError> {
    match func {
        Func::Sin | Func::Cos | Func::Tan | Func::Exp | Func::Ln => {
            dimensionless(&args[0], scope, func.name())?;
            Ok(Ty::Number(Dimension::dimensionless()))
        }
        Func::Sqrt => Ok(Ty::Number(dim_of(&args[0], scope)?.powr(Rational::new(1, 2)))),
        Func::Abs => Ok(Ty::Number(dim_of(&args[0], scope)?)),
        Func::Min | Func::Max => {
            let first = dim_of(&args[0], scope)?;
            for a in &args[1..] {
                let d = dim_of(a, scope)?;
                if d != first {
                    return err(e, format!("{} over [{first}] and [{d}]", func.name()));
                }
            }
            Ok(Ty::Number(first))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::expr::parse;

    struct Vars(BTreeMap<&'static str, Dimension>);

    impl TypeScope for Vars {
        fn ident(&self, path: &[String]) -> Option<Ty> {
            self.0.get(path.join(".").as_str()).copied().map(Ty::Number)
        }
    }

    fn scope() -> Vars {
        let accel = Dimension::length() / Dimension::time().powi(2);
        Vars(BTreeMap::from([
            ("L", Dimension::length()),
            ("T", Dimension::time()),
            ("g", accel),
            ("x", Dimension::dimensionless()),
        ]))
    }

    fn dim(src: &str) -> Result<Dimension, TypeError> {
        dim_of(&parse(src).unwrap(), &scope())
    }

    #[test]
    fn division_rule() {
        assert_eq!(dim("L / T").unwrap(), Dimension::length() / Dimension::time());
    }

    #[test]
    fn addition_rule() {
        let e = dim("L + T").unwrap_err();
        assert!(e.message.contains("cannot add"), "{}", e.message);
        assert_eq!((e.span.start, e.span.end), (0, 5));
    }

    #[test]
    fn sqrt_halves_exponents() {
        assert_eq!(dim("sqrt(L / g)").unwrap(), Dimension::time());
        assert_eq!(dim("(L / g)^(1/2)").unwrap(), Dimension::time());
        assert_eq!(dim("L^0.5 * L^0.5").unwrap(), Dimension::length());
    }

    #[test]
    fn transcendental_needs_dimensionless() {
        assert!(dim("sin(x) + exp(x)").unwrap().is_dimensionless());
        assert!(dim("cos(L)").is_err());
        assert!(dim("ln(L / T)").is_err());
        assert!(dim("exp(L / L)").is_ok());
    }

    #[test]
    fn pow_exponent_rules() {
        assert!(dim("L^x").is_err());
        assert!(dim("x^x").is_ok());
        assert!(dim("x^L").is_err());
        assert_eq!(dim("L^-2").unwrap(), Dimension::length().powi(-2));
    }

    #[test]
    fn unit_tags_and_comparisons() {
        assert!(dim("L + 2 [m]").is_ok());
        assert!(dim("L + 2 [s]").is_err());
        let t = type_of(&parse("L > 1 [mm] && x == 1").unwrap(), &scope()).unwrap();
        assert_eq!(t, Ty::Bool);
        assert!(type_of(&parse("L > T").unwrap(), &scope()).is_err());
        assert!(type_of(&parse("L && x").unwrap(), &scope()).is_err());
        assert!(dim("y").is_err());
        assert!(dim("count(A)").is_err());
    }
}
