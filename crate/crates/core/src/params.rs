//! Named design parameters, read by expressions through `param(name)`.
//!
//! A parameter document maps names to constants:
//! `{"massFlow": "0.12 [kg/s]", "variant": "compact", "heated": true}`.
//! Overrides may give a bare number for a numeric parameter; it is taken in
//! SI units of the declared dimension.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{EvalError, EvalScope, Ty, TypeScope, Value};
use crate::graph::Typed;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter document: {0}")]
    Document(String),
    #[error("parameter `{name}`: {message}")]
    Value { name: String, message: String },
    #[error("override of undeclared parameter `{0}`")]
    Undeclared(String),
    #[error("override of `{name}` has type {found:?}, declared {expected:?}")]
    Type { name: String, expected: Box<Ty>, found: Box<Ty> },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    values: BTreeMap<String, Typed>,
}

fn to_typed(name: &str, v: &serde_json::Value, declared: Option<Ty>) -> Result<Typed, ParamError> {
    use serde_json::Value as J;
    let fail = |message: String| ParamError::Value {
        name: name.to_string(),
        message,
    };
    Ok(match v {
        J::String(s) => match Typed::parse(s) {
            Ok(t) => t,
            // plain text for string parameters
            Err(_) if matches!(declared, Some(Ty::Str) | None) => Typed::string(s.clone()),
            Err(m) => return Err(fail(m)),
        },
        J::Number(n) => {
            let x = n.as_f64().ok_or_else(|| fail(format!("{n} is not finite")))?;
            match declared {
                Some(Ty::Number(d)) => Typed::number(x, d),
                _ => Typed::number(x, crate::dimension::Dimension::dimensionless()),
            }
        }
        J::Bool(b) => Typed::boolean(*b),
        other => return Err(fail(format!("unsupported value {other}"))),
    })
}

fn parse_object(text: &str) -> Result<serde_json::Map<String, serde_json::Value>, ParamError> {
    match serde_json::from_str(text).map_err(|e| ParamError::Document(e.to_string()))? {
        serde_json::Value::Object(m) => Ok(m),
        _ => Err(ParamError::Document("expected an object".into())),
    }
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses parameter declarations.
    pub fn from_document(text: &str) -> Result<Self, ParamError> {
        let mut values = BTreeMap::new();
        for (k, v) in parse_object(text)? {
            let t = to_typed(&k, &v, None)?;
            values.insert(k, t);
        }
        Ok(Parameters { values })
    }

    /// Applies an override document; every name must be declared and keep its type.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), ParamError> {
        let mut staged = self.values.clone();
        for (k, v) in parse_object(text)? {
            let declared = self.values.get(&k).ok_or_else(|| ParamError::Undeclared(k.clone()))?.ty;
            let t = to_typed(&k, &v, Some(declared))?;
            if t.ty != declared {
                return Err(ParamError::Type {
                    name: k,
                    expected: Box::new(declared),
                    found: Box::new(t.ty),
                });
            }
            staged.insert(k, t);
        }
        self.values = staged;
        Ok(())
    }

    pub fn set(&mut self, name: impl Into<String>, value: Typed) {
        self.values.insert(name.into(), value);
    }

    pub fn ty(&self, name: &str) -> Option<Ty> {
        self.values.get(name).map(|t| t.ty)
    }

    pub fn value(&self, name: &str) -> Option<&Value> {
        self.values.get(name).map(|t| &t.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Typed)> {
        self.values.iter()
    }
}

/// Parameters alone: `param(name)` resolves, bare names do not.
impl TypeScope for Parameters {
    fn ident(&self, _: &[String]) -> Option<Ty> {
        None
    }

    fn param(&self, name: &str) -> Option<Ty> {
        self.ty(name)
    }
}

impl EvalScope for Parameters {
    fn ident(&self, path: &[String]) -> Result<Value, EvalError> {
        Err(EvalError::Unknown(path.join(".")))
    }

    fn param(&self, name: &str) -> Option<Value> {
        self.value(name).cloned()
    }
}
