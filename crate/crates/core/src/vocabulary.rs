//! The vocabulary: classes with typed attributes, equations and associations.
//!
//! A vocabulary document is JSON:
//!
//! ```json
//! {"classes": [{
//!     "name": "SCRSystem", "parent": "Component",
//!     "attributes": [{"name": "volume", "kind": "number", "dimension": {"L": "3"}, "default": "2 [L]"}],
//!     "equations": ["volume == flow * residenceTime / density"],
//!     "associations": [{"name": "outlet", "target": "Pipe", "min": 0, "max": "*", "bindings": [["flow", "flow"]]}]
//! }]}
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::dimension::Dimension;
use crate::expr::{eval, EvalError, EvalScope, Expression, Ty, TypeScope, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Number,
    String,
    Boolean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttrKind,
    /// Dimensionless for non-numeric attributes.
    pub dimension: Dimension,
    pub default: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Multiplicity {
    pub min: u32,
    /// `None` is unbounded.
    pub max: Option<u32>,
}

impl Multiplicity {
    pub fn admits(&self, count: usize) -> bool {
        count >= self.min as usize && self.max.is_none_or(|m| count <= m as usize)
    }
}

impl std::fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.max {
            Some(m) => write!(f, "[{}, {}]", self.min, m),
            None => write!(f, "[{}, *]", self.min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationDef {
    pub name: String,
    pub target: String,
    pub multiplicity: Multiplicity,
    /// `(source attribute, target attribute)` equality couplings.
    pub bindings: Vec<(String, String)>,
}

/// A class equation `lhs == rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub expression: Expression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub name: String,
    pub parent: Option<String>,
    pub attributes: Vec<AttributeDef>,
    pub equations: Vec<Equation>,
    pub associations: Vec<AssociationDef>,
}

/// The validated class model. Immutable after loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    classes: BTreeMap<String, ClassDef>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VocabError {
    #[error("vocabulary parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("class `{class}` has unknown parent `{parent}`")]
    UnknownParent { class: String, parent: String },
    #[error("association `{class}.{assoc}` targets unknown class `{target}`")]
    UnknownTarget { class: String, assoc: String, target: String },
    #[error("inheritance cycle through {}", .0.join(", "))]
    InheritanceCycle(Vec<String>),
    #[error("class `{class}` redeclares attribute `{attr}` inherited from `{ancestor}`")]
    Shadowing { class: String, attr: String, ancestor: String },
    #[error("class `{class}` declares attribute `{attr}` twice")]
    DuplicateAttribute { class: String, attr: String },
    #[error("association `{assoc}` is declared twice along the inheritance chain of `{class}`")]
    DuplicateAssociation { class: String, assoc: String },
    #[error("default of `{class}.{attr}`: {message}")]
    BadDefault { class: String, attr: String, message: String },
    #[error("association `{class}.{assoc}` has min {min} > max {max}")]
    Multiplicity { class: String, assoc: String, min: u32, max: u32 },
    #[error("equation `{equation}` of class `{class}`: {message}")]
    Equation { class: String, equation: String, message: String },
    #[error("equation `{equation}` of class `{class}` equates [{lhs}] with [{rhs}]")]
    DimensionMismatch { class: String, equation: String, lhs: Box<Dimension>, rhs: Box<Dimension> },
    #[error("binding on `{class}.{assoc}`: {message}")]
    Binding { class: String, assoc: String, message: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    classes: Vec<RawClass>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    name: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    attributes: Vec<RawAttribute>,
    #[serde(default)]
    equations: Vec<String>,
    #[serde(default)]
    associations: Vec<RawAssociation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttribute {
    name: String,
    kind: AttrKind,
    #[serde(default)]
    dimension: Dimension,
    #[serde(default)]
    default: Option<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawMax {
    Count(u32),
    Star(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAssociation {
    name: String,
    target: String,
    #[serde(default)]
    min: u32,
    #[serde(default)]
    max: Option<RawMax>,
    #[serde(default)]
    bindings: Vec<(String, String)>,
}

/// Parses and validates a vocabulary document.
pub fn load_schema(document: &str) -> Result<Schema, VocabError> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| VocabError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Schema::from_raw(raw)
}

/// Resolves attribute names during equation checking; no graph queries.
struct EquationScope<'a> {
    schema: &'a Schema,
    class: &'a str,
}

impl TypeScope for EquationScope<'_> {
    fn ident(&self, path: &[String]) -> Option<Ty> {
        match path {
            [name] => self.schema.attribute(self.class, name).map(Ty::of_attr),
            _ => None,
        }
    }
}

struct NoVars;

impl EvalScope for NoVars {
    fn ident(&self, path: &[String]) -> Result<Value, EvalError> {
        Err(EvalError::Unknown(path.join(".")))
    }
}

fn convert_default(raw: &serde_json::Value, kind: AttrKind, dim: Dimension) -> Result<Value, String> {
    use serde_json::Value as J;
    match (kind, raw) {
        (AttrKind::Number, J::Number(n)) => n.as_f64().map(Value::Number).ok_or_else(|| "not a finite number".into()),
        (AttrKind::Number, J::String(text)) => {
            let e = Expression::parse(text).map_err(|e| e.to_string())?;
            let d = e.dim_of(&EquationScope { schema: &Schema::default(), class: "" }).map_err(|e| e.to_string())?;
            if d != dim {
                return Err(format!("`{text}` has dimension [{d}], attribute is [{dim}]"));
            }
            eval(e.root(), &NoVars).map_err(|e| e.to_string())
        }
        (AttrKind::String, J::String(s)) => Ok(Value::Str(s.clone())),
        (AttrKind::Boolean, J::Bool(b)) => Ok(Value::Bool(*b)),
        (kind, other) => Err(format!("{other} does not match kind {kind:?}")),
    }
}

impl Schema {
    fn from_raw(raw: RawDocument) -> Result<Schema, VocabError> {
        let mut classes = BTreeMap::new();
        let mut pending = Vec::new();
        for rc in raw.classes {
            if classes.contains_key(&rc.name) {
                return Err(VocabError::DuplicateClass(rc.name));
            }
            let mut attributes = Vec::new();
            for ra in &rc.attributes {
                if attributes.iter().any(|a: &AttributeDef| a.name == ra.name) {
                    return Err(VocabError::DuplicateAttribute {
                        class: rc.name.clone(),
                        attr: ra.name.clone(),
                    });
                }
                let dimension = if ra.kind == AttrKind::Number { ra.dimension } else { Dimension::dimensionless() };
                let default = match &ra.default {
                    Some(v) => Some(convert_default(v, ra.kind, dimension).map_err(|message| VocabError::BadDefault {
                        class: rc.name.clone(),
                        attr: ra.name.clone(),
                        message,
                    })?),
                    None => None,
                };
                attributes.push(AttributeDef {
                    name: ra.name.clone(),
                    kind: ra.kind,
                    dimension,
                    default,
                });
            }
            let mut associations = Vec::new();
            for a in rc.associations {
                let max = match a.max {
                    None => None,
                    Some(RawMax::Count(m)) => Some(m),
                    Some(RawMax::Star(s)) if s == "*" => None,
                    Some(RawMax::Star(s)) => {
                        return Err(VocabError::Parse {
                            line: 0,
                            column: 0,
                            message: format!("association `{}.{}`: max must be a count or \"*\", got {s:?}", rc.name, a.name),
                        })
                    }
                };
                if let Some(m) = max {
                    if a.min > m {
                        return Err(VocabError::Multiplicity {
                            class: rc.name.clone(),
                            assoc: a.name,
                            min: a.min,
                            max: m,
                        });
                    }
                }
                associations.push(AssociationDef {
                    name: a.name,
                    target: a.target,
                    multiplicity: Multiplicity { min: a.min, max },
                    bindings: a.bindings,
                });
            }
            pending.push((rc.name.clone(), rc.equations));
            classes.insert(
                rc.name.clone(),
                ClassDef {
                    name: rc.name,
                    parent: rc.parent,
                    attributes,
                    equations: Vec::new(),
                    associations,
                },
            );
        }
        let mut schema = Schema { classes };
        schema.check_references()?;
        schema.check_cycles()?;
        schema.check_inheritance_names()?;
        for (class, equations) in pending {
            let mut parsed = Vec::new();
            for text in equations {
                parsed.push(schema.check_equation(&class, &text)?);
            }
            schema.classes.get_mut(&class).expect("class inserted above").equations = parsed;
        }
        schema.check_bindings()?;
        Ok(schema)
    }

    fn check_references(&self) -> Result<(), VocabError> {
        for c in self.classes.values() {
            if let Some(p) = &c.parent {
                if !self.classes.contains_key(p) {
                    return Err(VocabError::UnknownParent {
                        class: c.name.clone(),
                        parent: p.clone(),
                    });
                }
            }
            for a in &c.associations {
                if !self.classes.contains_key(&a.target) {
                    return Err(VocabError::UnknownTarget {
                        class: c.name.clone(),
                        assoc: a.name.clone(),
                        target: a.target.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_cycles(&self) -> Result<(), VocabError> {
        for start in self.classes.keys() {
            let mut seen = Vec::new();
            let mut cur = Some(start.as_str());
            while let Some(c) = cur {
                if let Some(pos) = seen.iter().position(|s| *s == c) {
                    let mut cycle: Vec<String> = seen[pos..].iter().map(|s: &&str| s.to_string()).collect();
                    cycle.sort();
                    return Err(VocabError::InheritanceCycle(cycle));
                }
                seen.push(c);
                cur = self.classes[c].parent.as_deref();
            }
        }
        Ok(())
    }

    fn check_inheritance_names(&self) -> Result<(), VocabError> {
        for c in self.classes.values() {
            let mut assoc_names = BTreeSet::new();
            for anc in self.ancestors(&c.name) {
                for a in &anc.associations {
                    if !assoc_names.insert(a.name.as_str()) {
                        return Err(VocabError::DuplicateAssociation {
                            class: c.name.clone(),
                            assoc: a.name.clone(),
                        });
                    }
                }
                if anc.name == c.name {
                    continue;
                }
                for attr in &c.attributes {
                    if anc.attributes.iter().any(|a| a.name == attr.name) {
                        return Err(VocabError::Shadowing {
                            class: c.name.clone(),
                            attr: attr.name.clone(),
                            ancestor: anc.name.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_equation(&self, class: &str, text: &str) -> Result<Equation, VocabError> {
        let fail = |message: String| VocabError::Equation {
            class: class.to_string(),
            equation: text.to_string(),
            message,
        };
        let expression = Expression::parse(text).map_err(|e| fail(e.to_string()))?;
        let Some((lhs, rhs)) = expression.as_equation() else {
            return Err(fail("expected the form `lhs == rhs`".into()));
        };
        if expression.identifiers().is_empty() {
            return Err(fail("references no attribute".into()));
        }
        let scope = EquationScope { schema: self, class };
        let dl = crate::expr::dim_of(lhs, &scope).map_err(|e| fail(format!("`{}`: {}", expression.snippet(e.span), e.message)))?;
        let dr = crate::expr::dim_of(rhs, &scope).map_err(|e| fail(format!("`{}`: {}", expression.snippet(e.span), e.message)))?;
        if dl != dr {
            return Err(VocabError::DimensionMismatch {
                class: class.to_string(),
                equation: text.to_string(),
                lhs: Box::new(dl),
                rhs: Box::new(dr),
            });
        }
        Ok(Equation { expression })
    }

    fn check_bindings(&self) -> Result<(), VocabError> {
        for c in self.classes.values() {
            for a in &c.associations {
                for (src, dst) in &a.bindings {
                    let fail = |message: String| VocabError::Binding {
                        class: c.name.clone(),
                        assoc: a.name.clone(),
                        message,
                    };
                    let s = self
                        .attribute(&c.name, src)
                        .ok_or_else(|| fail(format!("`{}` has no attribute `{src}`", c.name)))?;
                    let d = self
                        .attribute(&a.target, dst)
                        .ok_or_else(|| fail(format!("`{}` has no attribute `{dst}`", a.target)))?;
                    if s.kind != AttrKind::Number || d.kind != AttrKind::Number {
                        return Err(fail(format!("`{src}` and `{dst}` must both be numbers")));
                    }
                    if s.dimension != d.dimension {
                        return Err(fail(format!(
                            "`{src}` [{}] and `{dst}` [{}] differ in dimension",
                            s.dimension, d.dimension
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDef> {
        self.classes.values()
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.get(name)
    }

    /// The class itself followed by its parents, nearest first.
    pub fn ancestors<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a ClassDef> + 'a {
        std::iter::successors(self.classes.get(name), move |c| {
            c.parent.as_deref().and_then(|p| self.classes.get(p))
        })
    }

    pub fn attribute(&self, class: &str, name: &str) -> Option<&AttributeDef> {
        self.ancestors(class)
            .find_map(|c| c.attributes.iter().find(|a| a.name == name))
    }

    /// All visible attributes, root class first.
    pub fn attributes(&self, class: &str) -> Vec<&AttributeDef> {
        let chain: Vec<_> = self.ancestors(class).collect();
        chain.iter().rev().flat_map(|c| c.attributes.iter()).collect()
    }

    /// Own and inherited equations as `(declaring class, index, equation)`, root first.
    pub fn equations(&self, class: &str) -> Vec<(&str, usize, &Equation)> {
        let chain: Vec<_> = self.ancestors(class).collect();
        chain
            .iter()
            .rev()
            .flat_map(|c| c.equations.iter().enumerate().map(move |(i, e)| (c.name.as_str(), i, e)))
            .collect()
    }

    pub fn association(&self, class: &str, name: &str) -> Option<&AssociationDef> {
        self.ancestors(class)
            .find_map(|c| c.associations.iter().find(|a| a.name == name))
    }

    /// Own and inherited associations, root first.
    pub fn associations(&self, class: &str) -> Vec<&AssociationDef> {
        let chain: Vec<_> = self.ancestors(class).collect();
        chain.iter().rev().flat_map(|c| c.associations.iter()).collect()
    }

    /// True iff `sup` is reachable from `sub` by zero or more parent links.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> Result<bool, VocabError> {
        for name in [sub, sup] {
            if !self.classes.contains_key(name) {
                return Err(VocabError::UnknownClass(name.to_string()));
            }
        }
        Ok(self.conforms(sub, sup))
    }

    /// Like [`Schema::is_subtype`], false for unknown names.
    pub fn conforms(&self, sub: &str, sup: &str) -> bool {
        self.ancestors(sub).any(|c| c.name == sup)
    }
}
