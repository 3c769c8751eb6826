//! The design graph: the central instance model grown by rules, solved by
//! the solution path, and read and written by process chains.

mod export;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dimension::Dimension;
use crate::expr::{Expression, Ty, Value};
use crate::vocabulary::Schema;

pub use export::ExportFormat;
pub use validate::{ValidationReport, Violation};

/// Node identifier, assigned in increasing order and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A value together with its static type, as accepted by graph writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Typed {
    pub value: Value,
    pub ty: Ty,
}

impl Typed {
    pub fn number(value: f64, dim: Dimension) -> Self {
        Typed {
            value: Value::Number(value),
            ty: Ty::Number(dim),
        }
    }

    pub fn string(s: impl Into<String>) -> Self {
        Typed {
            value: Value::Str(s.into()),
            ty: Ty::Str,
        }
    }

    pub fn boolean(b: bool) -> Self {
        Typed {
            value: Value::Bool(b),
            ty: Ty::Bool,
        }
    }

    /// A constant expression such as `0.5 [kg/s]`, `"text"` or `true`.
    pub fn parse(text: &str) -> Result<Self, String> {
        struct Constants;
        impl crate::expr::TypeScope for Constants {
            fn ident(&self, _: &[String]) -> Option<Ty> {
                None
            }
        }
        impl crate::expr::EvalScope for Constants {
            fn ident(&self, path: &[String]) -> Result<Value, crate::expr::EvalError> {
                Err(crate::expr::EvalError::Unknown(path.join(".")))
            }
        }
        let e = Expression::parse(text).map_err(|e| e.to_string())?;
        let ty = e.type_of(&Constants).map_err(|e| e.to_string())?;
        let value = crate::expr::eval(e.root(), &Constants).map_err(|e| e.to_string())?;
        Ok(Typed { value, ty })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    id: NodeId,
    class: String,
    attrs: BTreeMap<String, Value>,
}

impl Node {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    /// `None` when the attribute is unset.
    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }

    pub fn attrs(&self) -> &BTreeMap<String, Value> {
        &self.attrs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub source: NodeId,
    pub assoc: String,
    pub target: NodeId,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -{}-> {}", self.source, self.assoc, self.target)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has no attribute `{attr}`")]
    UnknownAttribute { class: String, attr: String },
    #[error("`{class}.{attr}` expects {expected:?}, got {found:?}")]
    KindMismatch { class: String, attr: String, expected: Box<Ty>, found: Box<Ty> },
    #[error("`{class}.{attr}`: non-finite value {value}")]
    NonFinite { class: String, attr: String, value: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("class `{class}` declares no association `{assoc}`")]
    UndeclaredAssociation { class: String, assoc: String },
    #[error("association `{assoc}` expects a `{expected}` target, node {node} is a `{found}`")]
    TargetType { assoc: String, expected: String, found: String, node: NodeId },
    #[error("duplicate edge {0}")]
    DuplicateEdge(Edge),
    #[error("graph import: {0}")]
    Import(String),
}

/// The central instance model.
#[derive(Debug, Clone)]
pub struct DesignGraph {
    schema: Arc<Schema>,
    next_id: u64,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeSet<Edge>,
    // attributes last written by the solver; they stay unknowns on re-solve
    solved: BTreeSet<(NodeId, String)>,
}

impl PartialEq for DesignGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl DesignGraph {
    pub fn new(schema: Arc<Schema>) -> Self {
        DesignGraph {
            schema,
            next_id: 1,
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            solved: BTreeSet::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    /// Nodes whose class conforms to `class`, in id order.
    pub fn nodes_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.nodes.values().filter(move |n| self.schema.conforms(&n.class, class))
    }

    pub fn has_edge(&self, source: NodeId, assoc: &str, target: NodeId) -> bool {
        self.edges.contains(&Edge {
            source,
            assoc: assoc.to_string(),
            target,
        })
    }

    pub fn out_edges(&self, source: NodeId) -> impl Iterator<Item = &Edge> {
        let lo = Edge {
            source,
            assoc: String::new(),
            target: NodeId(0),
        };
        self.edges.range(lo..).take_while(move |e| e.source == source)
    }

    pub fn is_solved(&self, node: NodeId, attr: &str) -> bool {
        self.solved.contains(&(node, attr.to_string()))
    }

    fn check_value(&self, class: &str, attr: &str, typed: &Typed) -> Result<(), GraphError> {
        let def = self.schema.attribute(class, attr).ok_or_else(|| GraphError::UnknownAttribute {
            class: class.to_string(),
            attr: attr.to_string(),
        })?;
        let expected = Ty::of_attr(def);
        let kind_ok = matches!(
            (&typed.value, typed.ty),
            (Value::Number(_), Ty::Number(_)) | (Value::Str(_), Ty::Str) | (Value::Bool(_), Ty::Bool)
        );
        if !kind_ok || typed.ty != expected {
            return Err(GraphError::KindMismatch {
                class: class.to_string(),
                attr: attr.to_string(),
                expected: Box::new(expected),
                found: Box::new(typed.ty),
            });
        }
        if let Value::Number(v) = typed.value {
            if !v.is_finite() {
                return Err(GraphError::NonFinite {
                    class: class.to_string(),
                    attr: attr.to_string(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Adds a node of `class`. Unset attributes take the class default when
    /// one is declared.
    pub fn instantiate<I, S>(&mut self, class: &str, attrs: I) -> Result<NodeId, GraphError>
    where
        I: IntoIterator<Item = (S, Typed)>,
        S: Into<String>,
    {
        if self.schema.class(class).is_none() {
            return Err(GraphError::UnknownClass(class.to_string()));
        }
        let mut values = BTreeMap::new();
        for (name, typed) in attrs {
            let name = name.into();
            self.check_value(class, &name, &typed)?;
            values.insert(name, typed.value);
        }
        for def in self.schema.attributes(class) {
            if let Some(d) = &def.default {
                values.entry(def.name.clone()).or_insert_with(|| d.clone());
            }
        }
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                id,
                class: class.to_string(),
                attrs: values,
            },
        );
        Ok(id)
    }

    /// Checks that `source -assoc-> target` may be added.
    pub fn check_connect(&self, source: NodeId, assoc: &str, target: NodeId) -> Result<Edge, GraphError> {
        let src = self.nodes.get(&source).ok_or(GraphError::UnknownNode(source))?;
        let dst = self.nodes.get(&target).ok_or(GraphError::UnknownNode(target))?;
        let def = self
            .schema
            .association(&src.class, assoc)
            .ok_or_else(|| GraphError::UndeclaredAssociation {
                class: src.class.clone(),
                assoc: assoc.to_string(),
            })?;
        if !self.schema.conforms(&dst.class, &def.target) {
            return Err(GraphError::TargetType {
                assoc: assoc.to_string(),
                expected: def.target.clone(),
                found: dst.class.clone(),
                node: target,
            });
        }
        let edge = Edge {
            source,
            assoc: assoc.to_string(),
            target,
        };
        if self.edges.contains(&edge) {
            return Err(GraphError::DuplicateEdge(edge));
        }
        Ok(edge)
    }

    /// Adds an edge. Multiplicities are only checked by [`DesignGraph::validate`].
    pub fn connect(&mut self, source: NodeId, assoc: &str, target: NodeId) -> Result<Edge, GraphError> {
        let edge = self.check_connect(source, assoc, target)?;
        self.edges.insert(edge.clone());
        Ok(edge)
    }

    /// Validates a batch of attribute writes without applying it.
    pub fn check_writes(&self, writes: &[(NodeId, String, Typed)]) -> Result<(), GraphError> {
        for (id, attr, typed) in writes {
            let node = self.nodes.get(id).ok_or(GraphError::UnknownNode(*id))?;
            self.check_value(&node.class, attr, typed)?;
        }
        Ok(())
    }

    /// Applies all writes or none.
    pub fn set_attrs(&mut self, writes: Vec<(NodeId, String, Typed)>) -> Result<(), GraphError> {
        self.check_writes(&writes)?;
        for (id, attr, typed) in writes {
            self.solved.remove(&(id, attr.clone()));
            self.nodes.get_mut(&id).expect("checked").attrs.insert(attr, typed.value);
        }
        Ok(())
    }

    pub fn set_attr(&mut self, id: NodeId, attr: &str, typed: Typed) -> Result<(), GraphError> {
        self.set_attrs(vec![(id, attr.to_string(), typed)])
    }

    /// Stores a solver result; the attribute stays an unknown for later solves.
    pub(crate) fn set_solved(&mut self, id: NodeId, attr: &str, value: f64) {
        if let Some(n) = self.nodes.get_mut(&id) {
            n.attrs.insert(attr.to_string(), Value::Number(value));
            self.solved.insert((id, attr.to_string()));
        }
    }

    /// Removes a node and every incident edge; returns the removed edges.
    pub fn remove_node(&mut self, id: NodeId) -> Result<Vec<Edge>, GraphError> {
        if self.nodes.remove(&id).is_none() {
            return Err(GraphError::UnknownNode(id));
        }
        let incident: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| e.source == id || e.target == id)
            .cloned()
            .collect();
        for e in &incident {
            self.edges.remove(e);
        }
        self.solved.retain(|(n, _)| *n != id);
        Ok(incident)
    }

    pub fn remove_edge(&mut self, edge: &Edge) -> bool {
        self.edges.remove(edge)
    }
}
