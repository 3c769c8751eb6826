use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::str::FromStr;
use std::sync::Arc;

use super::{DesignGraph, GraphError, NodeId, Typed};
use crate::expr::{Ty, Value};
use crate::vocabulary::{AttrKind, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    GraphMl,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "graphml" => Ok(ExportFormat::GraphMl),
            "dot" => Ok(ExportFormat::Dot),
            _ => Err(format!("unknown export format `{s}` (expected json, graphml or dot)")),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Json => "json",
            ExportFormat::GraphMl => "graphml",
            ExportFormat::Dot => "dot",
        }
    }
}

/// 17 significant digits.
pub(crate) fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub(crate) fn json_value(v: &Value) -> String {
    match v {
        Value::Number(x) => format_number(*x),
        Value::Str(s) => json_string(s),
        Value::Bool(b) => b.to_string(),
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

impl DesignGraph {
    /// Deterministic serialization: nodes by id, edges by (source, assoc, target).
    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => self.to_json(),
            ExportFormat::GraphMl => self.to_graphml(),
            ExportFormat::Dot => self.to_dot(),
        }
    }

    fn to_json(&self) -> String {
        let mut out = String::from("{\n  \"nodes\": [");
        for (i, n) in self.nodes.values().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            let attrs: Vec<String> = n
                .attrs
                .iter()
                .map(|(k, v)| format!("{}: {}", json_string(k), json_value(v)))
                .collect();
            let _ = write!(
                out,
                "    {{\"id\": {}, \"class\": {}, \"attrs\": {{{}}}}}",
                n.id,
                json_string(&n.class),
                attrs.join(", ")
            );
        }
        out.push_str(if self.nodes.is_empty() { "],\n" } else { "\n  ],\n" });
        out.push_str("  \"edges\": [");
        for (i, e) in self.edges.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            let _ = write!(
                out,
                "    {{\"source\": {}, \"assoc\": {}, \"target\": {}}}",
                e.source,
                json_string(&e.assoc),
                e.target
            );
        }
        out.push_str(if self.edges.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        out
    }

    fn to_graphml(&self) -> String {
        let mut keys: BTreeSet<(String, &'static str)> = BTreeSet::new();
        for n in self.nodes.values() {
            for (k, v) in &n.attrs {
                let ty = match v {
                    Value::Number(_) => "double",
                    Value::Str(_) => "string",
                    Value::Bool(_) => "boolean",
                };
                keys.insert((k.clone(), ty));
            }
        }
        let mut out = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
        );
        out.push_str("  <key id=\"class\" for=\"node\" attr.name=\"class\" attr.type=\"string\"/>\n");
        out.push_str("  <key id=\"assoc\" for=\"edge\" attr.name=\"assoc\" attr.type=\"string\"/>\n");
        for (name, ty) in &keys {
            let _ = writeln!(
                out,
                "  <key id=\"{ty}:{n}\" for=\"node\" attr.name=\"{n}\" attr.type=\"{ty}\"/>",
                n = xml_escape(name)
            );
        }
        out.push_str("  <graph id=\"design\" edgedefault=\"directed\">\n");
        for n in self.nodes.values() {
            let _ = writeln!(out, "    <node id=\"n{}\">", n.id);
            let _ = writeln!(out, "      <data key=\"class\">{}</data>", xml_escape(&n.class));
            for (k, v) in &n.attrs {
                let (ty, text) = match v {
                    Value::Number(x) => ("double", format_number(*x)),
                    Value::Str(s) => ("string", xml_escape(s)),
                    Value::Bool(b) => ("boolean", b.to_string()),
                };
                let _ = writeln!(out, "      <data key=\"{ty}:{}\">{text}</data>", xml_escape(k));
            }
            out.push_str("    </node>\n");
        }
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                out,
                "    <edge id=\"e{i}\" source=\"n{}\" target=\"n{}\"><data key=\"assoc\">{}</data></edge>",
                e.source,
                e.target,
                xml_escape(&e.assoc)
            );
        }
        out.push_str("  </graph>\n</graphml>\n");
        out
    }

    fn to_dot(&self) -> String {
        let mut out = String::from("digraph design {\n");
        for n in self.nodes.values() {
            let mut label = format!("{} #{}", n.class, n.id);
            for (k, v) in &n.attrs {
                let text = match v {
                    Value::Number(x) => format_number(*x),
                    other => other.to_string(),
                };
                let _ = write!(label, "\n{k} = {text}");
            }
            let _ = writeln!(out, "  n{} [label=\"{}\"];", n.id, dot_escape(&label).replace('\n', "\\n"));
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", e.source, e.target, dot_escape(&e.assoc));
        }
        out.push_str("}\n");
        out
    }

    /// Reads the canonical JSON export back, validating against `schema`.
    pub fn from_json(schema: Arc<Schema>, text: &str) -> Result<DesignGraph, GraphError> {
        use serde_json::Value as J;
        let bad = |m: String| GraphError::Import(m);
        let doc: J = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let nodes = doc.get("nodes").and_then(J::as_array).ok_or_else(|| bad("missing `nodes` list".into()))?;
        let edges = doc.get("edges").and_then(J::as_array).ok_or_else(|| bad("missing `edges` list".into()))?;

        let mut g = DesignGraph::new(schema);
        let mut max_id = 0;
        for n in nodes {
            let id = n.get("id").and_then(J::as_u64).filter(|i| *i > 0).ok_or_else(|| bad(format!("bad node id in {n}")))?;
            let class = n.get("class").and_then(J::as_str).ok_or_else(|| bad(format!("bad class in {n}")))?;
            if g.schema.class(class).is_none() {
                return Err(GraphError::UnknownClass(class.to_string()));
            }
            let mut attrs = BTreeMap::new();
            if let Some(obj) = n.get("attrs").and_then(J::as_object) {
                for (k, v) in obj {
                    let def = g.schema.attribute(class, k).ok_or_else(|| GraphError::UnknownAttribute {
                        class: class.to_string(),
                        attr: k.clone(),
                    })?;
                    let typed = match (def.kind, v) {
                        (AttrKind::Number, J::Number(x)) => Typed::number(x.as_f64().unwrap_or(f64::NAN), def.dimension),
                        (AttrKind::String, J::String(s)) => Typed::string(s.clone()),
                        (AttrKind::Boolean, J::Bool(b)) => Typed::boolean(*b),
                        _ => return Err(bad(format!("`{class}.{k}`: {v} does not match {:?}", Ty::of_attr(def)))),
                    };
                    g.check_value(class, k, &typed)?;
                    attrs.insert(k.clone(), typed.value);
                }
            }
            let id = NodeId(id);
            if g.nodes.contains_key(&id) {
                return Err(bad(format!("duplicate node id {id}")));
            }
            max_id = max_id.max(id.0);
            g.nodes.insert(
                id,
                super::Node {
                    id,
                    class: class.to_string(),
                    attrs,
                },
            );
        }
        g.next_id = max_id + 1;
        for e in edges {
            let source = e.get("source").and_then(J::as_u64).ok_or_else(|| bad(format!("bad edge {e}")))?;
            let target = e.get("target").and_then(J::as_u64).ok_or_else(|| bad(format!("bad edge {e}")))?;
            let assoc = e.get("assoc").and_then(J::as_str).ok_or_else(|| bad(format!("bad edge {e}")))?;
            g.connect(NodeId(source), assoc, NodeId(target))?;
        }
        Ok(g)
    }
}
