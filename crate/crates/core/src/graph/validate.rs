use std::fmt;

use super::{DesignGraph, NodeId};
use crate::solution_path::{collect_network, maximum_matching, VarKey};
use crate::vocabulary::Multiplicity;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Outgoing edge count of `node` for `assoc` outside the declared range.
    Multiplicity {
        node: NodeId,
        class: String,
        assoc: String,
        count: usize,
        multiplicity: Multiplicity,
    },
    /// An unset attribute that some equation needs and the solver cannot determine.
    Undetermined { node: NodeId, attr: String },
    /// The equation network could not be assembled.
    Network(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Multiplicity { node, class, assoc, count, multiplicity } => write!(
                f,
                "{class} #{node}: {count} `{assoc}` edge(s), expected {multiplicity}"
            ),
            Violation::Undetermined { node, attr } => write!(f, "n{node}.{attr} is unset and cannot be determined"),
            Violation::Network(m) => write!(f, "equation network: {m}"),
        }
    }
}

/// Diagnostics for a graph. Empty `violations` means valid; `unknowns`
/// lists unset attributes the solver will determine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub unknowns: Vec<(NodeId, String)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for (n, a) in &self.unknowns {
            writeln!(f, "unknown: n{n}.{a}")?;
        }
        Ok(())
    }
}

impl DesignGraph {
    /// Checks multiplicities and whether every unset attribute referenced by
    /// an equation can be determined by the solver.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for node in self.nodes() {
            for assoc in self.schema.associations(node.class()) {
                let count = self.out_edges(node.id()).filter(|e| e.assoc == assoc.name).count();
                if !assoc.multiplicity.admits(count) {
                    report.violations.push(Violation::Multiplicity {
                        node: node.id(),
                        class: node.class().to_string(),
                        assoc: assoc.name.clone(),
                        count,
                        multiplicity: assoc.multiplicity,
                    });
                }
            }
        }
        let network = match collect_network(self) {
            Ok(n) => n,
            Err(e) => {
                report.violations.push(Violation::Network(e.to_string()));
                return report;
            }
        };
        let (_, eq_of_var) = maximum_matching(&network);
        for v in network.unknowns() {
            // solver-written attributes are set, so they are neither unknown nor violations
            let VarKey::Attr(node, attr) = &network.variables[v].key else {
                continue;
            };
            if self.is_solved(*node, attr) {
                continue;
            }
            if eq_of_var[v].is_some() {
                report.unknowns.push((*node, attr.clone()));
            } else {
                report.violations.push(Violation::Undetermined {
                    node: *node,
                    attr: attr.clone(),
                });
            }
        }
        report
    }
}
