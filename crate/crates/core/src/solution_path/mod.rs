//! Declarative solution of the equation network induced by a design graph.
//!
//! The network is never solved in a user-given order. [`plan`] matches
//! equations to unknowns, orients them, and sorts the strongly connected
//! components; [`solve`] then runs the components in that order, by closed
//! form isolation where the unknown occurs once behind invertible operators
//! and by damped Newton otherwise.

mod network;
pub(crate) mod numeric;
mod plan;

use std::collections::BTreeMap;

use serde_json::json;
use thiserror::Error;

use crate::expr::EvalError;
use crate::graph::DesignGraph;

pub use network::{collect_network, ConstraintNetwork, EquationInstance, VarKey, Variable};
pub use numeric::{relative_residual, Num};
pub use plan::{maximum_matching, plan, Component, Method, SolutionPlan, Underdetermined};

use numeric::{isolate, newton, NewtonFailure, NewtonSettings};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolveError {
    #[error("network document: {0}")]
    Document(String),
    #[error("equation {equation}: {message}")]
    Network { equation: String, message: String },
    #[error(
        "underdetermined: no equation left for {}; underdetermined part: unknowns {} in equations {}",
        unknowns.join(", "), blocking_unknowns.join(", "), blocking_equations.join(", ")
    )]
    Underdetermined {
        unknowns: Vec<String>,
        blocking_unknowns: Vec<String>,
        blocking_equations: Vec<String>,
    },
    #[error("no convergence for {equations:?} after {iterations} iterations (residual {residual:e})")]
    NoConvergence { equations: Vec<String>, iterations: usize, residual: f64 },
    #[error("singular Jacobian in {equations:?}")]
    Singular { equations: Vec<String> },
    #[error("evaluating {equation}: {error}")]
    Eval { equation: String, error: EvalError },
    #[error("residual check failed for {equation}: relative residual {residual:e}")]
    Residual { equation: String, residual: f64 },
    #[error("{0} is not a known input")]
    NotAnInput(String),
}

/// Solver tolerances. Defaults: relative residual 1e-9, 100 Newton
/// iterations, damping halved down to 2^-20.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub min_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-9,
            max_iterations: 100,
            min_damping: 2f64.powi(-20),
        }
    }
}

impl SolverConfig {
    fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            min_damping: self.min_damping,
        }
    }
}

/// Values for every network variable, knowns included.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    /// Relative residual per equation, in network order.
    pub residuals: Vec<f64>,
}

impl Solution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn pairs(net: &ConstraintNetwork, eqs: &[usize], x: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    eqs.iter()
        .map(|&e| {
            let eq = &net.equations[e];
            Ok((eq.lhs.eval(x)?, eq.rhs.eval(x)?))
        })
        .collect()
}

fn newton_error(net: &ConstraintNetwork, eqs: &[usize], f: NewtonFailure, max_iterations: usize) -> SolveError {
    let equations: Vec<String> = eqs.iter().map(|&e| net.equations[e].id.clone()).collect();
    match f {
        NewtonFailure::Eval(error) => SolveError::Eval {
            equation: equations.join(", "),
            error,
        },
        NewtonFailure::Singular => SolveError::Singular { equations },
        NewtonFailure::Stalled { iterations, residual } => SolveError::NoConvergence {
            equations,
            iterations,
            residual,
        },
        NewtonFailure::MaxIterations { residual } => SolveError::NoConvergence {
            equations,
            iterations: max_iterations,
            residual,
        },
    }
}

/// Executes `plan` on `network`, then checks every equation's relative
/// residual against the tolerance, the leftover residual checks included.
pub fn solve(plan: &SolutionPlan, network: &ConstraintNetwork, config: &SolverConfig) -> Result<Solution, SolveError> {
    let mut x: Vec<f64> = network.variables.iter().map(|v| v.value.unwrap_or(v.guess)).collect();
    let settings = config.newton();

    for comp in &plan.components {
        match comp {
            Component::Singleton { equation, output, method } => {
                let eq = &network.equations[*equation];
                let mut done = false;
                if *method == Method::Isolate {
                    if let Ok(v) = isolate(&eq.lhs, &eq.rhs, *output, &x) {
                        let old = x[*output];
                        x[*output] = v;
                        let ok = matches!(pairs(network, &[*equation], &x),
                            Ok(p) if relative_residual(p[0].0, p[0].1) <= config.tolerance);
                        if ok {
                            done = true;
                        } else {
                            x[*output] = old;
                        }
                    }
                }
                if !done {
                    let out = *output;
                    let base = &x;
                    let root = newton(&[x[out]], &settings, |y| {
                        let mut scratch = base.clone();
                        scratch[out] = y[0];
                        pairs(network, &[*equation], &scratch)
                    })
                    .map_err(|f| newton_error(network, &[*equation], f, config.max_iterations))?;
                    x[out] = root[0];
                }
            }
            Component::Block { equations, outputs } => {
                let start: Vec<f64> = outputs.iter().map(|&o| x[o]).collect();
                let base = &x;
                let root = newton(&start, &settings, |y| {
                    let mut scratch = base.clone();
                    for (&o, &v) in outputs.iter().zip(y) {
                        scratch[o] = v;
                    }
                    pairs(network, equations, &scratch)
                })
                .map_err(|f| newton_error(network, equations, f, config.max_iterations))?;
                for (&o, v) in outputs.iter().zip(root) {
                    x[o] = v;
                }
            }
        }
    }

    let mut residuals = Vec::with_capacity(network.equations.len());
    for (i, eq) in network.equations.iter().enumerate() {
        let (l, r) = match (eq.lhs.eval(&x), eq.rhs.eval(&x)) {
            (Ok(l), Ok(r)) => (l, r),
            (Err(error), _) | (_, Err(error)) => {
                return Err(SolveError::Eval {
                    equation: eq.id.clone(),
                    error,
                })
            }
        };
        let res = relative_residual(l, r);
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail
        if !(res <= config.tolerance) {
            return Err(SolveError::Residual {
                equation: network.equations[i].id.clone(),
                residual: res,
            });
        }
        residuals.push(res);
    }
    Ok(Solution { values: x, residuals })
}

/// Plans and solves in one call.
pub fn plan_and_solve(network: &ConstraintNetwork, config: &SolverConfig) -> Result<(SolutionPlan, Solution), SolveError> {
    let p = plan(network)?;
    let s = solve(&p, network, config)?;
    Ok((p, s))
}

/// Central-difference derivative of `output` with respect to the known
/// `input`, step `1e-6 · max(|x|, 1)`.
pub fn sensitivity(network: &ConstraintNetwork, output: usize, input: usize, config: &SolverConfig) -> Result<f64, SolveError> {
    let x = network.variables[input]
        .value
        .ok_or_else(|| SolveError::NotAnInput(network.variables[input].key.to_string()))?;
    sensitivity_with_step(network, output, input, 1e-6 * x.abs().max(1.0), config)
}

pub fn sensitivity_with_step(
    network: &ConstraintNetwork,
    output: usize,
    input: usize,
    step: f64,
    config: &SolverConfig,
) -> Result<f64, SolveError> {
    let x = network.variables[input]
        .value
        .ok_or_else(|| SolveError::NotAnInput(network.variables[input].key.to_string()))?;
    let p = plan(network)?;
    let eval_at = |v: f64| -> Result<f64, SolveError> {
        let mut perturbed = network.clone();
        perturbed.set_known(input, v);
        Ok(solve(&p, &perturbed, config)?.values[output])
    };
    let hi = eval_at(x + step)?;
    let lo = eval_at(x - step)?;
    Ok((hi - lo) / (2.0 * step))
}

/// Outcome of solving a design graph in place.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub network: ConstraintNetwork,
    pub plan: SolutionPlan,
    pub solution: Solution,
}

/// Collects, plans and solves the graph's network, writing every solved
/// unknown back into the graph. The graph is untouched on error.
pub fn solve_graph(graph: &mut DesignGraph, config: &SolverConfig) -> Result<SolveReport, SolveError> {
    let network = collect_network(graph)?;
    let (plan, solution) = plan_and_solve(&network, config)?;
    for v in network.unknowns() {
        if let VarKey::Attr(node, attr) = &network.variables[v].key {
            graph.set_solved(*node, attr, solution.values[v]);
        }
    }
    Ok(SolveReport {
        network,
        plan,
        solution,
    })
}

/// Structured description of a plan and its solution.
pub fn report_json(network: &ConstraintNetwork, plan: &SolutionPlan, solution: Option<&Solution>) -> serde_json::Value {
    let var = |i: usize| network.variables[i].key.to_string();
    let eq = |i: usize| network.equations[i].id.clone();
    let components: Vec<serde_json::Value> = plan
        .components
        .iter()
        .map(|c| match c {
            Component::Singleton { equation, output, method } => json!({
                "kind": "singleton",
                "equations": [eq(*equation)],
                "outputs": [var(*output)],
                "method": method,
            }),
            Component::Block { equations, outputs } => json!({
                "kind": "block",
                "equations": equations.iter().map(|&e| eq(e)).collect::<Vec<_>>(),
                "outputs": outputs.iter().map(|&o| var(o)).collect::<Vec<_>>(),
                "method": Method::NewtonNd,
            }),
        })
        .collect();
    let mut out = json!({
        "plan": components,
        "residual_checks": plan.residual_checks.iter().map(|&e| eq(e)).collect::<Vec<_>>(),
    });
    if let Some(s) = solution {
        let values: BTreeMap<String, f64> = network
            .variables
            .iter()
            .zip(&s.values)
            .map(|(v, x)| (v.key.to_string(), *x))
            .collect();
        out["values"] = json!(values);
        out["max_residual"] = json!(s.max_residual());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(doc: &str) -> ConstraintNetwork {
        ConstraintNetwork::from_document(doc).unwrap()
    }

    fn value(n: &ConstraintNetwork, s: &Solution, name: &str) -> f64 {
        s.values[n.named(name).unwrap()]
    }

    // Fixed-point iteration x <- cos(x), run to 1e-12.
    fn dottie() -> f64 {
        let mut x = 1.0f64;
        loop {
            let next = x.cos();
            if (next - x).abs() < 1e-12 {
                return next;
            }
            x = next;
        }
    }

    #[test]
    fn arithmetic_chain() {
        let n = net(r#"{"variables": [{"name": "a", "value": 1}, {"name": "b", "value": 2}, {"name": "c"}, {"name": "d"}],
                       "equations": ["c == a + b", "d == 2 * c"]}"#);
        let (_, s) = plan_and_solve(&n, &SolverConfig::default()).unwrap();
        assert_eq!(value(&n, &s, "c"), 3.0);
        assert_eq!(value(&n, &s, "d"), 6.0);
    }

    #[test]
    fn fixed_point_singleton() {
        let n = net(r#"{"variables": [{"name": "x"}], "equations": ["x == cos(x)"]}"#);
        let (_, s) = plan_and_solve(&n, &SolverConfig::default()).unwrap();
        assert!((value(&n, &s, "x") - dottie()).abs() < 1e-6);
        assert!((dottie() - 0.739_085_133_2).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_block() {
        let n = net(r#"{"variables": [{"name": "x"}, {"name": "y"}], "equations": ["x == cos(y)", "y == cos(x)"]}"#);
        let (_, s) = plan_and_solve(&n, &SolverConfig::default()).unwrap();
        assert!((value(&n, &s, "x") - dottie()).abs() < 1e-6);
        assert!((value(&n, &s, "y") - dottie()).abs() < 1e-6);
        assert!(s.max_residual() <= 1e-9);
    }

    #[test]
    fn isolation_agrees_with_newton() {
        let n = net(r#"{"variables": [{"name": "a", "value": 2.5}, {"name": "x"}],
                       "equations": ["a == exp(x / 3) + sqrt(x)^3"]}"#);
        let p = plan(&n).unwrap();
        assert!(matches!(p.components[0], Component::Singleton { method: Method::Newton1d, .. }));
        let n = net(r#"{"variables": [{"name": "a", "value": 2.5}, {"name": "x"}],
                       "equations": ["a == exp(sqrt(x)^3 / 3) - 1"]}"#);
        let p = plan(&n).unwrap();
        assert!(matches!(p.components[0], Component::Singleton { method: Method::Isolate, .. }));
        let iso = solve(&p, &n, &SolverConfig::default()).unwrap().values[1];
        let forced = SolutionPlan {
            components: vec![Component::Singleton { equation: 0, output: 1, method: Method::Newton1d }],
            residual_checks: vec![],
        };
        let nwt = solve(&forced, &n, &SolverConfig::default()).unwrap().values[1];
        assert!((iso - nwt).abs() <= 1e-9 * iso.abs(), "{iso} vs {nwt}");
    }

    #[test]
    fn inconsistent_check_is_reported() {
        let n = net(r#"{"variables": [{"name": "x"}], "equations": ["x == 2", "x == 3"]}"#);
        match plan_and_solve(&n, &SolverConfig::default()) {
            Err(SolveError::Residual { equation, .. }) => assert_eq!(equation, "eq2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn no_real_root_fails_cleanly() {
        let n = net(r#"{"variables": [{"name": "x"}], "equations": ["x^2 + 1 == 0"]}"#);
        assert!(matches!(
            plan_and_solve(&n, &SolverConfig::default()),
            Err(SolveError::NoConvergence { .. } | SolveError::Singular { .. })
        ));
    }

    #[test]
    fn sensitivities() {
        let cfg = SolverConfig::default();
        let n = net(r#"{"variables": [{"name": "a", "value": 4}, {"name": "b", "value": 1}, {"name": "c"}], "equations": ["c == a + b"]}"#);
        let d = sensitivity(&n, n.named("c").unwrap(), n.named("a").unwrap(), &cfg).unwrap();
        assert!((d - 1.0).abs() < 1e-6);

        let n = net(r#"{"variables": [{"name": "a", "value": 2}, {"name": "b", "value": 3}, {"name": "c"}], "equations": ["c == a * b"]}"#);
        let d = sensitivity(&n, n.named("c").unwrap(), n.named("a").unwrap(), &cfg).unwrap();
        assert!((d - 3.0).abs() < 1e-4);

        let n = net(r#"{"variables": [{"name": "a", "value": 3}, {"name": "c"}, {"name": "d"}], "equations": ["c == a^2", "d == c + 1"]}"#);
        let (o, i) = (n.named("d").unwrap(), n.named("a").unwrap());
        let h = 1e-6 * 3.0;
        let d1 = sensitivity_with_step(&n, o, i, h, &cfg).unwrap();
        let d2 = sensitivity_with_step(&n, o, i, h / 2.0, &cfg).unwrap();
        assert!((d1 - 6.0).abs() < 1e-3);
        assert!((d1 - d2).abs() <= 1e-3 * d1.abs());

        assert!(matches!(sensitivity(&n, o, o, &cfg), Err(SolveError::NotAnInput(_))));
    }

    #[test]
    fn document_errors() {
        assert!(ConstraintNetwork::from_document(r#"{"variables": [{"name": "x", "dimension": {"L": 1}}, {"name": "t", "dimension": {"T": 1}}], "equations": ["x == t"]}"#).is_err());
        assert!(ConstraintNetwork::from_document(r#"{"variables": [{"name": "x"}], "equations": ["x == y"]}"#).is_err());
        assert!(ConstraintNetwork::from_document(r#"{"variables": [{"name": "x"}], "equations": ["x > 1"]}"#).is_err());
        assert!(ConstraintNetwork::from_document(r#"{"variables": [{"name": "x"}, {"name": "x"}], "equations": []}"#).is_err());
        let n = ConstraintNetwork::from_document(r#"{"variables": [{"name": "x", "dimension": {"L": 1}, "value": "2 [km]"}], "equations": []}"#).unwrap();
        assert_eq!(n.variables[0].value, Some(2000.0));
    }
}
