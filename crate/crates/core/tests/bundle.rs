mod common;

use std::fs;
use std::path::Path;

use designc::bundle::load_bundle;
use designc::graph::ExportFormat;
use designc::production::{Event, ProductionError};
use tempfile::TempDir;

fn copy_exhaust() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&common::exhaust_dir(), tmp.path());
    tmp
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

fn number(graph: &designc::graph::DesignGraph, class: &str, attr: &str) -> f64 {
    graph.nodes_of(class).next().unwrap().attr(attr).unwrap().as_number().unwrap()
}

#[test]
fn exhaust_meets_the_pressure_requirement() {
    let bundle = load_bundle(&common::exhaust_dir(), None).unwrap();
    let (graph, result) = bundle.run();
    let run = result.unwrap();
    assert!(run.validation.is_valid());
    assert_eq!(graph.node_count(), 3);
    assert_eq!(graph.edge_count(), 2);

    // hand re-solve of the final residence time
    let tau = number(&graph, "SCRSystem", "residenceTime");
    let rho = 101325.0 / (287.0 * 573.15);
    let volume = 0.12 * tau / rho;
    assert!((number(&graph, "SCRSystem", "catalystVolume") - volume).abs() < 1e-12);
    assert!(number(&graph, "SCRSystem", "pressureLoss") <= 300.0);

    let loops = run.trace.entries.iter().filter(|e| matches!(e.event, Event::Loop { .. })).count();
    assert!(loops >= 2, "loop condition evaluated {loops} times");
    assert_eq!(run.trace.entries.iter().map(|e| e.seq).collect::<Vec<_>>(), (0..run.trace.entries.len() as u64).collect::<Vec<_>>());
}

#[test]
fn overrides_change_the_solution() {
    let base = load_bundle(&common::exhaust_dir(), None).unwrap().run().0;
    let heavy = load_bundle(&common::exhaust_dir(), Some(r#"{"massFlow": "0.24 [kg/s]"}"#)).unwrap().run().0;
    let ratio = number(&heavy, "SCRSystem", "catalystVolume") / number(&base, "SCRSystem", "catalystVolume");
    // twice the flow at the same residence time doubles the volume, unless
    // enlargement steps differ
    let tau = number(&heavy, "SCRSystem", "residenceTime") / number(&base, "SCRSystem", "residenceTime");
    assert!((ratio - 2.0 * tau).abs() < 1e-9, "ratio {ratio}, tau ratio {tau}");
    assert_ne!(base.export(ExportFormat::Json), heavy.export(ExportFormat::Json));
}

#[test]
fn bad_overrides_are_load_errors() {
    for doc in [r#"{"massFlow": "3 [m]"}"#, r#"{"unknown": 1}"#, "not json"] {
        let e = load_bundle(&common::exhaust_dir(), Some(doc)).unwrap_err();
        assert!(e.to_string().contains("parameter overrides"), "{e}");
    }
}

#[test]
fn dangling_rule_reference_names_the_rule() {
    let tmp = copy_exhaust();
    let prod = tmp.path().join("production.json");
    let text = fs::read_to_string(&prod).unwrap().replace(r#""name": "Enlarge""#, r#""name": "Enlarge2""#);
    fs::write(&prod, text).unwrap();
    let e = load_bundle(tmp.path(), None).unwrap_err();
    assert!(e.problems.iter().any(|p| p.contains("Enlarge2")), "{e}");
}

#[test]
fn load_reports_every_problem() {
    let tmp = copy_exhaust();
    fs::write(tmp.path().join("rules/broken.json"), r#"{"name": "Broken", "lhs": {"nodes": [{"pid": "a", "class": "Nope"}]}}"#).unwrap();
    fs::write(tmp.path().join("rules/dup.json"), fs::read_to_string(tmp.path().join("rules/enlarge.json")).unwrap()).unwrap();
    let e = load_bundle(tmp.path(), None).unwrap_err();
    assert!(e.problems.iter().any(|p| p.contains("broken.json") && p.contains("Nope")), "{e}");
    assert!(e.problems.iter().any(|p| p.contains("already defined")), "{e}");
}

#[test]
fn loop_bound_aborts_with_trace() {
    let tmp = copy_exhaust();
    // an unreachable requirement keeps the loop running
    let e = load_bundle(tmp.path(), Some(r#"{"maxPressureLoss": "1e-3 [Pa]"}"#)).unwrap();
    let (_, result) = e.run();
    let aborted = result.unwrap_err();
    assert!(matches!(aborted.error, ProductionError::LoopBound { .. }), "{}", aborted.error);
    assert!(!aborted.trace.entries.is_empty());
}

#[test]
fn step_budget_aborts() {
    let mut bundle = load_bundle(&common::exhaust_dir(), None).unwrap();
    bundle.env.max_steps = 3;
    let aborted = bundle.run().1.unwrap_err();
    assert!(matches!(aborted.error, ProductionError::StepBudget { .. }), "{}", aborted.error);
}

#[test]
fn trace_is_reproducible() {
    let bundle = load_bundle(&common::exhaust_dir(), None).unwrap();
    let a = bundle.run().1.unwrap().trace.to_jsonl();
    let b = bundle.run().1.unwrap().trace.to_jsonl();
    assert_eq!(a, b);
    assert!(!a.contains("elapsed"));
}
