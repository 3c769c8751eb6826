//! A design compiler for graph-based design languages.
//!
//! A design language is a [vocabulary](vocabulary) of classes, a set of
//! [rules](rules) that rewrite the [design graph](graph), and a
//! [production system](production) that sequences rule calls, decisions,
//! loops, solver runs and [process chains](chain). The equation network the
//! graph induces is solved declaratively by the [solution path](solution_path)
//! generator; [dimension] provides the dimensional algebra and Pi groups.

pub mod bundle;
pub mod chain;
pub mod dimension;
pub mod expr;
pub mod graph;
pub mod params;
pub mod production;
pub mod rules;
pub mod solution_path;
pub mod vocabulary;

/// Book chapters, compiled as doc-tests so their listings stay current.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            mod $name {}
        };
    }
    chapter!(introduction, "introduction.md");
    chapter!(vocabulary, "vocabulary.md");
    chapter!(design_graph, "design_graph.md");
    chapter!(rules, "rules.md");
    chapter!(solving, "solving.md");
    chapter!(dimensions, "dimensions.md");
    chapter!(chains, "chains.md");
    chapter!(production, "production.md");
    chapter!(cli, "cli.md");
}
