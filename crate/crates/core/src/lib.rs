//! Solution prediction for mixed integer programs.
//!
//! The crate covers the whole pipeline: seeded instance generators
//! ([`gen`]), an LP/branch-and-bound solver ([`lp`], [`bnb`]), stable-variable
//! labeling by iterated proximity search ([`label`]), the tripartite graph
//! and its features ([`trigraph`]), the graph network predictor ([`gcn`]),
//! and the two ways of using predictions while solving ([`predict`]).
//! [`metrics`] holds the evaluation measures.
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled as doctests of this crate.

pub mod error;
pub mod gcn;
pub mod bnb;
pub mod gen;
pub mod label;
pub mod lp;
pub mod metrics;
pub mod mip;
pub mod predict;
pub mod trigraph;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Overview, "overview.md");
    chapter!(Instances, "instances.md");
    chapter!(Solving, "solving.md");
    chapter!(Labels, "labels.md");
    chapter!(Graph, "graph.md");
    chapter!(Network, "network.md");
    chapter!(Applying, "applying.md");
    chapter!(Metrics, "metrics.md");
    chapter!(CommandLine, "cli.md");

    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
