//! Simulation and verification toolkit for a degenerate chemotaxis model of
//! tumour invasion: porous-medium diffusion of cancer cells, chemotactic
//! drift up a signal gradient, logistic growth, and an extracellular matrix
//! degraded by a diffusing enzyme.

pub mod diagnostics;
pub mod lattice;
pub mod error;
pub mod io;
pub mod model;
pub mod oracles;
pub mod pipeline;
pub mod presets;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Field, Grid, ModelParams, Point, Sensitivity, StateQuad};
pub use solver::{run, step, RunOutcome, RunSink, SolverConfig, VzStepper};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/scheme.md")]
    mod scheme {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
