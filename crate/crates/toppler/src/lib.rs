//! Controlled diffusion on infinite graphs.
//!
//! Mass starts as a unit point mass at the origin of an infinite graph and is
//! transported by toppling moves: a move removes mass `m` at a vertex and
//! deposits `m/deg` on each neighbor. The crate provides the graph families,
//! the sparse mass engine (with an exact-rational twin), the toppling
//! strategies that realize known upper bounds on the number of moves needed to
//! push mass `p` outside a ball, a brute-force oracle for tiny instances, and
//! the potential-theoretic diagnostics (moments, potential kernel, energy,
//! random-walk statistics) used to cross-check the dynamics.

pub mod diagnostics;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod mass;
pub mod oracle;
pub mod render;
pub mod strategies;
pub(crate) mod util;

pub use error::{Error, Result};
