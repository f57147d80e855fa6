//! Bifurcating Markov chains on regular binary trees.

pub mod empirical;
pub mod error;
pub mod exact;
pub mod functional;
pub mod harness;
pub mod inference;
pub mod kernels;
pub mod seed;
pub mod simulate;
pub mod tree;

pub use error::{BmcError, Result};
pub use functional::{Functional, FunctionalKind};
