//! Exact computations for finite state spaces, and the rate-bound evaluators.

pub mod ancestors;
pub mod bounds;
pub mod chain;
pub mod moments;

pub use ancestors::{ancestor_event_probabilities, AncestorEvent, AncestorEventTable};
pub use bounds::{evaluate_bound, speed_sequence, BoundFamily, BoundScope, BoundSpec, BoundValue, Regime, SpeedSetting};
pub use chain::{ergodicity_constants, stationary_distribution, ErgodicityEstimate, ErgodicityMode};
pub use moments::{brute_force_moment, centered, random_kernel, second_moment_generation, tree_mean_exact, MomentScope};
