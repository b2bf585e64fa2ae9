//! Zero-sum Dynkin games on finite filtration trees.
//!
//! The [`solver`] computes the value candidate by backward induction and the
//! first-hitting strategies; the [`oracle`] checks them against exhaustive
//! enumeration; [`lattice`] runs the continuous-payoff experiments on
//! recombining binomial lattices.

pub mod fixtures;
pub mod generate;
pub mod io;
pub mod lattice;
pub mod oracle;
pub mod scalar;
pub mod solver;
pub mod tree;

pub use oracle::{
    best_response_max, best_response_min, brute_force_minimax, certify_epsilon, check_nash, find_nash,
    improve_strategy, improve_strategy_min, modified_payoff, existence_check, EquilibriumCertificate, MinimaxReport,
    OracleConfig, OracleError, Verdict,
};
pub use scalar::{Arithmetic, Rational, Scalar};
pub use solver::{check_assumption, compute_value, envelopes, optimal_stopping_times, DynkinGame, SolverError, ValueProcess};
pub use tree::{AdaptedProcess, FiltrationTree, NodeId, StoppingTime, TreeError, TreeSpec};
