//! Termination analysis on the Markov chains induced by a controlled game.

pub mod bisim;
pub mod build;
pub mod chain;
pub mod critical;
pub mod premises;
pub mod reach;

pub use bisim::{
    bisimulation_partition, coarsest_partition, verify_property4, BisimResult, Partition,
    Property4Report,
};
pub use build::{build_chain, build_pair, BuildOptions, ChainController, Quotient};
pub use chain::{NodeAnnotation, ProcessChain, ProcessTag};
pub use critical::{detect_critical, CandidateReport, CriticalReport};
pub use premises::{
    check_theorem_premises, extremal_bounds, ExtremalBounds, NodePremises, PremiseReport,
};
pub use reach::{
    bounded_reach, bounded_reach_series, check_bounded_reach, check_unbounded_reach, success_rate,
    unbounded_reach, Comparator, ReachResult,
};
