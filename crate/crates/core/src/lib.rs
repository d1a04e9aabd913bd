//! Type-based ad hoc coordination in stochastic Bayesian games.
//!
//! The crate covers the game model and its run semantics ([`game`], [`sim`]),
//! posterior beliefs over user-defined types ([`beliefs`]), the
//! expected-payoff planner ([`planner`]), the termination verifier
//! ([`verifier`]) and experiment plumbing ([`scenario`], [`experiments`]).
//!
//! All probability-carrying code is generic over [`Prob`]; the aliases below
//! fix the common instantiations.

pub mod beliefs;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod game;
pub mod planner;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod strategy;
pub mod verifier;

pub use error::{GameError, ScenarioError, VerifyError};
pub use scalar::Prob;

/// Exact rational probabilities.
pub type Rational = num_rational::BigRational;

pub type Game = game::GameSpec<f64>;
pub type ExactGame = game::GameSpec<Rational>;
pub type Beliefs = beliefs::BeliefState<f64>;
pub type Hba = planner::HbaController<f64>;
pub type Chain = verifier::ProcessChain<f64>;
pub type ExactChain = verifier::ProcessChain<Rational>;
