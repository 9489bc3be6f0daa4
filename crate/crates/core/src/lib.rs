//! Distributed Nash equilibrium seeking for players modelled as chains of
//! integrators with bounded inputs, communicating over a directed graph.
//!
//! The numerical core is generic over the scalar type; the aliases below
//! fix it to `f64`, `f32`, or exact rationals where only field operations
//! are needed.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod graph;
pub mod scalar;
pub mod seeker;
pub mod sim;

pub use error::{Assumption, Error, Result};
pub use scalar::{Field, Rational, Scalar};

pub type Game = game::QuadraticGame<f64>;
pub type Graph = graph::Digraph<f64>;
pub type Player = dynamics::PlayerSpec<f64>;
pub type Transformation = dynamics::Transformation<f64>;
pub type State = seeker::SeekerState<f64>;
pub type Scenario = sim::Scenario<f64, Game>;
pub type Trajectory = sim::Trajectory<f64>;

pub type GameF32 = game::QuadraticGame<f32>;
pub type GraphF32 = graph::Digraph<f32>;
pub type PlayerF32 = dynamics::PlayerSpec<f32>;
pub type StateF32 = seeker::SeekerState<f32>;

pub type ExactPlayer = dynamics::PlayerSpec<Rational>;
pub type ExactTransformation = dynamics::Transformation<Rational>;
