//! Sublinear (G-)expectations on finite models.
//!
//! The crate evaluates worst-case expectations over a band of volatilities
//! `[sigma_low, sigma_high]` in two discretizations that can be played against
//! each other:
//!
//! - scenario trees ([`tree`]): an adversary picks a volatility from a finite
//!   grid at every node; backward induction of the worst-case kernel yields
//!   conditional expectations, and exhaustive enumeration of the adversary's
//!   strategies ([`measures`]) gives an exact oracle for them;
//! - a one-dimensional nonlinear heat equation ([`pde`]): the same
//!   expectation as the viscosity solution of `du/dt = g(d2u/dx2)` evaluated
//!   at the origin.
//!
//! On top of the two engines sit monotone-limit extensions of the expectation
//! beyond its continuous core ([`extension`]) and lattice stopping-time
//! machinery with worst-case optional-stopping checks ([`stopping`]).

pub mod error;
pub mod extension;
pub mod field;
pub mod interval;
pub mod measures;
pub mod payoff;
pub mod pde;
pub mod sampling;
pub mod stopping;
pub mod tree;
pub mod volatility;

pub use error::{Error, Result};
pub use field::AdaptedField;
pub use interval::IntervalUnion;
pub use payoff::{Coord, CylinderFn, PathPayoff, PathState, Payoff, MAX_CYLINDER_POINTS};
pub use tree::{
    backward_induct, backward_induct_from, condition_at, expect, one_step_expect, ScenarioTree,
    StateSpace, DEFAULT_NODE_CAP,
};
pub use volatility::{GCoefficients, VolatilityGrid};
