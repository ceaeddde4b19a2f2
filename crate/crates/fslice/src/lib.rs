pub mod action;
pub mod dynamics;
pub mod error;
pub mod manifold;
pub mod potential;
pub mod propagator;
