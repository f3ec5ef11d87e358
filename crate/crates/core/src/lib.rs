//! Dirac integrators for mechanical systems with holonomic constraints.
//!
//! - [`geometry`]: fiberwise Pontryagin-bundle algebra, Tulczyjew maps and
//!   the almost Dirac structure induced by a constraint distribution.
//! - [`models`]: mechanical systems (pendulum, Ziegler column) with analytic
//!   derivatives.
//! - [`integrators`]: Dirac-1/Dirac-2 steppers and classical comparators.
//! - [`harness`]: simulation, constraint-drift diagnostics and benchmarks.
//! - [`config`], [`svg`], [`cli`]: command-line front end.

pub mod cli;
pub mod config;
pub mod geometry;
pub mod harness;
pub mod integrators;
pub mod models;
pub mod svg;
