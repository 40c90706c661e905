//! Frequency assignment for multibeam non-geostationary constellations serving
//! fixed and mobile users.
//!
//! The crate covers the proactive stage (baseline plan with conservative
//! constraints and resource reservations) and the reactive stage (replaying the
//! horizon and reallocating beams as new information arrives).

pub mod constraints;
pub mod domain;
pub mod experiment;
pub mod geometry;
pub mod linkbudget;
pub mod reactive;
pub mod scenario;
pub mod solver;
