//! Extremum seeking stabilization of systems that are non-affine in control.
//!
//! The crate covers the whole pipeline: an expression language for user
//! supplied fields ([`expr`]), odd-polynomial algebra and fitting
//! ([`oddpoly`]), system definitions and the built-in example systems
//! ([`model`]), controller synthesis and closed-form averaged systems
//! ([`esc`]), fixed-step integration and trajectory comparison
//! ([`integrate`]), numerical checks of the averaging hypotheses
//! ([`avgverify`]) and stability-region sweeps ([`sweep`]).

pub mod expr;
pub mod oddpoly;
pub mod model;
pub mod esc;
pub mod defaults;
pub mod integrate;
pub mod avgverify;
pub mod sweep;
