//! Laboratory for deterministic walks in excited random environments.
//!
//! The model: each integer site carries a stack of `M` jump instructions
//! ("cookies") in `[-L, L]`, drawn i.i.d. from a law with full support. A
//! walker starts at the origin; the jump taken at a site is the stack entry
//! indexed by how many times that site has been occupied before, with the top
//! index frozen once the stack is exhausted. The crate provides
//!
//! * reproducible lazily-sampled environments with explicit patches
//!   ([`mod@env`]),
//! * the walk engine with sparse visit counts, hitting times, and certified
//!   loop detection ([`walk`]),
//! * hand-built cookie configurations with exact behavior ([`constructions`]),
//! * environment surgery: the subenvironment partial order, excision of
//!   trajectory excursions, and iterative backtrack elimination ([`surgery`]),
//! * parallel Monte Carlo estimators with exact-enumeration cross-checks for
//!   deviation probabilities and the empirical rate function ([`estimate`]).

pub mod constructions;
pub mod env;
pub mod estimate;
pub mod rng;
pub mod stats;
pub mod surgery;
pub mod walk;

mod error;

pub use error::{Error, Result};
