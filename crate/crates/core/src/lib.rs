//! Grabbing particle systems, Galton-Watson forests, and the machinery to
//! check one against the other.
//!
//! The library has three layers:
//!
//! - canonical plane-tree/forest representations and reproduction laws
//!   ([`forest`], [`law`], [`prob`]),
//! - samplers: the grabbing dynamics itself ([`sim`]) and Galton-Watson
//!   tree/forest samplers with their walk identities ([`gw`]),
//! - verification: exhaustive exact-rational oracles for small instances
//!   ([`oracle`]) and Monte Carlo experiments with statistical tests
//!   ([`stats`]).
//!
//! Everything randomized is driven by an explicit seeded generator
//! (ChaCha8, one stream per replica), so runs are reproducible bit for bit.

pub mod forest;
pub mod gw;
pub mod law;
pub mod oracle;
pub mod prob;
pub mod sim;
pub mod stats;

pub use forest::{LabeledForest, LukasiewiczWalk, PlanarForest, PlanarTree};
pub use law::{Criticality, ReproductionLaw};
pub use prob::{Rational, Weight};
pub use sim::ArmVector;
