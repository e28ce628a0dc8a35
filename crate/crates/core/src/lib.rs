//! Binary collective decision-making swarms under majority/minority group
//! rules and noise.
//!
//! The crate simulates the swarm exactly with the Gillespie direct method and
//! predicts its macroscopic drift analytically from hypergeometric group
//! composition probabilities.

pub mod cli;
pub mod drift;
pub mod hypergeom;
pub mod model;
pub mod output;
pub mod schema;
pub mod ssa;
pub mod validate;

pub use hypergeom::{pmf, pmf_bruteforce, pmf_table, PmfTable};
pub use model::{
    enumerate_rulesets, signed_weight, state_of_z, z_of, FlipDirection, NoiseSpec, RulePolarity,
    RuleSet, SwarmState,
};
