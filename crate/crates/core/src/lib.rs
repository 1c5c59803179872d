//! Structure optimization for disordered atomic systems on rough energy
//! landscapes.
//!
//! The crate combines classical position-space minimizers (gradient descent,
//! Adam, FIRE) with a graph policy-gradient optimizer: atomic configurations
//! are turned into cutoff neighbor graphs, a message-passing network predicts
//! per-atom displacements, and REINFORCE with a FIRE-derived baseline trains
//! the network to walk configurations downhill.
//!
//! Supported energy models: binary Kob-Andersen Lennard-Jones, Stillinger-Weber
//! silicon, and a coarse-grained C-S-H gel (generalized LJ).

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod optim;
pub mod policy;
pub mod potentials;
pub mod rl;
pub mod rng;
pub mod sampler;
pub mod system;
pub mod xyz;

pub use error::{Error, Result};
pub use graph::{GraphState, NeighborGraph};
pub use policy::PolicyParameters;
pub use potentials::{PotentialModel, System};
pub use rng::RngStream;
pub use system::{Configuration, SimulationBox};
