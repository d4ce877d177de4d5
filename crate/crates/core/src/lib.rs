//! Parity measurement of a qubit register through dispersively coupled
//! cavity modes: cavity response, reduced stochastic master equation,
//! Markovianity analysis and readout statistics.

pub mod analysis;
pub mod cavity;
pub mod density;
pub mod error;
pub mod fock;
pub mod grid;
pub mod markov;
pub mod model;
pub mod ode;
pub mod pulse;
pub mod sme;
pub mod srk;

pub use error::{Error, Result};
pub use model::{Bitstring, SystemConfig};
pub use pulse::PulseSpec;
