//! Restricted Boltzmann machine ground states of the transverse-field Ising
//! chain, and the classical thermodynamics of the learned RBM.

pub mod analysis;
pub mod error;
pub mod exact;
pub mod io;
pub mod rbm;
pub mod run;
pub mod seeds;
pub mod spin;
pub mod sr;
pub mod stats;
pub mod thermo;
pub mod vmc;

pub use error::{Error, Result};
pub use rbm::{RbmParams, ThetaCache};
pub use spin::{SpinConfig, TfiParams};
