//! Random walks on Z², their potential kernel, renormalized self-intersection
//! counts, and a strong coupling with planar Brownian motion.

pub mod chains;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod increment_law;
pub mod kernel;
pub mod lattice;
pub mod martingale;
pub mod mollifier;
pub mod quadrature;
pub mod rng;
pub mod spatial;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use increment_law::IncrementLaw;
pub use lattice::Site;
