//! Perturbation bounds for Poincaré, Cheeger and log-Sobolev constants.

pub mod measures;
pub mod mollify;
pub mod bounds;
pub mod langevin;
pub mod oracle;
pub mod regress;
pub mod scenario;
pub mod sweep;
