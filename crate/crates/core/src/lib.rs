//! LinDistFlow optimal power flow on radial distribution networks, with
//! dual recovery and marginal prices of demand and branch flow limits.

pub mod assemble;
pub mod direct;
pub mod experiment;
pub mod fmt;
pub mod instance;
pub mod ldf;
pub mod marginals;
pub mod netcase;
pub mod opf_model;
pub mod validation;
pub use instance::{Error, Instance};
