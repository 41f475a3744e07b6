//! Locally balanced Metropolis-Hastings samplers on discrete spaces, with
//! exact diagnostics and congestion bounds for small instances.

pub mod diagnostics;
pub mod certify;
pub mod error;
pub mod experiment;
pub mod flowbound;
pub mod golden;
pub mod graph;
pub mod logspace;
pub mod rng;
pub mod samplers;
pub mod sbm;
pub mod space;
pub mod varsel;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
