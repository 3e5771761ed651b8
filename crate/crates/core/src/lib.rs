//! Limited rollout beam search over learned improvement policies for the
//! travelling salesman problem and pickup-and-delivery variants, with
//! test-time policy adaptation.

pub mod adapt;
pub mod bench;
pub mod error;
pub mod instance;
pub mod mdp;
pub mod policy;
pub mod rng;
pub mod search;
pub mod train;

pub use error::{Error, Result};
