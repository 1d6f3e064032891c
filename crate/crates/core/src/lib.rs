//! Pool-based active learning with cartography-guided acquisition.
//!
//! A small MLP text classifier is retrained from scratch on the labeled set
//! each iteration. Its per-epoch training dynamics give every labeled
//! instance a confidence, variability and correctness ("data map"), and a
//! binary discriminator trained on those labels picks the unlabeled
//! instances it is least sure about. Classic uncertainty strategies, a
//! labeled-vs-unlabeled discriminator and a hybrid are included for
//! comparison, along with the Almost Stochastic Order test used to compare
//! accuracy trajectories.

pub mod acquisition;
pub mod cartography;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod models;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
