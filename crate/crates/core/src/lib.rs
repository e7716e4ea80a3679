//! Attribution-guided contrastive activation steering on desk-scale
//! decoder-only transformers, with the dialogue simulation, text metrics and
//! statistics needed to measure steering effects end to end.

pub mod attribution;
pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numkernel;
pub mod parallel;
pub mod stats;
pub mod steering;

pub use error::{Error, Result};
