//! Political stance classification of forum posts, with and without
//! LLM-generated user-profile context, and the harness that evaluates it.

pub mod backend;
pub mod classify;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod fsutil;
pub mod profiling;
pub mod response;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
