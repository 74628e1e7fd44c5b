//! Batched experimental design over a finite candidate pool: candidate data,
//! nearest-neighbour memory, surrogate models, LLM prompting and the agents
//! that combine them, plus the multi-round experiment harness.

pub mod agents;
pub mod data;
pub mod error;
pub mod harness;
pub mod llm;
pub mod memory;
pub mod surrogate;
pub mod trace;

pub use error::{Error, Result};
