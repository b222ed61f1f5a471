//! Multimodal knowledge graphs from image and text corpora.
//!
//! A chain of vision-language experts describes each image, a cross-modal
//! verifier drops description windows that do not match the image, an LLM
//! extracts entities and relations from what is left, and the resulting
//! graph answers queries through retrieved, bracket-rendered triplets.
//!
//! Every model call goes through [`gateway::ModelBackend`]. Stub backends
//! make the whole pipeline deterministic and offline.

pub mod augment;
pub mod chain;
pub mod corpus;
pub mod error;
pub mod gateway;
mod jsonl;
pub mod kg;
pub mod pipeline;
pub mod retriever;
pub mod verifier;

pub use error::{Error, Result};
