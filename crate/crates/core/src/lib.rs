//! Transformer encoder introspection.
//!
//! Captures attention and per-layer representations from a BERT-style
//! encoder, searches token and head embeddings against an annotated reference
//! corpus by exact cosine similarity, and summarizes the metadata of the
//! matches.

pub mod api;
pub mod corpus;
pub mod error;
pub mod index;
pub mod model;
pub mod service;
pub mod summarize;
pub mod toy;

pub use error::{Error, Result};
pub use model::Model;
