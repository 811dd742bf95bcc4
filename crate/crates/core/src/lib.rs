//! Multilingual temporal tagging in three steps: extraction of temporal
//! expressions, normalization to context-independent values (CIRs) with a
//! slot-based masked language model, and anchoring of CIRs to TimeML values.

pub mod anchor;
pub mod calendar;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod mlm;
pub mod nn;
pub mod pipeline;
pub mod slots;
pub mod vocab;
pub mod weak;

pub use error::{Error, Result};
