//! Learning domain concepts from metamodel corpora.
//!
//! This crate holds the allocation-only core of the toolkit: the metamodel
//! value types, the metamodel tree and its surface rendering, a byte-level
//! BPE tokenizer, a transformer encoder trained with masked language
//! modeling, the three test-sample generators and the ranking metrics.
//! Everything that touches files, sockets or the clock lives in the
//! `conceptlm` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod baseline;
pub mod bpe;
mod error;
pub mod metamodel;
pub mod metrics;
pub mod nn;
pub mod sampler;
pub mod tree;

pub use error::{Error, Result};
pub use metamodel::{
    AssociationDef, AttributeDef, ClassDef, CorpusStats, ElementKind, ElementRef, Identifier,
    Metamodel,
};
