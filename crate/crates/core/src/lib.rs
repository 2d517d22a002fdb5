//! Induction of dialect variation dictionaries.
//!
//! German lemmas are paired with their nearest dialect terms by edit
//! distance ([`candidates`]), each pair is described by twelve orthographic
//! and phonetic similarity features ([`stringsim`], [`phonetics`]) and a
//! random forest ([`classifier`]) decides which pairs are spelling or word
//! variants of each other ([`lexicon`]). The resulting dictionaries are
//! evaluated as a word-pair classifier ([`bli_eval`]) and as a query
//! expansion resource for BM25 retrieval ([`retrieval`]).

pub mod bli_eval;
pub mod candidates;
pub mod classifier;
pub mod error;
pub mod lexicon;
pub mod phonetics;
pub mod retrieval;
pub mod stringsim;
pub mod text;

pub use error::{Error, Result};
