//! Omission-aware misinformation detection.
//!
//! A target article is segmented into sentences, matched against TF-IDF
//! retrieved context articles from the days before it, and every
//! (sentence, context) pair is annotated with a short text naming a fact the
//! context has and the sentence lacks. Sentences, contexts and those relation
//! texts form a heterogeneous graph that a relation-aware attention network
//! classifies as real or misinformation.

pub mod autodiff;
mod binio;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod providers;
pub mod retrieval;
pub mod text;
pub mod trainer;
