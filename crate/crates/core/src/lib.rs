//! Multi-level analysis of therapeutic writing.
//!
//! Three feature layers are extracted from each text: dictionary-based
//! lexical frequencies ([`lexicon`]), embedding-based semantic coherence
//! ([`coherence`]) and schema-validated narrative evaluations from a chat
//! model ([`evaluator`]). [`featureset`] assembles them with demographics into
//! a layer-tagged matrix, [`models`] runs stratified cross-validation of tree
//! ensembles over feature combinations, and [`explain`] computes TreeSHAP
//! attributions.

pub mod coherence;
pub mod corpus;
pub mod evaluator;
pub mod explain;
pub mod featureset;
pub mod lexicon;
pub mod models;
pub mod pipeline;
pub mod providers;
