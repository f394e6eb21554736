//! Face-act modeling for persuasion dialogues.
//!
//! The crate covers the whole offline pipeline: ingesting the annotated
//! corpus ([`corpus`]), the face-act label space and annotation flowchart
//! ([`taxonomy`]), corpus statistics ([`stats`]), the hierarchical
//! utterance/conversation model with its donation head ([`model`]),
//! training and cross-validated evaluation ([`train`]) and the regression of
//! donation probability on predicted face acts ([`regression`]).

pub mod corpus;
pub mod model;
pub mod nn;
pub mod regression;
pub mod stats;
pub mod taxonomy;
pub mod train;
