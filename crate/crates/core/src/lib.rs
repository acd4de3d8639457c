//! Self-refining visual programs.
//!
//! A query is decomposed into logical steps, a program in a small DSL is
//! generated from those steps and from masked examples retrieved out of an
//! evolving codebase, the program runs against a scene graph with every
//! intermediate value traced, and feedback derived from the trace drives a
//! bounded refine loop.
//!
//! Module map:
//!
//! - [`dsl`]: parser and canonical printer for programs
//! - [`analysis`]: static diagnostics, lint score, abstract-code masking
//! - [`runtime`]: scenes, values, the tracing interpreter, perception backends
//! - [`codebase`]: feature-hash embeddings, retrieval, bootstrap, selection
//! - [`prompting`]: templates, model clients, step and program generation
//! - [`feedback`]: visual, textual, compile and human feedback channels
//! - [`orchestrator`]: the refine loop and batch evaluation
//! - [`cli`]: the command-line surface used by the `vprefine` binary
//! - [`suite`]: the deterministic synthetic task suite

pub mod analysis;
pub mod cli;
pub mod codebase;
pub mod dsl;
pub mod feedback;
pub mod orchestrator;
pub mod prompting;
pub mod runtime;
pub mod suite;
