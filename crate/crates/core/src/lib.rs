//! Grammar-guided evolutionary optimisation of sectioned prompt templates.
//!
//! A prompt template is split into six sections. Individuals are derivations
//! under an edit grammar whose phenotype is one edit program per section;
//! executing the programs on the base template yields a candidate prompt,
//! scored by a target LLM on task data. The evolved champion can then be
//! refined by a surrogate-screened local search over its index parameters.

pub mod app;
pub mod chunking;
pub mod data;
pub mod edit;
pub mod g3p;
pub mod grammar;
pub mod llm;
pub mod local_search;
pub mod placeholder;
pub mod prompt;
pub mod section;
pub mod task;
pub mod seeds;
pub mod surrogate;
pub mod synthetic;

pub use section::Section;
