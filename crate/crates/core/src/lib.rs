//! Scoring core for certificate-transparency phishing detection: record
//! parsing, domain decomposition, the feature catalog, forest and rule
//! classifiers, and the evaluation metrics. Everything here is pure and
//! offline; fetching, feeds and orchestration live in the pipeline crate.

pub mod cert;
pub mod domain;
pub mod eval;
pub mod features;
pub mod forest;
pub mod model;
pub mod psl;
pub mod rng;
pub mod rules;
pub mod text;
