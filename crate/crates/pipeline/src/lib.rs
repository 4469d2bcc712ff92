//! Pipeline around the scoring core: CT log access, phishing-feed intel,
//! dataset assembly, live/retrospective classification runs, configuration
//! and the command-line front end. A deterministic fixture CT server keeps
//! the whole test suite offline.

pub mod cli;
pub mod config;
pub mod ctlog;
pub mod dataset;
pub mod fixture;
pub mod intel;
pub mod run;
