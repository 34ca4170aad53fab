//! Debugging of scenario-based requirements: annotate sequence diagrams
//! with state vectors, explain conflicts, synthesize statecharts and check
//! edited statecharts against the scenarios.

pub mod annotator;
pub mod checker;
pub mod cli;
pub mod dsl;
pub mod model;
pub mod report;
pub mod synthesizer;
