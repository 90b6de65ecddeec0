//! HTTP service and command line for the counterfactual explainer.

pub mod api;
pub mod cli;
pub mod error;
pub mod explain;
pub mod registry;
