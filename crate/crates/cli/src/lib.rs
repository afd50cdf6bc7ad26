//! Command-line workflows around the `raremap` library: metamodel fitting,
//! the prototype maps algorithm, quality metrics and exports.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;
pub mod render;
