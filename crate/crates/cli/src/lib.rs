//! Command-line front end: config parsing, command dispatch, and CSV/JSON
//! emission for the reset-system analysis library.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod report;

use resetsim_core::{Error, Result};

/// Parses a comma-separated list of numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Precondition(format!("bad number \"{s}\": {e}")))
        })
        .collect()
}
