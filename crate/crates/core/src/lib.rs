//! Text classification of dark-web pages.
//!
//! The crate covers the whole batch pipeline: fusing labeled page collections
//! under one label taxonomy, pulling visible text out of HTML (general pages
//! and templated marketplace product pages), cleaning and lemmatizing that
//! text, TF-IDF featurization, and two softmax classifiers (main content
//! class, then drug sub-class) with an evaluation harness.
//!
//! Every stage is a pure function over its inputs so the CLI can run one
//! stage per command with files in between.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod extract;
pub mod features;
pub mod fixtures;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod resources;
pub mod taxonomy;

pub use error::{Error, Result};

/// Trims and collapses internal whitespace runs to a single space.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}
