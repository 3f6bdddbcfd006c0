//! Measures how narrowly users concentrate their engagement.
//!
//! The input is a log of likes (user, post, timestamp) plus per-post metadata
//! mapping posts to the page that published them and, optionally, to a topic
//! mixture. From these the crate builds per-user incidence structures and
//! computes concentration profiles: activity, lifetime, Gini coefficients
//! over pages and topics, and a normalized page Gini that corrects for the
//! floor a small activity imposes on the raw value. Users are then classified
//! into four regions of the (topic, page) concentration plane, and binned
//! curves and density grids summarize the population.
//!
//! A seeded synthetic generator with known concentration knobs doubles as a
//! test oracle, together with brute-force reference implementations of the
//! Gini kernels.

pub mod bipartite;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod report;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
