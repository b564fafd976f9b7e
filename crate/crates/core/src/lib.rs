//! Originality scoring for news articles.
//!
//! Citation PageRank is computed over a time-windowed corpus and then
//! normalized within news-event clusters, so that the article the rest of an
//! event cites scores close to 1 regardless of how big the event is.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod citation;
pub mod cluster;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod score;

pub use error::{Error, Result, Stage};
