//! Blinded review sessions for generated summaries.
//!
//! A session joins several models' summaries by snippet id and shows each
//! item with the summaries under opaque arm ids in a seeded random order.
//! In grade mode the reviewer buckets every summary by fact coverage; in
//! compare mode they pick the best one, or "all good" / "none good". Any
//! summary can be edited, and edits are collected as human-labeled examples.
//!
//! Model names stay on the server and only appear in the report.

pub mod http;
pub mod model;
pub mod store;
mod ui;

pub use http::{router, serve, ServerConfig};
pub use model::{
    EventPayload, GradeBucket, Report, ReviewEvent, ReviewItem, SessionMode, SessionSnapshot, Winner,
};
pub use store::{build_snapshot, load_predictions, replay, Ack, ModelOutputs, NextItem, ReviewError, ReviewStore};
