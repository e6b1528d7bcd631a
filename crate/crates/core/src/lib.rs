// SPDX-License-Identifier: Apache-2.0

//! Olympus: a service where crowd workers build evidence-backed profiles of
//! smart devices, administrators merge them into master profiles, and
//! students compare and rank the results.
//!
//! [`Olympus`] is the entry point. Every mutating operation is atomic: it
//! either commits and persists, or leaves no trace.

pub mod api;
pub mod assets;
pub mod catalog;
pub mod comparison;
pub mod error;
pub mod fixtures;
pub mod ids;
pub mod investigation;
pub mod merge;
pub mod model;
pub mod persistence;
pub mod server;
pub mod service;
pub mod storage;

pub use error::{Error, Result};
pub use service::{Config, Olympus, State};
