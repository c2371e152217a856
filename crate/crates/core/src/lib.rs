//! Provenance sketches over a bag relational algebra.
//!
//! A sketch is a set of range-partition fragments covering the rows a query
//! depends on. This crate evaluates queries, captures sketches, checks
//! statically whether an attribute set is safe to sketch on, decides when a
//! sketch captured for one binding of a template answers another binding,
//! rewrites queries to skip data, and drives a self-tuning loop.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod capture;
pub mod error;
pub mod fixtures;
pub mod logic;
pub mod partition;
pub mod relalg;
pub mod reuse;
pub mod safety;
pub mod sketch;
pub mod skipping;
pub mod tuning;
pub mod value;

pub use error::{Error, Result};
pub use value::{Kind, Value};
