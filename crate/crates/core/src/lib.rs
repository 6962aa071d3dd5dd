//! Allocation-only core of a speaker/listener communication laboratory.
//!
//! A speaker sees the whole maze and emits one of five symbols; a listener
//! moves through the maze using its own narrow view plus whatever the speaker
//! told it. Both agents are small Q-networks trained with episodic λ-returns.
//! Everything here is deterministic given a seed and free of IO, so the crate
//! builds with `#![no_std]` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod agent;
pub mod comm;
pub mod episode;
pub mod error;
pub mod gridworld;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scripted;
pub mod train;

pub use error::{Error, Result};
