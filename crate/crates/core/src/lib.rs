//! Algebraically sparse convolutional networks over rings of real n-tuples.
//!
//! The crate is `no_std` + `alloc` with the default `std` feature adding
//! rayon parallelism.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod catalog;
pub mod error;
pub mod fast;
pub mod fixed;
pub mod model;
pub mod ring;
pub mod rng;
pub mod search;
pub mod tensor;

pub use error::{Result, RingError};
/// Matrix types used by the fast-algorithm API.
pub use nalgebra;
