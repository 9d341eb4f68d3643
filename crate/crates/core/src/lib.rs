//! Core of the `turf` design-space exploration toolkit.
//!
//! Everything in this crate is pure computation over immutable values: the
//! CNN model IR and its op/parameter accounting, reference convolution
//! kernels (direct, depthwise separable, Winograd), the hardware building
//! module template, the work-unit fusion simulator, resource and roofline
//! estimation, and the greedy layer-replacement search. File formats, the
//! CLI and anything touching the OS live in the `turf` crate.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod error;
pub mod explore;
pub mod fusion;
pub mod hw;
pub mod kernels;
pub mod model;
pub mod perf;

pub use error::{Error, Result};
