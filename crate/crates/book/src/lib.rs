//! Compiles and runs the guide's Rust listings as doctests, one module per
//! chapter, so the book cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/stiefel.md")]
pub mod stiefel {}
#[doc = include_str!("../../../book/src/mmd.md")]
pub mod mmd {}
#[doc = include_str!("../../../book/src/penalty.md")]
pub mod penalty {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
