//! Compiles every chapter of the guide in `book/src` as a doc-test module so
//! `cargo test` runs its listings against the current API.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/morph.md")]
pub mod morph {}
#[doc = include_str!("../../../book/src/body.md")]
pub mod body {}
#[doc = include_str!("../../../book/src/motion.md")]
pub mod motion {}
#[doc = include_str!("../../../book/src/optimization.md")]
pub mod optimization {}
#[doc = include_str!("../../../book/src/retargeting.md")]
pub mod retargeting {}
#[doc = include_str!("../../../book/src/discriminator.md")]
pub mod discriminator {}
#[doc = include_str!("../../../book/src/selection.md")]
pub mod selection {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/humanoid.md")]
pub mod humanoid {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
