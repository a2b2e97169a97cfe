//! Contact-guided retargeting of two-person object manipulation.

pub mod body;
pub mod contacts;
pub mod diffopt;
pub mod discriminator;
pub mod error;
pub mod geometry;
pub mod humanoid;
pub mod io;
pub mod metrics;
pub mod morph;
pub mod motion;
pub mod retarget;
pub mod selection;
pub mod so3;

pub use error::{Error, Result};
