//! Numerical hyperbolic geometry on finite configurations.
//!
//! Everything lives in the hyperboloid model of `H^n` inside Minkowski space
//! `R^{1,n}`. The crate certifies kernels of hyperbolic type, embeds them,
//! computes cross-ratios and translation lengths, deforms kernels by powers
//! and follows rescaled free-group representations as they degenerate to
//! actions on real trees.

pub mod cli_io;
pub mod cross_ratio;
pub mod deform_tree;
pub mod degeneration;
pub mod error;
pub mod gns_embed;
pub mod isometry_dyn;
pub mod kernel_check;
pub mod linalg;
pub mod mink_core;

pub use error::{GeoError, Result};
