#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod layers;
pub mod linalg;
pub mod model;
pub mod reduction;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
