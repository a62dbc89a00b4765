// Parameter guards are written `!(x > c)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eisenstein;
pub mod equidist_lab;
pub mod error;
pub mod group_kit;
pub mod number_field;
pub mod numerics;
pub mod quadric_counting;
pub mod torus_lines;
pub mod volume_zeta;

pub use error::{LabError, Result};
