#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod discretize;
pub mod error;
pub mod generate;
pub mod hilbert;
pub mod io;
pub mod projection;
pub mod report;
pub mod search;
pub mod series;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
