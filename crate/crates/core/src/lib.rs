#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod decoherence;
pub mod elements;
pub mod error;
pub mod grid;
pub mod junction;
pub mod rabi;
pub mod rts;
pub mod seed;
pub mod structure;
pub mod vacancy;

pub use error::{Error, Result};
