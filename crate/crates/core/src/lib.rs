#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clustering;
pub mod config;
pub mod error;
pub mod graph;
pub mod imaging;
pub mod io;
pub mod region;
pub mod solver;
