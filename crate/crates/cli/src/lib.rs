//! Library half of the batch runner, shared by the binary and the tests.

pub mod runner;
pub mod trace;
