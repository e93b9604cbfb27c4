//! Test-side oracles shared by the integration tests and the acceptance target.
//! Nothing here calls into the library code it checks.

#![allow(dead_code)]

pub mod matrix;
pub mod oracle;
pub mod trials;
