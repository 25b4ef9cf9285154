//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

pub mod merge;
pub mod power;
pub mod protection;
