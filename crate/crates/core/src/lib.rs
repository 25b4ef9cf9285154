//! Compiler and runtime for IEC 61850 smart-grid cyber ranges.
//!
//! SCL files (SSD/SCD/ICD/SED) plus supplementary XMLs are parsed, merged
//! and compiled into a coupled simulation: a time-stepped AC power flow, a
//! shared measurement store, an emulated station network, virtual IEDs and
//! PLCs, and an attack harness.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod gateway;
pub mod ied;
pub mod merger;
pub mod net;
pub mod plc;
pub mod power;
pub mod sample;
pub mod scenario;
pub mod scl;
pub mod store;
pub mod xml;
