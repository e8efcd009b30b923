// SPDX-License-Identifier: Apache-2.0

//! Fault-tolerant pipelined AES S-box: composite-field arithmetic, gate-level
//! netlists, structural synthesis, hardware redundancy schemes, fault
//! injection campaigns and cost reports.

pub mod campaign;
pub mod fault;
pub mod field;
mod flow;
pub mod metrics;
pub mod netlist;
pub mod redundancy;
pub mod scalar;
pub mod synth;

pub use field::{FieldError, FieldParams};
pub use netlist::{CostTable, GateKind, Netlist, NetlistError};
pub use scalar::Scalar;
pub use synth::{cut_pipeline, streaming_eval, synth_sbox, synth_sbox_with, PipelineDesign, SynthError, SynthOptions};

/// Cost table with floating-point entries.
pub type CostTableF64 = CostTable<f64>;
/// Cost table with exact rational entries.
pub type CostTableExact = CostTable<num_rational::Rational64>;
