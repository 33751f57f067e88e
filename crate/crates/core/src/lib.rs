//! Non-intrusive load monitoring for low-rate (1-minute) smart-meter data.
//!
//! Each appliance gets two small networks: a 1D-CNN that classifies the
//! appliance's on/off state from a window of aggregate mains power
//! (sequence-to-point), and a stacked LSTM that maps the run-length of the
//! predicted on-state to the appliance's power draw.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod signature;
pub mod synthgen;
pub mod train;
