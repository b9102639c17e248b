//! Flow telemetry and video traffic classification engine.
//!
//! The crate models a bump-in-the-wire SDN deployment end to end:
//!
//! * [`pipeline`] is a behavioral model of the switch's multi-table pipeline
//!   (reactive 5-tuple table, proactive forward-and-mirror table, default
//!   cross-connect, and a per-provider group table).
//! * [`inspector`] watches the mirror port, reports elephant flows once they
//!   cross the volume threshold, and decodes DNS A replies.
//! * [`broker`] reacts to elephants by installing reactive entries, polls the
//!   switch counters into per-flow sample series and runs the classifiers on a
//!   fixed cadence. [`engine`] wires all of it into a virtual-time event loop.
//! * [`features`] turns per-second byte profiles into attribute vectors.
//! * [`ml`] holds the decision tree, random forest and MLP learners together
//!   with cross-validation, grid tuning and information-gain ranking.
//! * [`traffgen`] synthesizes labeled traces and datasets.
//!
//! Everything here is `no_std` + `alloc`; file formats and the CLI live in the
//! companion `vidtel` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod broker;
pub mod dns;
pub mod engine;
pub mod features;
pub mod inspector;
pub mod labels;
pub mod ml;
pub mod pipeline;
pub mod traffgen;

pub use labels::{Resolution, StreamClass};
pub use pipeline::{Direction, FlowKey, PacketRecord, Proto};
