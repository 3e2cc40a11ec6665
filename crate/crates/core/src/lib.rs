//! Ordinary consensus, push-sum and robust asynchronous push-sum under
//! simulated wake-ups and unreliable directed links, with a dense-matrix
//! oracle that replays every run as a product of stochastic matrices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod graph;
pub mod harness;
pub mod matrix;
pub mod protocol;
pub mod schedule;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, LoopPolicy};
pub use matrix::DenseMatrix;
pub use schedule::{BlockSchedule, Regime};
pub use trace::{EventTrace, IterationEvents, TraceParams, WakeMode};
