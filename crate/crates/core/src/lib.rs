//! Streaming 1D temporal convolution with cached layer activations.
//!
//! When a convolutional network is re-evaluated on a sliding window of a
//! stream, every activation except the newest one per layer was already
//! computed on the previous step. [`ShiftEngine`] keeps those activations
//! in per-layer rings and computes one frame per layer per pushed input,
//! while [`forward_stack`] is the plain full-window reference. Both call
//! the same frame kernel, so their results agree bit for bit.
//!
//! The crate also carries the operation-count model for both evaluation
//! strategies ([`complexity`]), a convolutional auto-encoder trainer with
//! an MLP classification head ([`cae`]), text formats for models and
//! streams ([`io`]), and a benchmark harness ([`bench`]).

pub mod bench;
pub mod cae;
pub mod cli;
pub mod complexity;
pub mod conv;
pub mod error;
pub mod io;
pub mod ring;
pub mod shift;

pub use conv::{
    conv_frame, forward_prefix, forward_stack, full_conv_adjoint, valid_conv, Activation, ConvLayerParams, Frame,
    NetworkSpec, OpCounter, Sequence,
};
pub use error::{Error, Result};
pub use ring::RingBuffer;
pub use shift::{ParamSource, ShiftEngine, StepResult};
