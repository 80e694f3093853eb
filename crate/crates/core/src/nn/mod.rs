//! Trainable layers built on the autograd tape.

pub mod attention;
pub mod conv;
pub mod linear;
pub mod lstm;
pub mod params;

pub use attention::{mhsa, mhsa_with_weights, Mhsa, MhsaWeights};
pub use conv::Conv2d;
pub use linear::{linear_forward, Linear};
pub use lstm::{lstm_last_output, lstm_step, Lstm, LstmWeights};
pub use params::{seeded_rng, Binding, ParamBuilder, ParamId, ParamStore};
