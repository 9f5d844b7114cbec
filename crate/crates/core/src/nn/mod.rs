//! Attention encoder-decoder written from scratch: forward pass, exact
//! backpropagation through time, and RMSProp.

pub mod lstm;
pub mod model;
pub mod optim;
pub mod params;
pub mod search;
pub mod tensor;
pub mod vocab;

pub use model::{
    attend, backprop, backprop_into, candidate_losses, decode_step, encode, greedy_decode,
    initial_state, nll, score_candidates_exhaustive, Dropout, ForwardTrace, ModelError,
};
pub use optim::RmsProp;
pub use search::score_candidates;
pub use params::{Dims, ModelParams};
