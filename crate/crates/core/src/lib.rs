//! Over-the-air robust, psychoacoustically masked adversarial audio against
//! a differentiable CTC recognizer, with a simulated playback channel.

pub mod asr;
pub mod attack;
pub mod channel;
pub mod error;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod psycho;
pub mod registry;
pub mod rng;
pub mod room;
pub mod signal;

pub use error::{Error, Result};
