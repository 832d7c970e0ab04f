//! A small differentiable CTC recognizer and its training tools.

pub mod corpus;
pub mod ctc;
pub mod decode;
pub mod features;
pub mod model;
mod recognizer;
pub mod train;
mod vocab;

pub use corpus::{synth_corpus, CorpusConfig, Utterance};
pub use ctc::ctc_loss;
pub use decode::greedy_decode;
pub use features::{featurize, FeatureMatrix};
pub use model::{AcousticModel, Logits, ModelDims};
pub use recognizer::{Recognizer, ToyCtcRecognizer};
pub use train::{train, Example, TrainConfig, TrainReport};
pub use vocab::Vocab;

use crate::error::Result;
use crate::signal::Waveform;

/// Gradient of the CTC loss of `target` with respect to the samples of `w`.
pub fn backprop_to_waveform(r: &dyn Recognizer, w: &Waveform, target: &str) -> Result<Vec<f64>> {
    let classes = r.vocab().encode(target)?;
    Ok(r.loss_and_gradient(w.samples(), &classes)?.1)
}
