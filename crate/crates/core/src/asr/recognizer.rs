//! The recognizer seam used by the attack engine and evaluation.

use std::io::{Read, Write};
use std::path::Path;

use super::ctc::ctc_loss;
use super::decode::greedy_decode;
use super::features::{featurize_backward, featurize_samples, MEL_BINS};
use super::model::{AcousticModel, Logits, ModelDims};
use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::signal::StftConfig;

/// A differentiable speech recognizer over 16 kHz samples.
pub trait Recognizer: Send + Sync {
    fn name(&self) -> &'static str;

    fn vocab(&self) -> &Vocab;

    /// Shortest input the recognizer accepts.
    fn min_samples(&self) -> usize;

    /// Number of output frames (CTC time steps) for `samples` input samples.
    fn output_frames(&self, samples: usize) -> usize;

    fn transcribe(&self, samples: &[f64]) -> Result<String>;

    fn loss(&self, samples: &[f64], target: &[usize]) -> Result<f64>;

    /// Greedy transcript and CTC loss of `target` from one forward pass.
    fn evaluate(&self, samples: &[f64], target: &[usize]) -> Result<(String, f64)> {
        Ok((self.transcribe(samples)?, self.loss(samples, target)?))
    }

    /// CTC loss and its gradient with respect to the input samples.
    fn loss_and_gradient(&self, samples: &[f64], target: &[usize]) -> Result<(f64, Vec<f64>)>;

    fn save(&self, path: &Path) -> Result<()>;
}

/// Log-mel features feeding the two-layer convolutional CTC model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCtcRecognizer {
    model: AcousticModel,
    vocab: Vocab,
    stft: StftConfig,
}

const MAGIC: &[u8; 4] = b"ASRT";
const FORMAT_VERSION: u32 = 1;

impl ToyCtcRecognizer {
    pub const NAME: &'static str = "toy-ctc";

    pub fn new(model: AcousticModel, vocab: Vocab) -> Result<Self> {
        let d = model.dims();
        if d.classes != vocab.classes() || d.mel_bins != MEL_BINS {
            return Err(Error::invalid(format!(
                "model dims {d:?} do not fit a {}-class vocabulary with {MEL_BINS} mel bins",
                vocab.classes()
            )));
        }
        Ok(Self {
            model,
            vocab,
            stft: StftConfig::default(),
        })
    }

    pub fn model(&self) -> &AcousticModel {
        &self.model
    }

    pub fn logits(&self, samples: &[f64]) -> Result<Logits> {
        let (f, _) = featurize_samples(samples, &self.stft)?;
        self.model.forward(&f)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.model.dims();
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [d.mel_bins, d.hidden1, d.hidden2, d.classes, d.kernel, d.stride] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        let symbols = self.vocab.as_string();
        out.write_all(&(symbols.len() as u32).to_le_bytes())?;
        out.write_all(symbols.as_bytes())?;
        for p in self.model.params() {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an ASRT model file".into()));
        }
        let mut word = [0u8; 4];
        let mut read_u32 = |input: &mut R| -> Result<u32> {
            input.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = read_u32(&mut input)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported ASRT version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = read_u32(&mut input)? as usize;
        }
        let dims = ModelDims {
            mel_bins: dims[0],
            hidden1: dims[1],
            hidden2: dims[2],
            classes: dims[3],
            kernel: dims[4],
            stride: dims[5],
        };
        if dims.kernel != 5 || dims.stride != 2 {
            return Err(Error::Format("unsupported convolution geometry".into()));
        }
        let len = read_u32(&mut input)? as usize;
        let mut text = vec![0u8; len];
        input.read_exact(&mut text)?;
        let vocab = Vocab::new(
            std::str::from_utf8(&text).map_err(|_| Error::Format("vocabulary is not UTF-8".into()))?,
        )
        .map_err(|e| Error::Format(e.to_string()))?;
        let mut params = vec![0.0; dims.param_count()];
        let mut buf = [0u8; 8];
        for p in &mut params {
            input.read_exact(&mut buf)?;
            *p = f64::from_le_bytes(buf);
        }
        let model = AcousticModel::from_params(dims, params)?;
        Self::new(model, vocab).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("{}: truncated model file", path.display()))
            }
            other => other,
        })
    }
}

impl Recognizer for ToyCtcRecognizer {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn min_samples(&self) -> usize {
        self.stft.window_len()
    }

    fn output_frames(&self, samples: usize) -> usize {
        if samples < self.stft.window_len() {
            0
        } else {
            self.model.dims().output_frames(self.stft.frame_count(samples))
        }
    }

    fn transcribe(&self, samples: &[f64]) -> Result<String> {
        Ok(greedy_decode(&self.logits(samples)?, &self.vocab))
    }

    fn loss(&self, samples: &[f64], target: &[usize]) -> Result<f64> {
        Ok(ctc_loss(&self.logits(samples)?, target)?.0)
    }

    fn evaluate(&self, samples: &[f64], target: &[usize]) -> Result<(String, f64)> {
        let logits = self.logits(samples)?;
        Ok((greedy_decode(&logits, &self.vocab), ctc_loss(&logits, target)?.0))
    }

    fn loss_and_gradient(&self, samples: &[f64], target: &[usize]) -> Result<(f64, Vec<f64>)> {
        let (f, ftape) = featurize_samples(samples, &self.stft)?;
        let (logits, mtape) = self.model.forward_tape(&f)?;
        let (loss, dlogits) = ctc_loss(&logits, target)?;
        let grads = self.model.backward(&mtape, &dlogits)?;
        let dx = featurize_backward(&ftape, &grads.input, &self.stft)?;
        Ok((loss, dx))
    }

    fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }
}
