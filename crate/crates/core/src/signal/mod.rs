//! Waveforms, spectral analysis, FIR design, convolution and WAV I/O.

pub mod conv;
mod fft;
pub mod fir;
pub mod stft;
pub mod wav;
mod waveform;
pub mod window;

pub use conv::{convolve, convolve_adjoint, convolve_samples, FftConvolver};
pub use fir::{design_bandpass, FilterKernel};
pub use stft::{istft, stft, stft_adjoint, Spectrogram, StftConfig};
pub use wav::{read_wav, write_wav};
pub use waveform::Waveform;

/// Internal sample rate of every signal in the toolkit.
pub const SAMPLE_RATE: u32 = 16_000;
