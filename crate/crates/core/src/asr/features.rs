//! Log-mel features and their backward pass.

use std::sync::OnceLock;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::stft::{stft_adjoint, stft_samples};
use crate::signal::{Spectrogram, StftConfig, Waveform, SAMPLE_RATE};

pub const MEL_BINS: usize = 40;
pub const MEL_LOW_HZ: f64 = 50.0;
pub const MEL_HIGH_HZ: f64 = 7900.0;
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    bins: usize,
    /// (first bin, weights) per filter
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, low_hz: f64, high_hz: f64, bins: usize, bin_hz: f64) -> Self {
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
            .collect();
        let filters = (0..n_filters)
            .map(|m| {
                let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let first = (left / bin_hz).ceil() as usize;
                let last = ((right / bin_hz).floor() as usize).min(bins - 1);
                let weights = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= centre {
                            (f - left) / (centre - left)
                        } else {
                            (right - f) / (right - centre)
                        }
                        .max(0.0)
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        Self {
            bins,
            filters,
            centers_hz: edges[1..=n_filters].to_vec(),
        }
    }

    pub fn standard() -> &'static MelFilterbank {
        static BANK: OnceLock<MelFilterbank> = OnceLock::new();
        BANK.get_or_init(|| {
            let cfg = StftConfig::default();
            MelFilterbank::new(
                MEL_BINS,
                MEL_LOW_HZ,
                MEL_HIGH_HZ,
                cfg.bins(),
                SAMPLE_RATE as f64 / cfg.window_len() as f64,
            )
        })
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Number of linear-frequency bins the filters expect.
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn weight_sum(&self, m: usize) -> f64 {
        self.filters[m].1.iter().sum()
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }

    fn apply_transpose(&self, grad: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (g, (first, w)) in grad.iter().zip(&self.filters) {
            for (o, wk) in out[*first..].iter_mut().zip(w) {
                *o += g * wk;
            }
        }
    }
}

/// Frames × mel-bins matrix of log energies, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * bins {
            return Err(Error::invalid("feature data does not match its shape"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature"));
        }
        Ok(Self { frames, bins, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Intermediate values needed to differentiate [`featurize`].
pub struct FeatureTape {
    spec: Spectrogram,
    mel_energy: Vec<f64>,
}

pub fn featurize_samples(x: &[f64], cfg: &StftConfig) -> Result<(FeatureMatrix, FeatureTape)> {
    let spec = stft_samples(x, SAMPLE_RATE, cfg)?;
    let bank = MelFilterbank::standard();
    let bins = bank.len();
    let mut mel_energy = vec![0.0; spec.frames() * bins];
    let mut power = vec![0.0; spec.bins()];
    for t in 0..spec.frames() {
        for (p, c) in power.iter_mut().zip(spec.frame(t)) {
            *p = c.norm_sqr();
        }
        bank.apply(&power, &mut mel_energy[t * bins..(t + 1) * bins]);
    }
    let data = mel_energy.iter().map(|e| (e + LOG_FLOOR).ln()).collect();
    let features = FeatureMatrix::new(spec.frames(), bins, data)?;
    Ok((features, FeatureTape { spec, mel_energy }))
}

pub fn featurize(w: &Waveform) -> Result<FeatureMatrix> {
    if w.sample_rate() != SAMPLE_RATE {
        return Err(Error::invalid(format!(
            "expected {SAMPLE_RATE} Hz audio, got {} Hz",
            w.sample_rate()
        )));
    }
    Ok(featurize_samples(w.samples(), &StftConfig::default())?.0)
}

/// Gradient with respect to the input samples given `grad` over the features.
pub fn featurize_backward(tape: &FeatureTape, grad: &[f64], cfg: &StftConfig) -> Result<Vec<f64>> {
    let bank = MelFilterbank::standard();
    let bins = bank.len();
    let spec = &tape.spec;
    if grad.len() != spec.frames() * bins {
        return Err(Error::invalid("feature gradient has the wrong shape"));
    }
    let mut spec_grad = vec![Complex64::new(0.0, 0.0); spec.data().len()];
    let mut dpower = vec![0.0; spec.bins()];
    let mut dmel = vec![0.0; bins];
    for t in 0..spec.frames() {
        for m in 0..bins {
            dmel[m] = grad[t * bins + m] / (tape.mel_energy[t * bins + m] + LOG_FLOOR);
        }
        bank.apply_transpose(&dmel, &mut dpower);
        let row = &mut spec_grad[t * spec.bins()..(t + 1) * spec.bins()];
        for ((g, c), dp) in row.iter_mut().zip(spec.frame(t)).zip(&dpower) {
            *g = c * (2.0 * dp);
        }
    }
    stft_adjoint(&spec_grad, cfg, spec.signal_len())
}
