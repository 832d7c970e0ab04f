//! `‖ReLU(level(stft(Δ)) − M)‖₂` and its exact reverse-mode gradient.

use std::f64::consts::LN_10;

use rustfft::num_complex::Complex64;

use super::mask::{MaskingThresholdMatrix, FLOOR_DB};
use crate::error::{Error, Result};
use crate::signal::stft::{stft_adjoint, stft_samples};
use crate::signal::{Spectrogram, StftConfig, Waveform};

/// Level of one coefficient in dB on the threshold scale, floored at [`FLOOR_DB`].
pub fn level_db(c: Complex64, reference_db: f64) -> f64 {
    let p = c.norm_sqr();
    if p > 0.0 {
        (10.0 * p.log10() + reference_db).max(FLOOR_DB)
    } else {
        FLOOR_DB
    }
}

/// Evaluates the masking penalty for perturbations on a fixed threshold grid.
pub struct PamEvaluator<'a> {
    mask: &'a MaskingThresholdMatrix,
    cfg: &'a StftConfig,
}

impl<'a> PamEvaluator<'a> {
    pub fn new(mask: &'a MaskingThresholdMatrix, cfg: &'a StftConfig) -> Self {
        Self { mask, cfg }
    }

    fn spectrum(&self, delta: &[f64]) -> Result<Spectrogram> {
        if delta.len() < self.cfg.window_len() {
            return Err(Error::invalid("perturbation shorter than one analysis window"));
        }
        let frames = self.cfg.frame_count(delta.len());
        if frames != self.mask.frames() || self.cfg.bins() != self.mask.bins() {
            return Err(Error::invalid(format!(
                "perturbation grid {}x{} does not match threshold grid {}x{}",
                frames,
                self.cfg.bins(),
                self.mask.frames(),
                self.mask.bins()
            )));
        }
        stft_samples(delta, crate::signal::SAMPLE_RATE, self.cfg)
    }

    fn excess(&self, spec: &Spectrogram) -> Vec<f64> {
        let reference = self.mask.reference_db();
        spec.data()
            .iter()
            .zip(self.mask.as_slice())
            .map(|(&c, &m)| (level_db(c, reference) - m).max(0.0))
            .collect()
    }

    pub fn value(&self, delta: &[f64]) -> Result<f64> {
        let spec = self.spectrum(delta)?;
        Ok(self.excess(&spec).iter().map(|e| e * e).sum::<f64>().sqrt())
    }

    pub fn value_and_gradient(&self, delta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let spec = self.spectrum(delta)?;
        let excess = self.excess(&spec);
        let value = excess.iter().map(|e| e * e).sum::<f64>().sqrt();
        if value == 0.0 {
            return Ok((0.0, vec![0.0; delta.len()]));
        }
        // d level / d X = (20 / ln 10) · X / |X|²  on cells above the floor
        let grad_spec: Vec<Complex64> = spec
            .data()
            .iter()
            .zip(&excess)
            .map(|(&c, &e)| {
                if e > 0.0 {
                    c * (e / value * 20.0 / LN_10 / c.norm_sqr())
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let grad = stft_adjoint(&grad_spec, self.cfg, delta.len())?;
        Ok((value, grad))
    }
}

pub fn f_pam(delta: &Waveform, m: &MaskingThresholdMatrix, cfg: &StftConfig) -> Result<f64> {
    PamEvaluator::new(m, cfg).value(delta.samples())
}

pub fn f_pam_gradient(delta: &Waveform, m: &MaskingThresholdMatrix, cfg: &StftConfig) -> Result<Vec<f64>> {
    Ok(PamEvaluator::new(m, cfg)
        .value_and_gradient(delta.samples())?
        .1)
}
