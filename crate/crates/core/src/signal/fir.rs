//! Windowed-sinc linear-phase band-pass design.

use std::f64::consts::PI;

use super::window::kaiser;
use crate::error::{Error, Result};

/// Kaiser shape parameter; roughly 45 dB of stop-band rejection.
const KAISER_BETA: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    taps: Vec<f64>,
    low_hz: f64,
    high_hz: f64,
    sample_rate: u32,
}

impl FilterKernel {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn low_hz(&self) -> f64 {
        self.low_hz
    }

    pub fn high_hz(&self) -> f64 {
        self.high_hz
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Group delay in samples.
    pub fn delay(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn description(&self) -> String {
        format!(
            "band-pass {}-{} Hz, {} taps at {} Hz",
            self.low_hz,
            self.high_hz,
            self.taps.len(),
            self.sample_rate
        )
    }

    /// Magnitude response at `freq_hz`, evaluated from the kernel's DTFT.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &h) in self.taps.iter().enumerate() {
            re += h * (omega * n as f64).cos();
            im -= h * (omega * n as f64).sin();
        }
        (re * re + im * im).sqrt()
    }

    pub fn response_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).max(1e-300).log10()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn design_bandpass(low_hz: f64, high_hz: f64, sample_rate: u32, taps: usize) -> Result<FilterKernel> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz <= nyquist) {
        return Err(Error::invalid(format!(
            "band edges must satisfy 0 < low ({low_hz}) < high ({high_hz}) <= nyquist ({nyquist})"
        )));
    }
    if taps % 2 == 0 || taps < 3 {
        return Err(Error::invalid(format!("tap count {taps} must be odd and >= 3")));
    }
    let lo = low_hz / sample_rate as f64;
    let hi = high_hz / sample_rate as f64;
    let mid = (taps / 2) as f64;
    let window = kaiser(taps, KAISER_BETA);
    let kernel = window
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let t = n as f64 - mid;
            w * (2.0 * hi * sinc(2.0 * hi * t) - 2.0 * lo * sinc(2.0 * lo * t))
        })
        .collect();
    Ok(FilterKernel {
        taps: kernel,
        low_hz,
        high_hz,
        sample_rate,
    })
}
