//! Short-time Fourier transform on a fixed analysis grid.
//!
//! Frames start at multiples of `hop`. When the signal length is not an
//! exact multiple of the hop past the first window, one extra frame covers
//! the tail and is zero-padded. The inverse uses weighted overlap-add and
//! normalizes by the summed squared window, so any taper whose squared
//! overlap sum is bounded away from zero reconstructs exactly.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::{fft, Waveform};
use crate::error::{Error, Result};
use crate::registry;

#[derive(Clone)]
pub struct StftConfig {
    window_len: usize,
    hop: usize,
    window_name: String,
    window: Arc<Vec<f64>>,
}

impl std::fmt::Debug for StftConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftConfig")
            .field("window_len", &self.window_len)
            .field("hop", &self.hop)
            .field("window", &self.window_name)
            .finish()
    }
}

impl PartialEq for StftConfig {
    fn eq(&self, other: &Self) -> bool {
        self.window_len == other.window_len
            && self.hop == other.hop
            && self.window_name == other.window_name
    }
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, window: &str) -> Result<Self> {
        if window_len == 0 || !window_len.is_power_of_two() {
            return Err(Error::invalid(format!(
                "window length {window_len} is not a power of two"
            )));
        }
        if hop == 0 || hop > window_len {
            return Err(Error::invalid(format!(
                "hop {hop} must lie in 1..={window_len}"
            )));
        }
        let taper = registry::windows().get(window)?;
        let coeffs = taper.coefficients(window_len);
        // every sample position must be covered by a non-vanishing squared window sum
        let min_cover = (0..hop)
            .map(|n| {
                (n..window_len)
                    .step_by(hop)
                    .map(|i| coeffs[i] * coeffs[i])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        if min_cover < 1e-8 {
            return Err(Error::invalid(format!(
                "window `{window}` with hop {hop} does not satisfy overlap-add reconstruction"
            )));
        }
        Ok(Self {
            window_len,
            hop,
            window_name: window.to_string(),
            window: Arc::new(coeffs),
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window_name(&self) -> &str {
        &self.window_name
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples (`len >= window_len`).
    pub fn frame_count(&self, len: usize) -> usize {
        1 + (len - self.window_len).div_ceil(self.hop)
    }
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(512, 256, "hann").expect("default STFT grid is valid")
    }
}

/// One-sided complex spectrogram stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    data: Vec<Complex64>,
    window_len: usize,
    hop: usize,
    sample_rate: u32,
    signal_len: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.window_len as f64
    }

    pub fn frame_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, t: usize, k: usize) -> Complex64 {
        self.data[t * self.bins + k]
    }

    /// Builds a spectrogram directly from coefficients on the grid of `cfg`.
    pub fn from_parts(
        cfg: &StftConfig,
        frames: usize,
        data: Vec<Complex64>,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        if data.len() != frames * cfg.bins() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                frames * cfg.bins(),
                data.len()
            )));
        }
        if signal_len < cfg.window_len || cfg.frame_count(signal_len) != frames {
            return Err(Error::invalid(
                "signal length is inconsistent with the frame count",
            ));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("spectrogram has non-finite entries"));
        }
        Ok(Self {
            frames,
            bins: cfg.bins(),
            data,
            window_len: cfg.window_len,
            hop: cfg.hop,
            sample_rate,
            signal_len,
        })
    }

    pub fn matches(&self, cfg: &StftConfig) -> bool {
        self.window_len == cfg.window_len && self.hop == cfg.hop
    }
}

fn check_len(len: usize, cfg: &StftConfig) -> Result<()> {
    if len < cfg.window_len {
        Err(Error::invalid(format!(
            "signal of {len} samples is shorter than one {}-sample window",
            cfg.window_len
        )))
    } else {
        Ok(())
    }
}

/// Analysis of raw samples; see [`stft`].
pub fn stft_samples(x: &[f64], sample_rate: u32, cfg: &StftConfig) -> Result<Spectrogram> {
    check_len(x.len(), cfg)?;
    let n = cfg.window_len;
    let bins = cfg.bins();
    let frames = cfg.frame_count(x.len());
    let plan = fft::forward(n);
    let w = cfg.window();
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            let v = x.get(start + i).copied().unwrap_or(0.0);
            *b = Complex64::new(w[i] * v, 0.0);
        }
        plan.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram {
        frames,
        bins,
        data,
        window_len: n,
        hop: cfg.hop,
        sample_rate,
        signal_len: x.len(),
    })
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    stft_samples(w.samples(), w.sample_rate(), cfg)
}

/// Weighted overlap-add inverse of [`stft`].
pub fn istft(s: &Spectrogram, cfg: &StftConfig) -> Result<Waveform> {
    if !s.matches(cfg) {
        return Err(Error::invalid(format!(
            "spectrogram grid ({}, {}) does not match STFT config ({}, {})",
            s.window_len, s.hop, cfg.window_len, cfg.hop
        )));
    }
    let n = cfg.window_len;
    let plan = fft::inverse(n);
    let w = cfg.window();
    let total = (s.frames - 1) * cfg.hop + n;
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..s.frames {
        let frame = s.frame(t);
        buf[..s.bins].copy_from_slice(frame);
        // DC and Nyquist of a real signal are real
        buf[0].im = 0.0;
        buf[n / 2].im = 0.0;
        for k in 1..n / 2 {
            buf[n - k] = frame[k].conj();
        }
        plan.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            out[start + i] += w[i] * buf[i].re / n as f64;
            norm[start + i] += w[i] * w[i];
        }
    }
    let samples = out
        .iter()
        .zip(&norm)
        .take(s.signal_len)
        .map(|(&o, &d)| if d > 1e-10 { o / d } else { 0.0 })
        .collect();
    Waveform::new(samples, s.sample_rate)
}

/// Adjoint of the analysis map: given the loss gradient with respect to the
/// real and imaginary parts of every coefficient (packed as `re + i·im`),
/// returns the gradient with respect to the `signal_len` input samples.
pub fn stft_adjoint(grad: &[Complex64], cfg: &StftConfig, signal_len: usize) -> Result<Vec<f64>> {
    check_len(signal_len, cfg)?;
    let n = cfg.window_len;
    let bins = cfg.bins();
    let frames = cfg.frame_count(signal_len);
    if grad.len() != frames * bins {
        return Err(Error::invalid(format!(
            "gradient has {} entries, grid needs {}",
            grad.len(),
            frames * bins
        )));
    }
    let plan = fft::inverse(n);
    let w = cfg.window();
    let mut out = vec![0.0; signal_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        let g = &grad[t * bins..(t + 1) * bins];
        if g.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            continue;
        }
        buf[..bins].copy_from_slice(g);
        buf[bins..].fill(Complex64::new(0.0, 0.0));
        plan.process(&mut buf);
        let start = t * cfg.hop;
        let end = (start + n).min(signal_len);
        for (i, o) in out[start..end].iter_mut().enumerate() {
            *o += w[i] * buf[i].re;
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use std::f64::consts::PI;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16000.0).sin())
            .collect();
        let s = stft_samples(&x, 16000, &StftConfig::default()).unwrap();
        let expected = (1000.0f64 * 512.0 / 16000.0).round() as usize;
        for t in 0..s.frames() - 1 {
            let peak = (0..s.bins())
                .max_by(|&a, &b| s.get(t, a).norm().total_cmp(&s.get(t, b).norm()))
                .unwrap();
            assert_eq!(peak, expected);
        }
    }

    #[test]
    fn frame_count_and_tail_policy() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.frame_count(512), 1);
        assert_eq!(cfg.frame_count(768), 2);
        assert_eq!(cfg.frame_count(769), 3);
        let s = stft_samples(&vec![0.0; 769], 16000, &cfg).unwrap();
        assert_eq!(s.frames(), 3);
        assert_eq!(s.bins(), 257);
    }

    #[test]
    fn zero_input_gives_zero_spectrogram_and_back() {
        let cfg = StftConfig::default();
        let s = stft_samples(&vec![0.0; 4000], 16000, &cfg).unwrap();
        assert!(s.data().iter().all(|c| c.norm() == 0.0));
        let w = istft(&s, &cfg).unwrap();
        assert!(w.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_is_rejected() {
        let err = stft_samples(&[0.0; 100], 16000, &StftConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(16000, 3);
        let s = stft_samples(&x, 16000, &cfg).unwrap();
        let n = cfg.window_len();
        let w = cfg.window();
        for t in 0..s.frames() {
            let time: f64 = (0..n)
                .map(|i| {
                    let v = x.get(t * cfg.hop() + i).copied().unwrap_or(0.0) * w[i];
                    v * v
                })
                .sum();
            let f = s.frame(t);
            let mut freq = f[0].norm_sqr() + f[n / 2].norm_sqr();
            freq += 2.0 * f[1..n / 2].iter().map(|c| c.norm_sqr()).sum::<f64>();
            freq /= n as f64;
            assert!((time - freq).abs() <= 1e-6 * time, "frame {t}: {time} vs {freq}");
        }
    }

    #[test]
    fn round_trip_white_noise_and_chirp() {
        let cfg = StftConfig::default();
        let noise = noise(12345, 9);
        let chirp: Vec<f64> = (0..16000)
            .map(|n| {
                let t = n as f64 / 16000.0;
                0.7 * (2.0 * PI * (200.0 * t + 1500.0 * t * t)).sin()
            })
            .collect();
        for x in [noise, chirp] {
            let s = stft_samples(&x, 16000, &cfg).unwrap();
            let y = istft(&s, &cfg).unwrap();
            assert_eq!(y.len(), x.len());
            let interior = cfg.window_len()..x.len() - cfg.window_len();
            let err = interior
                .map(|i| (x[i] - y.samples()[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "max interior error {err}");
        }
    }

    #[test]
    fn istft_rejects_mismatched_grid() {
        let s = stft_samples(&vec![0.1; 2048], 16000, &StftConfig::default()).unwrap();
        let other = StftConfig::new(256, 128, "hann").unwrap();
        assert!(istft(&s, &other).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(500, 250, "hann").is_err());
        assert!(StftConfig::new(512, 0, "hann").is_err());
        assert!(StftConfig::new(512, 513, "hann").is_err());
        // periodic Hann vanishes at n = 0, so a full-length hop leaves gaps
        assert!(StftConfig::new(512, 512, "hann").is_err());
        assert!(StftConfig::new(512, 512, "rect").is_ok());
        assert!(StftConfig::new(512, 256, "nope").is_err());
    }

    #[test]
    fn adjoint_matches_inner_product_identity() {
        // <stft(x), g> == <x, stft_adjoint(g)> for the real inner product
        let cfg = StftConfig::default();
        let x = noise(3000, 1);
        let s = stft_samples(&x, 16000, &cfg).unwrap();
        let mut r = rng::seeded(2);
        let g: Vec<Complex64> = (0..s.data().len())
            .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
            .collect();
        let lhs: f64 = s
            .data()
            .iter()
            .zip(&g)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        let adj = stft_adjoint(&g, &cfg, x.len()).unwrap();
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
