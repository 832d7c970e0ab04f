//! Linear convolution and its adjoint (correlation with the kernel).

use rustfft::num_complex::Complex64;

use super::{fft, Waveform};
use crate::error::{Error, Result};

const DIRECT_LIMIT: usize = 64;

fn direct(x: &[f64], k: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + k.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &kj) in out[i..].iter_mut().zip(k) {
            *o += xi * kj;
        }
    }
    out
}

/// Full linear convolution of two non-empty sequences, length `x.len() + k.len() - 1`.
pub fn convolve_samples(x: &[f64], k: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || k.is_empty() {
        return Err(Error::invalid("convolution operands must be non-empty"));
    }
    if x.len().min(k.len()) <= DIRECT_LIMIT {
        return Ok(direct(x, k));
    }
    let out_len = x.len() + k.len() - 1;
    Ok(FftConvolver::new(k, x.len(), out_len)?.apply(x))
}

pub fn convolve(w: &Waveform, k: &[f64]) -> Result<Waveform> {
    w.ensure_non_empty("waveform")?;
    Waveform::new(convolve_samples(w.samples(), k)?, w.sample_rate())
}

/// Backward pass of [`convolve_samples`]: maps a gradient over the
/// convolution output (any length; missing tail entries count as zero) to a
/// gradient over the `input_len` input samples.
pub fn convolve_adjoint(grad: &[f64], k: &[f64], input_len: usize) -> Result<Vec<f64>> {
    if k.is_empty() || input_len == 0 {
        return Err(Error::invalid("convolution operands must be non-empty"));
    }
    if k.len() <= DIRECT_LIMIT || grad.len() <= DIRECT_LIMIT {
        let mut out = vec![0.0; input_len];
        for (n, o) in out.iter_mut().enumerate() {
            *o = grad
                .iter()
                .skip(n)
                .zip(k)
                .map(|(g, kj)| g * kj)
                .sum();
        }
        return Ok(out);
    }
    Ok(FftConvolver::new(k, input_len, grad.len())?.adjoint(grad, input_len))
}

/// FFT convolution with a fixed kernel, precomputed for inputs up to
/// `max_input` samples and outputs truncated or zero-extended to `out_len`.
#[derive(Clone)]
pub struct FftConvolver {
    kernel_len: usize,
    fft_len: usize,
    out_len: usize,
    max_input: usize,
    spectrum: Vec<Complex64>,
}

impl FftConvolver {
    pub fn new(kernel: &[f64], max_input: usize, out_len: usize) -> Result<Self> {
        if kernel.is_empty() || max_input == 0 {
            return Err(Error::invalid("convolution operands must be non-empty"));
        }
        let fft_len = (max_input + kernel.len() - 1).max(out_len).next_power_of_two();
        let mut spectrum = fft::real_to_complex(kernel, fft_len);
        fft::forward(fft_len).process(&mut spectrum);
        Ok(Self {
            kernel_len: kernel.len(),
            fft_len,
            out_len,
            max_input,
            spectrum,
        })
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    /// `x * kernel`, truncated or zero-extended to `out_len`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert!(x.len() <= self.max_input, "input longer than planned");
        let mut buf = fft::real_to_complex(x, self.fft_len);
        fft::forward(self.fft_len).process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        fft::inverse(self.fft_len).process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        let valid = (x.len() + self.kernel_len - 1).min(self.out_len);
        let mut out: Vec<f64> = buf[..valid].iter().map(|c| c.re * scale).collect();
        out.resize(self.out_len, 0.0);
        out
    }

    /// Adjoint of [`apply`](Self::apply) for an input of `input_len` samples.
    pub fn adjoint(&self, grad: &[f64], input_len: usize) -> Vec<f64> {
        assert!(input_len <= self.max_input, "input longer than planned");
        let used = grad.len().min(self.out_len);
        let mut buf = fft::real_to_complex(&grad[..used], self.fft_len);
        fft::forward(self.fft_len).process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k.conj();
        }
        fft::inverse(self.fft_len).process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;
        buf[..input_len].iter().map(|c| c.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn naive(x: &[f64], k: &[f64]) -> Vec<f64> {
        let n = x.len() + k.len() - 1;
        (0..n)
            .map(|m| {
                let mut acc = 0.0;
                for j in 0..k.len() {
                    if m >= j && m - j < x.len() {
                        acc += k[j] * x[m - j];
                    }
                }
                acc
            })
            .collect()
    }

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_and_delay_kernels() {
        let x = random(300, 1);
        assert_eq!(convolve_samples(&x, &[1.0]).unwrap(), x);
        let d = convolve_samples(&x, &[0.0, 1.0]).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(&d[1..], &x[..]);
    }

    #[test]
    fn matches_naive_oracle_on_both_paths() {
        for (n, m, seed) in [(50, 7, 1), (1000, 300, 2), (4096, 2000, 3), (17, 900, 4)] {
            let x = random(n, seed);
            let k = random(m, seed + 100);
            let fast = convolve_samples(&x, &k).unwrap();
            let slow = naive(&x, &k);
            assert_eq!(fast.len(), slow.len());
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_operands_are_rejected() {
        assert!(convolve_samples(&[], &[1.0]).is_err());
        assert!(convolve_samples(&[1.0], &[]).is_err());
    }

    #[test]
    fn adjoint_is_correlation_with_kernel() {
        for (n, m) in [(40, 9), (2000, 700)] {
            let x = random(n, 5);
            let k = random(m, 6);
            let g = random(n + m - 1, 7);
            let y = convolve_samples(&x, &k).unwrap();
            let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
            let adj = convolve_adjoint(&g, &k, n).unwrap();
            let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn truncated_convolver_adjoint() {
        let k = random(500, 8);
        let conv = FftConvolver::new(&k, 3000, 2800).unwrap();
        let x = random(2600, 9);
        let y = conv.apply(&x);
        assert_eq!(y.len(), 2800);
        let full = naive(&x, &k);
        for i in 0..2800 {
            assert!((y[i] - full[i]).abs() < 1e-9);
        }
        let g = random(2800, 10);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let adj = conv.adjoint(&g, x.len());
        let rhs: f64 = x.iter().zip(&adj).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
