use std::f64::consts::PI;

/// An analysis taper, evaluated as a periodic window of length `len`.
pub trait Taper: Send + Sync {
    fn name(&self) -> &'static str;
    fn coefficient(&self, n: usize, len: usize) -> f64;

    fn coefficients(&self, len: usize) -> Vec<f64> {
        (0..len).map(|n| self.coefficient(n, len)).collect()
    }
}

pub struct Hann;
pub struct Hamming;
pub struct Rectangular;

impl Taper for Hann {
    fn name(&self) -> &'static str {
        "hann"
    }

    fn coefficient(&self, n: usize, len: usize) -> f64 {
        0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()
    }
}

impl Taper for Hamming {
    fn name(&self) -> &'static str {
        "hamming"
    }

    fn coefficient(&self, n: usize, len: usize) -> f64 {
        0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos()
    }
}

impl Taper for Rectangular {
    fn name(&self) -> &'static str {
        "rect"
    }

    fn coefficient(&self, _n: usize, _len: usize) -> f64 {
        1.0
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Symmetric Kaiser window of odd length `len`.
pub(crate) fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    let m = (len - 1) as f64;
    let norm = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_hann_overlaps_to_one_at_half_hop() {
        let w = Hann.coefficients(512);
        for n in 0..256 {
            assert!((w[n] + w[n + 256] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bessel_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-13);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_442).abs() < 1e-10);
    }
}
