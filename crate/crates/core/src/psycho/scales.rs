use crate::error::{Error, Result};

use super::mask::{CEILING_DB, FLOOR_DB};

/// Threshold in quiet (dB SPL) at `f` Hz, Terhardt's approximation.
pub fn absolute_threshold(f: f64) -> Result<f64> {
    if !(20.0..=8000.0).contains(&f) {
        return Err(Error::invalid(format!(
            "frequency {f} Hz outside the 20-8000 Hz threshold range"
        )));
    }
    let k = f / 1000.0;
    Ok(3.64 * k.powf(-0.8) - 6.5 * (-0.6 * (k - 3.3).powi(2)).exp() + 1e-3 * k.powi(4))
}

/// Absolute threshold for an analysis bin centred at `f` Hz, with the
/// frequency clamped into the curve's domain and the level clamped into
/// the threshold matrix range.
pub fn bin_absolute_threshold(f: f64) -> f64 {
    absolute_threshold(f.clamp(20.0, 8000.0))
        .expect("clamped into range")
        .clamp(FLOOR_DB, CEILING_DB)
}

pub fn hz_to_bark(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::invalid(format!("negative frequency {f} Hz")));
    }
    Ok(13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_at_one_khz() {
        let v = absolute_threshold(1000.0).unwrap();
        assert!((v - 3.37).abs() < 0.005, "{v}");
    }

    #[test]
    fn threshold_minimum_near_3300_hz() {
        let mut best = (0.0, f64::INFINITY);
        let mut f = 20.0;
        while f <= 8000.0 {
            let v = absolute_threshold(f).unwrap();
            if v < best.1 {
                best = (f, v);
            }
            f += 1.0;
        }
        assert!((best.0 - 3300.0).abs() < 100.0, "minimum at {} Hz", best.0);
    }

    #[test]
    fn threshold_decreasing_at_low_frequencies() {
        let mut prev = absolute_threshold(20.0).unwrap();
        for f in 21..=500 {
            let v = absolute_threshold(f as f64).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn threshold_rejects_out_of_range() {
        assert!(absolute_threshold(19.9).is_err());
        assert!(absolute_threshold(8000.1).is_err());
    }

    #[test]
    fn bark_values() {
        assert_eq!(hz_to_bark(0.0).unwrap(), 0.0);
        assert!((hz_to_bark(1000.0).unwrap() - 8.51).abs() < 0.005);
        assert!(hz_to_bark(-1.0).is_err());
        let mut prev = hz_to_bark(0.0).unwrap();
        for f in 1..=8000 {
            let z = hz_to_bark(f as f64).unwrap();
            assert!(z > prev);
            prev = z;
        }
    }
}
