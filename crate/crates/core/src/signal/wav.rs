//! WAV input (PCM16 / float32, mono or stereo) and PCM16 output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

// The file has already been opened, so read failures here mean a truncated
// or malformed container rather than a missing file.
fn format_err(path: &Path, e: hound::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let reader = WavReader::new(std::io::BufReader::new(file)).map_err(|e| format_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::Format(format!(
            "{}: sample rate {} Hz, expected {SAMPLE_RATE} Hz",
            path.display(),
            spec.sample_rate
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::Format(format!(
            "{}: {channels} channels, expected mono or stereo",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported encoding {fmt:?}/{bits} bit",
                path.display()
            )))
        }
    }
    .map_err(|e| format_err(path, e))?;
    if interleaved.is_empty() {
        return Err(Error::Format(format!("{}: no samples", path.display())));
    }
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate).map_err(|e| Error::Format(e.to_string()))
}

/// Quantizes one sample to PCM16, clipping to the representable range.
pub fn quantize(sample: f64) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes `w` as mono PCM16; returns the number of samples that had to be clipped.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<usize> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| format_err(path, e))?;
    let mut clipped = 0;
    for &s in w.samples() {
        if s.abs() > 1.0 {
            clipped += 1;
        }
        writer
            .write_sample(quantize(s))
            .map_err(|e| format_err(path, e))?;
    }
    writer.finalize().map_err(|e| format_err(path, e))?;
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sine.wav");
        let x: Vec<f64> = (0..8000)
            .map(|n| 0.9 * (2.0 * PI * 440.0 * n as f64 / 16000.0).sin())
            .collect();
        let w = Waveform::new(x.clone(), 16000).unwrap();
        assert_eq!(write_wav(&path, &w).unwrap(), 0);
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        let err = x
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2f64.powi(-15));
    }

    #[test]
    fn full_scale_and_clipping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.wav");
        let w = Waveform::new(vec![1.0, -1.0, 1.5, -3.0], 16000).unwrap();
        assert_eq!(write_wav(&path, &w).unwrap(), 2);
        let back = read_wav(&path).unwrap();
        assert!((back.samples()[0] - 1.0).abs() <= 2f64.powi(-15));
        assert_eq!(back.samples()[1], -1.0);
        assert!((back.samples()[2] - 1.0).abs() <= 2f64.powi(-15));
        assert_eq!(back.samples()[3], -1.0);
    }

    #[test]
    fn zero_length_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        std::fs::write(&path, b"").unwrap();
        let r = read_wav(&path);
        assert!(matches!(r, Err(Error::Format(_))), "{r:?}");
    }

    #[test]
    fn header_without_samples_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nosamples.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        WavWriter::create(&path, spec).unwrap().finalize().unwrap();
        let r = read_wav(&path);
        assert!(matches!(r, Err(Error::Format(_))), "{r:?}");
    }

    #[test]
    fn stereo_float_is_averaged_and_other_rates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut wr = WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(0.5f32, 0.25f32), (-1.0, 1.0)] {
            wr.write_sample(l).unwrap();
            wr.write_sample(r).unwrap();
        }
        wr.finalize().unwrap();
        let w = read_wav(&path).unwrap();
        assert_eq!(w.samples(), &[0.375, 0.0]);

        let path = dir.path().join("44k.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&path, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.finalize().unwrap();
        let r = read_wav(&path);
        assert!(matches!(r, Err(Error::Format(_))), "{r:?}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_wav("/nonexistent/x.wav"), Err(Error::Io(_))));
    }
}
