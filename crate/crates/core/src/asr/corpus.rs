//! Synthetic utterances: every symbol is a three-tone chord.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{read_wav, write_wav, Waveform, SAMPLE_RATE};

pub const SYMBOL_S: f64 = 0.12;
pub const RAMP_S: f64 = 0.01;
pub const GAP_S: f64 = 0.03;
/// Silence before the first and after the last symbol.
pub const LEAD_S: f64 = 0.1;
const LOW_HZ: f64 = 300.0;
const HIGH_HZ: f64 = 3400.0;
/// Smallest frequency ratio between neighbouring chord tones.
const MIN_TONE_RATIO: f64 = 1.08;
const TONE_AMPLITUDE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub vocab: String,
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub snr_db: f64,
    /// Allow the same symbol twice in a row.
    pub allow_repeats: bool,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            vocab: "abcdef".into(),
            count: 2000,
            min_len: 2,
            max_len: 6,
            snr_db: 30.0,
            allow_repeats: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub waveform: Waveform,
    pub transcript: String,
}

/// Disjoint frequency triples, one per symbol, interleaved over a
/// log-spaced tone grid so each chord spans low, middle and high bands.
pub fn chord_table(v: &Vocab) -> Result<Vec<[f64; 3]>> {
    let n = v.symbols().len();
    let tones = 3 * n;
    let ratio = (HIGH_HZ / LOW_HZ).powf(1.0 / (tones - 1).max(1) as f64);
    if ratio < MIN_TONE_RATIO {
        return Err(Error::Config(format!(
            "{n} symbols need {tones} distinct tones, more than fit in {LOW_HZ}-{HIGH_HZ} Hz"
        )));
    }
    let grid: Vec<f64> = (0..tones).map(|i| LOW_HZ * ratio.powi(i as i32)).collect();
    Ok((0..n).map(|i| [grid[i], grid[i + n], grid[i + 2 * n]]).collect())
}

/// Samples in an utterance of `symbols` symbols.
pub fn utterance_len(symbols: usize) -> usize {
    let sr = SAMPLE_RATE as f64;
    let body = symbols as f64 * SYMBOL_S + symbols.saturating_sub(1) as f64 * GAP_S;
    ((body + 2.0 * LEAD_S) * sr).round() as usize
}

fn gaussian(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.gen_range(f64::EPSILON..1.0);
    let u2: f64 = r.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Renders `text` as chords plus white noise at `snr_db`, drawing gain,
/// phases and noise from `rng`.
pub fn render(text: &str, v: &Vocab, snr_db: f64, r: &mut impl Rng) -> Result<Waveform> {
    let classes = v.encode(text)?;
    if classes.is_empty() {
        return Err(Error::invalid("cannot render an empty transcript"));
    }
    let chords = chord_table(v)?;
    let sr = SAMPLE_RATE as f64;
    let sym = (SYMBOL_S * sr).round() as usize;
    let ramp = (RAMP_S * sr).round() as usize;
    let gap = (GAP_S * sr).round() as usize;
    let lead = (LEAD_S * sr).round() as usize;
    let mut x = vec![0.0; utterance_len(classes.len())];
    let gain = TONE_AMPLITUDE * r.gen_range(0.5..1.0);
    for (i, &c) in classes.iter().enumerate() {
        let start = lead + i * (sym + gap);
        let phases: [f64; 3] = [0, 1, 2].map(|_| r.gen_range(0.0..2.0 * PI));
        for n in 0..sym {
            let env = if n < ramp {
                0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
            } else if n >= sym - ramp {
                0.5 - 0.5 * (PI * (sym - 1 - n) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            let t = n as f64 / sr;
            let s: f64 = chords[c - 1]
                .iter()
                .zip(&phases)
                .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                .sum();
            x[start + n] = gain * env * s;
        }
    }
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    for v in &mut x {
        *v += sigma * gaussian(r);
    }
    Waveform::new(x, SAMPLE_RATE)
}

fn random_transcript(v: &Vocab, len: usize, allow_repeats: bool, r: &mut impl Rng) -> String {
    let symbols = v.symbols();
    let mut out: Vec<char> = Vec::with_capacity(len);
    while out.len() < len {
        let c = symbols[r.gen_range(0..symbols.len())];
        if allow_repeats || out.last() != Some(&c) || symbols.len() == 1 {
            out.push(c);
        }
    }
    out.into_iter().collect()
}

pub fn synth_corpus(cfg: &CorpusConfig) -> Result<Vec<Utterance>> {
    let v = Vocab::new(&cfg.vocab)?;
    chord_table(&v)?;
    if cfg.count == 0 {
        return Err(Error::Config("corpus size must be positive".into()));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "bad utterance length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    (0..cfg.count)
        .map(|i| {
            let mut r = rng::stream(cfg.seed, &[i as u64]);
            let len = r.gen_range(cfg.min_len..=cfg.max_len);
            let transcript = random_transcript(&v, len, cfg.allow_repeats, &mut r);
            let waveform = render(&transcript, &v, cfg.snr_db, &mut r)?;
            Ok(Utterance {
                waveform,
                transcript,
            })
        })
        .collect()
}

pub const MANIFEST: &str = "manifest.json";

/// Writes one WAV per utterance plus `manifest.json` mapping file name to transcript.
pub fn export_corpus(dir: &Path, corpus: &[Utterance]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = BTreeMap::new();
    for (i, u) in corpus.iter().enumerate() {
        let name = format!("utt_{i:05}.wav");
        write_wav(dir.join(&name), &u.waveform)?;
        manifest.insert(name, u.transcript.clone());
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

pub fn import_corpus(dir: &Path) -> Result<Vec<Utterance>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: BTreeMap<String, String> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{MANIFEST}: {e}")))?;
    manifest
        .into_iter()
        .map(|(name, transcript)| {
            Ok(Utterance {
                waveform: read_wav(dir.join(&name))?,
                transcript,
            })
        })
        .collect()
}
