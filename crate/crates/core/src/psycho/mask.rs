//! Simplified MPEG-1 psychoacoustic model 1 on the STFT grid.
//!
//! Per frame: levels are referenced so that a full-scale sinusoid reads
//! 96 dB; tonal maskers are strict local maxima standing 7 dB above a
//! band-dependent neighbourhood; remaining energy is pooled into one
//! non-tonal masker per critical band; maskers below the threshold in
//! quiet are dropped; each masker spreads over the Bark axis with a fixed
//! lower slope and a level-dependent upper slope; spread thresholds and
//! the threshold in quiet combine by power summation.

use std::io::Write;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::scales::{bin_absolute_threshold, hz_to_bark};
use crate::error::{Error, Result};
use crate::signal::{Spectrogram, StftConfig};

pub const FULL_SCALE_DB: f64 = 96.0;
pub const FLOOR_DB: f64 = -20.0;
pub const CEILING_DB: f64 = 96.0;

const TONAL_MARGIN_DB: f64 = 7.0;
const LOWER_SLOPE_DB_PER_BARK: f64 = 27.0;
const UPPER_SLOPE_BASE: f64 = 24.0;
const UPPER_SLOPE_PER_DB: f64 = 0.23;
const UPPER_SLOPE_MIN: f64 = 10.0;

/// Offset mapping `20·log10|X|` onto the 96 dB full-scale convention for `cfg`'s window.
pub fn reference_db(cfg: &StftConfig) -> f64 {
    let gain: f64 = cfg.window().iter().sum::<f64>() / 2.0;
    FULL_SCALE_DB - 20.0 * gain.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Masker {
    pub bin: usize,
    pub level_db: f64,
    pub tonal: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskerSet {
    pub frames: Vec<Vec<Masker>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingThresholdMatrix {
    frames: usize,
    bins: usize,
    thresholds: Vec<f64>,
    reference_db: f64,
}

impl MaskingThresholdMatrix {
    /// Wraps raw thresholds (frame-major, dB). Entries must be finite and within
    /// the [`FLOOR_DB`], [`CEILING_DB`] range.
    pub fn from_db(frames: usize, bins: usize, thresholds: Vec<f64>, reference_db: f64) -> Result<Self> {
        if thresholds.len() != frames * bins {
            return Err(Error::invalid(format!(
                "{} thresholds for a {frames}x{bins} grid",
                thresholds.len()
            )));
        }
        if thresholds
            .iter()
            .any(|t| !t.is_finite() || *t < FLOOR_DB || *t > CEILING_DB)
        {
            return Err(Error::invalid("threshold outside the clamped dB range"));
        }
        Ok(Self {
            frames,
            bins,
            thresholds,
            reference_db,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn reference_db(&self) -> f64 {
        self.reference_db
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.thresholds[t * self.bins + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.thresholds[t * self.bins..(t + 1) * self.bins]
    }

    /// One row per frame, one column per bin, three decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for t in 0..self.frames {
            let row: Vec<String> = self.frame(t).iter().map(|v| format!("{v:.3}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct BinTables {
    bark: Vec<f64>,
    ath: Vec<f64>,
    /// critical band index per bin
    band: Vec<usize>,
    /// representative bin per critical band
    band_center: Vec<usize>,
    /// tonal neighbourhood half-width per bin
    reach: Vec<usize>,
}

impl BinTables {
    fn new(bins: usize, bin_hz: f64) -> Self {
        let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * bin_hz).collect();
        let bark: Vec<f64> = freqs.iter().map(|&f| hz_to_bark(f).expect("f >= 0")).collect();
        let ath = freqs.iter().map(|&f| bin_absolute_threshold(f)).collect();
        let band: Vec<usize> = bark.iter().map(|z| z.floor() as usize).collect();
        let n_bands = band.last().map_or(0, |b| b + 1);
        let band_center = (0..n_bands)
            .map(|b| {
                let target = b as f64 + 0.5;
                (0..bins)
                    .filter(|&k| band[k] == b)
                    .min_by(|&i, &j| {
                        (bark[i] - target)
                            .abs()
                            .total_cmp(&(bark[j] - target).abs())
                    })
                    .unwrap_or(usize::MAX)
            })
            .collect();
        let reach = freqs
            .iter()
            .map(|&f| {
                if f < 2500.0 {
                    2
                } else if f < 5500.0 {
                    3
                } else {
                    6
                }
            })
            .collect();
        Self {
            bark,
            ath,
            band,
            band_center,
            reach,
        }
    }
}

fn power_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

fn frame_powers(frame: &[Complex64], reference: f64) -> Vec<f64> {
    let scale = 10f64.powf(reference / 10.0);
    frame.iter().map(|c| c.norm_sqr() * scale).collect()
}

fn frame_maskers(power: &[f64], tables: &BinTables) -> Vec<Masker> {
    let bins = power.len();
    let level: Vec<f64> = power
        .iter()
        .map(|&p| if p > 0.0 { power_to_db(p).max(FLOOR_DB) } else { FLOOR_DB })
        .collect();
    let mut used = vec![false; bins];
    let mut maskers = Vec::new();

    for k in 1..bins.saturating_sub(1) {
        let reach = tables.reach[k];
        if k < reach || k + reach >= bins {
            continue;
        }
        if !(level[k] > level[k - 1] && level[k] > level[k + 1]) {
            continue;
        }
        let stands_out = (2..=reach).all(|j| {
            level[k] - level[k - j] >= TONAL_MARGIN_DB && level[k] - level[k + j] >= TONAL_MARGIN_DB
        });
        if !stands_out {
            continue;
        }
        let p = power[k - 1] + power[k] + power[k + 1];
        maskers.push(Masker {
            bin: k,
            level_db: power_to_db(p),
            tonal: true,
        });
        for u in &mut used[k - reach..=k + reach] {
            *u = true;
        }
    }

    let mut pooled = vec![0.0; tables.band_center.len()];
    for k in 0..bins {
        if !used[k] {
            pooled[tables.band[k]] += power[k];
        }
    }
    for (b, &p) in pooled.iter().enumerate() {
        if p > 0.0 {
            maskers.push(Masker {
                bin: tables.band_center[b],
                level_db: power_to_db(p),
                tonal: false,
            });
        }
    }

    maskers.retain(|m| m.level_db >= tables.ath[m.bin]);
    maskers.sort_by_key(|m| m.bin);
    maskers
}

fn upper_slope(level_db: f64) -> f64 {
    (UPPER_SLOPE_BASE - UPPER_SLOPE_PER_DB * (level_db - 40.0)).max(UPPER_SLOPE_MIN)
}

fn frame_thresholds(maskers: &[Masker], tables: &BinTables) -> Vec<f64> {
    (0..tables.bark.len())
        .map(|k| {
            let ath = tables.ath[k];
            let spread: f64 = maskers
                .iter()
                .map(|m| {
                    let dz = tables.bark[k] - tables.bark[m.bin];
                    let level = if dz >= 0.0 {
                        m.level_db - upper_slope(m.level_db) * dz
                    } else {
                        m.level_db + LOWER_SLOPE_DB_PER_BARK * dz
                    };
                    10f64.powf(level / 10.0)
                })
                .sum();
            if spread == 0.0 {
                ath
            } else {
                power_to_db(10f64.powf(ath / 10.0) + spread).clamp(FLOOR_DB, CEILING_DB)
            }
        })
        .collect()
}

/// Threshold row (dB) produced by one frame's maskers on a grid of `bins`
/// bins spaced `bin_hz` apart. Maskers combine by power summation, so adding
/// a masker never lowers an entry.
pub fn thresholds_from_maskers(maskers: &[Masker], bins: usize, bin_hz: f64) -> Result<Vec<f64>> {
    if let Some(m) = maskers.iter().find(|m| m.bin >= bins || !m.level_db.is_finite()) {
        return Err(Error::invalid(format!("masker {m:?} is off a {bins}-bin grid")));
    }
    Ok(frame_thresholds(maskers, &BinTables::new(bins, bin_hz)))
}

fn check_grid(spec: &Spectrogram, cfg: &StftConfig) -> Result<()> {
    if !spec.matches(cfg) || spec.bins() != cfg.bins() {
        return Err(Error::invalid(format!(
            "spectrogram with {} bins is not on the {}-sample analysis grid",
            spec.bins(),
            cfg.window_len()
        )));
    }
    Ok(())
}

/// Maskers found in every frame of `spec`.
pub fn find_maskers(spec: &Spectrogram, cfg: &StftConfig) -> Result<MaskerSet> {
    check_grid(spec, cfg)?;
    let tables = BinTables::new(spec.bins(), spec.bin_hz());
    let reference = reference_db(cfg);
    let frames = (0..spec.frames())
        .into_par_iter()
        .map(|t| frame_maskers(&frame_powers(spec.frame(t), reference), &tables))
        .collect();
    Ok(MaskerSet { frames })
}

pub fn compute_masking_thresholds(spec: &Spectrogram, cfg: &StftConfig) -> Result<MaskingThresholdMatrix> {
    check_grid(spec, cfg)?;
    let tables = BinTables::new(spec.bins(), spec.bin_hz());
    let reference = reference_db(cfg);
    let rows: Vec<Vec<f64>> = (0..spec.frames())
        .into_par_iter()
        .map(|t| {
            let maskers = frame_maskers(&frame_powers(spec.frame(t), reference), &tables);
            frame_thresholds(&maskers, &tables)
        })
        .collect();
    Ok(MaskingThresholdMatrix {
        frames: spec.frames(),
        bins: spec.bins(),
        thresholds: rows.concat(),
        reference_db: reference,
    })
}
